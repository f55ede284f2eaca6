//! Named parameter storage.

use std::collections::HashMap;

use crate::backend::Backend;
use crate::error::ParamError;
use crate::tape::{Grads, Var};
use crate::tensor::Tensor;
use crate::TapeError;

/// Ordered, uniquely named parameter tensors with fixed shapes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<(), ParamError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(ParamError::Duplicate(name));
        }
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, ParamError> {
        self.index
            .get(name)
            .map(|&i| &self.values[i])
            .ok_or_else(|| ParamError::Unknown(name.to_string()))
    }

    /// Replaces a value, keeping the shape fixed.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<(), ParamError> {
        let &i = self
            .index
            .get(name)
            .ok_or_else(|| ParamError::Unknown(name.to_string()))?;
        if self.values[i].shape() != value.shape() {
            return Err(ParamError::ShapeMismatch {
                name: name.to_string(),
                expected: self.values[i].shape(),
                got: value.shape(),
            });
        }
        self.values[i] = value;
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.shape().numel()).sum()
    }

    /// Flattens all parameters in store order.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| v.data().iter().copied()).collect()
    }

    /// Overwrites all parameters from a flat vector in store order.
    pub fn unflatten(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.numel(), "flat parameter length mismatch");
        let mut off = 0;
        for v in &mut self.values {
            let n = v.shape().numel();
            v.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    /// Places every parameter on a backend.
    pub fn bind<B: Backend>(&self, backend: &B) -> Bound<B::T> {
        Bound {
            names: self.names.clone(),
            vars: self.values.iter().map(|v| backend.constant(v.clone())).collect(),
            index: self.index.clone(),
        }
    }
}

/// Parameters materialized on a backend, addressable by name.
#[derive(Clone, Debug)]
pub struct Bound<T> {
    names: Vec<String>,
    vars: Vec<T>,
    index: HashMap<String, usize>,
}

impl<T> Bound<T> {
    pub fn get(&self, name: &str) -> &T {
        let i = self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` is not bound"));
        &self.vars[*i]
    }

    pub fn vars(&self) -> &[T] {
        &self.vars
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl Bound<Var> {
    /// Collects gradients for every bound parameter in store order.
    pub fn gradients(&self, grads: &Grads) -> Result<Vec<Tensor>, TapeError> {
        self.vars.iter().map(|&v| grads.wrt(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Eager;

    #[test]
    fn names_are_unique_and_shapes_fixed() {
        let mut p = ParamStore::new();
        p.insert("a", Tensor::scalar(1.0)).unwrap();
        assert!(matches!(p.insert("a", Tensor::scalar(2.0)), Err(ParamError::Duplicate(_))));
        assert!(matches!(
            p.set("a", Tensor::row(vec![1.0, 2.0])),
            Err(ParamError::ShapeMismatch { .. })
        ));
        p.set("a", Tensor::scalar(5.0)).unwrap();
        assert_eq!(p.get("a").unwrap().item(), 5.0);
        assert!(matches!(p.get("b"), Err(ParamError::Unknown(_))));
    }

    #[test]
    fn flatten_round_trip() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::matrix(2, 2, vec![1., 2., 3., 4.])).unwrap();
        p.insert("b", Tensor::row(vec![5., 6.])).unwrap();
        let flat = p.flatten();
        assert_eq!(flat, vec![1., 2., 3., 4., 5., 6.]);
        let mut q = p.clone();
        q.unflatten(&[0.; 6]);
        q.unflatten(&flat);
        assert_eq!(p, q);
        let bound = p.bind(&Eager);
        assert_eq!(bound.get("b").data(), &[5., 6.]);
    }
}
