//! Dense row-major tensors of rank three: `(batch, rows, cols)`.
//!
//! Everything the models need is a (possibly batched) matrix. A plain matrix
//! has `batch == 1`; a minibatch of row vectors is usually stored as
//! `(1, B, D)` so that a single GEMM applies a layer to the whole batch, and
//! per-sample small matrices are stored as `(B, m, k)`.
//!
//! Binary elementwise kernels broadcast any axis of extent one. Matrix
//! products broadcast the batch axis when one side has `batch == 1`.

use std::fmt;

use crate::error::SolveError;

/// Condition-number ceiling above which a linear system is reported as degenerate.
pub const COND_LIMIT: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub batch: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const fn new(batch: usize, rows: usize, cols: usize) -> Self {
        Self { batch, rows, cols }
    }

    pub const fn scalar() -> Self {
        Self::new(1, 1, 1)
    }

    pub const fn numel(&self) -> usize {
        self.batch * self.rows * self.cols
    }

    fn dims(&self) -> [usize; 3] {
        [self.batch, self.rows, self.cols]
    }

    fn from_dims(d: [usize; 3]) -> Self {
        Self::new(d[0], d[1], d[2])
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.batch, self.rows, self.cols)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.numel(),
            data.len(),
            "tensor data length {} does not match shape {shape}",
            data.len()
        );
        Self { shape, data }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(Shape::scalar(), vec![value])
    }

    /// A `(1, 1, n)` row vector.
    pub fn row(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(Shape::new(1, 1, n), data)
    }

    /// A `(1, rows, cols)` matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        Self::new(Shape::new(1, rows, cols), data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(Shape::new(1, n, n));
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn at(&self, b: usize, r: usize, c: usize) -> f64 {
        self.data[(b * self.shape.rows + r) * self.shape.cols + c]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {}", self.shape);
        self.data[0]
    }

    pub fn reshape(mut self, shape: Shape) -> Self {
        assert_eq!(
            self.shape.numel(),
            shape.numel(),
            "cannot reshape {} into {shape}",
            self.shape
        );
        self.shape = shape;
        self
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Elementwise combination with two-sided broadcasting over unit axes.
    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Tensor::new(self.shape, data);
        }
        let out = broadcast_shape(self.shape, other.shape);
        let sa = broadcast_strides(self.shape, out);
        let sb = broadcast_strides(other.shape, out);
        let mut data = Vec::with_capacity(out.numel());
        for b in 0..out.batch {
            for r in 0..out.rows {
                let base_a = b * sa[0] + r * sa[1];
                let base_b = b * sb[0] + r * sb[1];
                for c in 0..out.cols {
                    data.push(f(self.data[base_a + c * sa[2]], other.data[base_b + c * sb[2]]));
                }
            }
        }
        Tensor::new(out, data)
    }

    /// Sums over the axes along which `target` was broadcast to `self.shape`.
    pub fn reduce_to(&self, target: Shape) -> Tensor {
        if self.shape == target {
            return self.clone();
        }
        let src = self.shape.dims();
        let dst = target.dims();
        for i in 0..3 {
            assert!(
                dst[i] == src[i] || dst[i] == 1,
                "cannot reduce {} to {target}",
                self.shape
            );
        }
        let st = broadcast_strides(target, self.shape);
        let mut out = Tensor::zeros(target);
        let mut idx = 0;
        for b in 0..src[0] {
            for r in 0..src[1] {
                for c in 0..src[2] {
                    out.data[b * st[0] + r * st[1] + c * st[2]] += self.data[idx];
                    idx += 1;
                }
            }
        }
        out
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Tensor {
        let Shape { batch, rows, cols } = self.shape;
        let mut data = vec![0.0; self.data.len()];
        for b in 0..batch {
            let off = b * rows * cols;
            for r in 0..rows {
                for c in 0..cols {
                    data[off + c * rows + r] = self.data[off + r * cols + c];
                }
            }
        }
        Tensor::new(Shape::new(batch, cols, rows), data)
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        matmul_t(self, false, other, false)
    }

    /// Batched trace of square matrices, shape `(batch, 1, 1)`.
    pub fn trace(&self) -> Tensor {
        let Shape { batch, rows, cols } = self.shape;
        assert_eq!(rows, cols, "trace of non-square {}", self.shape);
        let data = (0..batch)
            .map(|b| (0..rows).map(|i| self.data[(b * rows + i) * cols + i]).sum())
            .collect();
        Tensor::new(Shape::new(batch, 1, 1), data)
    }

    pub fn concat(parts: &[&Tensor], axis: usize) -> Tensor {
        assert!(!parts.is_empty(), "concat of zero tensors");
        assert!(axis < 3, "concat axis {axis} out of range");
        let first = parts[0].shape.dims();
        let mut out = first;
        out[axis] = 0;
        for p in parts {
            let d = p.shape.dims();
            for i in 0..3 {
                if i != axis {
                    assert_eq!(d[i], first[i], "concat shape mismatch along axis {i}");
                }
            }
            out[axis] += d[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(out.iter().product());
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape.dims()[axis] * inner;
                data.extend_from_slice(&p.data[o * chunk..(o + 1) * chunk]);
            }
        }
        Tensor::new(Shape::from_dims(out), data)
    }

    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Tensor {
        assert!(axis < 3, "slice axis {axis} out of range");
        let dims = self.shape.dims();
        assert!(
            start + len <= dims[axis],
            "slice {start}..{} out of bounds for axis {axis} of {}",
            start + len,
            self.shape
        );
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let mut out = dims;
        out[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dims[axis] + start) * inner;
            data.extend_from_slice(&self.data[base..base + len * inner]);
        }
        Tensor::new(Shape::from_dims(out), data)
    }

    /// Writes `src` into the region of `self` that `slice(axis, start, ..)` reads.
    pub fn slice_add_assign(&mut self, axis: usize, start: usize, src: &Tensor) {
        let dims = self.shape.dims();
        let sdims = src.shape.dims();
        let len = sdims[axis];
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        for o in 0..outer {
            let base = (o * dims[axis] + start) * inner;
            let sbase = o * len * inner;
            for i in 0..len * inner {
                self.data[base + i] += src.data[sbase + i];
            }
        }
    }
}

fn broadcast_shape(a: Shape, b: Shape) -> Shape {
    let (da, db) = (a.dims(), b.dims());
    let mut out = [0; 3];
    for i in 0..3 {
        out[i] = if da[i] == db[i] || db[i] == 1 {
            da[i]
        } else if da[i] == 1 {
            db[i]
        } else {
            panic!("shapes {a} and {b} are not broadcast-compatible");
        };
    }
    Shape::from_dims(out)
}

/// Strides of `s` viewed as `out`, zero along broadcast axes.
fn broadcast_strides(s: Shape, out: Shape) -> [usize; 3] {
    let d = s.dims();
    let o = out.dims();
    let natural = [d[1] * d[2], d[2], 1];
    let mut st = [0; 3];
    for i in 0..3 {
        if d[i] == o[i] {
            st[i] = natural[i];
        } else {
            assert_eq!(d[i], 1, "shape {s} does not broadcast to {out}");
        }
    }
    st
}

/// Logical view of one operand of a (possibly transposed) matrix product.
struct GemmOperand<'a> {
    data: &'a [f64],
    batch: usize,
    m: usize,
    k: usize,
    rs: isize,
    cs: isize,
    stride: usize,
}

impl<'a> GemmOperand<'a> {
    fn new(t: &'a Tensor, transposed: bool) -> Self {
        let Shape { batch, rows, cols } = t.shape;
        let (m, k, rs, cs) = if transposed {
            (cols, rows, 1, cols as isize)
        } else {
            (rows, cols, cols as isize, 1)
        };
        Self {
            data: &t.data,
            batch,
            m,
            k,
            rs,
            cs,
            stride: rows * cols,
        }
    }
}

/// Batched product `op(a) · op(b)` where `op` optionally transposes the last two axes.
pub fn matmul_t(a: &Tensor, ta: bool, b: &Tensor, tb: bool) -> Tensor {
    let lhs = GemmOperand::new(a, ta);
    let rhs = GemmOperand::new(b, tb);
    assert_eq!(
        lhs.k, rhs.m,
        "matmul inner dimension mismatch: {} (t={ta}) x {} (t={tb})",
        a.shape, b.shape
    );
    let batch = match (lhs.batch, rhs.batch) {
        (x, y) if x == y => x,
        (1, y) => y,
        (x, 1) => x,
        _ => panic!("matmul batch mismatch: {} x {}", a.shape, b.shape),
    };
    let (m, k, n) = (lhs.m, lhs.k, rhs.k);
    let mut out = vec![0.0; batch * m * n];
    if k == 0 || m == 0 || n == 0 {
        return Tensor::new(Shape::new(batch, m, n), out);
    }
    if rhs.batch == 1 && lhs.batch > 1 && !ta {
        // Stack the batch into one tall matrix: rows of consecutive batches are contiguous.
        // SAFETY: slices cover (batch*m) x k, k x n and (batch*m) x n elements with the given strides.
        unsafe {
            matrixmultiply::dgemm(
                batch * m,
                k,
                n,
                1.0,
                lhs.data.as_ptr(),
                lhs.rs,
                lhs.cs,
                rhs.data.as_ptr(),
                rhs.rs,
                rhs.cs,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        return Tensor::new(Shape::new(batch, m, n), out);
    }
    for bi in 0..batch {
        let ao = if lhs.batch == 1 { 0 } else { bi * lhs.stride };
        let bo = if rhs.batch == 1 { 0 } else { bi * rhs.stride };
        let co = bi * m * n;
        // SAFETY: offsets stay within each operand's batch slab; strides describe row-major storage.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                lhs.data.as_ptr().add(ao),
                lhs.rs,
                lhs.cs,
                rhs.data.as_ptr().add(bo),
                rhs.rs,
                rhs.cs,
                0.0,
                out.as_mut_ptr().add(co),
                n as isize,
                1,
            );
        }
    }
    Tensor::new(Shape::new(batch, m, n), out)
}

/// LU factorization with partial pivoting of one dense `n x n` matrix.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(a: &[f64], n: usize) -> Option<Self> {
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut piv = col;
            let mut best = lu[col * n + col].abs();
            for r in col + 1..n {
                let v = lu[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            if piv != col {
                for c in 0..n {
                    lu.swap(col * n + c, piv * n + c);
                }
                perm.swap(col, piv);
            }
            let d = lu[col * n + col];
            for r in col + 1..n {
                let f = lu[r * n + col] / d;
                lu[r * n + col] = f;
                if f != 0.0 {
                    for c in col + 1..n {
                        lu[r * n + c] -= f * lu[col * n + c];
                    }
                }
            }
        }
        Some(Self { n, lu, perm })
    }

    /// Solves in place for a right-hand side with `k` columns stored row-major.
    fn solve(&self, rhs: &[f64], k: usize) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; n * k];
        for r in 0..n {
            x[r * k..(r + 1) * k].copy_from_slice(&rhs[self.perm[r] * k..(self.perm[r] + 1) * k]);
        }
        for r in 0..n {
            for c in 0..r {
                let f = self.lu[r * n + c];
                if f != 0.0 {
                    for j in 0..k {
                        x[r * k + j] -= f * x[c * k + j];
                    }
                }
            }
        }
        for r in (0..n).rev() {
            for c in r + 1..n {
                let f = self.lu[r * n + c];
                if f != 0.0 {
                    for j in 0..k {
                        x[r * k + j] -= f * x[c * k + j];
                    }
                }
            }
            let d = self.lu[r * n + r];
            for j in 0..k {
                x[r * k + j] /= d;
            }
        }
        x
    }
}

fn norm_one(a: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|c| (0..n).map(|r| a[r * n + c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 1-norm condition number of a square row-major matrix (infinite if singular).
pub fn condition_number(a: &[f64], n: usize) -> f64 {
    match Lu::factor(a, n) {
        None => f64::INFINITY,
        Some(lu) => {
            let mut eye = vec![0.0; n * n];
            for i in 0..n {
                eye[i * n + i] = 1.0;
            }
            let inv = lu.solve(&eye, n);
            norm_one(a, n) * norm_one(&inv, n)
        }
    }
}

/// Batched solve of `a · x = b` via pivoted LU.
///
/// Fails with [`SolveError::Degenerate`] when any system in the batch is
/// singular or its 1-norm condition number exceeds [`COND_LIMIT`].
pub fn solve(a: &Tensor, b: &Tensor) -> Result<Tensor, SolveError> {
    let Shape { batch: ba, rows: n, cols: n2 } = a.shape;
    assert_eq!(n, n2, "solve needs square systems, got {}", a.shape);
    let Shape { batch: bb, rows: nb, cols: k } = b.shape;
    assert_eq!(nb, n, "solve right-hand side {} does not match {}", b.shape, a.shape);
    let batch = match (ba, bb) {
        (x, y) if x == y => x,
        (1, y) => y,
        (x, 1) => x,
        _ => panic!("solve batch mismatch: {} vs {}", a.shape, b.shape),
    };
    let mut out = Vec::with_capacity(batch * n * k);
    let mut cached: Option<Lu> = None;
    for bi in 0..batch {
        let ai = if ba == 1 { 0 } else { bi };
        let a_slab = &a.data[ai * n * n..(ai + 1) * n * n];
        if ba > 1 || cached.is_none() {
            let cond = condition_number(a_slab, n);
            if !(cond <= COND_LIMIT) {
                return Err(SolveError::Degenerate { batch_index: bi, cond });
            }
            cached = Lu::factor(a_slab, n);
        }
        let lu = cached.as_ref().expect("factored above");
        let bi_rhs = if bb == 1 { 0 } else { bi };
        out.extend(lu.solve(&b.data[bi_rhs * n * k..(bi_rhs + 1) * n * k], k));
    }
    Ok(Tensor::new(Shape::new(batch, n, k), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_bias_add() {
        let x = Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]);
        let b = Tensor::row(vec![10., 20., 30.]);
        let y = x.zip_with(&b, |a, b| a + b);
        assert_eq!(y.data(), &[11., 22., 33., 14., 25., 36.]);
        let back = y.reduce_to(b.shape());
        assert_eq!(back.data(), &[25., 47., 69.]);
    }

    #[test]
    fn batched_matmul_matches_naive() {
        let a = Tensor::new(Shape::new(2, 2, 3), (0..12).map(|v| v as f64).collect());
        let b = Tensor::new(Shape::new(1, 3, 2), vec![1., 0., 0., 1., 1., 1.]);
        let c = a.matmul(&b);
        assert_eq!(c.shape(), Shape::new(2, 2, 2));
        assert_eq!(c.data(), &[2., 3., 8., 9., 14., 15., 20., 21.]);
        let ct = matmul_t(&a, false, &a, true);
        assert_eq!(ct.shape(), Shape::new(2, 2, 2));
        assert_eq!(ct.at(0, 0, 1), 0. * 3. + 1. * 4. + 2. * 5.);
        let tn = matmul_t(&a, true, &a, false);
        assert_eq!(tn.shape(), Shape::new(2, 3, 3));
        assert_eq!(tn.at(1, 2, 0), 8. * 6. + 11. * 9.);
    }

    #[test]
    fn concat_and_slice_are_inverse() {
        let a = Tensor::new(Shape::new(2, 2, 1), vec![1., 2., 3., 4.]);
        let b = Tensor::new(Shape::new(2, 2, 2), vec![5., 6., 7., 8., 9., 10., 11., 12.]);
        let c = Tensor::concat(&[&a, &b], 2);
        assert_eq!(c.shape(), Shape::new(2, 2, 3));
        assert_eq!(c.slice(2, 0, 1), a);
        assert_eq!(c.slice(2, 1, 2), b);
        let r = Tensor::concat(&[&b, &b], 1);
        assert_eq!(r.slice(1, 2, 2), b);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = Tensor::matrix(3, 3, vec![0., 2., 1., 1., 1., 0., 3., 0., 1.]);
        let x = Tensor::matrix(3, 1, vec![1., -2., 0.5]);
        let b = a.matmul(&x);
        let got = solve(&a, &b).unwrap();
        for (g, e) in got.data().iter().zip(x.data()) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    #[test]
    fn solve_rejects_singular() {
        let a = Tensor::matrix(2, 2, vec![1., 2., 2., 4.]);
        let b = Tensor::matrix(2, 1, vec![1., 1.]);
        match solve(&a, &b) {
            Err(SolveError::Degenerate { cond, .. }) => assert!(cond > COND_LIMIT),
            other => panic!("expected degenerate error, got {other:?}"),
        }
    }

    #[test]
    fn trace_is_batched() {
        let a = Tensor::new(Shape::new(2, 2, 2), vec![1., 9., 9., 2., 3., 9., 9., 4.]);
        assert_eq!(a.trace().data(), &[3., 7.]);
    }
}
