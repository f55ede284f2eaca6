//! Long-horizon evaluation of a model against ground-truth test trajectories.

use std::fmt::Write as _;

use cartmech_autodiff::{Eager, Shape, Tensor};
use cartmech_core::System;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{LearnError, Result};
use crate::metrics::{energy_error_curve, geometric_mean, mean_curve, phi_rmse_curve, relative_error_curve};
use crate::model::Model;

/// Error curves averaged over test trajectories, and their geometric means over the
/// predicted part of the horizon (the initial state is excluded as it is exact by construction).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub times: Vec<f64>,
    pub rel_err: Vec<f64>,
    pub energy_err: Vec<f64>,
    pub phi_rmse: Vec<f64>,
    pub gm_rel_err: f64,
    pub gm_energy_err: f64,
    pub gm_phi_rmse: f64,
    /// Trajectories whose rollout failed numerically; their error curves count as 1.
    pub failures: usize,
}

impl Evaluation {
    /// `t,rel_err,energy_err,phi_rmse` rows followed by a `geometric_mean` footer row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,rel_err,energy_err,phi_rmse\n");
        for i in 0..self.times.len() {
            writeln!(out, "{},{},{},{}", self.times[i], self.rel_err[i], self.energy_err[i], self.phi_rmse[i])
                .expect("string write");
        }
        writeln!(out, "geometric_mean,{},{},{}", self.gm_rel_err, self.gm_energy_err, self.gm_phi_rmse)
            .expect("string write");
        out
    }
}

/// Batched eager rollouts: `[trajectory][step][state]`, `None` where a rollout failed.
pub fn predict(model: &Model, initial: &[Vec<f64>], steps: usize, dt: f64, substeps: usize) -> Vec<Option<Vec<Vec<f64>>>> {
    let dim = 2 * model.dn();
    let pre = model.prepare(&Eager, &model.params);
    let run = |rows: &[Vec<f64>]| -> cartmech_core::Result<Vec<Vec<Vec<f64>>>> {
        let z0 = Tensor::new(Shape::new(rows.len(), 1, dim), rows.concat());
        let states = model.rollout(&Eager, &pre, &z0, steps, dt, substeps)?;
        Ok((0..rows.len())
            .map(|b| states.iter().map(|s| s.data()[b * dim..(b + 1) * dim].to_vec()).collect())
            .collect())
    };
    match run(initial) {
        Ok(all) => all.into_iter().map(Some).collect(),
        Err(e) => {
            log::warn!("batched rollout failed ({e}); retrying trajectories one by one");
            initial
                .iter()
                .map(|z| match run(std::slice::from_ref(z)) {
                    Ok(mut one) => Some(one.remove(0)),
                    Err(e) => {
                        log::warn!("rollout failed: {e}");
                        None
                    }
                })
                .collect()
        }
    }
}

/// Evaluates `model` on full test trajectories over `steps` steps (default: all stored steps).
pub fn evaluate(model: &Model, truth: &System, test: &Dataset, steps: Option<usize>, substeps: usize) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(LearnError::Data("empty test set".into()));
    }
    if test.dim() != 2 * truth.dn() || test.dim() != 2 * model.dn() {
        return Err(LearnError::Data("test set, model and system dimensions differ".into()));
    }
    let steps = steps.unwrap_or(test.length() - 1);
    if steps == 0 || steps >= test.length() {
        return Err(LearnError::Config(format!(
            "evaluation horizon of {steps} steps does not fit sequences of {} states",
            test.length()
        )));
    }
    let dt = test.manifest.dt;
    let initial: Vec<Vec<f64>> = (0..test.len()).map(|i| test.state(i, 0).to_vec()).collect();
    let preds = predict(model, &initial, steps, dt, substeps);
    let (mut rel, mut energy, mut phi) = (Vec::new(), Vec::new(), Vec::new());
    let mut failures = 0;
    for (i, pred) in preds.into_iter().enumerate() {
        let truth_states: Vec<Vec<f64>> = (0..=steps).map(|t| test.state(i, t).to_vec()).collect();
        match pred {
            Some(p) => {
                rel.push(relative_error_curve(&p, &truth_states)?);
                energy.push(energy_error_curve(truth, &p, &truth_states)?);
                phi.push(phi_rmse_curve(truth, &p)?);
            }
            None => {
                failures += 1;
                rel.push(vec![1.0; steps + 1]);
                energy.push(vec![1.0; steps + 1]);
                phi.push(vec![f64::INFINITY; steps + 1]);
            }
        }
    }
    let times: Vec<f64> = (0..=steps).map(|t| t as f64 * dt).collect();
    let (rel_err, energy_err, phi_rmse) = (mean_curve(&rel), mean_curve(&energy), mean_curve(&phi));
    let gm = |c: &[f64]| geometric_mean(&c[1..], &times[1..]);
    Ok(Evaluation {
        gm_rel_err: gm(&rel_err)?,
        gm_energy_err: gm(&energy_err)?,
        gm_phi_rmse: gm(&phi_rmse)?,
        times,
        rel_err,
        energy_err,
        phi_rmse,
        failures,
    })
}
