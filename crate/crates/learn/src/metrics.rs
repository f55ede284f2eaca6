//! Rollout error metrics.

use cartmech_core::constraints::violation_rmse;
use cartmech_core::System;

use crate::error::{LearnError, Result};

/// Values below this are clamped before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// Bounded relative error `‖ẑ − z‖/(‖ẑ‖ + ‖z‖)` of one state; `0/0 = 0`, non-finite predictions give 1.
pub fn relative_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(LearnError::Length(format!("prediction has {} entries, truth {}", pred.len(), truth.len())));
    }
    if pred.iter().any(|v| !v.is_finite()) {
        return Ok(1.0);
    }
    let num = norm(pred.iter().zip(truth).map(|(a, b)| a - b));
    let den = norm(pred.iter().copied()) + norm(truth.iter().copied());
    Ok(if den == 0.0 { 0.0 } else { (num / den).min(1.0) })
}

/// Pointwise relative error along two equal-length trajectories.
pub fn relative_error_curve(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<Vec<f64>> {
    if pred.len() != truth.len() {
        return Err(LearnError::Length(format!("trajectories have {} and {} states", pred.len(), truth.len())));
    }
    pred.iter().zip(truth).map(|(p, t)| relative_error(p, t)).collect()
}

/// `exp(∫ log h dt / T)` with the trapezoid rule; a single sample is returned unchanged.
pub fn geometric_mean(curve: &[f64], times: &[f64]) -> Result<f64> {
    if curve.len() != times.len() {
        return Err(LearnError::Length(format!("{} values on {} times", curve.len(), times.len())));
    }
    match curve.len() {
        0 => Err(LearnError::Length("geometric mean of an empty curve".into())),
        1 => Ok(curve[0]),
        _ => {
            let span = times[times.len() - 1] - times[0];
            if !(span > 0.0) {
                return Err(LearnError::Length("time grid must be increasing".into()));
            }
            let logs: Vec<f64> = curve.iter().map(|&h| h.max(LOG_FLOOR).ln()).collect();
            let integral: f64 = (1..curve.len())
                .map(|i| 0.5 * (logs[i] + logs[i - 1]) * (times[i] - times[i - 1]))
                .sum();
            Ok((integral / span).exp())
        }
    }
}

/// `|H − Ĥ|/(|H| + |Ĥ|)`, `0/0 = 0`, non-finite energies give 1.
pub fn energy_error(h_pred: f64, h_true: f64) -> f64 {
    if !h_pred.is_finite() {
        return 1.0;
    }
    let den = h_pred.abs() + h_true.abs();
    if den == 0.0 {
        0.0
    } else {
        ((h_pred - h_true).abs() / den).min(1.0)
    }
}

/// Energy error curve of a predicted Cartesian `(x, ẋ)` trajectory under the true system.
pub fn energy_error_curve(system: &System, pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<Vec<f64>> {
    if pred.len() != truth.len() {
        return Err(LearnError::Length(format!("trajectories have {} and {} states", pred.len(), truth.len())));
    }
    pred.iter()
        .zip(truth)
        .map(|(p, t)| {
            let hp = if p.iter().all(|v| v.is_finite()) { system.energy(p)? } else { f64::NAN };
            Ok(energy_error(hp, system.energy(t)?))
        })
        .collect()
}

/// Constraint-violation RMSE of each Cartesian state; non-finite states map to infinity.
pub fn phi_rmse_curve(system: &System, states: &[Vec<f64>]) -> Result<Vec<f64>> {
    let dn = system.dn();
    states
        .iter()
        .map(|s| {
            if s.iter().all(|v| v.is_finite()) {
                Ok(violation_rmse(&system.ctx.topology, [&s[..dn]])?[0])
            } else {
                Ok(f64::INFINITY)
            }
        })
        .collect()
}

/// Pointwise mean of equal-length curves.
pub fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = curves.first() else { return Vec::new() };
    let mut out = vec![0.0; first.len()];
    for c in curves {
        for (o, v) in out.iter_mut().zip(c) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= curves.len() as f64);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relative_error_trivial_values() {
        let z = [1.0, -2.0, 0.5];
        assert_eq!(relative_error(&z, &z).unwrap(), 0.0);
        assert_eq!(relative_error(&z.map(|v| -v), &z).unwrap(), 1.0);
        assert_eq!(relative_error(&[0.0; 3], &z).unwrap(), 1.0);
        assert_eq!(relative_error(&[0.0; 3], &[0.0; 3]).unwrap(), 0.0);
        assert!(relative_error(&[0.0; 2], &z).is_err());
    }

    #[test]
    fn geometric_mean_cases() {
        let t: Vec<f64> = (0..=2000).map(|i| i as f64 / 2000.0).collect();
        let h: Vec<f64> = t.iter().map(|v| v.exp()).collect();
        assert!((geometric_mean(&h, &t).unwrap() - 0.5f64.exp()).abs() < 1e-4);
        assert!((geometric_mean(&[0.3; 5], &[0.0, 1.0, 2.0, 3.0, 4.0]).unwrap() - 0.3).abs() < 1e-15);
        assert!((geometric_mean(&[2.0, 8.0], &[0.0, 3.0]).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(geometric_mean(&[0.7], &[1.0]).unwrap(), 0.7);
    }

    #[test]
    fn energy_error_trivial_values() {
        assert_eq!(energy_error(1.5, 1.5), 0.0);
        assert_eq!(energy_error(-2.0, 2.0), 1.0);
        assert_eq!(energy_error(0.0, 0.0), 0.0);
    }

    proptest! {
        #[test]
        fn relative_error_is_bounded_and_symmetric(
            a in prop::collection::vec(-1e3f64..1e3, 6),
            b in prop::collection::vec(-1e3f64..1e3, 6),
        ) {
            let e = relative_error(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
            prop_assert!((e - relative_error(&b, &a).unwrap()).abs() < 1e-15);
        }

        #[test]
        fn geometric_mean_is_scale_equivariant(
            h in prop::collection::vec(1e-6f64..10.0, 2..20),
            alpha in 1e-3f64..1e3,
        ) {
            let t: Vec<f64> = (0..h.len()).map(|i| 0.1 * i as f64).collect();
            let scaled: Vec<f64> = h.iter().map(|v| alpha * v).collect();
            let g = geometric_mean(&h, &t).unwrap();
            prop_assert!((geometric_mean(&scaled, &t).unwrap() - alpha * g).abs() <= 1e-10 * alpha * g);
        }
    }
}
