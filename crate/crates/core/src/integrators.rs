//! Fixed-step RK4 and adaptive Dormand–Prince 5(4).
//!
//! The fixed-step scheme exists in two forms: on plain `f64` slices, and on
//! backend values so that a tape can record a whole rollout. The adaptive
//! scheme only works on slices and is used for ground truth.

use cartmech_autodiff::Backend;

use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Tolerances {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, max_steps: 1_000_000 }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return Err(CoreError::Config(format!(
                "tolerances must be positive (rtol = {}, atol = {})",
                self.rtol, self.atol
            )));
        }
        Ok(())
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::new(1e-7, 1e-9)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: SolverStats,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub evaluations: usize,
    pub accepted: usize,
    pub rejected: usize,
}

fn axpy(z: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    z.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn finite_or(v: Vec<f64>, step: usize, t: f64) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(CoreError::Integration { step, t, reason: "non-finite derivative".into() })
    }
}

/// One classical RK4 step.
pub fn rk4_step(
    f: &mut impl FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    z: &[f64],
    t: f64,
    h: f64,
) -> Result<Vec<f64>> {
    let k1 = finite_or(f(t, z)?, 0, t)?;
    let k2 = finite_or(f(t + 0.5 * h, &axpy(z, 0.5 * h, &k1))?, 0, t)?;
    let k3 = finite_or(f(t + 0.5 * h, &axpy(z, 0.5 * h, &k2))?, 0, t)?;
    let k4 = finite_or(f(t + h, &axpy(z, h, &k3))?, 0, t)?;
    Ok((0..z.len())
        .map(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(CoreError::Config("empty time grid".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CoreError::Config("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// RK4 with `substeps` equal steps per output interval.
pub fn rollout_fixed(
    mut f: impl FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    z0: &[f64],
    times: &[f64],
    substeps: usize,
) -> Result<Trajectory> {
    check_times(times)?;
    let substeps = substeps.max(1);
    let mut states = vec![z0.to_vec()];
    let mut z = z0.to_vec();
    for (i, w) in times.windows(2).enumerate() {
        let h = (w[1] - w[0]) / substeps as f64;
        for s in 0..substeps {
            let t = w[0] + s as f64 * h;
            z = rk4_step(&mut f, &z, t, h).map_err(|e| match e {
                CoreError::Integration { reason, .. } => CoreError::Integration { step: i, t, reason },
                other => other,
            })?;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Integration { step: i, t, reason: "non-finite state".into() });
            }
        }
        states.push(z.clone());
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        stats: SolverStats {
            evaluations: 4 * substeps * (times.len() - 1),
            accepted: substeps * (times.len() - 1),
            rejected: 0,
        },
    })
}

/// One RK4 step on backend values (autonomous dynamics).
pub fn rk4_step_on<B: Backend>(
    b: &B,
    f: &mut impl FnMut(&B::T) -> Result<B::T>,
    z: &B::T,
    h: f64,
) -> Result<B::T> {
    let k1 = f(z)?;
    let k2 = f(&b.add(z, &b.scale(&k1, 0.5 * h)))?;
    let k3 = f(&b.add(z, &b.scale(&k2, 0.5 * h)))?;
    let k4 = f(&b.add(z, &b.scale(&k3, h)))?;
    let mid = b.add(&k2, &k3);
    let sum = b.add(&b.add(&k1, &k4), &b.scale(&mid, 2.0));
    Ok(b.add(z, &b.scale(&sum, h / 6.0)))
}

/// `steps` output intervals of length `dt`, `substeps` RK4 steps each. Returns all `steps + 1` states.
pub fn rollout_fixed_on<B: Backend>(
    b: &B,
    mut f: impl FnMut(&B::T) -> Result<B::T>,
    z0: &B::T,
    steps: usize,
    dt: f64,
    substeps: usize,
) -> Result<Vec<B::T>> {
    let substeps = substeps.max(1);
    let h = dt / substeps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(z0.clone());
    let mut z = z0.clone();
    for step in 0..steps {
        for _ in 0..substeps {
            z = rk4_step_on(b, &mut f, &z, h)?;
        }
        if !b.value(&z).is_finite() {
            return Err(CoreError::Integration {
                step,
                t: (step + 1) as f64 * dt,
                reason: "non-finite state".into(),
            });
        }
        out.push(z.clone());
    }
    Ok(out)
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Dp5Step {
    y1: Vec<f64>,
    k1: Vec<f64>,
    k7: Vec<f64>,
    err: Vec<f64>,
    dense: Vec<f64>,
}

fn combine(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = y.to_vec();
    for &(c, k) in terms {
        if c != 0.0 {
            for (o, v) in out.iter_mut().zip(k) {
                *o += h * c * v;
            }
        }
    }
    out
}

fn dp5_step(
    f: &mut impl FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    t: f64,
    y: &[f64],
    k1: &[f64],
    h: f64,
) -> Result<Dp5Step> {
    let k2 = f(t + C2 * h, &combine(y, h, &[(A21, k1)]))?;
    let k3 = f(t + C3 * h, &combine(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(t + C4 * h, &combine(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(t + C5 * h, &combine(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
    let k6 = f(t + h, &combine(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]))?;
    let y1 = combine(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(t + h, &y1)?;
    let n = y.len();
    let err = (0..n)
        .map(|i| h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
        .collect();
    let dense = (0..n)
        .map(|i| h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]))
        .collect();
    Ok(Dp5Step { y1, k1: k1.to_vec(), k7, err, dense })
}

/// Fourth-order continuous extension on a step `[t, t + h]` at fraction `theta`.
fn interpolate(y0: &[f64], s: &Dp5Step, h: f64, theta: f64) -> Vec<f64> {
    let th1 = 1.0 - theta;
    (0..y0.len())
        .map(|i| {
            let ydiff = s.y1[i] - y0[i];
            let bspl = h * s.k1[i] - ydiff;
            let r4 = ydiff - h * s.k7[i] - bspl;
            y0[i] + theta * (ydiff + th1 * (bspl + theta * (r4 + th1 * s.dense[i])))
        })
        .collect()
}

fn rms_norm(err: &[f64], y0: &[f64], y1: &[f64], tol: &Tolerances) -> f64 {
    if err.is_empty() {
        return 0.0;
    }
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = tol.atol + tol.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / err.len() as f64).sqrt()
}

fn initial_step(
    f: &mut impl FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    tol: &Tolerances,
) -> Result<f64> {
    let scale: Vec<f64> = y0.iter().map(|y| tol.atol + tol.rtol * y.abs()).collect();
    let norm = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        }
    };
    let d0 = norm(y0);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let f1 = f(t0 + h0, &axpy(y0, h0, f0))?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1))
}

/// Adaptive Dormand–Prince 5(4) with PI step control and dense output at `times`.
pub fn integrate_adaptive(
    mut f: impl FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    z0: &[f64],
    times: &[f64],
    tol: &Tolerances,
) -> Result<Trajectory> {
    tol.validate()?;
    check_times(times)?;
    const SAFE: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO1: f64 = 0.2 - BETA * 0.75;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 10.0;

    let mut stats = SolverStats::default();
    let mut eval = |t: f64, y: &[f64], stats: &mut SolverStats, step: usize| -> Result<Vec<f64>> {
        stats.evaluations += 1;
        let k = f(t, y)?;
        finite_or(k, step, t)
    };
    let t_end = *times.last().unwrap();
    let mut states = vec![z0.to_vec()];
    let mut next = 1;
    let mut t = times[0];
    let mut y = z0.to_vec();
    if times.len() == 1 {
        return Ok(Trajectory { times: times.to_vec(), states, stats });
    }
    let mut k1 = eval(t, &y, &mut stats, 0)?;
    let mut h = {
        let mut g = |tt: f64, yy: &[f64]| eval(tt, yy, &mut stats, 0);
        initial_step(&mut g, t, &y, &k1, tol)?
    };
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0;
    while next < times.len() {
        if steps >= tol.max_steps {
            return Err(CoreError::Integration { step: steps, t, reason: "maximum step count exceeded".into() });
        }
        if h.abs() < 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(CoreError::Integration { step: steps, t, reason: "step size underflow".into() });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let s = {
            let mut g = |tt: f64, yy: &[f64]| eval(tt, yy, &mut stats, steps);
            dp5_step(&mut g, t, &y, &k1, h)?
        };
        let err = rms_norm(&s.err, &y, &s.y1, tol);
        let fac11 = err.powf(EXPO1);
        let fac = (fac11 / fac_old.powf(BETA)) / SAFE;
        let fac = fac.clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
        let mut h_new = h / fac;
        steps += 1;
        if err <= 1.0 {
            stats.accepted += 1;
            fac_old = err.max(1e-4);
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            let t_new = if last { t_end } else { t + h };
            while next < times.len() && times[next] <= t_new {
                let theta = (times[next] - t) / h;
                states.push(if times[next] == t_new { s.y1.clone() } else { interpolate(&y, &s, h, theta) });
                next += 1;
            }
            if s.y1.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Integration { step: steps, t, reason: "non-finite state".into() });
            }
            t = t_new;
            y = s.y1;
            k1 = s.k7;
        } else {
            stats.rejected += 1;
            h_new = h / (fac11 / SAFE).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
        h = h_new;
    }
    Ok(Trajectory { times: times.to_vec(), states, stats })
}

/// Dormand–Prince 5th-order solution with forced equal steps (no error control).
pub fn dp5_fixed(
    mut f: impl FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    z0: &[f64],
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let h = (t1 - t0) / steps as f64;
    let mut y = z0.to_vec();
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        let k1 = f(t, &y)?;
        y = dp5_step(&mut f, t, &y, &k1, h)?.y1;
    }
    Ok(y)
}
