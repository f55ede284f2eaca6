//! Central finite differences, used as a testing oracle.

/// Central-difference gradient of a scalar function.
pub fn gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector function, row-major `out × in`.
pub fn jacobian(mut f: impl FnMut(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let mut p = x.to_vec();
    let mut cols = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        cols.push(
            up.iter()
                .zip(&down)
                .map(|(u, d)| (u - d) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    let rows = cols.first().map_or(0, Vec::len);
    (0..rows).map(|r| cols.iter().map(|c| c[r]).collect()).collect()
}

/// Worst deviation between two arrays, relative to the larger magnitude of
/// the finite-difference reference with an absolute floor of `1e-8`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "length mismatch");
    let scale = numeric.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .fold(0.0_f64, |m, (a, n)| m.max((a - n).abs()))
        / scale
}

/// Compares an analytic gradient with central differences of `f` at `x`.
pub fn finite_difference_check(
    f: impl FnMut(&[f64]) -> f64,
    analytic: &[f64],
    x: &[f64],
    h: f64,
) -> f64 {
    assert!(h > 0.0 && h <= 1e-2, "step {h} outside (0, 1e-2]");
    relative_error(analytic, &gradient(f, x, h))
}
