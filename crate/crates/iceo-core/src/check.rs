//! Finite-difference verification helpers.
//!
//! Analytic gradients in this crate are checked against central differences;
//! the helpers live in the library (not a test module) so integration suites
//! and the CLI self-checks can reuse them.

/// Central-difference gradient of a scalar function at `x`.
pub fn central_diff_grad<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Jacobian (rows = outputs, cols = inputs) of a
/// vector-valued function at `x`.
pub fn central_diff_jacobian<F: FnMut(&[f64]) -> Vec<f64>>(
    mut f: F,
    x: &[f64],
    h: f64,
) -> Vec<Vec<f64>> {
    let out_dim = f(x).len();
    let mut jac = vec![vec![0.0; x.len()]; out_dim];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        for i in 0..out_dim {
            jac[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Directional derivative (f(x + h u) - f(x - h u)) / 2h of a vector function.
///
/// Useful on constrained domains: pick `u` tangent to the constraint (for the
/// simplex, sum of entries zero) so both probe points stay inside.
pub fn central_diff_directional<F: FnMut(&[f64]) -> Vec<f64>>(
    mut f: F,
    x: &[f64],
    u: &[f64],
    h: f64,
) -> Vec<f64> {
    let xp: Vec<f64> = x.iter().zip(u).map(|(a, b)| a + h * b).collect();
    let xm: Vec<f64> = x.iter().zip(u).map(|(a, b)| a - h * b).collect();
    let fp = f(&xp);
    let fm = f(&xm);
    fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// Worst relative disagreement between two vectors, with the denominator
/// floored at 1 so near-zero entries compare absolutely.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / f64::max(1.0, f64::max(x.abs(), y.abs())))
        .fold(0.0, f64::max)
}

/// [`max_rel_err`] over flattened matrices.
pub fn max_rel_err_mat(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(ra, rb)| max_rel_err(ra, rb))
        .fold(0.0, f64::max)
}
