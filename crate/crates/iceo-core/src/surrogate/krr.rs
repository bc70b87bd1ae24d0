//! Kernel ridge regression surrogate with the inhomogeneous polynomial kernel
//! k(p, p') = (c + p.p')^s.
//!
//! Fitting solves (G + m lambda I) a_j = w_j per output coordinate, the
//! penalized form of ridge regression in the kernel's feature space; lambda
//! is the per-sample penalty weight. Predictions and their input Jacobians
//! are kernel expansions over the stored support points.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::ProbVector;

use super::SurrogateSamples;

/// Gram matrices up to this size get an explicit eigenvalue PSD check at fit
/// time; beyond it only symmetry is verified (the expansion is PSD by
/// construction, the check guards assembly mistakes at test scale).
const PSD_CHECK_LIMIT: usize = 600;

/// Fitted polynomial-kernel ridge model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelModel {
    /// Support inputs p_i (the training distributions), m x K.
    support: Vec<Vec<f64>>,
    /// Dual coefficients, m x d: column j solves (G + m lambda I) a = w_j.
    coefficients: Vec<Vec<f64>>,
    offset: f64,
    degree: u32,
    lambda: f64,
    decision_dim: usize,
}

fn kernel(c: f64, s: u32, a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (c + dot).powi(s as i32)
}

impl KernelModel {
    /// `offset` >= 0 and `degree` >= 1 keep the kernel positive semidefinite;
    /// `lambda` > 0 makes the ridge system positive definite.
    pub fn fit(
        samples: &SurrogateSamples,
        offset: f64,
        degree: u32,
        lambda: f64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("kernel fit needs at least one sample"));
        }
        if !(offset >= 0.0) || !offset.is_finite() {
            return Err(Error::domain("kernel offset must be >= 0"));
        }
        if degree == 0 {
            return Err(Error::domain("kernel degree must be >= 1"));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::domain("ridge weight lambda must be > 0"));
        }
        let m = samples.len();
        let d = samples.decision_dim();
        let support: Vec<Vec<f64>> = samples
            .probs
            .iter()
            .map(|p| p.as_slice().to_vec())
            .collect();

        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = kernel(offset, degree, &support[i], &support[j]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        if m <= PSD_CHECK_LIMIT {
            let min_eig = gram
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            if min_eig < -1e-8 {
                return Err(Error::numeric(format!(
                    "Gram matrix not PSD: min eigenvalue {min_eig:e}"
                )));
            }
        }
        let ridge = m as f64 * lambda;
        for i in 0..m {
            gram[(i, i)] += ridge;
        }
        let chol = Cholesky::new(gram).ok_or_else(|| {
            Error::numeric("ridge system not positive definite (Cholesky failed)")
        })?;

        let mut coefficients = vec![vec![0.0; d]; m];
        for j in 0..d {
            let rhs = DVector::from_fn(m, |i, _| samples.decisions[i][j]);
            let a = chol.solve(&rhs);
            for i in 0..m {
                coefficients[i][j] = a[i];
            }
        }
        Ok(KernelModel {
            support,
            coefficients,
            offset,
            degree,
            lambda,
            decision_dim: d,
        })
    }

    pub fn k(&self) -> usize {
        self.support.first().map_or(0, |p| p.len())
    }

    pub fn decision_dim(&self) -> usize {
        self.decision_dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    fn check_input(&self, p: &ProbVector) -> Result<()> {
        if p.len() != self.k() {
            return Err(Error::dim(format!(
                "input has {} entries, model has K = {}",
                p.len(),
                self.k()
            )));
        }
        Ok(())
    }

    /// w~_j(p) = sum_i a_ij (c + p_i . p)^s.
    pub fn eval(&self, p: &ProbVector) -> Result<Vec<f64>> {
        self.check_input(p)?;
        let mut out = vec![0.0; self.decision_dim];
        for (pi, ai) in self.support.iter().zip(&self.coefficients) {
            let kv = kernel(self.offset, self.degree, pi, p.as_slice());
            for (o, a) in out.iter_mut().zip(ai) {
                *o += a * kv;
            }
        }
        Ok(out)
    }

    /// d w~_j / d p = sum_i a_ij s (c + p_i . p)^(s-1) p_i.
    pub fn jacobian(&self, p: &ProbVector) -> Result<Vec<Vec<f64>>> {
        self.check_input(p)?;
        let k = self.k();
        let mut jac = vec![vec![0.0; k]; self.decision_dim];
        let s = self.degree;
        for (pi, ai) in self.support.iter().zip(&self.coefficients) {
            let dot: f64 = pi.iter().zip(p.as_slice()).map(|(x, y)| x * y).sum();
            let base = s as f64 * (self.offset + dot).powi(s as i32 - 1);
            for (row, a) in jac.iter_mut().zip(ai) {
                let scale = a * base;
                for (r, x) in row.iter_mut().zip(pi) {
                    *r += scale * x;
                }
            }
        }
        Ok(jac)
    }

    /// Root-mean-square prediction error over reference pairs, averaged
    /// across output coordinates.
    pub fn rmse(&self, probs: &[ProbVector], reference: &[Vec<f64>]) -> Result<f64> {
        if probs.len() != reference.len() || probs.is_empty() {
            return Err(Error::dim("need equally many probs and references"));
        }
        let mut acc = 0.0;
        let mut count = 0usize;
        for (p, w) in probs.iter().zip(reference) {
            let approx = self.eval(p)?;
            for (a, b) in approx.iter().zip(w) {
                acc += (a - b) * (a - b);
                count += 1;
            }
        }
        Ok((acc / count as f64).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{central_diff_directional, max_rel_err};
    use crate::simplex::sample_simplex_uniform;
    use crate::surrogate::SurrogateSampling;
    use approx::assert_abs_diff_eq;

    fn toy_samples(m: usize, seed: u64, f: impl Fn(&[f64]) -> Vec<f64>) -> SurrogateSamples {
        let probs = sample_simplex_uniform(3, m, seed).unwrap();
        let decisions = probs.iter().map(|p| f(p.as_slice())).collect();
        SurrogateSamples {
            probs,
            decisions,
            sampling: SurrogateSampling::Uniform { count: m },
            rho: 0.1,
            noise_sigma: 0.0,
            seed,
        }
    }

    #[test]
    fn interpolates_a_representable_function_at_small_lambda() {
        // Target is degree-2 polynomial, inside the kernel's span for s = 2.
        let f = |p: &[f64]| vec![1.5 * p[0] * p[0] - p[1] * p[2] + 0.3];
        let samples = toy_samples(60, 1, f);
        let model = KernelModel::fit(&samples, 1.0, 2, 1e-10).unwrap();
        for p in sample_simplex_uniform(3, 30, 2).unwrap() {
            let want = f(p.as_slice())[0];
            let got = model.eval(&p).unwrap()[0];
            assert_abs_diff_eq!(got, want, epsilon = 1e-5);
        }
    }

    #[test]
    fn ridge_shrinks_predictions() {
        let f = |p: &[f64]| vec![10.0 * p[0]];
        let samples = toy_samples(40, 3, f);
        let tight = KernelModel::fit(&samples, 1.0, 2, 1e-9).unwrap();
        let heavy = KernelModel::fit(&samples, 1.0, 2, 10.0).unwrap();
        let p = ProbVector::uniform(3);
        let t = tight.eval(&p).unwrap()[0];
        let h = heavy.eval(&p).unwrap()[0];
        // Heavy ridge pulls toward zero relative to the near-interpolant.
        assert!(h.abs() < t.abs());
    }

    #[test]
    fn jacobian_matches_directional_differences() {
        let f = |p: &[f64]| vec![p[0] * p[1], p[2] * p[2] - p[0]];
        let samples = toy_samples(50, 4, f);
        let model = KernelModel::fit(&samples, 0.5, 3, 1e-6).unwrap();
        for p in sample_simplex_uniform(3, 10, 5).unwrap() {
            let jac = model.jacobian(&p).unwrap();
            for dir in [[1.0, -1.0, 0.0], [0.25, 0.25, -0.5]] {
                let got: Vec<f64> = jac
                    .iter()
                    .map(|row| row.iter().zip(&dir).map(|(a, b)| a * b).sum())
                    .collect();
                let fd = central_diff_directional(
                    |x| model.eval(&ProbVector::new(x.to_vec()).unwrap()).unwrap(),
                    p.as_slice(),
                    &dir,
                    1e-6,
                );
                assert!(max_rel_err(&got, &fd) < 1e-7);
            }
        }
    }

    #[test]
    fn fit_validates_hyperparameters() {
        let samples = toy_samples(10, 6, |p| vec![p[0]]);
        assert!(KernelModel::fit(&samples, -1.0, 2, 1e-6).is_err());
        assert!(KernelModel::fit(&samples, 1.0, 0, 1e-6).is_err());
        assert!(KernelModel::fit(&samples, 1.0, 2, 0.0).is_err());
    }

    #[test]
    fn eval_rejects_wrong_dimension() {
        let samples = toy_samples(10, 7, |p| vec![p[0]]);
        let model = KernelModel::fit(&samples, 1.0, 2, 1e-6).unwrap();
        assert!(model.eval(&ProbVector::uniform(4)).is_err());
    }
}
