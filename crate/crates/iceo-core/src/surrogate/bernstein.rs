//! Bernstein lattice surrogate.
//!
//! For grid order s the approximation of a function g on the simplex is
//!
//!   B_s(g)(p) = sum_{|alpha| = s} g(alpha / s) * (s! / alpha!) * p^alpha,
//!
//! a polynomial whose coefficients are oracle values at the lattice points.
//! The operator reproduces affine functions exactly and its weights
//! (s!/alpha!) p^alpha form a partition of unity, both of which are tested.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::{enumerate_grid, ProbVector};

use super::{SurrogateSamples, SurrogateSampling};

/// Fitted Bernstein surrogate: lattice multi-indices, oracle values at the
/// lattice points, and the multinomial weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BernsteinModel {
    k: usize,
    order: usize,
    alphas: Vec<Vec<u32>>,
    /// Oracle decision at each lattice point, grid order.
    values: Vec<Vec<f64>>,
    /// Multinomial coefficient s!/alpha! per lattice point.
    weights: Vec<f64>,
    decision_dim: usize,
}

/// Multinomial coefficient s! / (alpha_1! ... alpha_K!) as f64, computed as a
/// product of binomials so intermediate values stay integral.
fn multinomial(s: usize, alpha: &[u32]) -> f64 {
    debug_assert_eq!(alpha.iter().map(|&a| a as usize).sum::<usize>(), s);
    let mut remaining = s as u64;
    let mut acc = 1.0f64;
    for &a in alpha {
        acc *= binomial(remaining, a as u64);
        remaining -= a as u64;
    }
    acc
}

fn binomial(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

impl BernsteinModel {
    /// Fit from grid samples; requires `samples` to be a complete lattice
    /// (produced with [`SurrogateSampling::Grid`]).
    pub fn fit(samples: &SurrogateSamples) -> Result<Self> {
        let order = match samples.sampling {
            SurrogateSampling::Grid { order } => order,
            SurrogateSampling::Uniform { .. } => {
                return Err(Error::domain(
                    "Bernstein fit needs lattice samples, not uniform draws",
                ));
            }
        };
        let k = samples.k();
        let grid = enumerate_grid(k, order)?;
        if grid.len() != samples.len() {
            return Err(Error::dim(format!(
                "expected {} lattice samples, got {}",
                grid.len(),
                samples.len()
            )));
        }
        let alphas = grid.alphas().to_vec();
        let weights = alphas.iter().map(|a| multinomial(order, a)).collect();
        Ok(BernsteinModel {
            k,
            order,
            alphas,
            values: samples.decisions.clone(),
            weights,
            decision_dim: samples.decision_dim(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn decision_dim(&self) -> usize {
        self.decision_dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn check_input(&self, p: &ProbVector) -> Result<()> {
        if p.len() != self.k {
            return Err(Error::dim(format!(
                "input has {} entries, model has K = {}",
                p.len(),
                self.k
            )));
        }
        Ok(())
    }

    pub fn eval(&self, p: &ProbVector) -> Result<Vec<f64>> {
        self.check_input(p)?;
        let mut out = vec![0.0; self.decision_dim];
        for (i, alpha) in self.alphas.iter().enumerate() {
            let mut mono = self.weights[i];
            for (j, &a) in alpha.iter().enumerate() {
                if a > 0 {
                    mono *= p[j].powi(a as i32);
                }
            }
            if mono == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(&self.values[i]) {
                *o += mono * v;
            }
        }
        Ok(out)
    }

    /// Jacobian d w~ / d p (d x K). Partial of a monomial p^alpha in p_j is
    /// alpha_j p^(alpha - e_j); terms with alpha_j = 0 vanish, which also
    /// keeps boundary points (p_j = 0) well defined.
    pub fn jacobian(&self, p: &ProbVector) -> Result<Vec<Vec<f64>>> {
        self.check_input(p)?;
        let mut jac = vec![vec![0.0; self.k]; self.decision_dim];
        for (i, alpha) in self.alphas.iter().enumerate() {
            for j in 0..self.k {
                let aj = alpha[j];
                if aj == 0 {
                    continue;
                }
                let mut part = self.weights[i] * aj as f64;
                if aj > 1 {
                    part *= p[j].powi(aj as i32 - 1);
                }
                for (l, &al) in alpha.iter().enumerate() {
                    if l != j && al > 0 {
                        part *= p[l].powi(al as i32);
                    }
                }
                if part == 0.0 {
                    continue;
                }
                for (row, v) in jac.iter_mut().zip(&self.values[i]) {
                    row[j] += part * v;
                }
            }
        }
        Ok(jac)
    }

    /// Worst-case evaluation error against reference pairs (used to report
    /// approximation quality over a test set).
    pub fn sup_error(&self, probs: &[ProbVector], reference: &[Vec<f64>]) -> Result<f64> {
        if probs.len() != reference.len() {
            return Err(Error::dim("probs and reference lengths differ"));
        }
        let mut worst: f64 = 0.0;
        for (p, w) in probs.iter().zip(reference) {
            let approx = self.eval(p)?;
            for (a, b) in approx.iter().zip(w) {
                worst = worst.max((a - b).abs());
            }
        }
        Ok(worst)
    }
}
