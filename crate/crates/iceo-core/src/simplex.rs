//! Probability vectors on the simplex, finite scenario supports, and the
//! regular grids used to fit oracle surrogates.
//!
//! Conventions used throughout the crate:
//! * a distribution over K scenarios is a [`ProbVector`] of length K;
//! * grids on the simplex are indexed by integer compositions `alpha` of a
//!   fixed order `s`, listed in lexicographic order of `alpha`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sum tolerance accepted by [`ProbVector::new`] before renormalizing.
pub const SUM_TOL: f64 = 1e-6;
/// Most negative component accepted by [`ProbVector::new`] (clamped to zero).
pub const NEG_TOL: f64 = 1e-12;

/// Numerically stable softmax; the largest logit is subtracted before
/// exponentiation so inputs like 1000 do not overflow.
///
/// Panics on an empty slice; non-finite logits are a domain error surfaced
/// through the returned vector only via `ProbVector` construction, so callers
/// that need validation should go through [`ProbVector::new`].
pub fn softmax(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "softmax of empty logit vector");
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|&x| (x - m).exp()).collect();
    let sum: f64 = out.iter().sum();
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// A point of the probability simplex: nonnegative components summing to one.
///
/// Construction renormalizes sums within [`SUM_TOL`] of one and rejects
/// anything further off, so downstream code can rely on the invariant instead
/// of re-checking it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector {
    p: Vec<f64>,
}

impl ProbVector {
    pub fn new(mut p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::domain("probability vector must be non-empty"));
        }
        for (i, x) in p.iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(Error::domain(format!("component {i} is not finite")));
            }
            if *x < -NEG_TOL {
                return Err(Error::domain(format!("component {i} is negative ({x:e})")));
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::domain(format!(
                "components sum to {sum}, outside 1 +/- {SUM_TOL:e}"
            )));
        }
        for x in &mut p {
            *x /= sum;
        }
        Ok(ProbVector { p })
    }

    /// Uniform distribution over `k` outcomes.
    pub fn uniform(k: usize) -> Self {
        assert!(k > 0);
        ProbVector {
            p: vec![1.0 / k as f64; k],
        }
    }

    /// All mass on outcome `i`.
    pub fn point_mass(k: usize, i: usize) -> Self {
        assert!(i < k, "point mass index {i} out of range {k}");
        let mut p = vec![0.0; k];
        p[i] = 1.0;
        ProbVector { p }
    }

    /// Softmax of a logit vector as a validated simplex point.
    pub fn from_logits(v: &[f64]) -> Self {
        ProbVector { p: softmax(v) }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// Expectation of per-outcome values `v` under this distribution.
    pub fn dot(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.p.len());
        self.p.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Index of the largest component (lowest index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.p.len() {
            if self.p[i] > self.p[best] {
                best = i;
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbVector::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Vec<f64> {
        p.p
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.p[i]
    }
}

/// Finite support of the uncertainty: K scenario points in R^d.
///
/// Scenario order is meaningful; probability vectors and label indices refer
/// to positions in this list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    points: Vec<Vec<f64>>,
    dim: usize,
}

impl ScenarioSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::domain(format!(
                "scenario set needs at least 2 points, got {}",
                points.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::domain("scenario points must have dimension >= 1"));
        }
        for (k, z) in points.iter().enumerate() {
            if z.len() != dim {
                return Err(Error::dim(format!(
                    "scenario {k} has dimension {}, expected {dim}",
                    z.len()
                )));
            }
            if z.iter().any(|x| !x.is_finite()) {
                return Err(Error::domain(format!("scenario {k} has non-finite entries")));
            }
        }
        Ok(ScenarioSet { points, dim })
    }

    /// Number of scenarios K.
    pub fn count(&self) -> usize {
        self.points.len()
    }

    /// Ambient dimension d of each scenario point.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(|v| v.as_slice())
    }
}

/// Number of grid points of order `s` on the K-simplex: C(K+s-1, K-1),
/// i.e. the number of compositions of s into K nonnegative parts.
pub fn grid_point_count(k: usize, s: usize) -> Option<u128> {
    // binomial(s + k - 1, k - 1) with overflow checks
    let n = (s + k - 1) as u128;
    let r = (k - 1) as u128;
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.checked_mul(n - i)?;
        acc /= i + 1; // exact: product of j consecutive integers divisible by j!
    }
    Some(acc)
}

/// Order-`s` lattice on the K-simplex: all points `alpha / s` for multi-indices
/// `alpha` with nonnegative integer entries summing to `s`.
#[derive(Debug, Clone)]
pub struct SimplexGrid {
    k: usize,
    order: usize,
    alphas: Vec<Vec<u32>>,
}

/// Grids beyond this many points are rejected rather than materialized.
pub const MAX_GRID_POINTS: u128 = 1_000_000;

/// Enumerate the order-`s` simplex grid in lexicographic order of the
/// multi-indices. `(K, s) = (2, 2)` yields alphas (0,2), (1,1), (2,0),
/// i.e. points (0,1), (0.5,0.5), (1,0).
pub fn enumerate_grid(k: usize, s: usize) -> Result<SimplexGrid> {
    if k == 0 {
        return Err(Error::domain("grid needs K >= 1"));
    }
    if s == 0 {
        return Err(Error::domain("grid order s must be >= 1"));
    }
    let count = grid_point_count(k, s)
        .filter(|&c| c <= MAX_GRID_POINTS)
        .ok_or_else(|| {
            Error::TooLarge(format!(
                "simplex grid K={k}, s={s} exceeds {MAX_GRID_POINTS} points"
            ))
        })?;
    let mut alphas = Vec::with_capacity(count as usize);
    let mut current = vec![0u32; k];
    fill_lex(&mut alphas, &mut current, 0, s as u32);
    debug_assert_eq!(alphas.len() as u128, count);
    Ok(SimplexGrid { k, order: s, alphas })
}

fn fill_lex(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for v in 0..=remaining {
        current[pos] = v;
        fill_lex(out, current, pos + 1, remaining - v);
    }
    current[pos] = 0;
}

impl SimplexGrid {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Grid order s (denominator of every coordinate).
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Multi-index of grid point `i`.
    pub fn alpha(&self, i: usize) -> &[u32] {
        &self.alphas[i]
    }

    /// Grid point `i` as a simplex point alpha/s.
    pub fn point(&self, i: usize) -> ProbVector {
        let s = self.order as f64;
        ProbVector {
            p: self.alphas[i].iter().map(|&a| a as f64 / s).collect(),
        }
    }

    pub fn points(&self) -> impl Iterator<Item = ProbVector> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    pub fn alphas(&self) -> &[Vec<u32>] {
        &self.alphas
    }
}

/// Draw one uniform point of the K-simplex from an existing generator.
///
/// Uses the exponential-spacings construction: K independent Exp(1) draws
/// normalized by their sum are Dirichlet(1,...,1), i.e. uniform on the simplex.
pub fn sample_simplex_with<R: Rng + ?Sized>(k: usize, rng: &mut R) -> ProbVector {
    assert!(k > 0);
    let mut e = vec![0.0f64; k];
    let mut sum = 0.0;
    for x in &mut e {
        // Exp(1) via inverse CDF on u in (0, 1]; flip the open end so ln never sees 0.
        let u: f64 = rng.gen::<f64>();
        *x = -(1.0 - u).ln();
        sum += *x;
    }
    for x in &mut e {
        *x /= sum;
    }
    ProbVector { p: e }
}

/// Draw `n` independent uniform simplex points from a fixed seed.
pub fn sample_simplex_uniform(k: usize, n: usize, seed: u64) -> Result<Vec<ProbVector>> {
    if k == 0 {
        return Err(Error::domain("simplex dimension K must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| sample_simplex_with(k, &mut rng)).collect())
}
