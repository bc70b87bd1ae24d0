//! The regularized decision oracle
//!
//!   w_rho(p) = argmin_{w in S}  sum_k p_k c(w, xi_k) + rho phi(w)
//!
//! solved by projected (sub)gradient descent, plus a grid-search reference
//! solver used to validate it. Strong convexity (rho > 0) makes the solution
//! unique and (L_c / rho)-Lipschitz in p.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::problems::{phi, ProblemInstance};
use crate::simplex::ProbVector;

/// Stopping parameters for [`solve_regularized`].
#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Iteration cap; hitting it returns the current answer with
    /// `converged = false` rather than an error.
    pub max_iters: usize,
    /// Successive-iterate stopping threshold (infinity norm).
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            max_iters: 50_000,
            tol: 1e-8,
        }
    }
}

/// Output of [`solve_regularized`].
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub w: Vec<f64>,
    /// Objective value sum_k p_k c(w, xi_k) + rho phi(w) at `w`.
    pub objective: f64,
    /// False when the iteration cap was hit before the tolerance;
    /// `last_step_norm` then reports how unsettled the final step still was.
    pub converged: bool,
    pub iterations: usize,
    pub last_step_norm: f64,
}

/// Minimize the regularized expected cost over the feasible region.
///
/// Smooth costs use fixed-step projected gradient with step 1/(L + rho);
/// nonsmooth costs use projected subgradient with step 1/(rho t) and return
/// the t-weighted average of the iterates, which discounts the large early
/// steps quadratically. `warm_start` (projected onto S) replaces the default
/// start project(0).
pub fn solve_regularized(
    prob: &ProblemInstance,
    p: &ProbVector,
    rho: f64,
    cfg: &OracleConfig,
    warm_start: Option<&[f64]>,
) -> Result<OracleSolution> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::domain(format!("rho must be positive, got {rho}")));
    }
    if p.len() != prob.num_scenarios() {
        return Err(Error::dim(format!(
            "distribution has {} entries, problem has {} scenarios",
            p.len(),
            prob.num_scenarios()
        )));
    }
    if cfg.max_iters == 0 {
        return Err(Error::domain("max_iters must be >= 1"));
    }
    let d = prob.dim();
    let region = prob.region();

    let mut w = Vec::with_capacity(d);
    match warm_start {
        Some(ws) => region.project_into(ws, &mut w)?,
        None => region.project_into(&vec![0.0; d], &mut w)?,
    }

    let smooth_step = prob.grad_smoothness_bound().map(|l| 1.0 / (l + rho));
    let mut grad = vec![0.0; d];
    let mut next = Vec::with_capacity(d);
    let mut avg = w.clone();
    let mut step_norm = f64::INFINITY;
    let mut iters = 0;

    for t in 1..=cfg.max_iters {
        iters = t;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for k in 0..p.len() {
            if p[k] != 0.0 {
                prob.add_scaled_cost_grad(&w, k, p[k], &mut grad);
            }
        }
        for (g, &wi) in grad.iter_mut().zip(&w) {
            *g += rho * wi;
        }
        let eta = match smooth_step {
            Some(s) => s,
            None => 1.0 / (rho * t as f64),
        };
        let target: Vec<f64> = w.iter().zip(&grad).map(|(&wi, &g)| wi - eta * g).collect();
        region.project_into(&target, &mut next)?;
        step_norm = w
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut w, &mut next);
        if smooth_step.is_none() {
            // Running average with weights proportional to t.
            let gamma = 2.0 / (t as f64 + 1.0);
            for (a, &wi) in avg.iter_mut().zip(&w) {
                *a += gamma * (wi - *a);
            }
        }
        if step_norm <= cfg.tol {
            break;
        }
    }

    let w_out = if smooth_step.is_some() { w } else { avg };
    let objective = prob.expected_cost(&w_out, p)? + rho * phi(&w_out);
    Ok(OracleSolution {
        objective,
        converged: step_norm <= cfg.tol,
        iterations: iters,
        last_step_norm: step_norm,
        w: w_out,
    })
}

/// Reference solution from exhaustive grid search.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub w: Vec<f64>,
    pub objective: f64,
    /// Feasible grid points examined.
    pub points: usize,
}

/// Grids beyond this many candidate points are rejected.
pub const MAX_BRUTE_FORCE_POINTS: u128 = 100_000_000;

/// Exhaustive minimization of the regularized objective over the lattice of
/// spacing `grid_step` inside the region's bounding box, keeping only
/// feasible points. Intended as an independent check on [`solve_regularized`]
/// for low-dimensional instances (the candidate count is capped, not the
/// dimension itself).
pub fn brute_force_solve(
    prob: &ProblemInstance,
    p: &ProbVector,
    rho: f64,
    grid_step: f64,
) -> Result<GridSolution> {
    if !(grid_step > 0.0) {
        return Err(Error::domain(format!("grid step must be positive, got {grid_step}")));
    }
    if !(rho >= 0.0) {
        return Err(Error::domain("rho must be nonnegative"));
    }
    if p.len() != prob.num_scenarios() {
        return Err(Error::dim("distribution length != scenario count"));
    }
    let bbox = prob.region().bounding_box();
    let mut counts = Vec::with_capacity(bbox.len());
    let mut total: u128 = 1;
    for &(lo, hi) in &bbox {
        let n = ((hi - lo) / grid_step).floor() as u128 + 1;
        total = total
            .checked_mul(n)
            .filter(|&t| t <= MAX_BRUTE_FORCE_POINTS)
            .ok_or_else(|| {
                Error::TooLarge(format!(
                    "brute-force grid exceeds {MAX_BRUTE_FORCE_POINTS} points"
                ))
            })?;
        counts.push(n as usize);
    }

    let mut idx = vec![0usize; bbox.len()];
    let mut w = vec![0.0; bbox.len()];
    let mut best: Option<GridSolution> = None;
    let mut feasible = 0usize;
    loop {
        for (i, &ix) in idx.iter().enumerate() {
            w[i] = bbox[i].0 + ix as f64 * grid_step;
        }
        if prob.region().member(&w) {
            feasible += 1;
            let obj = prob.expected_cost(&w, p)? + rho * phi(&w);
            if best.as_ref().map_or(true, |b| obj < b.objective) {
                best = Some(GridSolution {
                    w: w.clone(),
                    objective: obj,
                    points: 0,
                });
            }
        }
        // Odometer increment over the index lattice.
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                let mut sol = best.ok_or_else(|| {
                    Error::domain("no feasible grid point; refine the step or check the region")
                })?;
                sol.points = feasible;
                return Ok(sol);
            }
            idx[pos] += 1;
            if idx[pos] < counts[pos] {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Empirical Lipschitz constant of the cost vector w -> (c(w, xi_1), ..., c(w, xi_K))
/// over the feasible region: the max pairwise ratio ||c(w) - c(w')|| / ||w - w'||
/// over `pairs` random projected pairs. A sampled max underestimates the true
/// constant, which makes bounds built from it conservative to test against.
pub fn estimate_cost_lipschitz(prob: &ProblemInstance, pairs: usize, seed: u64) -> Result<f64> {
    let bbox = prob.region().bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Result<Vec<f64>> {
        let y: Vec<f64> = bbox
            .iter()
            .map(|&(lo, hi)| rng.gen_range(lo..=hi))
            .collect();
        prob.region().project(&y)
    };
    let k = prob.num_scenarios();
    let mut best: f64 = 0.0;
    for _ in 0..pairs {
        let w1 = draw(&mut rng)?;
        let w2 = draw(&mut rng)?;
        let dw: f64 = w1
            .iter()
            .zip(&w2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dw < 1e-9 {
            continue;
        }
        let dc: f64 = (0..k)
            .map(|s| {
                let d = prob.cost(&w1, s) - prob.cost(&w2, s);
                d * d
            })
            .sum::<f64>()
            .sqrt();
        best = best.max(dc / dw);
    }
    Ok(best)
}
