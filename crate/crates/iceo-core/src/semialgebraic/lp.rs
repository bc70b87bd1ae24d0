//! Dense two-phase simplex for standard-form linear programs:
//! min c'x subject to E x = f, x >= 0.
//!
//! Bland's pivoting rule throughout, so the method terminates on degenerate
//! instances without cycling. Built for the small certification systems of
//! this module (tens of variables), not for scale.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const MAX_PIVOTS: usize = 50_000;

/// Minimizes `objective . x` over `equalities x = rhs, x >= 0`.
pub fn solve_lp(objective: &[f64], equalities: &[Vec<f64>], rhs: &[f64]) -> Result<LpOutcome> {
    let n = objective.len();
    let m = equalities.len();
    if rhs.len() != m {
        return Err(Error::dim(format!(
            "{} constraint rows vs {} right-hand sides",
            m,
            rhs.len()
        )));
    }
    if equalities.iter().any(|row| row.len() != n) {
        return Err(Error::dim("constraint row length disagrees with objective"));
    }
    let finite = objective
        .iter()
        .chain(rhs)
        .chain(equalities.iter().flatten());
    if !finite.clone().all(|v| v.is_finite()) {
        return Err(Error::domain("linear program data must be finite"));
    }
    if m == 0 {
        return Ok(if objective.iter().any(|&c| c < -COST_TOL) {
            LpOutcome::Unbounded
        } else {
            LpOutcome::Optimal { x: vec![0.0; n], value: 0.0 }
        });
    }

    // Tableau columns: n structural, m artificial, then the right-hand side.
    let total = n + m;
    let mut tableau: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let flip = if rhs[i] < 0.0 { -1.0 } else { 1.0 };
            let mut row = vec![0.0; total + 1];
            for j in 0..n {
                row[j] = flip * equalities[i][j];
            }
            row[n + i] = 1.0;
            row[total] = flip * rhs[i];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (n..total).collect();
    let mut pivots = 0usize;

    // Phase 1: minimize the artificial mass.
    let mut cost = vec![0.0; total + 1];
    for j in n..total {
        cost[j] = 1.0;
    }
    for row in &tableau {
        for (c, t) in cost.iter_mut().zip(row) {
            *c -= t;
        }
    }
    run_pivots(&mut tableau, &mut cost, &mut basis, total, &mut pivots)?;
    let artificial_mass = -cost[total];
    if artificial_mass > FEAS_TOL {
        return Ok(LpOutcome::Infeasible);
    }

    // Swap basic artificials for structural columns where the row has any;
    // rows without one are redundant and stay pinned at zero.
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tableau[i][j].abs() > PIVOT_TOL) {
                pivot(&mut tableau, &mut cost, i, j);
                basis[i] = j;
            }
        }
    }

    // Phase 2 over the structural columns only.
    cost = vec![0.0; total + 1];
    cost[..n].copy_from_slice(objective);
    for (i, row) in tableau.iter().enumerate() {
        let cb = if basis[i] < n { objective[basis[i]] } else { 0.0 };
        if cb != 0.0 {
            for (c, t) in cost.iter_mut().zip(row) {
                *c -= cb * t;
            }
        }
    }
    if !run_pivots(&mut tableau, &mut cost, &mut basis, n, &mut pivots)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    let mut value = 0.0;
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] = tableau[i][total];
            value += objective[basis[i]] * tableau[i][total];
        }
    }
    Ok(LpOutcome::Optimal { x, value })
}

/// Bland loop; entering columns restricted to `0..allowed`. Returns false on
/// an unbounded ray.
fn run_pivots(
    tableau: &mut [Vec<f64>],
    cost: &mut [f64],
    basis: &mut [usize],
    allowed: usize,
    pivots: &mut usize,
) -> Result<bool> {
    let total = cost.len() - 1;
    loop {
        let Some(entering) = (0..allowed).find(|&j| cost[j] < -COST_TOL) else {
            return Ok(true);
        };
        let mut leaving: Option<usize> = None;
        let mut best = f64::INFINITY;
        for (i, row) in tableau.iter().enumerate() {
            if row[entering] > PIVOT_TOL {
                let ratio = row[total] / row[entering];
                let tie = (ratio - best).abs() <= 1e-12
                    && leaving.is_some_and(|l| basis[i] < basis[l]);
                if ratio < best - 1e-12 || tie {
                    best = ratio;
                    leaving = Some(i);
                }
            }
        }
        let Some(leaving) = leaving else {
            return Ok(false);
        };
        pivot(tableau, cost, leaving, entering);
        basis[leaving] = entering;
        *pivots += 1;
        if *pivots > MAX_PIVOTS {
            return Err(Error::numeric("simplex pivot limit exceeded"));
        }
    }
}

fn pivot(tableau: &mut [Vec<f64>], cost: &mut [f64], row: usize, col: usize) {
    let scale = tableau[row][col];
    for v in tableau[row].iter_mut() {
        *v /= scale;
    }
    let pivot_row = tableau[row].clone();
    for (i, other) in tableau.iter_mut().enumerate() {
        if i != row && other[col].abs() > 0.0 {
            let factor = other[col];
            for (o, p) in other.iter_mut().zip(&pivot_row) {
                *o -= factor * p;
            }
        }
    }
    let factor = cost[col];
    if factor.abs() > 0.0 {
        for (c, p) in cost.iter_mut().zip(&pivot_row) {
            *c -= factor * p;
        }
    }
}
