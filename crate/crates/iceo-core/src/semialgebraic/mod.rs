//! Certification that an affine hypothesis x -> Bx + b maps a polyhedral
//! feature domain into the probability simplex.
//!
//! The universal constraint "Bx + b on the simplex for every x with Ax >= a"
//! reduces by LP duality to per-row feasibility systems in nonnegative
//! multipliers. This module builds those systems, decides them with the
//! simplex method, falsifies candidate hypotheses by hit-and-run sampling,
//! and exports the full polynomial training program for external solvers.

mod lp;
mod poly;
mod program;

pub use poly::{Poly, PolyProgram, Rel};
pub use program::build_newsvendor_training_program;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use lp::{solve_lp, LpOutcome};

/// Componentwise slack below which a simplex-membership violation is called.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Feature domain X = {x : Ax >= a}, certified nonempty and bounded at
/// construction; both are prerequisites for the duality argument and for
/// sampling.
#[derive(Debug, Clone)]
pub struct PolyhedralDomain {
    rows: Vec<Vec<f64>>,
    bounds: Vec<f64>,
}

impl PolyhedralDomain {
    pub fn new(rows: Vec<Vec<f64>>, bounds: Vec<f64>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::domain("domain needs at least one row and one column"));
        }
        let p = rows[0].len();
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::dim("domain rows must share a length"));
        }
        if bounds.len() != rows.len() {
            return Err(Error::dim(format!(
                "{} rows vs {} bounds",
                rows.len(),
                bounds.len()
            )));
        }
        if !rows.iter().flatten().chain(&bounds).all(|v| v.is_finite()) {
            return Err(Error::domain("domain data must be finite"));
        }
        let domain = PolyhedralDomain { rows, bounds };
        for r in 0..p {
            let mut c = vec![0.0; p];
            c[r] = 1.0;
            for sign in [1.0, -1.0] {
                let scaled: Vec<f64> = c.iter().map(|v| sign * v).collect();
                match domain.minimize(&scaled)? {
                    LpOutcome::Optimal { .. } => {}
                    LpOutcome::Infeasible => {
                        return Err(Error::domain("domain is empty"));
                    }
                    LpOutcome::Unbounded => {
                        return Err(Error::domain(format!(
                            "domain is unbounded along coordinate {r}"
                        )));
                    }
                }
            }
        }
        Ok(domain)
    }

    /// Axis-aligned box given per-coordinate closed ranges.
    pub fn boxed(lows: &[f64], highs: &[f64]) -> Result<Self> {
        if lows.len() != highs.len() || lows.is_empty() {
            return Err(Error::dim("box needs matching nonempty bound lists"));
        }
        if lows.iter().zip(highs).any(|(l, h)| l > h) {
            return Err(Error::domain("box has a low bound above its high bound"));
        }
        let p = lows.len();
        let mut rows = Vec::with_capacity(2 * p);
        let mut bounds = Vec::with_capacity(2 * p);
        for j in 0..p {
            let mut row = vec![0.0; p];
            row[j] = 1.0;
            rows.push(row.clone());
            bounds.push(lows[j]);
            row[j] = -1.0;
            rows.push(row);
            bounds.push(-highs[j]);
        }
        PolyhedralDomain::new(rows, bounds)
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && self
                .rows
                .iter()
                .zip(&self.bounds)
                .all(|(row, &b)| dot(row, x) >= b - tol)
    }

    /// min c.x over the domain in standard form: x split into positive and
    /// negative parts plus one surplus variable per row.
    fn minimize(&self, c: &[f64]) -> Result<LpOutcome> {
        let p = self.dim();
        let m = self.num_rows();
        let mut objective = vec![0.0; 2 * p + m];
        for j in 0..p {
            objective[j] = c[j];
            objective[p + j] = -c[j];
        }
        let equalities: Vec<Vec<f64>> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut eq = vec![0.0; 2 * p + m];
                for j in 0..p {
                    eq[j] = row[j];
                    eq[p + j] = -row[j];
                }
                eq[2 * p + i] = -1.0;
                eq
            })
            .collect();
        solve_lp(&objective, &equalities, &self.bounds)
    }

    /// min c.x over the domain; construction already ruled out emptiness and
    /// unboundedness.
    pub fn linear_minimum(&self, c: &[f64]) -> Result<f64> {
        if c.len() != self.dim() {
            return Err(Error::dim("objective length disagrees with the domain"));
        }
        if !c.iter().all(|v| v.is_finite()) {
            return Err(Error::domain("objective must be finite"));
        }
        match self.minimize(c)? {
            LpOutcome::Optimal { value, .. } => Ok(value),
            _ => Err(Error::numeric("certified domain failed a bound computation")),
        }
    }

    /// Center of a largest inscribed ball; errors when the domain has an
    /// empty interior, which would stall the sampler.
    pub fn interior_point(&self) -> Result<Vec<f64>> {
        let p = self.dim();
        let m = self.num_rows();
        // Variables: x+ (p), x- (p), radius, surplus (m).
        let cols = 2 * p + 1 + m;
        let mut objective = vec![0.0; cols];
        objective[2 * p] = -1.0;
        let equalities: Vec<Vec<f64>> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let norm = dot(row, row).sqrt();
                let mut eq = vec![0.0; cols];
                for j in 0..p {
                    eq[j] = row[j];
                    eq[p + j] = -row[j];
                }
                eq[2 * p] = -norm;
                eq[2 * p + 1 + i] = -1.0;
                eq
            })
            .collect();
        match solve_lp(&objective, &equalities, &self.bounds)? {
            LpOutcome::Optimal { x, value } => {
                if -value <= 1e-9 {
                    return Err(Error::domain("domain has an empty interior"));
                }
                Ok((0..p).map(|j| x[j] - x[p + j]).collect())
            }
            _ => Err(Error::numeric("certified domain failed the center computation")),
        }
    }

    /// Hit-and-run sample of `n` points, seed-deterministic.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut x = self.interior_point()?;
        let normal = Normal::new(0.0, 1.0).map_err(|e| Error::numeric(format!("{e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let burn_in = 64;
        let mut out = Vec::with_capacity(n);
        let mut step = 0usize;
        while out.len() < n {
            step += 1;
            if step > burn_in + 40 * (n + 1) {
                return Err(Error::numeric("sampler failed to make progress"));
            }
            let mut d: Vec<f64> = (0..self.dim()).map(|_| normal.sample(&mut rng)).collect();
            let norm = dot(&d, &d).sqrt();
            if norm < 1e-12 {
                continue;
            }
            for v in &mut d {
                *v /= norm;
            }
            // Feasible segment x + t d: every row needs slack + t g >= 0.
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for (row, &b) in self.rows.iter().zip(&self.bounds) {
                let g = dot(row, &d);
                let slack = dot(row, &x) - b;
                if g > 1e-12 {
                    lo = lo.max(-slack / g);
                } else if g < -1e-12 {
                    hi = hi.min(slack / -g);
                }
            }
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::numeric("sampler found an unbounded ray"));
            }
            if hi - lo > 1e-14 {
                let t = lo + rng.gen::<f64>() * (hi - lo);
                for (xi, di) in x.iter_mut().zip(&d) {
                    *xi += t * di;
                }
            }
            if step > burn_in {
                out.push(x.clone());
            }
        }
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The dual feasibility systems deciding simplex membership over a domain:
/// one multiplier block per hypothesis row for nonnegativity, plus one block
/// per direction of the sum-to-one equality.
#[derive(Debug, Clone)]
pub struct SimplexMembershipSystem {
    domain: PolyhedralDomain,
    k: usize,
}

pub fn build_membership_system(domain: &PolyhedralDomain, k: usize) -> Result<SimplexMembershipSystem> {
    if k < 2 {
        return Err(Error::domain("need at least two scenario classes"));
    }
    Ok(SimplexMembershipSystem {
        domain: domain.clone(),
        k,
    })
}

impl SimplexMembershipSystem {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn domain(&self) -> &PolyhedralDomain {
        &self.domain
    }

    /// k nonnegativity blocks plus the two sum blocks, one multiplier per
    /// domain row each.
    pub fn num_aux_variables(&self) -> usize {
        (self.k + 2) * self.domain.num_rows()
    }

    /// Each block pins the multiplier combination to a p-vector.
    pub fn num_equalities(&self) -> usize {
        (self.k + 2) * self.domain.dim()
    }

    /// One bound inequality per block; multiplier nonnegativity not counted.
    pub fn num_inequalities(&self) -> usize {
        self.k + 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Certification {
    /// Feasible multipliers for every block, in system order: one block per
    /// hypothesis row, then the two sum blocks.
    Certified { blocks: Vec<Vec<f64>> },
    /// Index of the first block whose dual system is infeasible.
    Infeasible { block: usize },
}

impl Certification {
    pub fn is_certified(&self) -> bool {
        matches!(self, Certification::Certified { .. })
    }
}

/// Decides whether x -> Bx + b maps the system's domain into the simplex.
/// `weights` holds the k rows of B; `offsets` is b.
pub fn check_feasibility(
    system: &SimplexMembershipSystem,
    weights: &[Vec<f64>],
    offsets: &[f64],
) -> Result<Certification> {
    let p = system.domain.dim();
    let k = system.k;
    if weights.len() != k || offsets.len() != k {
        return Err(Error::dim(format!(
            "expected {k} hypothesis rows and offsets, got {} and {}",
            weights.len(),
            offsets.len()
        )));
    }
    if weights.iter().any(|row| row.len() != p) {
        return Err(Error::dim("hypothesis row length disagrees with the domain"));
    }
    if !weights.iter().flatten().chain(offsets).all(|v| v.is_finite()) {
        return Err(Error::domain("hypothesis entries must be finite"));
    }

    let col_sums: Vec<f64> = (0..p).map(|r| weights.iter().map(|row| row[r]).sum()).collect();
    let offset_sum: f64 = offsets.iter().sum();
    let mut blocks: Vec<(Vec<f64>, f64)> = weights
        .iter()
        .zip(offsets)
        .map(|(row, &off)| (row.clone(), -off))
        .collect();
    blocks.push((col_sums.clone(), 1.0 - offset_sum));
    blocks.push((col_sums.iter().map(|v| -v).collect(), offset_sum - 1.0));

    let mut certificates = Vec::with_capacity(blocks.len());
    for (index, (target, bound)) in blocks.iter().enumerate() {
        match solve_block(&system.domain, target, *bound)? {
            Some(multipliers) => certificates.push(multipliers),
            None => return Ok(Certification::Infeasible { block: index }),
        }
    }
    Ok(Certification::Certified { blocks: certificates })
}

/// Feasibility of one dual block: v >= 0 with A'v = target and a.v >= bound.
fn solve_block(domain: &PolyhedralDomain, target: &[f64], bound: f64) -> Result<Option<Vec<f64>>> {
    let m = domain.num_rows();
    let p = domain.dim();
    // Variables: multipliers (m) plus one surplus for the bound row.
    let mut equalities: Vec<Vec<f64>> = (0..p)
        .map(|r| {
            let mut eq = vec![0.0; m + 1];
            for i in 0..m {
                eq[i] = domain.rows[i][r];
            }
            eq
        })
        .collect();
    let mut bound_row = vec![0.0; m + 1];
    bound_row[..m].copy_from_slice(&domain.bounds);
    bound_row[m] = -1.0;
    equalities.push(bound_row);
    let mut rhs = target.to_vec();
    rhs.push(bound);
    match solve_lp(&vec![0.0; m + 1], &equalities, &rhs)? {
        LpOutcome::Optimal { x, .. } => Ok(Some(x[..m].to_vec())),
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::numeric("feasibility system reported unbounded")),
    }
}

/// Hit-and-run search for a sampled membership violation; returns the first
/// x whose image leaves the simplex by more than [`MEMBERSHIP_TOL`].
pub fn falsify_by_sampling(
    domain: &PolyhedralDomain,
    weights: &[Vec<f64>],
    offsets: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Option<Vec<f64>>> {
    if weights.len() != offsets.len() || weights.iter().any(|row| row.len() != domain.dim()) {
        return Err(Error::dim("hypothesis shape disagrees with the domain"));
    }
    if n_samples == 0 {
        return Err(Error::domain("need at least one sample"));
    }
    for x in domain.sample(n_samples, seed)? {
        let image: Vec<f64> = weights
            .iter()
            .zip(offsets)
            .map(|(row, &off)| dot(row, &x) + off)
            .collect();
        let min = image.iter().cloned().fold(f64::INFINITY, f64::min);
        let sum: f64 = image.iter().sum();
        if min < -MEMBERSHIP_TOL || (sum - 1.0).abs() > MEMBERSHIP_TOL {
            return Ok(Some(x));
        }
    }
    Ok(None)
}

/// Random (B, b) certified by construction: rows sum to zero so the image
/// components sum to one identically, offsets absorb the per-row minima, and
/// a shared rescale leaves slack 0.05 to split across rows.
pub fn random_certified_instance(
    domain: &PolyhedralDomain,
    k: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if k < 2 {
        return Err(Error::domain("need at least two scenario classes"));
    }
    let p = domain.dim();
    let normal = Normal::new(0.0, 1.0).map_err(|e| Error::numeric(format!("{e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..16 {
        let mut rows: Vec<Vec<f64>> = (0..k - 1)
            .map(|_| (0..p).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let last: Vec<f64> = (0..p)
            .map(|r| -rows.iter().map(|row| row[r]).sum::<f64>())
            .collect();
        rows.push(last);

        let minima: Vec<f64> = rows
            .iter()
            .map(|row| domain.linear_minimum(row))
            .collect::<Result<_>>()?;
        let total_min: f64 = minima.iter().sum();
        if total_min > -1e-9 {
            continue;
        }
        // Rescale so the minima eat all but 0.05 of the unit mass.
        let scale = 0.95 / -total_min;
        for row in &mut rows {
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
        let gammas: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
        let gamma_sum: f64 = gammas.iter().sum();
        let offsets: Vec<f64> = minima
            .iter()
            .zip(&gammas)
            .map(|(&mn, &g)| -mn * scale + 0.05 * g / gamma_sum)
            .collect();
        return Ok((rows, offsets));
    }
    Err(Error::numeric("failed to draw a usable hypothesis direction"))
}

/// Violating (B, b): scale a certified hypothesis's rows upward until
/// sampling exhibits a point whose image leaves the simplex.
pub fn violator_instance(
    domain: &PolyhedralDomain,
    k: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let (mut rows, offsets) = random_certified_instance(domain, k, seed)?;
    for round in 0..8u64 {
        for row in &mut rows {
            for v in row.iter_mut() {
                *v *= 10.0;
            }
        }
        if falsify_by_sampling(domain, &rows, &offsets, 512, seed ^ (round + 1))?.is_some() {
            return Ok((rows, offsets));
        }
    }
    Err(Error::numeric("scaling never produced a sampled violation"))
}
