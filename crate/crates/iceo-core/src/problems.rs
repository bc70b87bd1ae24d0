//! Downstream decision problems: cost families, feasible regions, and the
//! Euclidean projections the solvers rely on.
//!
//! A [`ProblemInstance`] couples a scenario support with one cost family and
//! one feasible region. Costs are convex in the decision for every scenario;
//! the newsvendor family is piecewise linear (subgradients at kinks), the
//! portfolio and flow families are smooth quadratics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::simplex::{ProbVector, ScenarioSet};

/// Quadratic regularizer phi(w) = ||w||^2 / 2 used by the regularized oracle.
pub fn phi(w: &[f64]) -> f64 {
    0.5 * w.iter().map(|x| x * x).sum::<f64>()
}

/// Gradient of [`phi`], i.e. w itself.
pub fn phi_grad(w: &[f64]) -> Vec<f64> {
    w.to_vec()
}

/// Per-scenario cost family c(w, xi).
#[derive(Debug, Clone)]
pub enum CostModel {
    /// Multi-item newsvendor: sum_l h_l (w_l - xi_l)+ + b_l (xi_l - w_l)+.
    /// Piecewise linear; the reported subgradient at a kink is 0, which lies
    /// in the subdifferential [-b_l, h_l].
    Newsvendor { holding: Vec<f64>, stockout: Vec<f64> },
    /// Mean-variance portfolio with a cash-like target variable: the decision
    /// is (w, w0), the cost alpha (w.xi - w0)^2 - w.xi.
    Portfolio { alpha: f64 },
    /// Scenario-weighted quadratic deviation from per-edge targets:
    /// sum_i xi_i (w_i - target_i)^2. Convex because scenarios are >= 0.
    Flow { targets: Vec<f64> },
}

impl CostModel {
    /// Decision dimension implied by a scenario dimension.
    pub fn decision_dim(&self, scenario_dim: usize) -> usize {
        match self {
            CostModel::Newsvendor { .. } | CostModel::Flow { .. } => scenario_dim,
            CostModel::Portfolio { .. } => scenario_dim + 1,
        }
    }

    /// Whether c(., xi) is differentiable everywhere.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, CostModel::Newsvendor { .. })
    }

    fn cost(&self, w: &[f64], xi: &[f64]) -> f64 {
        match self {
            CostModel::Newsvendor { holding, stockout } => {
                let mut c = 0.0;
                for l in 0..xi.len() {
                    let over = w[l] - xi[l];
                    c += if over > 0.0 { holding[l] * over } else { -stockout[l] * over };
                }
                c
            }
            CostModel::Portfolio { alpha } => {
                let d = xi.len();
                let r: f64 = w[..d].iter().zip(xi).map(|(a, b)| a * b).sum();
                let dev = r - w[d];
                alpha * dev * dev - r
            }
            CostModel::Flow { targets } => {
                let mut c = 0.0;
                for i in 0..xi.len() {
                    let dev = w[i] - targets[i];
                    c += xi[i] * dev * dev;
                }
                c
            }
        }
    }

    /// Upper bound on the gradient Lipschitz constant of w -> c(w, xi),
    /// uniform over the given scenarios. `None` for nonsmooth families.
    fn grad_smoothness_bound(&self, scenarios: &ScenarioSet) -> Option<f64> {
        match self {
            CostModel::Newsvendor { .. } => None,
            CostModel::Portfolio { alpha } => {
                // Hessian is 2 alpha v v^T with v = (xi, -1).
                let worst = scenarios
                    .iter()
                    .map(|xi| xi.iter().map(|x| x * x).sum::<f64>() + 1.0)
                    .fold(0.0, f64::max);
                Some(2.0 * alpha * worst)
            }
            CostModel::Flow { .. } => {
                let worst = scenarios
                    .iter()
                    .map(|xi| xi.iter().cloned().fold(0.0, f64::max))
                    .fold(0.0, f64::max);
                Some(2.0 * worst)
            }
        }
    }
}

/// Euclidean projection of `y` onto the simplex {w >= 0, sum w = total}.
///
/// Water-filling on the sorted entries; O(d log d).
pub fn project_capped_simplex(y: &[f64], total: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    capped_simplex_into(y, total, &mut out);
    out
}

/// Feasible decision region S with an exact Euclidean projection.
#[derive(Debug, Clone)]
pub enum FeasibleRegion {
    /// {w >= 0, sum w <= budget}
    BudgetSimplex { dim: usize, budget: f64 },
    /// {(w, w0): w on the unit simplex, 0 <= w0 <= return_cap}
    PortfolioBox { assets: usize, return_cap: f64 },
    /// {w: incidence * w = 0, lower <= w <= upper}; projection by Dykstra's
    /// alternating scheme between the flow-conservation subspace and the box.
    FlowPolytope {
        incidence: Vec<Vec<f64>>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        /// Orthogonal projector onto the null space of the incidence matrix.
        null_projector: Vec<Vec<f64>>,
    },
}

/// Tolerance for [`FeasibleRegion::member`]; projection and membership agree
/// at this resolution.
pub const MEMBER_TOL: f64 = 1e-8;

const DYKSTRA_TOL: f64 = 1e-10;
const DYKSTRA_MAX_SWEEPS: usize = 100_000;

impl FeasibleRegion {
    pub fn budget_simplex(dim: usize, budget: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("budget simplex needs dim >= 1"));
        }
        if !(budget > 0.0) || !budget.is_finite() {
            return Err(Error::domain(format!("budget must be positive, got {budget}")));
        }
        Ok(FeasibleRegion::BudgetSimplex { dim, budget })
    }

    pub fn portfolio_box(assets: usize, return_cap: f64) -> Result<Self> {
        if assets == 0 {
            return Err(Error::domain("portfolio needs at least one asset"));
        }
        if !(return_cap >= 0.0) || !return_cap.is_finite() {
            return Err(Error::domain(format!(
                "return cap must be nonnegative, got {return_cap}"
            )));
        }
        Ok(FeasibleRegion::PortfolioBox { assets, return_cap })
    }

    pub fn flow_polytope(
        incidence: Vec<Vec<f64>>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        if incidence.is_empty() || incidence[0].is_empty() {
            return Err(Error::domain("incidence matrix must be non-empty"));
        }
        let edges = incidence[0].len();
        if incidence.iter().any(|row| row.len() != edges) {
            return Err(Error::dim("incidence matrix rows have unequal lengths"));
        }
        if lower.len() != edges || upper.len() != edges {
            return Err(Error::dim(format!(
                "bounds must have length {edges} (one per edge)"
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u || !l.is_finite() || !u.is_finite()) {
            return Err(Error::domain("need finite lower <= upper per edge"));
        }
        let null_projector = null_space_projector(&incidence);
        let region = FeasibleRegion::FlowPolytope {
            incidence,
            lower,
            upper,
            null_projector,
        };
        // Nonemptiness probe: Dykstra from the box midpoint converges to a
        // point of the intersection iff one exists.
        let mid: Vec<f64> = region
            .bounding_box()
            .iter()
            .map(|(l, u)| 0.5 * (l + u))
            .collect();
        let probe = region.project(&mid)?;
        if !region.member(&probe) {
            return Err(Error::domain(
                "flow polytope is empty: conservation subspace misses the box",
            ));
        }
        Ok(region)
    }

    /// Decision dimension of the region.
    pub fn dim(&self) -> usize {
        match self {
            FeasibleRegion::BudgetSimplex { dim, .. } => *dim,
            FeasibleRegion::PortfolioBox { assets, .. } => assets + 1,
            FeasibleRegion::FlowPolytope { lower, .. } => lower.len(),
        }
    }

    /// Componentwise bounds enclosing the region (used by grid search and
    /// dense sampling; exact for the box-like regions).
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        match self {
            FeasibleRegion::BudgetSimplex { dim, budget } => vec![(0.0, *budget); *dim],
            FeasibleRegion::PortfolioBox { assets, return_cap } => {
                let mut b = vec![(0.0, 1.0); *assets];
                b.push((0.0, *return_cap));
                b
            }
            FeasibleRegion::FlowPolytope { lower, upper, .. } => {
                lower.iter().cloned().zip(upper.iter().cloned()).collect()
            }
        }
    }

    /// Membership at tolerance [`MEMBER_TOL`].
    pub fn member(&self, w: &[f64]) -> bool {
        if w.len() != self.dim() {
            return false;
        }
        match self {
            FeasibleRegion::BudgetSimplex { budget, .. } => {
                w.iter().all(|&x| x >= -MEMBER_TOL)
                    && w.iter().sum::<f64>() <= budget + MEMBER_TOL
            }
            FeasibleRegion::PortfolioBox { assets, return_cap } => {
                let sum: f64 = w[..*assets].iter().sum();
                w[..*assets].iter().all(|&x| x >= -MEMBER_TOL)
                    && (sum - 1.0).abs() <= MEMBER_TOL
                    && w[*assets] >= -MEMBER_TOL
                    && w[*assets] <= return_cap + MEMBER_TOL
            }
            FeasibleRegion::FlowPolytope {
                incidence,
                lower,
                upper,
                ..
            } => {
                let box_ok = w
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(&x, (&l, &u))| x >= l - MEMBER_TOL && x <= u + MEMBER_TOL);
                let conserve_ok = incidence.iter().all(|row| {
                    row.iter().zip(w).map(|(a, x)| a * x).sum::<f64>().abs() <= MEMBER_TOL
                });
                box_ok && conserve_ok
            }
        }
    }

    /// Euclidean projection onto the region.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        self.project_into(y, &mut out)?;
        Ok(out)
    }

    /// Allocation-free [`FeasibleRegion::project`] for solver inner loops;
    /// `out` is overwritten and may be reused across calls.
    pub fn project_into(&self, y: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::dim(format!(
                "projection input has dim {}, region has dim {}",
                y.len(),
                self.dim()
            )));
        }
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("projection input has non-finite entries"));
        }
        match self {
            FeasibleRegion::BudgetSimplex { budget, .. } => {
                out.clear();
                out.extend(y.iter().map(|&x| x.max(0.0)));
                if out.iter().sum::<f64>() > *budget {
                    capped_simplex_into(y, *budget, out);
                }
            }
            FeasibleRegion::PortfolioBox { assets, return_cap } => {
                capped_simplex_into(&y[..*assets], 1.0, out);
                out.push(y[*assets].clamp(0.0, *return_cap));
            }
            FeasibleRegion::FlowPolytope {
                lower,
                upper,
                null_projector,
                ..
            } => {
                let w = dykstra_subspace_box(y, null_projector, lower, upper)?;
                out.clear();
                out.extend(w);
            }
        }
        Ok(())
    }
}

/// Water-filling body shared by the simplex projections; writes into `out`
/// using it as the sort scratch.
fn capped_simplex_into(y: &[f64], total: f64, out: &mut Vec<f64>) {
    debug_assert!(total > 0.0);
    out.clear();
    out.extend_from_slice(y);
    out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for k in 0..out.len() {
        cumsum += out[k];
        let candidate = (cumsum - total) / (k + 1) as f64;
        if k + 1 == out.len() || out[k + 1] <= candidate {
            tau = candidate;
            break;
        }
    }
    for (o, &v) in out.iter_mut().zip(y) {
        *o = (v - tau).max(0.0);
    }
}

/// Orthogonal projector onto null(A), via SVD: I - V_r V_r^T over the
/// right-singular vectors of the nonzero singular values.
fn null_space_projector(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let rows = a.len();
    let cols = a[0].len();
    let mat = DMatrix::from_fn(rows, cols, |i, j| a[i][j]);
    let svd = mat.clone().svd(false, true);
    let vt = svd.v_t.expect("svd requested v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = smax * 1e-12 + 1e-300;
    let mut proj = vec![vec![0.0; cols]; cols];
    for (i, row) in proj.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for (r, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            for i in 0..cols {
                for j in 0..cols {
                    proj[i][j] -= vt[(r, i)] * vt[(r, j)];
                }
            }
        }
    }
    proj
}

fn apply(mat: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    mat.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Dykstra's algorithm for the intersection of a linear subspace (given by
/// its orthogonal projector) and a box. The subspace is handled first in each
/// sweep; the correction for a subspace is redundant but kept for symmetry.
fn dykstra_subspace_box(
    y: &[f64],
    null_projector: &[Vec<f64>],
    lower: &[f64],
    upper: &[f64],
) -> Result<Vec<f64>> {
    let d = y.len();
    let mut x = y.to_vec();
    let mut p = vec![0.0; d];
    let mut q = vec![0.0; d];
    for _ in 0..DYKSTRA_MAX_SWEEPS {
        let xp: Vec<f64> = (0..d).map(|i| x[i] + p[i]).collect();
        let s = apply(null_projector, &xp);
        for i in 0..d {
            p[i] = xp[i] - s[i];
        }
        let sq: Vec<f64> = (0..d).map(|i| s[i] + q[i]).collect();
        let mut next = vec![0.0; d];
        let mut change: f64 = 0.0;
        for i in 0..d {
            next[i] = sq[i].clamp(lower[i], upper[i]);
            q[i] = sq[i] - next[i];
            change = change.max((next[i] - x[i]).abs());
        }
        let settled = change < DYKSTRA_TOL;
        x = next;
        if settled {
            return Ok(x);
        }
    }
    Err(Error::numeric(format!(
        "Dykstra projection did not converge in {DYKSTRA_MAX_SWEEPS} sweeps"
    )))
}

/// One decision problem: scenarios, cost family, feasible region.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    scenarios: ScenarioSet,
    cost: CostModel,
    region: FeasibleRegion,
}

impl ProblemInstance {
    pub fn new(scenarios: ScenarioSet, cost: CostModel, region: FeasibleRegion) -> Result<Self> {
        let want = cost.decision_dim(scenarios.dim());
        if region.dim() != want {
            return Err(Error::dim(format!(
                "region dim {} does not match decision dim {want}",
                region.dim()
            )));
        }
        match &cost {
            CostModel::Newsvendor { holding, stockout } => {
                if holding.len() != scenarios.dim() || stockout.len() != scenarios.dim() {
                    return Err(Error::dim(
                        "holding/stockout cost vectors must match scenario dim",
                    ));
                }
                if holding.iter().chain(stockout).any(|&c| !(c > 0.0)) {
                    return Err(Error::domain("newsvendor costs must be positive"));
                }
            }
            CostModel::Portfolio { alpha } => {
                if !(alpha > &0.0) {
                    return Err(Error::domain("portfolio risk weight alpha must be positive"));
                }
            }
            CostModel::Flow { targets } => {
                if targets.len() != scenarios.dim() {
                    return Err(Error::dim("flow targets must match edge count"));
                }
                if scenarios.iter().any(|xi| xi.iter().any(|&x| x < 0.0)) {
                    return Err(Error::domain(
                        "flow scenario weights must be nonnegative for convexity",
                    ));
                }
            }
        }
        Ok(ProblemInstance { scenarios, cost, region })
    }

    /// Multi-item newsvendor over {w >= 0, sum w <= budget}.
    pub fn newsvendor(
        scenarios: ScenarioSet,
        holding: Vec<f64>,
        stockout: Vec<f64>,
        budget: f64,
    ) -> Result<Self> {
        let region = FeasibleRegion::budget_simplex(scenarios.dim(), budget)?;
        ProblemInstance::new(scenarios, CostModel::Newsvendor { holding, stockout }, region)
    }

    /// Mean-variance portfolio over the unit simplex with capped target.
    pub fn portfolio(scenarios: ScenarioSet, alpha: f64, return_cap: f64) -> Result<Self> {
        let region = FeasibleRegion::portfolio_box(scenarios.dim(), return_cap)?;
        ProblemInstance::new(scenarios, CostModel::Portfolio { alpha }, region)
    }

    /// Quadratic-cost circulation on a graph given by its node-edge incidence.
    pub fn flow(
        scenarios: ScenarioSet,
        incidence: Vec<Vec<f64>>,
        targets: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let region = FeasibleRegion::flow_polytope(incidence, lower, upper)?;
        ProblemInstance::new(scenarios, CostModel::Flow { targets }, region)
    }

    /// Two-item newsvendor used throughout tests and the default experiment
    /// config: holding (1, 1.3), stockout (9, 8), budget 50, four demand
    /// scenarios (33,15), (71,4), (17,47), (4,43).
    pub fn example_newsvendor() -> Self {
        let scenarios = ScenarioSet::new(vec![
            vec![33.0, 15.0],
            vec![71.0, 4.0],
            vec![17.0, 47.0],
            vec![4.0, 43.0],
        ])
        .expect("static scenario set");
        ProblemInstance::newsvendor(scenarios, vec![1.0, 1.3], vec![9.0, 8.0], 50.0)
            .expect("static instance")
    }

    pub fn scenarios(&self) -> &ScenarioSet {
        &self.scenarios
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost
    }

    pub fn region(&self) -> &FeasibleRegion {
        &self.region
    }

    /// Number of scenarios K.
    pub fn num_scenarios(&self) -> usize {
        self.scenarios.count()
    }

    /// Decision dimension.
    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    /// Cost of decision `w` under scenario `k`.
    pub fn cost(&self, w: &[f64], k: usize) -> f64 {
        self.cost.cost(w, self.scenarios.point(k))
    }

    /// (Sub)gradient of the cost in `w` under scenario `k`.
    pub fn cost_grad(&self, w: &[f64], k: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.add_scaled_cost_grad(w, k, 1.0, &mut g);
        g
    }

    /// Expected cost sum_k p_k c(w, xi_k).
    pub fn expected_cost(&self, w: &[f64], p: &ProbVector) -> Result<f64> {
        if p.len() != self.num_scenarios() {
            return Err(Error::dim(format!(
                "distribution has {} entries, problem has {} scenarios",
                p.len(),
                self.num_scenarios()
            )));
        }
        Ok((0..p.len()).map(|k| p[k] * self.cost(w, k)).sum())
    }

    /// Expected (sub)gradient sum_k p_k grad c(w, xi_k).
    pub fn expected_cost_grad(&self, w: &[f64], p: &ProbVector) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for k in 0..p.len() {
            self.add_scaled_cost_grad(w, k, p[k], &mut g);
        }
        g
    }

    /// Accumulate `scale * grad c(w, xi_k)` into `out` without allocating.
    pub fn add_scaled_cost_grad(&self, w: &[f64], k: usize, scale: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        let xi = self.scenarios.point(k);
        match &self.cost {
            CostModel::Newsvendor { holding, stockout } => {
                for l in 0..xi.len() {
                    if w[l] > xi[l] {
                        out[l] += scale * holding[l];
                    } else if w[l] < xi[l] {
                        out[l] -= scale * stockout[l];
                    }
                }
            }
            CostModel::Portfolio { alpha } => {
                let d = xi.len();
                let r: f64 = w[..d].iter().zip(xi).map(|(a, b)| a * b).sum();
                let dev = r - w[d];
                for l in 0..d {
                    out[l] += scale * (2.0 * alpha * dev * xi[l] - xi[l]);
                }
                out[d] -= scale * 2.0 * alpha * dev;
            }
            CostModel::Flow { targets } => {
                for i in 0..xi.len() {
                    out[i] += scale * 2.0 * xi[i] * (w[i] - targets[i]);
                }
            }
        }
    }

    /// Smoothness bound for the expected cost gradient, `None` if nonsmooth.
    pub fn grad_smoothness_bound(&self) -> Option<f64> {
        self.cost.grad_smoothness_bound(&self.scenarios)
    }
}
