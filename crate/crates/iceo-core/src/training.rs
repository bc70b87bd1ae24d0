//! End-to-end decision-focused training: the composed objective
//! (1/n) sum_i [c(w~(f(x_i)), xi_i) + rho phi(w~(f(x_i)))], its chain-rule
//! gradient through the surrogate and the hypothesis, an Adam loop with
//! early stopping, and empirical risk evaluation for deployed policies.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::Hypothesis;
use crate::nn::Adam;
use crate::problems::{phi, ProblemInstance};
use crate::simplex::ProbVector;
use crate::surrogate::Surrogate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Feature/label pairs with per-sample split tags. Labels are scenario
/// indices into the problem's support.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    splits: Vec<Split>,
    pub seed: u64,
}

impl Dataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        splits: Vec<Split>,
        k: usize,
        seed: u64,
    ) -> Result<Self> {
        if features.len() != labels.len() || features.len() != splits.len() {
            return Err(Error::dim(format!(
                "features/labels/splits lengths differ: {}/{}/{}",
                features.len(),
                labels.len(),
                splits.len()
            )));
        }
        if features.is_empty() {
            return Err(Error::domain("dataset must hold at least one sample"));
        }
        let dim = features[0].len();
        if dim == 0 {
            return Err(Error::domain("features must have at least one entry"));
        }
        for x in &features {
            if x.len() != dim {
                return Err(Error::dim("inconsistent feature dimensions".to_string()));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("features must be finite"));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::domain(format!(
                "label {bad} out of range for K = {k}"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            splits,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn split(&self, i: usize) -> Split {
        self.splits[i]
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub rho: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Stop after this many epochs without validation improvement;
    /// 0 disables early stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            rho: 0.01,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 500,
            batch_size: 32,
            patience: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::domain("rho must be > 0"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::domain("learning rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch size must be >= 1"));
        }
        Ok(())
    }
}

fn check_shapes(
    ds: &Dataset,
    h: &Hypothesis,
    surrogate: &Surrogate,
    prob: &ProblemInstance,
) -> Result<()> {
    if h.k() != prob.num_scenarios() {
        return Err(Error::dim(format!(
            "hypothesis predicts {} scenarios, problem has {}",
            h.k(),
            prob.num_scenarios()
        )));
    }
    if h.input_dim() != ds.input_dim() {
        return Err(Error::dim(format!(
            "hypothesis expects {} features, dataset has {}",
            h.input_dim(),
            ds.input_dim()
        )));
    }
    if surrogate.k() != prob.num_scenarios() || surrogate.decision_dim() != prob.dim() {
        return Err(Error::dim(format!(
            "surrogate maps {} -> {}, problem needs {} -> {}",
            surrogate.k(),
            surrogate.decision_dim(),
            prob.num_scenarios(),
            prob.dim()
        )));
    }
    if let Some(&bad) = (0..ds.len())
        .map(|i| &ds.labels[i])
        .find(|&&l| l >= prob.num_scenarios())
    {
        return Err(Error::domain(format!(
            "label {bad} out of range for problem with {} scenarios",
            prob.num_scenarios()
        )));
    }
    Ok(())
}

/// Composed objective with an arbitrary decision map p -> w. Decisions are
/// costed as returned, without projection; that is the training objective,
/// not a deployment evaluation.
pub fn iceo_objective_with<F>(
    ds: &Dataset,
    indices: &[usize],
    h: &Hypothesis,
    mut decision_map: F,
    prob: &ProblemInstance,
    rho: f64,
) -> Result<f64>
where
    F: FnMut(&ProbVector) -> Result<Vec<f64>>,
{
    if indices.is_empty() {
        return Err(Error::domain("objective needs at least one sample"));
    }
    let mut total = 0.0;
    for &i in indices {
        let f = h.forward(ds.feature(i))?;
        let w = decision_map(&f)?;
        if w.len() != prob.dim() {
            return Err(Error::dim("decision map output has wrong dimension".to_string()));
        }
        total += prob.cost(&w, ds.label(i)) + rho * phi(&w);
    }
    Ok(total / indices.len() as f64)
}

/// Training objective over the whole dataset with the fitted surrogate as
/// the decision map.
pub fn iceo_objective(
    ds: &Dataset,
    h: &Hypothesis,
    surrogate: &Surrogate,
    prob: &ProblemInstance,
    rho: f64,
) -> Result<f64> {
    check_shapes(ds, h, surrogate, prob)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    iceo_objective_with(ds, &all, h, |f| surrogate.eval(f), prob, rho)
}

/// Pull one sample's objective gradient back to the hypothesis parameters:
/// (dc/dw + rho w)^T J_surrogate J_hypothesis, scaled and accumulated.
fn accumulate_sample_grad(
    h: &Hypothesis,
    surrogate: &Surrogate,
    prob: &ProblemInstance,
    rho: f64,
    x: &[f64],
    label: usize,
    scale: f64,
    grad: &mut [f64],
) -> Result<()> {
    let f = h.forward(x)?;
    let w = surrogate.eval(&f)?;
    let jac = surrogate.jacobian(&f)?;
    let mut gw = prob.cost_grad(&w, label);
    for (g, wi) in gw.iter_mut().zip(&w) {
        *g += rho * wi;
    }
    let mut gf = vec![0.0; h.k()];
    for (row, gwj) in jac.iter().zip(&gw) {
        for (gfk, jv) in gf.iter_mut().zip(row) {
            *gfk += gwj * jv;
        }
    }
    for g in gf.iter_mut() {
        *g *= scale;
    }
    h.accumulate_param_grad(x, &gf, grad)
}

/// Full-dataset gradient of [`iceo_objective`] with respect to the
/// hypothesis parameters.
pub fn iceo_gradient(
    ds: &Dataset,
    h: &Hypothesis,
    surrogate: &Surrogate,
    prob: &ProblemInstance,
    rho: f64,
) -> Result<Vec<f64>> {
    check_shapes(ds, h, surrogate, prob)?;
    let mut grad = vec![0.0; h.num_params()];
    let scale = 1.0 / ds.len() as f64;
    for i in 0..ds.len() {
        accumulate_sample_grad(
            h,
            surrogate,
            prob,
            rho,
            ds.feature(i),
            ds.label(i),
            scale,
            &mut grad,
        )?;
    }
    Ok(grad)
}

/// Average cost of a deployed policy plus rho phi, over one split (or the
/// whole dataset). Policy outputs are projected onto the feasible region
/// before costing, so near-feasible raw surrogate outputs are evaluated at
/// an implementable decision.
pub fn empirical_risk<F>(
    ds: &Dataset,
    split: Option<Split>,
    mut policy: F,
    prob: &ProblemInstance,
    rho: f64,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let indices: Vec<usize> = match split {
        Some(s) => ds.indices(s),
        None => (0..ds.len()).collect(),
    };
    if indices.is_empty() {
        return Err(Error::domain("empirical risk needs at least one sample"));
    }
    let mut total = 0.0;
    for &i in &indices {
        if ds.label(i) >= prob.num_scenarios() {
            return Err(Error::domain("label out of range for problem".to_string()));
        }
        let w = policy(ds.feature(i))?;
        let w = prob.region().project(&w)?;
        total += prob.cost(&w, ds.label(i)) + rho * phi(&w);
    }
    Ok(total / indices.len() as f64)
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub hypothesis: Hypothesis,
    /// Training objective after each epoch.
    pub train_trace: Vec<f64>,
    /// Validation risk (projected surrogate policy) after each epoch; equals
    /// the training trace when the dataset has no validation samples.
    pub val_trace: Vec<f64>,
    /// Epoch whose parameters were returned (0-based); usize::MAX when no
    /// epoch ran.
    pub best_epoch: usize,
}

/// Adam over the hypothesis parameters, minimizing [`iceo_objective`] on the
/// train split. Mini-batches are reshuffled every epoch from the config
/// seed. Returns the parameters that scored best on the validation split.
pub fn train_iceo(
    ds: &Dataset,
    h0: &Hypothesis,
    surrogate: &Surrogate,
    prob: &ProblemInstance,
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    check_shapes(ds, h0, surrogate, prob)?;
    let train_idx = ds.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::domain("train split is empty"));
    }
    let val_idx = ds.indices(Split::Validation);

    let mut h = h0.clone();
    let mut best = h.clone();
    let mut best_score = f64::INFINITY;
    let mut best_epoch = usize::MAX;
    let mut since_best = 0usize;

    let mut adam = Adam::new(h.num_params(), cfg.learning_rate);
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.eps = cfg.epsilon;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = train_idx.clone();
    let mut grad = vec![0.0; h.num_params()];
    let mut train_trace = Vec::with_capacity(cfg.epochs);
    let mut val_trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                accumulate_sample_grad(
                    &h,
                    surrogate,
                    prob,
                    cfg.rho,
                    ds.feature(i),
                    ds.label(i),
                    scale,
                    &mut grad,
                )?;
            }
            adam.step(h.params_mut(), &grad);
        }

        let train_obj =
            iceo_objective_with(ds, &train_idx, &h, |f| surrogate.eval(f), prob, cfg.rho)?;
        let val_score = if val_idx.is_empty() {
            train_obj
        } else {
            let h_ref = &h;
            empirical_risk(
                ds,
                Some(Split::Validation),
                |x| {
                    let f = h_ref.forward(x)?;
                    surrogate.eval(&f)
                },
                prob,
                cfg.rho,
            )?
        };
        if !train_obj.is_finite() || !val_score.is_finite() {
            return Err(Error::numeric(format!(
                "training diverged at epoch {epoch}: objective {train_obj}, validation {val_score}"
            )));
        }
        train_trace.push(train_obj);
        val_trace.push(val_score);

        if val_score < best_score {
            best_score = val_score;
            best = h.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                break;
            }
        }
    }

    if best_epoch == usize::MAX {
        // Zero epochs: nothing ran, hand back the starting point.
        best = h0.clone();
    }
    Ok(TrainResult {
        hypothesis: best,
        train_trace,
        val_trace,
        best_epoch,
    })
}
