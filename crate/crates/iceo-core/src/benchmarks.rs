//! Comparison methods: sample-average approximation, predict-then-optimize
//! with a cross-entropy-trained hypothesis, and prescriptive k-nearest
//! neighbor / Gaussian kernel reweighting. Because the uncertainty has
//! finite support, per-sample prescriptive weights aggregate into a scenario
//! probability vector and every method deploys through the same regularized
//! oracle.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hypothesis::Hypothesis;
use crate::nn::Adam;
use crate::oracle::{solve_regularized, OracleConfig, OracleSolution};
use crate::problems::ProblemInstance;
use crate::simplex::ProbVector;
use crate::training::{Dataset, Split, TrainConfig};

/// Per-query reweighting of training samples, with the induced scenario
/// probabilities.
#[derive(Debug, Clone)]
pub struct PrescriptiveWeights {
    /// Dataset indices the weights refer to.
    pub indices: Vec<usize>,
    /// Nonnegative, sums to one, aligned with `indices`.
    pub weights: Vec<f64>,
    /// Weights aggregated by each sample's scenario index.
    pub scenario_probs: ProbVector,
    /// True when every kernel weight underflowed and the empirical
    /// frequencies were used instead.
    pub underflow_fallback: bool,
}

fn split_indices(ds: &Dataset, split: Option<Split>) -> Vec<usize> {
    match split {
        Some(s) => ds.indices(s),
        None => (0..ds.len()).collect(),
    }
}

/// Scenario frequencies of the labels in one split.
pub fn empirical_frequencies(ds: &Dataset, split: Option<Split>, k: usize) -> Result<ProbVector> {
    let indices = split_indices(ds, split);
    if indices.is_empty() {
        return Err(Error::domain("no samples to count frequencies over"));
    }
    let mut counts = vec![0.0; k];
    for &i in &indices {
        let label = ds.label(i);
        if label >= k {
            return Err(Error::domain(format!(
                "label {label} out of range for K = {k}"
            )));
        }
        counts[label] += 1.0;
    }
    let n = indices.len() as f64;
    counts.iter_mut().for_each(|c| *c /= n);
    ProbVector::new(counts)
}

/// Feature-blind baseline: solve the oracle at the empirical scenario
/// frequencies of the split.
pub fn saa_decision(
    ds: &Dataset,
    split: Option<Split>,
    prob: &ProblemInstance,
    rho: f64,
    cfg: &OracleConfig,
) -> Result<OracleSolution> {
    let p_hat = empirical_frequencies(ds, split, prob.num_scenarios())?;
    solve_regularized(prob, &p_hat, rho, cfg, None)
}

#[derive(Debug, Clone)]
pub struct PtoResult {
    pub hypothesis: Hypothesis,
    /// Mean training cross-entropy after each epoch.
    pub train_trace: Vec<f64>,
    /// Mean validation cross-entropy after each epoch (training value when
    /// the dataset has no validation split).
    pub val_trace: Vec<f64>,
    pub best_epoch: usize,
}

/// Two-step baseline, estimation half: fit the hypothesis by cross-entropy
/// alone. Deployment is x -> oracle(f(x)) with the caller's rho; only
/// `cfg`'s optimizer fields matter here.
pub fn pto_train(
    ds: &Dataset,
    h0: &Hypothesis,
    cfg: &TrainConfig,
) -> Result<PtoResult> {
    if h0.input_dim() != ds.input_dim() {
        return Err(Error::dim("hypothesis/dataset feature dimensions differ".to_string()));
    }
    let train_idx = ds.indices(Split::Train);
    if train_idx.is_empty() {
        return Err(Error::domain("train split is empty"));
    }
    let val_idx = ds.indices(Split::Validation);

    let mean_ce = |h: &Hypothesis, idx: &[usize]| -> Result<f64> {
        let mut total = 0.0;
        for &i in idx {
            total += h.cross_entropy(ds.feature(i), ds.label(i))?.0;
        }
        Ok(total / idx.len() as f64)
    };

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
                let (_, g) = h.cross_entropy(ds.feature(i), ds.label(i))?;
                for (acc, gi) in grad.iter_mut().zip(&g) {
                    *acc += scale * gi;
                }
            }
            adam.step(h.params_mut(), &grad);
        }
        let train_ce = mean_ce(&h, &train_idx)?;
        let val_ce = if val_idx.is_empty() {
            train_ce
        } else {
            mean_ce(&h, &val_idx)?
        };
        if !train_ce.is_finite() || !val_ce.is_finite() {
            return Err(Error::numeric(format!(
                "cross-entropy training diverged at epoch {epoch}"
            )));
        }
        train_trace.push(train_ce);
        val_trace.push(val_ce);
        if val_ce < best_score {
            best_score = val_ce;
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
        best = h0.clone();
    }
    Ok(PtoResult {
        hypothesis: best,
        train_trace,
        val_trace,
        best_epoch,
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn aggregate(
    ds: &Dataset,
    indices: Vec<usize>,
    weights: Vec<f64>,
    k: usize,
    underflow_fallback: bool,
) -> Result<PrescriptiveWeights> {
    let mut probs = vec![0.0; k];
    for (&i, &w) in indices.iter().zip(&weights) {
        probs[ds.label(i)] += w;
    }
    Ok(PrescriptiveWeights {
        indices,
        weights,
        scenario_probs: ProbVector::new(probs)?,
        underflow_fallback,
    })
}

/// Uniform weights over the k nearest split samples (Euclidean). Ties at
/// the k-th distance go to the lowest dataset index.
pub fn knn_scenario_weights(
    x_query: &[f64],
    ds: &Dataset,
    split: Option<Split>,
    neighbors: usize,
    k: usize,
) -> Result<PrescriptiveWeights> {
    let indices = split_indices(ds, split);
    if indices.is_empty() {
        return Err(Error::domain("no samples to weight"));
    }
    if neighbors == 0 || neighbors > indices.len() {
        return Err(Error::domain(format!(
            "neighbor count {neighbors} outside 1..={}",
            indices.len()
        )));
    }
    if x_query.len() != ds.input_dim() {
        return Err(Error::dim("query dimension mismatch".to_string()));
    }
    let mut ranked: Vec<(f64, usize)> = indices
        .iter()
        .map(|&i| (squared_distance(x_query, ds.feature(i)), i))
        .collect();
    ranked.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let chosen: Vec<usize> = ranked[..neighbors].iter().map(|&(_, i)| i).collect();
    let w = 1.0 / neighbors as f64;
    aggregate(ds, chosen, vec![w; neighbors], k, false)
}

/// Gaussian weights exp(-d^2 / (2 h^2)), normalized. If every weight
/// underflows to zero the empirical frequencies stand in, flagged on the
/// result.
pub fn kernel_scenario_weights(
    x_query: &[f64],
    ds: &Dataset,
    split: Option<Split>,
    bandwidth: f64,
    k: usize,
) -> Result<PrescriptiveWeights> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::domain("bandwidth must be > 0"));
    }
    let indices = split_indices(ds, split);
    if indices.is_empty() {
        return Err(Error::domain("no samples to weight"));
    }
    if x_query.len() != ds.input_dim() {
        return Err(Error::dim("query dimension mismatch".to_string()));
    }
    let mut weights: Vec<f64> = indices
        .iter()
        .map(|&i| (-squared_distance(x_query, ds.feature(i)) / (2.0 * bandwidth * bandwidth)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        let n = indices.len();
        return aggregate(ds, indices, vec![1.0 / n as f64; n], k, true);
    }
    weights.iter_mut().for_each(|w| *w /= total);
    aggregate(ds, indices, weights, k, false)
}

/// Relative cost reduction (cost_entropy - cost_iceo) / cost_entropy.
pub fn improvement(cost_entropy: f64, cost_iceo: f64) -> Result<f64> {
    if !(cost_entropy > 0.0) {
        return Err(Error::domain(format!(
            "improvement needs a positive reference cost, got {cost_entropy}"
        )));
    }
    Ok((cost_entropy - cost_iceo) / cost_entropy)
}

/// Median pairwise Euclidean distance among the split's features; the
/// bandwidth grid is phrased in multiples of it.
pub fn median_pairwise_distance(ds: &Dataset, split: Option<Split>) -> Result<f64> {
    let indices = split_indices(ds, split);
    if indices.len() < 2 {
        return Err(Error::domain("median distance needs at least two samples"));
    }
    let mut dists = Vec::with_capacity(indices.len() * (indices.len() - 1) / 2);
    for (a, &i) in indices.iter().enumerate() {
        for &j in &indices[a + 1..] {
            dists.push(squared_distance(ds.feature(i), ds.feature(j)).sqrt());
        }
    }
    dists.sort_by(|x, y| x.partial_cmp(y).expect("finite distances"));
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        0.5 * (dists[mid - 1] + dists[mid])
    } else {
        dists[mid]
    };
    if median <= 0.0 {
        return Err(Error::domain("median pairwise distance is zero"));
    }
    Ok(median)
}

/// Mean unregularized validation cost of deploying the oracle at per-query
/// scenario probabilities.
fn validation_cost<F>(
    ds: &Dataset,
    prob: &ProblemInstance,
    rho: f64,
    cfg: &OracleConfig,
    mut probs_for: F,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<ProbVector>,
{
    let val_idx = ds.indices(Split::Validation);
    if val_idx.is_empty() {
        return Err(Error::domain("validation split is empty"));
    }
    let mut total = 0.0;
    let mut warm: Option<Vec<f64>> = None;
    for &i in &val_idx {
        let p = probs_for(ds.feature(i))?;
        let sol = solve_regularized(prob, &p, rho, cfg, warm.as_deref())?;
        total += prob.cost(&sol.w, ds.label(i));
        warm = Some(sol.w);
    }
    Ok(total / val_idx.len() as f64)
}

/// Pick the neighbor count from `grid` with the lowest validation cost.
/// Grid values larger than the train split are skipped; ties keep the
/// earlier grid entry.
pub fn tune_knn(
    ds: &Dataset,
    prob: &ProblemInstance,
    rho: f64,
    cfg: &OracleConfig,
    grid: &[usize],
) -> Result<(usize, f64)> {
    let n_train = ds.indices(Split::Train).len();
    let mut best: Option<(usize, f64)> = None;
    for &k in grid {
        if k == 0 || k > n_train {
            continue;
        }
        let cost = validation_cost(ds, prob, rho, cfg, |x| {
            Ok(knn_scenario_weights(x, ds, Some(Split::Train), k, prob.num_scenarios())?
                .scenario_probs)
        })?;
        if best.map_or(true, |(_, c)| cost < c) {
            best = Some((k, cost));
        }
    }
    best.ok_or_else(|| Error::domain("no usable neighbor count in the grid"))
}

/// Pick the bandwidth (multiplier of the train median distance) with the
/// lowest validation cost.
pub fn tune_kernel_bandwidth(
    ds: &Dataset,
    prob: &ProblemInstance,
    rho: f64,
    cfg: &OracleConfig,
    multipliers: &[f64],
) -> Result<(f64, f64)> {
    let median = median_pairwise_distance(ds, Some(Split::Train))?;
    let mut best: Option<(f64, f64)> = None;
    for &m in multipliers {
        let bandwidth = m * median;
        if !(bandwidth > 0.0) {
            continue;
        }
        let cost = validation_cost(ds, prob, rho, cfg, |x| {
            Ok(kernel_scenario_weights(
                x,
                ds,
                Some(Split::Train),
                bandwidth,
                prob.num_scenarios(),
            )?
            .scenario_probs)
        })?;
        if best.map_or(true, |(_, c)| cost < c) {
            best = Some((bandwidth, cost));
        }
    }
    best.ok_or_else(|| Error::domain("no usable bandwidth in the grid"))
}
