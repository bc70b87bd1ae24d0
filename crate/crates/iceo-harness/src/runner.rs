//! Simulation sweeps: train every configured method on freshly drawn data,
//! deploy it through the exact oracle on a shared test set, and persist one
//! record per (method, n, simulation) cell.
//!
//! Determinism contract: every random stream is derived from the config
//! seed via [`crate::seeds::derive`], cells are independent, and records
//! are sorted before writing, so the results file is byte-identical across
//! runs and worker counts. Wall-clock times are the one exception; they go
//! to a separate timings file that makes no determinism claim.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use iceo_core::benchmarks::{
    improvement, kernel_scenario_weights, knn_scenario_weights, pto_train, saa_decision,
    tune_kernel_bandwidth, tune_knn,
};
use iceo_core::datagen::{conditional_probs, draw_samples, DgpConfig};
use iceo_core::error::{Error, Result};
use iceo_core::hypothesis::Hypothesis;
use iceo_core::oracle::{solve_regularized, OracleConfig};
use iceo_core::problems::ProblemInstance;
use iceo_core::simplex::ProbVector;
use iceo_core::surrogate::Surrogate;
use iceo_core::training::{train_iceo, Dataset, Split, TrainConfig};

use crate::config::{ExperimentConfig, HypothesisKind, Method};
use crate::seeds::{derive, Stream};

/// Label for the per-simulation baseline that deploys the oracle on the
/// true conditional distributions (a Monte-Carlo estimate of the best
/// attainable cost).
pub const TRUTH_METHOD: &str = "truth";
/// Label for the derived misspecification rows holding the relative cost
/// reduction of the end-to-end method over the two-step fit.
pub const IMPROVEMENT_METHOD: &str = "improvement";

pub const RESULTS_SCHEMA: &str = "# iceo-results v1";
pub const MISSPEC_SCHEMA: &str = "# iceo-misspec v1";

/// One evaluated cell. `test_cost` is the mean unregularized cost of the
/// deployed decisions on the test set (for improvement rows, the relative
/// reduction); `None` when the cell failed.
#[derive(Debug, Clone)]
pub struct ResultRecord {
    pub method: String,
    /// Logit power of the generating truth; only misspecification sweeps
    /// vary it, benchmark sweeps leave it `None`.
    pub degree: Option<u32>,
    /// Training-set size; 0 for rows that use no training data.
    pub n: usize,
    pub sim: usize,
    pub ok: bool,
    pub test_cost: Option<f64>,
    pub hyperparams: String,
    pub message: String,
    pub wall_ms: u64,
}

impl ResultRecord {
    fn sort_key(&self) -> (u32, usize, usize, String) {
        (self.degree.unwrap_or(0), self.n, self.sim, self.method.clone())
    }
}

/// Trained parameter vectors, kept so callers can check that data streams
/// touch what they should (test draws must not move trained models).
#[derive(Debug, Clone)]
pub struct TrainedParams {
    pub method: String,
    pub degree: Option<u32>,
    pub n: usize,
    pub sim: usize,
    pub params: Vec<f64>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub records: Vec<ResultRecord>,
    /// Number of failed cells (records with ok = false).
    pub failures: usize,
    pub trained: Vec<TrainedParams>,
    pub results_path: PathBuf,
    pub timings_path: PathBuf,
}

/// Everything shared across cells of one sweep.
struct SweepCtx<'a> {
    cfg: &'a ExperimentConfig,
    prob: ProblemInstance,
    oracle: OracleConfig,
    surrogate: Surrogate,
    k: usize,
}

impl SweepCtx<'_> {
    fn prepare(cfg: &ExperimentConfig) -> Result<SweepCtx<'_>> {
        cfg.validate()?;
        let prob = cfg.problem.build()?;
        let oracle = cfg.oracle.build();
        // One surrogate serves the whole sweep: it approximates the oracle,
        // which depends on the problem and rho but not on any simulation.
        let surrogate = cfg.surrogate.fit(
            &prob,
            cfg.rho,
            &oracle,
            derive(cfg.seed, Stream::SurrogateSamples, &[]),
            derive(cfg.seed, Stream::SurrogateFit, &[]),
        )?;
        let k = prob.num_scenarios();
        Ok(SweepCtx { cfg, prob, oracle, surrogate, k })
    }
}

/// Ground truth and test data for one simulation.
struct SimData {
    dgp: DgpConfig,
    test_x: Vec<Vec<f64>>,
    test_labels: Vec<usize>,
}

impl SimData {
    /// `tags` identify the simulation ([sim] or [sim, degree]); the test
    /// stream optionally re-roots at `test_seed` so diagnostics can move
    /// test draws without touching anything trained.
    fn draw(ctx: &SweepCtx, degree: u32, tags: &[u64]) -> Result<SimData> {
        let cfg = ctx.cfg;
        let dgp = cfg.dgp.build(ctx.k, degree, derive(cfg.seed, Stream::DgpWeights, tags))?;
        let test_base = cfg.test_seed.unwrap_or(cfg.seed);
        let (test_x, test_labels) =
            draw_samples(&dgp, cfg.test_size, derive(test_base, Stream::TestData, tags))?;
        Ok(SimData { dgp, test_x, test_labels })
    }
}

/// Mean unregularized cost of deploying `probs_for` through the oracle on
/// the test set. Consecutive solves share warm starts. The second return
/// reports whether every deployed decision was feasible.
fn eval_policy<F>(
    ctx: &SweepCtx,
    sd: &SimData,
    mut probs_for: F,
) -> Result<(f64, bool)>
where
    F: FnMut(&[f64]) -> Result<ProbVector>,
{
    let mut total = 0.0;
    let mut feasible = true;
    let mut warm: Option<Vec<f64>> = None;
    for (x, &label) in sd.test_x.iter().zip(&sd.test_labels) {
        let p = probs_for(x)?;
        let sol = solve_regularized(&ctx.prob, &p, ctx.cfg.rho, &ctx.oracle, warm.as_deref())?;
        feasible &= ctx.prob.region().member(&sol.w);
        total += ctx.prob.cost(&sol.w, label);
        warm = Some(sol.w);
    }
    Ok((total / sd.test_x.len() as f64, feasible))
}

fn make_h0(cfg: &ExperimentConfig, k: usize, input_dim: usize, seed: u64) -> Hypothesis {
    match cfg.training.hypothesis {
        HypothesisKind::Linear => Hypothesis::linear(k, input_dim, cfg.training.init_scale, seed),
        HypothesisKind::Mlp => Hypothesis::mlp(
            k,
            input_dim,
            cfg.training.hidden,
            cfg.training.init_scale,
            seed,
        ),
    }
}

fn method_tag(m: Method) -> u64 {
    match m {
        Method::Iceo => 0,
        Method::Saa => 1,
        Method::Pto => 2,
        Method::PresKnn => 3,
        Method::PresKernel => 4,
    }
}

/// Sub-tag separating the end-to-end arm's cold-start training streams from
/// its warm-start runs (which keep the bare learning-rate grid index).
const COLD_RUN_TAG: u64 = 2_000;

fn train_config(cfg: &ExperimentConfig, lr: f64, seed: u64) -> TrainConfig {
    TrainConfig {
        rho: cfg.rho,
        learning_rate: lr,
        epochs: cfg.training.epochs,
        batch_size: cfg.training.batch_size,
        patience: cfg.training.patience,
        seed,
        ..TrainConfig::default()
    }
}

/// The two-step fit: cross-entropy training across the learning-rate grid,
/// picked by validation cross-entropy. Streams are tagged with the two-step
/// method's id regardless of the caller, so the end-to-end arm's warm start
/// is parameter-identical to the two-step model it is compared against.
fn pto_fit(
    ctx: &SweepCtx,
    ds: &Dataset,
    data_tags: &[u64],
) -> Result<(f64, iceo_core::benchmarks::PtoResult)> {
    let cfg = ctx.cfg;
    let mut tags = data_tags.to_vec();
    tags.push(method_tag(Method::Pto));
    let h0 = make_h0(cfg, ctx.k, cfg.dgp.input_dim, derive(cfg.seed, Stream::Init, &tags));
    let mut best: Option<(f64, f64, iceo_core::benchmarks::PtoResult)> = None;
    for (li, &lr) in cfg.training.learning_rates.iter().enumerate() {
        let mut lr_tags = tags.clone();
        lr_tags.push(li as u64);
        let tc = train_config(cfg, lr, derive(cfg.seed, Stream::Shuffle, &lr_tags));
        let res = pto_train(ds, &h0, &tc)?;
        let score = best_score(&res.val_trace);
        if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
            best = Some((score, lr, res));
        }
    }
    let (_, lr, res) =
        best.ok_or_else(|| Error::domain("no learning rate produced a model"))?;
    Ok((lr, res))
}

/// Per-point unregularized costs of deploying `h` through the exact oracle
/// on the validation split (train split when nothing is held out).
/// Deployment uses the exact oracle, so model selection can minimize the
/// deployment metric itself.
fn exact_validation_costs(ctx: &SweepCtx, ds: &Dataset, h: &Hypothesis) -> Result<Vec<f64>> {
    let mut idx = ds.indices(Split::Validation);
    if idx.is_empty() {
        idx = ds.indices(Split::Train);
    }
    let mut costs = Vec::with_capacity(idx.len());
    let mut warm: Option<Vec<f64>> = None;
    for &i in &idx {
        let p = h.forward(ds.feature(i))?;
        let sol = solve_regularized(&ctx.prob, &p, ctx.cfg.rho, &ctx.oracle, warm.as_deref())?;
        costs.push(ctx.prob.cost(&sol.w, ds.label(i)));
        warm = Some(sol.w);
    }
    Ok(costs)
}

/// Champion-challenger test on paired validation costs: the challenger must
/// undercut the champion by more than one standard error of the paired
/// difference. Guards refinement picks against validation-noise flukes.
fn beats_by_one_se(challenger: &[f64], champion: &[f64]) -> bool {
    let m = champion.len() as f64;
    let diffs: Vec<f64> = challenger.iter().zip(champion).map(|(a, b)| a - b).collect();
    let mean = diffs.iter().sum::<f64>() / m;
    if diffs.len() < 2 {
        return mean < 0.0;
    }
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (m - 1.0);
    mean < -(var / m).sqrt()
}

/// Smallest value of a trace, ignoring NaNs (IEEE min drops them).
fn best_score(trace: &[f64]) -> f64 {
    trace.iter().copied().fold(f64::INFINITY, f64::min)
}

/// What one method run produces before being wrapped into a record.
struct MethodOutput {
    test_cost: f64,
    feasible: bool,
    hyperparams: String,
    params: Option<Vec<f64>>,
}

fn run_method(
    ctx: &SweepCtx,
    sd: &SimData,
    ds: &Dataset,
    method: Method,
    data_tags: &[u64],
) -> Result<MethodOutput> {
    let cfg = ctx.cfg;
    let mut cell_tags = data_tags.to_vec();
    cell_tags.push(method_tag(method));
    let cell_tags = &cell_tags[..];
    match method {
        Method::Saa => {
            // No hyperparameters to tune, so the full sample is used.
            let sol = saa_decision(ds, None, &ctx.prob, cfg.rho, &ctx.oracle)?;
            let feasible = ctx.prob.region().member(&sol.w);
            let total: f64 = sd
                .test_labels
                .iter()
                .map(|&label| ctx.prob.cost(&sol.w, label))
                .sum();
            Ok(MethodOutput {
                test_cost: total / sd.test_labels.len() as f64,
                feasible,
                hyperparams: String::new(),
                params: None,
            })
        }
        Method::Iceo => {
            // The end-to-end objective is nonconvex and flattens wherever
            // the oracle map is nearly constant, so a single cold Adam run
            // can stall far from competitive parameters. Every learning
            // rate therefore trains from two starts, a cross-entropy fit
            // and a random draw, and the candidate that deploys cheapest on
            // the validation split wins. The untouched warm start competes
            // too, so refinement that goes nowhere costs nothing.
            let h_rand = make_h0(
                cfg,
                ctx.k,
                cfg.dgp.input_dim,
                derive(cfg.seed, Stream::Init, cell_tags),
            );
            let h_warm = cross_entropy_fit(ctx, ds, &h_rand, cell_tags)?;
            let mut candidates = vec![("ce-fit".to_string(), h_warm.clone())];
            for (li, &lr) in cfg.training.learning_rates.iter().enumerate() {
                for (start, h0, tag) in
                    [("warm", &h_warm, li as u64), ("cold", &h_rand, COLD_RUN_TAG + li as u64)]
                {
                    let mut tags = cell_tags.to_vec();
                    tags.push(tag);
                    let tc = train_config(cfg, lr, derive(cfg.seed, Stream::Shuffle, &tags));
                    let res = train_iceo(ds, h0, &ctx.surrogate, &ctx.prob, &tc)?;
                    candidates.push((
                        format!("{start};lr={lr};best_epoch={}", res.best_epoch),
                        res.hypothesis,
                    ));
                }
            }
            let mut best: Option<(f64, String, Hypothesis)> = None;
            for (label, h) in candidates {
                let cost = exact_validation_cost(ctx, ds, &h)?;
                if best.as_ref().map_or(true, |(c, _, _)| cost < *c) {
                    best = Some((cost, label, h));
                }
            }
            let (_, label, h) =
                best.ok_or_else(|| Error::domain("no learning rate produced a model"))?;
            let (test_cost, feasible) = eval_policy(ctx, sd, |x| h.forward(x))?;
            Ok(MethodOutput {
                test_cost,
                feasible,
                hyperparams: format!("pick={label}"),
                params: Some(h.params().to_vec()),
            })
        }
        Method::Pto => {
            let h0 = make_h0(
                cfg,
                ctx.k,
                cfg.dgp.input_dim,
                derive(cfg.seed, Stream::Init, cell_tags),
            );
            let mut best: Option<(f64, f64, iceo_core::benchmarks::PtoResult)> = None;
            for (li, &lr) in cfg.training.learning_rates.iter().enumerate() {
                let mut tags = cell_tags.to_vec();
                tags.push(li as u64);
                let tc = train_config(cfg, lr, derive(cfg.seed, Stream::Shuffle, &tags));
                let res = pto_train(ds, &h0, &tc)?;
                let score = best_score(&res.val_trace);
                if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
                    best = Some((score, lr, res));
                }
            }
            let (_, lr, res) =
                best.ok_or_else(|| Error::domain("no learning rate produced a model"))?;
            let (test_cost, feasible) = eval_policy(ctx, sd, |x| res.hypothesis.forward(x))?;
            Ok(MethodOutput {
                test_cost,
                feasible,
                hyperparams: format!("lr={lr};best_epoch={}", res.best_epoch),
                params: Some(res.hypothesis.params().to_vec()),
            })
        }
        Method::PresKnn => {
            let (neighbors, _) =
                tune_knn(ds, &ctx.prob, cfg.rho, &ctx.oracle, &cfg.tuning.knn_neighbors)?;
            let (test_cost, feasible) = eval_policy(ctx, sd, |x| {
                Ok(knn_scenario_weights(x, ds, Some(Split::Train), neighbors, ctx.k)?
                    .scenario_probs)
            })?;
            Ok(MethodOutput {
                test_cost,
                feasible,
                hyperparams: format!("k={neighbors}"),
                params: None,
            })
        }
        Method::PresKernel => {
            let (bandwidth, _) = tune_kernel_bandwidth(
                ds,
                &ctx.prob,
                cfg.rho,
                &ctx.oracle,
                &cfg.tuning.bandwidth_multipliers,
            )?;
            let (test_cost, feasible) = eval_policy(ctx, sd, |x| {
                Ok(kernel_scenario_weights(x, ds, Some(Split::Train), bandwidth, ctx.k)?
                    .scenario_probs)
            })?;
            Ok(MethodOutput {
                test_cost,
                feasible,
                hyperparams: format!("bandwidth={bandwidth}"),
                params: None,
            })
        }
    }
}

/// Run every configured method on one (n, sim) cell. Failures become error
/// records; the sweep never aborts on a cell.
fn run_cell(
    ctx: &SweepCtx,
    sd: &SimData,
    degree: Option<u32>,
    sim: usize,
    n: usize,
    sim_tags: &[u64],
) -> (Vec<ResultRecord>, Vec<TrainedParams>) {
    let cfg = ctx.cfg;
    let mut records = Vec::new();
    let mut trained = Vec::new();

    let mut data_tags = sim_tags.to_vec();
    data_tags.push(n as u64);
    let data = draw_samples(&sd.dgp, n, derive(cfg.seed, Stream::TrainData, &data_tags))
        .and_then(|(features, labels)| {
            // Draws are iid, so tagging a prefix keeps the split unbiased.
            let (train_count, _) = cfg.split_sizes(n);
            let splits: Vec<Split> = (0..n)
                .map(|i| if i < train_count { Split::Train } else { Split::Validation })
                .collect();
            Dataset::new(features, labels, splits, ctx.k, cfg.seed)
        });

    for &method in &cfg.methods {
        let start = Instant::now();
        let outcome = data
            .as_ref()
            .map_err(|e| Error::domain(format!("data generation failed: {e}")))
            .and_then(|ds| {
                let mut cell_tags = data_tags.clone();
                cell_tags.push(method_tag(method));
                run_method(ctx, sd, ds, method, &cell_tags)
            });
        let wall_ms = start.elapsed().as_millis() as u64;
        match outcome {
            Ok(out) if !out.feasible => records.push(ResultRecord {
                method: method.name().to_string(),
                degree,
                n,
                sim,
                ok: false,
                test_cost: None,
                hyperparams: out.hyperparams,
                message: "deployed an infeasible decision".to_string(),
                wall_ms,
            }),
            Ok(out) if !out.test_cost.is_finite() => records.push(ResultRecord {
                method: method.name().to_string(),
                degree,
                n,
                sim,
                ok: false,
                test_cost: None,
                hyperparams: out.hyperparams,
                message: "non-finite test cost".to_string(),
                wall_ms,
            }),
            Ok(out) => {
                if let Some(params) = out.params {
                    trained.push(TrainedParams {
                        method: method.name().to_string(),
                        degree,
                        n,
                        sim,
                        params,
                    });
                }
                records.push(ResultRecord {
                    method: method.name().to_string(),
                    degree,
                    n,
                    sim,
                    ok: true,
                    test_cost: Some(out.test_cost),
                    hyperparams: out.hyperparams,
                    message: String::new(),
                    wall_ms,
                });
            }
            Err(e) => records.push(ResultRecord {
                method: method.name().to_string(),
                degree,
                n,
                sim,
                ok: false,
                test_cost: None,
                hyperparams: String::new(),
                message: e.to_string(),
                wall_ms,
            }),
        }
    }
    (records, trained)
}

/// Deploy the oracle on the true conditional distributions of the test
/// points: a per-simulation Monte-Carlo estimate of the best attainable
/// expected cost.
fn truth_record(ctx: &SweepCtx, sd: &SimData, degree: Option<u32>, sim: usize) -> ResultRecord {
    let start = Instant::now();
    let outcome = eval_policy(ctx, sd, |x| conditional_probs(x, &sd.dgp));
    let wall_ms = start.elapsed().as_millis() as u64;
    match outcome {
        Ok((cost, true)) => ResultRecord {
            method: TRUTH_METHOD.to_string(),
            degree,
            n: 0,
            sim,
            ok: true,
            test_cost: Some(cost),
            hyperparams: String::new(),
            message: String::new(),
            wall_ms,
        },
        Ok((_, false)) => ResultRecord {
            method: TRUTH_METHOD.to_string(),
            degree,
            n: 0,
            sim,
            ok: false,
            test_cost: None,
            hyperparams: String::new(),
            message: "deployed an infeasible decision".to_string(),
            wall_ms,
        },
        Err(e) => ResultRecord {
            method: TRUTH_METHOD.to_string(),
            degree,
            n: 0,
            sim,
            ok: false,
            test_cost: None,
            hyperparams: String::new(),
            message: e.to_string(),
            wall_ms,
        },
    }
}

/// Error records for every cell of a simulation whose setup failed.
fn failed_sim_records(
    cfg: &ExperimentConfig,
    degree: Option<u32>,
    sim: usize,
    sizes: &[usize],
    message: &str,
) -> Vec<ResultRecord> {
    let mut records = Vec::new();
    if cfg.record_truth {
        records.push(ResultRecord {
            method: TRUTH_METHOD.to_string(),
            degree,
            n: 0,
            sim,
            ok: false,
            test_cost: None,
            hyperparams: String::new(),
            message: message.to_string(),
            wall_ms: 0,
        });
    }
    for &n in sizes {
        for &method in &cfg.methods {
            records.push(ResultRecord {
                method: method.name().to_string(),
                degree,
                n,
                sim,
                ok: false,
                test_cost: None,
                hyperparams: String::new(),
                message: message.to_string(),
                wall_ms: 0,
            });
        }
    }
    records
}

fn build_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::domain(format!("worker pool: {e}")))
}

/// Run the benchmark sweep and write `results.csv`, `timings.csv`, and a
/// `bench-config.toml` echo under `out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    jobs: usize,
) -> Result<RunOutcome> {
    let ctx = SweepCtx::prepare(cfg)?;
    let pool = build_pool(jobs)?;

    let sims: Vec<usize> = (0..cfg.simulations).collect();
    let per_sim: Vec<(Vec<ResultRecord>, Vec<TrainedParams>)> = pool.install(|| {
        sims.par_iter()
            .map(|&sim| {
                let tags = [sim as u64];
                let sd = match SimData::draw(&ctx, cfg.dgp.degree, &tags) {
                    Ok(sd) => sd,
                    Err(e) => {
                        return (
                            failed_sim_records(
                                cfg,
                                None,
                                sim,
                                &cfg.sample_sizes,
                                &format!("simulation setup failed: {e}"),
                            ),
                            Vec::new(),
                        )
                    }
                };
                let mut records = Vec::new();
                let mut trained = Vec::new();
                if cfg.record_truth {
                    records.push(truth_record(&ctx, &sd, None, sim));
                }
                for &n in &cfg.sample_sizes {
                    let (mut r, mut t) = run_cell(&ctx, &sd, None, sim, n, &tags);
                    records.append(&mut r);
                    trained.append(&mut t);
                }
                (records, trained)
            })
            .collect()
    });

    finish(cfg, out_dir, per_sim, false)
}

/// Run the misspecification study (end-to-end vs two-step, softmax-linear
/// class, one sample size, a ladder of logit powers) and write
/// `misspec.csv`, `misspec-timings.csv`, and `misspec-config.toml`.
pub fn run_misspec_study(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    jobs: usize,
) -> Result<RunOutcome> {
    if cfg.training.hypothesis != HypothesisKind::Linear {
        return Err(Error::domain(
            "the misspecification study is defined for the linear hypothesis class",
        ));
    }
    let ctx = SweepCtx::prepare(cfg)?;
    let pool = build_pool(jobs)?;
    let n = cfg.misspec.sample_size;
    let methods = [Method::Iceo, Method::Pto];

    let cells: Vec<(u32, usize)> = cfg
        .misspec
        .degrees
        .iter()
        .flat_map(|&deg| (0..cfg.simulations).map(move |sim| (deg, sim)))
        .collect();

    let per_cell: Vec<(Vec<ResultRecord>, Vec<TrainedParams>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(deg, sim)| {
                let tags = [sim as u64, deg as u64];
                // The study always compares exactly these two methods.
                let mut cell_cfg = cfg.clone();
                cell_cfg.methods = methods.to_vec();
                let sd = match SimData::draw(&ctx, deg, &tags) {
                    Ok(sd) => sd,
                    Err(e) => {
                        return (
                            failed_sim_records(
                                &cell_cfg,
                                Some(deg),
                                sim,
                                &[n],
                                &format!("simulation setup failed: {e}"),
                            ),
                            Vec::new(),
                        )
                    }
                };
                let cell_ctx = SweepCtx {
                    cfg: &cell_cfg,
                    prob: ctx.prob.clone(),
                    oracle: ctx.oracle.clone(),
                    surrogate: ctx.surrogate.clone(),
                    k: ctx.k,
                };
                let mut records = Vec::new();
                if cfg.record_truth {
                    records.push(truth_record(&cell_ctx, &sd, Some(deg), sim));
                }
                let (mut r, trained) = run_cell(&cell_ctx, &sd, Some(deg), sim, n, &tags);
                records.append(&mut r);
                records.push(improvement_record(&records, deg, sim, n));
                (records, trained)
            })
            .collect()
    });

    finish(cfg, out_dir, per_cell, true)
}

/// Relative cost reduction of the end-to-end method over the two-step fit,
/// derived from the two method rows of one cell.
fn improvement_record(records: &[ResultRecord], deg: u32, sim: usize, n: usize) -> ResultRecord {
    let cost_of = |name: &str| {
        records
            .iter()
            .find(|r| r.method == name && r.ok)
            .and_then(|r| r.test_cost)
    };
    let base = ResultRecord {
        method: IMPROVEMENT_METHOD.to_string(),
        degree: Some(deg),
        n,
        sim,
        ok: false,
        test_cost: None,
        hyperparams: String::new(),
        message: String::new(),
        wall_ms: 0,
    };
    match (cost_of(Method::Iceo.name()), cost_of(Method::Pto.name())) {
        (Some(iceo), Some(pto)) => match improvement(pto, iceo) {
            Ok(value) => ResultRecord { ok: true, test_cost: Some(value), ..base },
            Err(e) => ResultRecord { message: e.to_string(), ..base },
        },
        _ => ResultRecord {
            message: "needs both method rows of the cell".to_string(),
            ..base
        },
    }
}

/// Sort, count failures, and persist one sweep's outputs.
fn finish(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    parts: Vec<(Vec<ResultRecord>, Vec<TrainedParams>)>,
    misspec: bool,
) -> Result<RunOutcome> {
    let mut records = Vec::new();
    let mut trained = Vec::new();
    for (mut r, mut t) in parts {
        records.append(&mut r);
        trained.append(&mut t);
    }
    records.sort_by_key(ResultRecord::sort_key);
    let failures = records.iter().filter(|r| !r.ok).count();

    fs::create_dir_all(out_dir)?;
    let (results_name, timings_name, config_name) = if misspec {
        ("misspec.csv", "misspec-timings.csv", "misspec-config.toml")
    } else {
        ("results.csv", "timings.csv", "bench-config.toml")
    };
    let results_path = out_dir.join(results_name);
    let timings_path = out_dir.join(timings_name);
    write_results(&results_path, &records, misspec)?;
    write_timings(&timings_path, &records, misspec)?;
    fs::write(out_dir.join(config_name), cfg.to_toml()?)?;

    Ok(RunOutcome { records, failures, trained, results_path, timings_path })
}

/// Commas and newlines would break the row structure.
fn sanitize(message: &str) -> String {
    message.replace(',', ";").replace('\n', " ")
}

fn write_results(path: &Path, records: &[ResultRecord], misspec: bool) -> Result<()> {
    let mut out = String::new();
    if misspec {
        out.push_str(MISSPEC_SCHEMA);
        out.push('\n');
        out.push_str("method,deg,n,sim,status,value,hyperparams,message\n");
    } else {
        out.push_str(RESULTS_SCHEMA);
        out.push('\n');
        out.push_str("method,n,sim,status,test_cost,hyperparams,message\n");
    }
    for r in records {
        let status = if r.ok { "ok" } else { "error" };
        let cost = r.test_cost.map(|c| c.to_string()).unwrap_or_default();
        if misspec {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.method,
                r.degree.unwrap_or(0),
                r.n,
                r.sim,
                status,
                cost,
                sanitize(&r.hyperparams),
                sanitize(&r.message),
            ));
        } else {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.method,
                r.n,
                r.sim,
                status,
                cost,
                sanitize(&r.hyperparams),
                sanitize(&r.message),
            ));
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

fn write_timings(path: &Path, records: &[ResultRecord], misspec: bool) -> Result<()> {
    let mut out = String::from("# iceo-timings v1 (wall clock; not covered by determinism)\n");
    if misspec {
        out.push_str("method,deg,n,sim,wall_ms\n");
    } else {
        out.push_str("method,n,sim,wall_ms\n");
    }
    for r in records {
        if misspec {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.method,
                r.degree.unwrap_or(0),
                r.n,
                r.sim,
                r.wall_ms
            ));
        } else {
            out.push_str(&format!("{},{},{},{}\n", r.method, r.n, r.sim, r.wall_ms));
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
