//! Command-line entry point for the experiment harness.
//!
//! Exit codes: 0 on success, 1 on configuration or IO errors, 2 when some
//! sweep cells failed but the run completed.

use std::env;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use iceo_core::datagen::draw_samples;
use iceo_core::error::Result;
use iceo_core::oracle::{brute_force_solve, solve_regularized, OracleConfig};
use iceo_core::semialgebraic::{
    build_membership_system, check_feasibility, falsify_by_sampling, random_certified_instance,
    violator_instance, PolyhedralDomain,
};
use iceo_core::simplex::ProbVector;
use iceo_core::surrogate::{ModelContainer, Surrogate};
use iceo_core::training::{empirical_risk, train_iceo, Dataset, Split, TrainConfig};

use iceo_harness::config::ExperimentConfig;
use iceo_harness::plotdata::emit_plot_data;
use iceo_harness::runner::{run_experiment, run_misspec_study};
use iceo_harness::seeds::{derive, Stream};

/// Environment variable naming the default output root.
const OUT_ROOT_VAR: &str = "ICEO_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "iceo",
    about = "Contextual stochastic optimization experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML); defaults to the reference benchmark setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to $ICEO_OUT_DIR/<config output_dir>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for simulation cells.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Subcommand)]
enum Command {
    /// Check the oracle against exhaustive grid search on the reference
    /// instance and write the comparison table.
    OracleCheck(CommonArgs),
    /// Measure surrogate approximation error ladders and write the table.
    ApproxError(CommonArgs),
    /// Fit the surrogate and train one end-to-end model on simulated data,
    /// saving the artifacts.
    Train(CommonArgs),
    /// Run the benchmark sweep (all methods, all sample sizes).
    Bench(CommonArgs),
    /// Run the misspecification study (end-to-end vs two-step).
    Misspec(CommonArgs),
    /// Certify random constrained hypotheses and confirm violators are
    /// caught.
    SemialgVerify {
        #[command(flatten)]
        common: CommonArgs,
        /// Certified instances to generate.
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Membership samples per certified instance.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Violating instances to construct.
        #[arg(long, default_value_t = 10)]
        violators: usize,
    },
    /// Aggregate a results file into its figure table.
    PlotData {
        /// Results file produced by bench or misspec.
        #[arg(long)]
        results: PathBuf,
        /// Output directory for the figure CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::OracleCheck(args) => oracle_check(&args),
        Command::ApproxError(args) => approx_error(&args),
        Command::Train(args) => train(&args),
        Command::Bench(args) => bench(&args),
        Command::Misspec(args) => misspec(&args),
        Command::SemialgVerify { common, instances, samples, violators } => {
            semialg_verify(&common, instances, samples, violators)
        }
        Command::PlotData { results, out } => plot_data(&results, out),
    }
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// --out beats $ICEO_OUT_DIR/<dir> beats ./<dir>.
fn resolve_out(flag: &Option<PathBuf>, dir: &str) -> PathBuf {
    if let Some(path) = flag {
        return path.clone();
    }
    let root = env::var_os(OUT_ROOT_VAR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    root.join(dir)
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut file = fs::File::create(&path)?;
    file.write_all(body.as_bytes())?;
    Ok(path)
}

/// Uniform simplex draw (normalized exponentials).
fn sample_simplex<R: rand::Rng>(rng: &mut R, k: usize) -> ProbVector {
    let raw: Vec<f64> = (0..k).map(|_| -rng.gen::<f64>().ln()).collect();
    let total: f64 = raw.iter().sum();
    ProbVector::new(raw.iter().map(|v| v / total).collect())
        .expect("normalized positives form a distribution")
}

fn oracle_check(args: &CommonArgs) -> Result<ExitCode> {
    use rand::SeedableRng as _;
    let cfg = load_config(args)?;
    let out_dir = resolve_out(&args.out, &cfg.output_dir);
    let prob = cfg.problem.build()?;
    let k = prob.num_scenarios();
    // Accuracy check, so the solver runs at its own defaults rather than
    // the sweep's faster budget.
    let oracle = OracleConfig::default();
    let grid_step = 0.25;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut body = String::from("index,sup_gap,objective,grid_objective\n");
    let mut max_gap = 0.0f64;
    for index in 0..12 {
        let p = sample_simplex(&mut rng, k);
        let sol = solve_regularized(&prob, &p, cfg.rho, &oracle, None)?;
        let grid = brute_force_solve(&prob, &p, cfg.rho, grid_step)?;
        let gap = sol
            .w
            .iter()
            .zip(&grid.w)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        max_gap = max_gap.max(gap);
        body.push_str(&format!("{index},{gap},{},{}\n", sol.objective, grid.objective));
    }
    let path = write_file(&out_dir, "oracle_check.csv", &body)?;
    println!(
        "oracle-check: 12 distributions, max sup gap {max_gap:.4} (grid step {grid_step}); \
         table at {}",
        path.display()
    );
    Ok(if max_gap <= grid_step { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn approx_error(args: &CommonArgs) -> Result<ExitCode> {
    use iceo_core::surrogate::{
        generate_surrogate_samples, BernsteinModel, KernelModel, SurrogateSampling,
    };
    use rand::SeedableRng as _;

    let cfg = load_config(args)?;
    let out_dir = resolve_out(&args.out, &cfg.output_dir);
    let prob = cfg.problem.build()?;
    let oracle = cfg.oracle.build();
    let k = prob.num_scenarios();

    // Shared test set: 400 uniform distributions with exact-oracle answers.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xa11d);
    let test: Vec<ProbVector> = (0..400).map(|_| sample_simplex(&mut rng, k)).collect();
    let mut warm: Option<Vec<f64>> = None;
    let mut reference = Vec::with_capacity(test.len());
    for p in &test {
        let sol = solve_regularized(&prob, p, cfg.rho, &oracle, warm.as_deref())?;
        reference.push(sol.w.clone());
        warm = Some(sol.w);
    }

    let errors = |model: &Surrogate| -> Result<(f64, f64)> {
        let mut sup = 0.0f64;
        let mut sq = 0.0f64;
        let mut terms = 0usize;
        for (p, w_ref) in test.iter().zip(&reference) {
            let w = model.eval(p)?;
            for (a, b) in w.iter().zip(w_ref) {
                sup = sup.max((a - b).abs());
                sq += (a - b).powi(2);
                terms += 1;
            }
        }
        Ok((sup, (sq / terms as f64).sqrt()))
    };

    let sample_seed = derive(cfg.seed, Stream::SurrogateSamples, &[]);
    let fit_seed = derive(cfg.seed, Stream::SurrogateFit, &[]);
    let mut body = String::from("kind,size,sup_error,rmse\n");

    for order in [2usize, 4, 8, 16] {
        let plan = generate_surrogate_samples(
            &prob,
            cfg.rho,
            SurrogateSampling::Grid { order },
            0.0,
            sample_seed,
            &oracle,
        )?;
        let model = Surrogate::Bernstein(BernsteinModel::fit(&plan)?);
        let (sup, rmse) = errors(&model)?;
        body.push_str(&format!("bernstein,{order},{sup},{rmse}\n"));
        println!("approx-error: bernstein order {order}: sup {sup:.4}, rmse {rmse:.4}");
    }

    for m in [125usize, 500, 2000] {
        let plan = generate_surrogate_samples(
            &prob,
            cfg.rho,
            SurrogateSampling::Uniform { count: m },
            0.25,
            derive(cfg.seed, Stream::SurrogateSamples, &[m as u64]),
            &oracle,
        )?;
        let model = Surrogate::Kernel(KernelModel::fit(&plan, 1.0, 3, 1e-6)?);
        let (sup, rmse) = errors(&model)?;
        body.push_str(&format!("krr,{m},{sup},{rmse}\n"));
        println!("approx-error: krr m={m}: sup {sup:.4}, rmse {rmse:.4}");
    }

    let model = cfg.surrogate.fit(&prob, cfg.rho, &oracle, sample_seed, fit_seed)?;
    let (sup, rmse) = errors(&model)?;
    body.push_str(&format!("{},config,{sup},{rmse}\n", model.kind()));
    println!("approx-error: configured {} surrogate: sup {sup:.4}, rmse {rmse:.4}", model.kind());

    let path = write_file(&out_dir, "approx_error.csv", &body)?;
    println!("approx-error: table at {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn train(args: &CommonArgs) -> Result<ExitCode> {
    let cfg = load_config(args)?;
    let out_dir = resolve_out(&args.out, &cfg.output_dir);
    let prob = cfg.problem.build()?;
    let oracle = cfg.oracle.build();
    let k = prob.num_scenarios();

    let surrogate = cfg.surrogate.fit(
        &prob,
        cfg.rho,
        &oracle,
        derive(cfg.seed, Stream::SurrogateSamples, &[]),
        derive(cfg.seed, Stream::SurrogateFit, &[]),
    )?;

    // One dataset at the largest configured size, simulation index 0.
    let n = *cfg.sample_sizes.iter().max().expect("validated non-empty");
    let dgp = cfg.dgp.build(k, cfg.dgp.degree, derive(cfg.seed, Stream::DgpWeights, &[0]))?;
    let (features, labels) =
        draw_samples(&dgp, n, derive(cfg.seed, Stream::TrainData, &[0, n as u64]))?;
    let (train_count, _) = cfg.split_sizes(n);
    let splits: Vec<Split> = (0..n)
        .map(|i| if i < train_count { Split::Train } else { Split::Validation })
        .collect();
    let ds = Dataset::new(features, labels, splits, k, cfg.seed)?;

    let h0 = match cfg.training.hypothesis {
        iceo_harness::config::HypothesisKind::Linear => iceo_core::hypothesis::Hypothesis::linear(
            k,
            cfg.dgp.input_dim,
            cfg.training.init_scale,
            derive(cfg.seed, Stream::Init, &[0, n as u64, 0]),
        ),
        iceo_harness::config::HypothesisKind::Mlp => iceo_core::hypothesis::Hypothesis::mlp(
            k,
            cfg.dgp.input_dim,
            cfg.training.hidden,
            cfg.training.init_scale,
            derive(cfg.seed, Stream::Init, &[0, n as u64, 0]),
        ),
    };

    let mut best: Option<(f64, f64, iceo_core::training::TrainResult)> = None;
    for (li, &lr) in cfg.training.learning_rates.iter().enumerate() {
        let tc = TrainConfig {
            rho: cfg.rho,
            learning_rate: lr,
            epochs: cfg.training.epochs,
            batch_size: cfg.training.batch_size,
            patience: cfg.training.patience,
            seed: derive(cfg.seed, Stream::Shuffle, &[0, n as u64, 0, li as u64]),
            ..TrainConfig::default()
        };
        let res = train_iceo(&ds, &h0, &surrogate, &prob, &tc)?;
        let score = res.val_trace.iter().copied().fold(f64::INFINITY, f64::min);
        if best.as_ref().map_or(true, |(s, _, _)| score < *s) {
            best = Some((score, lr, res));
        }
    }
    let (score, lr, res) = best.expect("validated non-empty learning rates");

    // Deployment figure on the validation split via the fitted surrogate.
    let val_risk = empirical_risk(
        &ds,
        Some(Split::Validation),
        |x| {
            let p = res.hypothesis.forward(x)?;
            surrogate.eval(&p)
        },
        &prob,
        cfg.rho,
    )?;

    fs::create_dir_all(&out_dir)?;
    let container = ModelContainer::new(surrogate, cfg.rho, cfg.seed);
    container.save_json(&out_dir.join("surrogate.json"))?;
    let hypothesis_json = serde_json::to_string_pretty(&res.hypothesis)
        .map_err(|e| iceo_core::error::Error::Parse(format!("hypothesis encode: {e}")))?;
    write_file(&out_dir, "hypothesis.json", &hypothesis_json)?;

    let mut trace = String::from("epoch,train_objective,val_risk\n");
    for (epoch, (t, v)) in res.train_trace.iter().zip(&res.val_trace).enumerate() {
        trace.push_str(&format!("{epoch},{t},{v}\n"));
    }
    write_file(&out_dir, "train_trace.csv", &trace)?;

    println!(
        "train: n={n}, lr={lr}, best_epoch={}, best_val={score:.4}, val_risk={val_risk:.4}; \
         artifacts at {}",
        res.best_epoch,
        out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn bench(args: &CommonArgs) -> Result<ExitCode> {
    let cfg = load_config(args)?;
    let out_dir = resolve_out(&args.out, &cfg.output_dir);
    let start = Instant::now();
    let outcome = run_experiment(&cfg, &out_dir, args.jobs)?;
    report_sweep("bench", &outcome, start);
    Ok(if outcome.failures == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn misspec(args: &CommonArgs) -> Result<ExitCode> {
    let cfg = load_config(args)?;
    let out_dir = resolve_out(&args.out, &cfg.output_dir);
    let start = Instant::now();
    let outcome = run_misspec_study(&cfg, &out_dir, args.jobs)?;
    report_sweep("misspec", &outcome, start);
    Ok(if outcome.failures == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn report_sweep(name: &str, outcome: &iceo_harness::runner::RunOutcome, start: Instant) {
    println!(
        "{name}: {} records, {} failed cells, {:.1}s; results at {}",
        outcome.records.len(),
        outcome.failures,
        start.elapsed().as_secs_f64(),
        outcome.results_path.display()
    );
}

fn semialg_verify(
    args: &CommonArgs,
    instances: usize,
    samples: usize,
    violators: usize,
) -> Result<ExitCode> {
    let cfg = load_config(args)?;
    let out_dir = resolve_out(&args.out, &cfg.output_dir);
    let prob = cfg.problem.build()?;
    let k = prob.num_scenarios();
    let dim = prob.dim();

    // The decision region {w >= 0, sum w <= budget} doubles as the feature
    // domain for certification: nonempty, bounded, full-dimensional.
    let mut rows: Vec<Vec<f64>> = (0..dim)
        .map(|r| (0..dim).map(|c| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();
    rows.push(vec![-1.0; dim]);
    let mut bounds = vec![0.0; dim];
    bounds.push(-cfg.problem.budget);
    let domain = PolyhedralDomain::new(rows, bounds)?;

    let mut body = String::from("kind,index,certified,violations,lp_rejects\n");
    let mut bad = 0usize;

    let system = build_membership_system(&domain, k)?;
    for index in 0..instances {
        let seed = derive(cfg.seed, Stream::DgpWeights, &[index as u64]);
        let (weights, offsets) = random_certified_instance(&domain, k, seed)?;
        let cert = check_feasibility(&system, &weights, &offsets)?;
        let violation = falsify_by_sampling(&domain, &weights, &offsets, samples, seed ^ 1)?;
        let certified = cert.is_certified();
        let violations = usize::from(violation.is_some());
        if !certified || violations > 0 {
            bad += 1;
        }
        body.push_str(&format!("certified,{index},{certified},{violations},\n"));
    }

    for index in 0..violators {
        let seed = derive(cfg.seed, Stream::TestData, &[index as u64]);
        let (weights, offsets) = violator_instance(&domain, k, seed)?;
        let cert = check_feasibility(&system, &weights, &offsets)?;
        let rejected = !cert.is_certified();
        if !rejected {
            bad += 1;
        }
        body.push_str(&format!("violator,{index},,,{rejected}\n"));
    }

    let path = write_file(&out_dir, "semialg.csv", &body)?;
    println!(
        "semialg-verify: {instances} certified instances x {samples} samples, \
         {violators} violators; {bad} inconsistencies; table at {}",
        path.display()
    );
    Ok(if bad == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn plot_data(results: &Path, out: Option<PathBuf>) -> Result<ExitCode> {
    let out_dir = match out {
        Some(dir) => dir,
        None => results
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let outcome = emit_plot_data(results, &out_dir)?;
    println!(
        "plot-data: {} groups, {} malformed rows skipped; figure at {}",
        outcome.rows.len(),
        outcome.skipped,
        outcome.figure_path.display()
    );
    Ok(ExitCode::SUCCESS)
}
