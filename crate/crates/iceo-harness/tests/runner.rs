//! End-to-end sweep behavior on downsized configs: record counting,
//! byte-determinism, stream isolation, and the record-and-continue policy.

use std::fs;

use iceo_harness::config::{ExperimentConfig, HypothesisKind, Method, SurrogateSection};
use iceo_harness::runner::{run_experiment, run_misspec_study, MISSPEC_SCHEMA, RESULTS_SCHEMA};

/// Downsized benchmark config that keeps every moving part engaged.
fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.sample_sizes = vec![40, 60];
    cfg.simulations = 2;
    cfg.test_size = 25;
    cfg.surrogate = SurrogateSection::Mlp {
        samples: 40,
        hidden: 16,
        epochs: 40,
        learning_rate: 1e-2,
        batch_size: 16,
        noise_sigma: 0.0,
    };
    cfg.training.epochs = 8;
    cfg.training.batch_size = 16;
    cfg.training.patience = 0;
    cfg.training.learning_rates = vec![1e-2];
    cfg.oracle.max_iters = 1500;
    cfg.oracle.tol = 1e-6;
    cfg.tuning.knn_neighbors = vec![3, 5];
    cfg.tuning.bandwidth_multipliers = vec![1.0, 2.0];
    cfg.misspec.degrees = vec![1, 2];
    cfg.misspec.sample_size = 40;
    cfg
}

#[test]
fn single_method_single_cell_yields_one_record() {
    let mut cfg = tiny_config();
    cfg.methods = vec![Method::Saa];
    cfg.sample_sizes = vec![40];
    cfg.simulations = 1;

    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path(), 1).unwrap();

    assert_eq!(out.records.len(), 1);
    assert_eq!(out.failures, 0);
    let r = &out.records[0];
    assert_eq!(r.method, "saa");
    assert_eq!((r.n, r.sim), (40, 0));
    assert!(r.ok);
    let cost = r.test_cost.unwrap();
    assert!(cost.is_finite() && cost >= 0.0, "newsvendor costs are nonnegative");

    let text = fs::read_to_string(&out.results_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "schema line, header, one record");
    assert_eq!(lines[0], RESULTS_SCHEMA);
}

#[test]
fn full_grid_produces_methods_by_sizes_by_sims_records() {
    let mut cfg = tiny_config();
    cfg.record_truth = true;

    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path(), 1).unwrap();

    // 5 methods x 2 sizes x 2 sims, plus one truth row per simulation.
    assert_eq!(out.records.len(), 5 * 2 * 2 + 2);
    assert_eq!(out.failures, 0);
    for r in &out.records {
        assert!(r.ok, "cell {}/{}/{} failed: {}", r.method, r.n, r.sim, r.message);
        assert!(r.test_cost.unwrap() >= 0.0);
    }
    // Trained parameter vectors come from the two gradient-trained methods.
    assert_eq!(out.trained.len(), 2 * 2 * 2);

    // The config echo reproduces the run's configuration.
    let echo = fs::read_to_string(dir.path().join("bench-config.toml")).unwrap();
    let back = ExperimentConfig::from_toml(&echo).unwrap();
    assert_eq!(back.sample_sizes, cfg.sample_sizes);
    assert!(back.record_truth);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = tiny_config();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();

    let out_a = run_experiment(&cfg, dir_a.path(), 1).unwrap();
    let out_b = run_experiment(&cfg, dir_b.path(), 2).unwrap();

    let bytes_a = fs::read(&out_a.results_path).unwrap();
    let bytes_b = fs::read(&out_b.results_path).unwrap();
    assert_eq!(bytes_a, bytes_b, "results must not depend on run or worker count");
}

#[test]
fn test_stream_moves_costs_but_not_trained_parameters() {
    let cfg = tiny_config();
    let mut cfg_shifted = tiny_config();
    cfg_shifted.test_seed = Some(0xfeed);

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let out_a = run_experiment(&cfg, dir_a.path(), 1).unwrap();
    let out_b = run_experiment(&cfg_shifted, dir_b.path(), 1).unwrap();

    assert_eq!(out_a.trained.len(), out_b.trained.len());
    for (a, b) in out_a.trained.iter().zip(&out_b.trained) {
        assert_eq!((&a.method, a.n, a.sim), (&b.method, b.n, b.sim));
        assert_eq!(a.params, b.params, "test draws must not reach training");
    }

    let costs = |out: &iceo_harness::runner::RunOutcome| -> Vec<f64> {
        out.records.iter().filter_map(|r| r.test_cost).collect()
    };
    assert_ne!(costs(&out_a), costs(&out_b), "different test draws, different costs");
}

#[test]
fn failing_cells_are_recorded_and_the_sweep_continues() {
    let mut cfg = tiny_config();
    // No usable neighbor count: larger than every train split.
    cfg.tuning.knn_neighbors = vec![500];

    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, dir.path(), 1).unwrap();

    let knn_rows: Vec<_> =
        out.records.iter().filter(|r| r.method == "pres-knn").collect();
    assert_eq!(knn_rows.len(), 4);
    assert!(knn_rows.iter().all(|r| !r.ok && r.message.contains("neighbor")));
    assert_eq!(out.failures, 4);
    assert!(
        out.records.iter().filter(|r| r.method != "pres-knn").all(|r| r.ok),
        "other methods are untouched by the failing cell"
    );
}

#[test]
fn misspec_cells_carry_both_methods_and_their_improvement() {
    let mut cfg = tiny_config();
    cfg.simulations = 1;

    let dir = tempfile::tempdir().unwrap();
    let out = run_misspec_study(&cfg, dir.path(), 1).unwrap();

    // Per (degree, sim) cell: iceo, pto, improvement.
    assert_eq!(out.records.len(), 2 * 1 * 3);
    assert_eq!(out.failures, 0);
    for deg in [1u32, 2] {
        let row = |name: &str| {
            out.records
                .iter()
                .find(|r| r.method == name && r.degree == Some(deg))
                .unwrap()
        };
        let iceo = row("iceo").test_cost.unwrap();
        let pto = row("pto").test_cost.unwrap();
        let imp = row("improvement").test_cost.unwrap();
        assert!(
            (imp - (pto - iceo) / pto).abs() < 1e-12,
            "improvement is the relative cost reduction"
        );
        assert_eq!(row("improvement").n, cfg.misspec.sample_size);
    }

    let text = fs::read_to_string(&out.results_path).unwrap();
    assert!(text.starts_with(MISSPEC_SCHEMA));
    assert!(text.lines().nth(1).unwrap().starts_with("method,deg,"));
}

#[test]
fn misspec_rejects_nonlinear_hypotheses() {
    let mut cfg = tiny_config();
    cfg.training.hypothesis = HypothesisKind::Mlp;
    let dir = tempfile::tempdir().unwrap();
    assert!(run_misspec_study(&cfg, dir.path(), 1).is_err());
}
