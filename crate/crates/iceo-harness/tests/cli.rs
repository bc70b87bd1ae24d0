//! Binary-level checks: exit codes, output files, and flag/env precedence.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn iceo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iceo"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary launches")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Downsized config exercising every subcommand quickly.
const TINY_CONFIG: &str = r#"
sample_sizes = [40]
simulations = 1
test_size = 20

[surrogate]
kind = "mlp"
samples = 40
hidden = 16
epochs = 40
batch_size = 16

[training]
epochs = 8
batch_size = 16
patience = 0
learning_rates = [0.01]

[oracle]
max_iters = 1500
tol = 1e-6

[tuning]
knn_neighbors = [3, 5]
bandwidth_multipliers = [1.0, 2.0]

[misspec]
degrees = [1]
sample_size = 40
"#;

fn write_tiny_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("cfg.toml");
    fs::write(&path, TINY_CONFIG).unwrap();
    path
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn oracle_check_passes_and_reruns_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    let first = run(iceo().args(["oracle-check", "--out"]).arg(&out_a));
    assert!(first.status.success(), "stderr: {}", stderr_of(&first));
    assert!(String::from_utf8_lossy(&first.stdout).contains("max sup gap"));

    let second = run(iceo().args(["oracle-check", "--out"]).arg(&out_b));
    assert!(second.status.success());

    let bytes_a = fs::read(out_a.join("oracle_check.csv")).unwrap();
    let bytes_b = fs::read(out_b.join("oracle_check.csv")).unwrap();
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn bench_then_plot_data_produces_the_figure_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = dir.path().join("bench");

    let res = run(iceo()
        .args(["bench", "--jobs", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    assert!(res.status.success(), "stderr: {}", stderr_of(&res));

    let results = out.join("results.csv");
    // Schema line + header + 5 methods x 1 size x 1 simulation.
    assert_eq!(line_count(&results), 2 + 5);
    assert!(out.join("timings.csv").exists());
    assert!(out.join("bench-config.toml").exists());

    let plotted = run(iceo().args(["plot-data", "--results"]).arg(&results));
    assert!(plotted.status.success(), "stderr: {}", stderr_of(&plotted));
    let fig = out.join("fig_costs.csv");
    let text = fs::read_to_string(&fig).unwrap();
    assert_eq!(text.lines().count(), 1 + 5);
    assert!(text.starts_with("method,n,mean_cost,stderr,count"));
    // A single simulation has no spread to report.
    assert!(text.lines().skip(1).all(|l| l.ends_with(",,1")));
}

#[test]
fn misspec_writes_method_and_improvement_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = dir.path().join("mis");

    let res = run(iceo().args(["misspec", "--config"]).arg(&cfg).arg("--out").arg(&out));
    assert!(res.status.success(), "stderr: {}", stderr_of(&res));

    let text = fs::read_to_string(out.join("misspec.csv")).unwrap();
    // Schema line + header + (iceo, pto, improvement) for one cell.
    assert_eq!(text.lines().count(), 2 + 3);
    assert!(text.lines().any(|l| l.starts_with("improvement,1,40,0,")));

    let plotted =
        run(iceo().args(["plot-data", "--results"]).arg(out.join("misspec.csv")));
    assert!(plotted.status.success(), "stderr: {}", stderr_of(&plotted));
    let fig = fs::read_to_string(out.join("fig_improvement.csv")).unwrap();
    assert!(fig.starts_with("deg,mean_improvement,stderr,count"));
    assert_eq!(fig.lines().count(), 1 + 1);
}

#[test]
fn train_saves_surrogate_hypothesis_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(dir.path());
    let out = dir.path().join("train");

    let res = run(iceo().args(["train", "--config"]).arg(&cfg).arg("--out").arg(&out));
    assert!(res.status.success(), "stderr: {}", stderr_of(&res));

    let surrogate: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("surrogate.json")).unwrap()).unwrap();
    assert!(surrogate.get("rho").is_some());
    let hypothesis: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("hypothesis.json")).unwrap()).unwrap();
    assert!(hypothesis.is_object());
    assert!(line_count(&out.join("train_trace.csv")) >= 2);
}

#[test]
fn unknown_config_keys_exit_one_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "bogus_knob = 1\n").unwrap();

    let res = run(iceo().args(["bench", "--config"]).arg(&cfg));
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr_of(&res).contains("error:"));
}

#[test]
fn failing_cells_exit_two_but_still_write_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    let mut text = TINY_CONFIG.replace("knn_neighbors = [3, 5]", "knn_neighbors = [500]");
    text.insert_str(0, "methods = [\"pres-knn\"]\n");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("bench");

    let res = run(iceo().args(["bench", "--config"]).arg(&cfg).arg("--out").arg(&out));
    assert_eq!(res.status.code(), Some(2));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.lines().any(|l| l.contains(",error,")));
}

#[test]
fn out_dir_env_var_sets_the_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(iceo().args(["oracle-check"]).env("ICEO_OUT_DIR", dir.path()));
    assert!(res.status.success(), "stderr: {}", stderr_of(&res));
    // Default config names its output directory "iceo-out".
    assert!(dir.path().join("iceo-out").join("oracle_check.csv").exists());
}

#[test]
fn semialg_verify_certifies_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("semialg");

    let res = run(iceo()
        .args([
            "semialg-verify",
            "--instances",
            "3",
            "--samples",
            "300",
            "--violators",
            "3",
            "--out",
        ])
        .arg(&out));
    assert!(res.status.success(), "stderr: {}", stderr_of(&res));

    let text = fs::read_to_string(out.join("semialg.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3 + 3);
    for line in text.lines().skip(1) {
        if line.starts_with("certified,") {
            assert!(line.contains(",true,0,"), "uncertified or violated: {line}");
        } else {
            assert!(line.ends_with(",true"), "violator not rejected: {line}");
        }
    }
}
