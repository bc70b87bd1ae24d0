//! Condense a results file into tidy per-figure tables: mean and standard
//! error per (method, n) for benchmark sweeps, per logit power for
//! misspecification sweeps.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use iceo_core::error::{Error, Result};

use crate::runner::{IMPROVEMENT_METHOD, MISSPEC_SCHEMA, RESULTS_SCHEMA, TRUTH_METHOD};

/// One aggregated figure row.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureRow {
    /// Method name, or the degree rendered as text for misspec figures.
    pub group: String,
    /// Training-set size; 0 for misspec figures (n is fixed there).
    pub n: usize,
    pub mean: f64,
    /// Standard error of the mean; `None` with a single observation.
    pub stderr: Option<f64>,
    pub count: usize,
}

#[derive(Debug)]
pub struct PlotOutcome {
    pub figure_path: PathBuf,
    pub rows: Vec<FigureRow>,
    /// Rows that could not be parsed and were dropped.
    pub skipped: usize,
}

/// Sample mean and standard error (ddof 1).
fn summarize(values: &[f64]) -> (f64, Option<f64>) {
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
    (mean, Some((var / count).sqrt()))
}

struct ParsedRow {
    method: String,
    deg: u32,
    n: usize,
    ok: bool,
    value: Option<f64>,
}

/// Parse one data row; `misspec` rows carry an extra deg column.
fn parse_row(line: &str, misspec: bool) -> Option<ParsedRow> {
    let fields: Vec<&str> = line.split(',').collect();
    let want = if misspec { 8 } else { 7 };
    if fields.len() != want {
        return None;
    }
    let mut idx = 0;
    let mut next = || {
        let f = fields[idx];
        idx += 1;
        f
    };
    let method = next().to_string();
    if method.is_empty() {
        return None;
    }
    let deg = if misspec { next().parse().ok()? } else { 0 };
    let n: usize = next().parse().ok()?;
    let _sim: usize = next().parse().ok()?;
    let ok = match next() {
        "ok" => true,
        "error" => false,
        _ => return None,
    };
    let value_field = next();
    let value = if value_field.is_empty() {
        None
    } else {
        Some(value_field.parse::<f64>().ok().filter(|v| v.is_finite())?)
    };
    if ok && value.is_none() {
        return None;
    }
    Some(ParsedRow { method, deg, n, ok, value })
}

/// Read a results file, aggregate it into its figure table, and write that
/// table as CSV under `out_dir`. The schema line picks the figure: method
/// cost curves for benchmark results, improvement-by-degree for
/// misspecification results. Malformed rows are skipped and counted;
/// failed cells are excluded from the statistics.
pub fn emit_plot_data(results_path: &Path, out_dir: &Path) -> Result<PlotOutcome> {
    let text = fs::read_to_string(results_path)?;
    let mut lines = text.lines();
    let schema = lines.next().unwrap_or_default();
    let misspec = match schema {
        s if s == RESULTS_SCHEMA => false,
        s if s == MISSPEC_SCHEMA => true,
        other => {
            return Err(Error::Parse(format!(
                "unrecognized results schema line: {other:?}"
            )))
        }
    };
    // Column header.
    lines.next();

    let mut skipped = 0usize;
    let mut parsed = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        match parse_row(line, misspec) {
            Some(row) => parsed.push(row),
            None => skipped += 1,
        }
    }

    // Group keys: (method, n) for benchmarks, degree for misspec figures.
    let mut groups: Vec<(String, usize, Vec<f64>)> = Vec::new();
    for row in &parsed {
        if !row.ok {
            continue;
        }
        let (group, n) = if misspec {
            if row.method != IMPROVEMENT_METHOD {
                continue;
            }
            (row.deg.to_string(), 0)
        } else {
            if row.method == TRUTH_METHOD {
                continue;
            }
            (row.method.clone(), row.n)
        };
        let value = row.value.expect("ok rows carry a value");
        match groups.iter_mut().find(|(g, gn, _)| *g == group && *gn == n) {
            Some((_, _, values)) => values.push(value),
            None => groups.push((group, n, vec![value])),
        }
    }
    groups.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));

    let rows: Vec<FigureRow> = groups
        .into_iter()
        .map(|(group, n, values)| {
            let (mean, stderr) = summarize(&values);
            FigureRow { group, n, mean, stderr, count: values.len() }
        })
        .collect();

    fs::create_dir_all(out_dir)?;
    let (name, header) = if misspec {
        ("fig_improvement.csv", "deg,mean_improvement,stderr,count\n")
    } else {
        ("fig_costs.csv", "method,n,mean_cost,stderr,count\n")
    };
    let figure_path = out_dir.join(name);
    let mut out = String::from(header);
    for r in &rows {
        let stderr = r.stderr.map(|s| s.to_string()).unwrap_or_default();
        if misspec {
            out.push_str(&format!("{},{},{},{}\n", r.group, r.mean, stderr, r.count));
        } else {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.group, r.n, r.mean, stderr, r.count
            ));
        }
    }
    let mut file = fs::File::create(&figure_path)?;
    file.write_all(out.as_bytes())?;

    Ok(PlotOutcome { figure_path, rows, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_results(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        path
    }

    // Means and errors checked against a by-hand recomputation: costs
    // {10, 12} give mean 11, sd sqrt(2), stderr 1; {8, 8, 8} give stderr 0.
    #[test]
    fn bench_figure_matches_hand_recomputation() {
        let dir = tempfile::tempdir().unwrap();
        let body = "\
# iceo-results v1
method,n,sim,status,test_cost,hyperparams,message
saa,100,0,ok,10,,
saa,100,1,ok,12,,
saa,300,0,ok,8,,
saa,300,1,ok,8,,
saa,300,2,ok,8,,
iceo,100,0,ok,5,lr=0.01;best_epoch=3,
truth,0,0,ok,4,,
iceo,100,1,error,,,solver diverged
not a row at all
saa,100,oops,ok,10,,
";
        let path = write_results(dir.path(), "results.csv", body);
        let out = emit_plot_data(&path, dir.path()).unwrap();

        assert_eq!(out.skipped, 2, "the free-text and bad-sim rows are malformed");
        assert_eq!(
            out.rows,
            vec![
                FigureRow {
                    group: "iceo".into(),
                    n: 100,
                    mean: 5.0,
                    stderr: None,
                    count: 1
                },
                FigureRow {
                    group: "saa".into(),
                    n: 100,
                    mean: 11.0,
                    stderr: Some(1.0),
                    count: 2
                },
                FigureRow {
                    group: "saa".into(),
                    n: 300,
                    mean: 8.0,
                    stderr: Some(0.0),
                    count: 3
                },
            ]
        );

        let text = fs::read_to_string(&out.figure_path).unwrap();
        assert_eq!(
            text,
            "method,n,mean_cost,stderr,count\n\
             iceo,100,5,,1\n\
             saa,100,11,1,2\n\
             saa,300,8,0,3\n"
        );
    }

    #[test]
    fn misspec_figure_reads_improvement_rows_only() {
        let dir = tempfile::tempdir().unwrap();
        let body = "\
# iceo-misspec v1
method,deg,n,sim,status,value,hyperparams,message
iceo,2,500,0,ok,90,lr=0.01;best_epoch=3,
pto,2,500,0,ok,100,lr=0.001;best_epoch=7,
improvement,2,500,0,ok,0.1,,
improvement,2,500,1,ok,0.3,,
improvement,3,500,0,ok,0.25,,
improvement,3,500,1,error,,,needs both method rows of the cell
";
        let path = write_results(dir.path(), "misspec.csv", body);
        let out = emit_plot_data(&path, dir.path()).unwrap();

        assert_eq!(out.skipped, 0);
        // {0.1, 0.3}: mean 0.2, sd ~0.1414, stderr 0.1.
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.rows[0].group, "2");
        assert!((out.rows[0].mean - 0.2).abs() < 1e-12);
        assert!((out.rows[0].stderr.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(out.rows[0].count, 2);
        assert_eq!(out.rows[1].group, "3");
        assert_eq!(out.rows[1].stderr, None);
        assert_eq!(out.rows[1].count, 1);

        let text = fs::read_to_string(&out.figure_path).unwrap();
        assert!(text.starts_with("deg,mean_improvement,stderr,count\n"));
        assert!(text.contains("\n3,0.25,,1\n"));
    }

    #[test]
    fn unknown_schema_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_results(dir.path(), "bad.csv", "# something else\n");
        assert!(emit_plot_data(&path, dir.path()).is_err());
    }
}
