//! Synthetic data generation: Gaussian features and scenario labels drawn
//! from `softmax((Bx + b)^deg)` conditional distributions.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::ProbVector;

/// Weight entries of the seeded generator are integers drawn uniformly from
/// this inclusive range.
pub const SEEDED_WEIGHT_RANGE: (u32, u32) = (0, 150);

/// Ground-truth generative model: features are N(0, variance * I), and the
/// label takes scenario index k with probability
/// `softmax(signed_power(weights * x + bias, degree))_k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpConfig {
    pub input_dim: usize,
    pub k: usize,
    /// Per-coordinate feature variance.
    pub variance: f64,
    /// k rows of length input_dim.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    /// Exponent applied elementwise to the logits before the softmax.
    pub degree: u32,
    /// Seed that produced the weights (provenance only; feature and label
    /// draws take their own seeds).
    pub seed: u64,
}

impl DgpConfig {
    pub fn new(
        weights: Vec<Vec<f64>>,
        bias: Vec<f64>,
        variance: f64,
        degree: u32,
        seed: u64,
    ) -> Result<Self> {
        let k = weights.len();
        let input_dim = weights.first().map_or(0, Vec::len);
        let cfg = DgpConfig {
            input_dim,
            k,
            variance,
            weights,
            bias,
            degree,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Weight matrix with integer entries drawn uniformly from
    /// [`SEEDED_WEIGHT_RANGE`], zero bias.
    pub fn seeded(input_dim: usize, k: usize, variance: f64, degree: u32, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = SEEDED_WEIGHT_RANGE;
        let weights = (0..k)
            .map(|_| {
                (0..input_dim)
                    .map(|_| f64::from(rng.gen_range(lo..=hi)))
                    .collect()
            })
            .collect();
        DgpConfig::new(weights, vec![0.0; k], variance, degree, seed)
    }

    /// Default instance sized for the example newsvendor scenario set:
    /// three features, four scenarios, variance 5.
    pub fn example(degree: u32, seed: u64) -> Result<Self> {
        DgpConfig::seeded(3, 4, 5.0, degree, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::domain("need at least two scenario classes"));
        }
        if self.input_dim == 0 {
            return Err(Error::domain("feature dimension must be positive"));
        }
        if self.weights.len() != self.k || self.bias.len() != self.k {
            return Err(Error::dim(format!(
                "expected {} weight rows and bias entries, got {} and {}",
                self.k,
                self.weights.len(),
                self.bias.len()
            )));
        }
        for row in &self.weights {
            if row.len() != self.input_dim {
                return Err(Error::dim(format!(
                    "weight row of length {}, expected {}",
                    row.len(),
                    self.input_dim
                )));
            }
        }
        let finite = self.weights.iter().flatten().chain(&self.bias);
        if !finite.clone().all(|v| v.is_finite()) {
            return Err(Error::domain("weights and bias must be finite"));
        }
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::domain("feature variance must be positive"));
        }
        if self.degree == 0 || self.degree > i32::MAX as u32 {
            return Err(Error::domain("degree must be in 1..=i32::MAX"));
        }
        Ok(())
    }
}

/// `sign(v) * |v|^degree`: monotone for every degree, identity at degree 1.
fn signed_power(v: f64, degree: u32) -> f64 {
    if degree == 1 {
        v
    } else {
        v.signum() * v.abs().powi(degree as i32)
    }
}

/// `n` i.i.d. draws from N(0, variance * I).
pub fn generate_features(n: usize, cfg: &DgpConfig, seed: u64) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    let normal = Normal::new(0.0, cfg.variance.sqrt())
        .map_err(|e| Error::domain(format!("feature distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| (0..cfg.input_dim).map(|_| normal.sample(&mut rng)).collect())
        .collect())
}

/// True conditional label distribution at `x`.
pub fn conditional_probs(x: &[f64], cfg: &DgpConfig) -> Result<ProbVector> {
    cfg.validate()?;
    if x.len() != cfg.input_dim {
        return Err(Error::dim(format!(
            "feature vector of length {}, expected {}",
            x.len(),
            cfg.input_dim
        )));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::domain("features must be finite"));
    }
    let logits: Vec<f64> = cfg
        .weights
        .iter()
        .zip(&cfg.bias)
        .map(|(row, b)| {
            let v = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b;
            signed_power(v, cfg.degree)
        })
        .collect();
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::numeric("logit power overflowed"));
    }
    Ok(ProbVector::from_logits(&logits))
}

/// Independent categorical draws, one scenario index per distribution.
pub fn sample_labels(probs: &[ProbVector], seed: u64) -> Result<Vec<usize>> {
    if let Some(first) = probs.first() {
        if probs.iter().any(|p| p.len() != first.len()) {
            return Err(Error::dim("label distributions disagree on class count"));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(probs
        .iter()
        .map(|p| {
            let u: f64 = rng.gen();
            let mut cum = 0.0;
            for (idx, &mass) in p.as_slice().iter().enumerate() {
                cum += mass;
                if u < cum {
                    return idx;
                }
            }
            // Rounding left cum marginally below 1; attribute the sliver
            // to the last class.
            p.len() - 1
        })
        .collect())
}

const LABEL_STREAM: u64 = 0x6c61_6265_6c73;

/// Features plus labels in one call; the label stream is decorrelated from
/// the feature stream so both are reproducible from a single seed.
pub fn draw_samples(cfg: &DgpConfig, n: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let features = generate_features(n, cfg, seed)?;
    let probs = features
        .iter()
        .map(|x| conditional_probs(x, cfg))
        .collect::<Result<Vec<_>>>()?;
    let labels = sample_labels(&probs, seed ^ LABEL_STREAM)?;
    Ok((features, labels))
}

/// Writes `x_1..x_p,scenario_index` rows. Floats use the shortest
/// representation that parses back to the same value, so a round trip is
/// exact.
pub fn write_csv<W: Write>(out: &mut W, features: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if features.is_empty() {
        return Err(Error::domain("nothing to write"));
    }
    if features.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} feature rows vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    let p = features[0].len();
    if p == 0 || features.iter().any(|row| row.len() != p) {
        return Err(Error::dim("feature rows must share a positive length"));
    }
    if !features.iter().flatten().all(|v| v.is_finite()) {
        return Err(Error::domain("features must be finite"));
    }
    let header: Vec<String> = (1..=p).map(|j| format!("x_{j}")).collect();
    writeln!(out, "{},scenario_index", header.join(","))?;
    for (row, label) in features.iter().zip(labels) {
        for v in row {
            write!(out, "{v},")?;
        }
        writeln!(out, "{label}")?;
    }
    Ok(())
}

/// Inverse of [`write_csv`]; the header fixes the feature dimension.
pub fn read_csv<R: BufRead>(input: R) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty input".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[cols.len() - 1] != "scenario_index" {
        return Err(Error::Parse(format!("unrecognized header: {header}")));
    }
    let p = cols.len() - 1;
    for (j, name) in cols[..p].iter().enumerate() {
        let expected = format!("x_{}", j + 1);
        if *name != expected {
            return Err(Error::Parse(format!(
                "header column {} is {name}, expected {expected}",
                j + 1
            )));
        }
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p + 1 {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {}",
                i + 1,
                fields.len(),
                p + 1
            )));
        }
        let row = fields[..p]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse(format!("bad feature value {f:?} in row {}", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = fields[p]
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad scenario index {:?} in row {}", fields[p], i + 1)))?;
        features.push(row);
        labels.push(label);
    }
    Ok((features, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moderate_config(degree: u32) -> DgpConfig {
        DgpConfig::new(
            vec![
                vec![0.5, -0.3, 0.2],
                vec![-0.4, 0.6, 0.1],
                vec![0.2, 0.2, -0.5],
                vec![-0.1, -0.4, 0.3],
            ],
            vec![0.1, -0.2, 0.0, 0.15],
            5.0,
            degree,
            0,
        )
        .unwrap()
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let w = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert!(DgpConfig::new(w.clone(), vec![0.0; 2], 1.0, 0, 0).is_err());
        assert!(DgpConfig::new(w.clone(), vec![0.0; 2], 0.0, 1, 0).is_err());
        assert!(DgpConfig::new(w.clone(), vec![0.0; 2], -1.0, 1, 0).is_err());
        assert!(DgpConfig::new(w.clone(), vec![0.0; 3], 1.0, 1, 0).is_err());
        assert!(DgpConfig::new(vec![vec![1.0, 2.0], vec![3.0]], vec![0.0; 2], 1.0, 1, 0).is_err());
        assert!(DgpConfig::new(vec![vec![1.0, 2.0]], vec![0.0], 1.0, 1, 0).is_err());
        assert!(DgpConfig::new(vec![vec![f64::NAN, 0.0], vec![0.0, 0.0]], vec![0.0; 2], 1.0, 1, 0).is_err());
        assert!(DgpConfig::new(w, vec![0.0; 2], 1.0, 1, 0).is_ok());
    }

    #[test]
    fn seeded_weights_are_integers_in_range() {
        let cfg = DgpConfig::seeded(3, 4, 5.0, 1, 42).unwrap();
        assert_eq!(cfg.input_dim, 3);
        assert_eq!(cfg.k, 4);
        for &w in cfg.weights.iter().flatten() {
            assert_eq!(w, w.trunc());
            assert!((0.0..=150.0).contains(&w));
        }
        assert!(cfg.bias.iter().all(|&b| b == 0.0));
        let again = DgpConfig::seeded(3, 4, 5.0, 1, 42).unwrap();
        assert_eq!(cfg.weights, again.weights);
        let other = DgpConfig::seeded(3, 4, 5.0, 1, 43).unwrap();
        assert_ne!(cfg.weights, other.weights);
    }

    #[test]
    fn feature_moments_match_the_configured_variance() {
        let cfg = DgpConfig::example(1, 7).unwrap();
        let n = 100_000;
        let xs = generate_features(n, &cfg, 11).unwrap();
        for j in 0..cfg.input_dim {
            let mean = xs.iter().map(|x| x[j]).sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(mean.abs() <= 0.05, "coordinate {j} mean {mean}");
            assert!((4.8..=5.2).contains(&var), "coordinate {j} variance {var}");
        }
    }

    #[test]
    fn feature_draws_are_seed_deterministic() {
        let cfg = DgpConfig::example(1, 7).unwrap();
        let a = generate_features(50, &cfg, 3).unwrap();
        let b = generate_features(50, &cfg, 3).unwrap();
        let c = generate_features(50, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(generate_features(0, &cfg, 3).is_err());
    }

    #[test]
    fn degree_one_is_plain_softmax() {
        let cfg = moderate_config(1);
        let xs = generate_features(20, &cfg, 9).unwrap();
        for x in &xs {
            let probs = conditional_probs(x, &cfg).unwrap();
            let logits: Vec<f64> = cfg
                .weights
                .iter()
                .zip(&cfg.bias)
                .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for (got, want) in probs.as_slice().iter().zip(&exps) {
                assert!((got - want / total).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn degree_one_matches_the_softmax_linear_class() {
        use crate::hypothesis::Hypothesis;

        let cfg = moderate_config(1);
        let mut h = Hypothesis::linear(cfg.k, cfg.input_dim, 0.1, 0);
        let flat: Vec<f64> = cfg
            .weights
            .iter()
            .flatten()
            .cloned()
            .chain(cfg.bias.iter().cloned())
            .collect();
        h.params_mut().copy_from_slice(&flat);
        let xs = generate_features(20, &cfg, 13).unwrap();
        for x in &xs {
            let from_dgp = conditional_probs(x, &cfg).unwrap();
            let from_class = h.forward(x).unwrap();
            for (a, b) in from_dgp.as_slice().iter().zip(from_class.as_slice()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_weights_ignore_features() {
        let cfg = DgpConfig::new(
            vec![vec![0.0; 3]; 4],
            vec![0.5, -0.5, 0.2, 0.0],
            5.0,
            2,
            0,
        )
        .unwrap();
        let expected = ProbVector::from_logits(&[0.25, -0.25, 0.04, 0.0]);
        for x in generate_features(10, &cfg, 17).unwrap() {
            let probs = conditional_probs(&x, &cfg).unwrap();
            for (got, want) in probs.as_slice().iter().zip(expected.as_slice()) {
                assert!((got - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn higher_degree_concentrates_probability() {
        let flat = moderate_config(1);
        let sharp = moderate_config(3);
        let xs = generate_features(10_000, &flat, 23).unwrap();
        let mean_max = |cfg: &DgpConfig| -> f64 {
            xs.iter()
                .map(|x| {
                    let p = conditional_probs(x, cfg).unwrap();
                    p.as_slice().iter().cloned().fold(0.0, f64::max)
                })
                .sum::<f64>()
                / xs.len() as f64
        };
        let m1 = mean_max(&flat);
        let m3 = mean_max(&sharp);
        assert!(
            m3 > m1 + 0.02,
            "degree 3 mean max mass {m3} vs degree 1 {m1}"
        );
    }

    #[test]
    fn point_mass_probs_give_deterministic_labels() {
        let probs = vec![ProbVector::point_mass(4, 2); 50];
        for seed in [0, 1, 99] {
            assert!(sample_labels(&probs, seed)
                .unwrap()
                .iter()
                .all(|&l| l == 2));
        }
    }

    #[test]
    fn uniform_probs_hit_each_scenario_equally() {
        let n = 100_000;
        let probs = vec![ProbVector::uniform(4); n];
        let labels = sample_labels(&probs, 31).unwrap();
        for k in 0..4 {
            let freq = labels.iter().filter(|&&l| l == k).count() as f64 / n as f64;
            assert!((freq - 0.25).abs() <= 0.01, "scenario {k} frequency {freq}");
        }
    }

    #[test]
    fn label_draws_are_seed_deterministic() {
        let probs = vec![ProbVector::uniform(3); 1000];
        let a = sample_labels(&probs, 5).unwrap();
        let b = sample_labels(&probs, 5).unwrap();
        let c = sample_labels(&probs, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);

        let mixed = vec![ProbVector::uniform(3), ProbVector::uniform(4)];
        assert!(sample_labels(&mixed, 0).is_err());
    }

    // Labels binned by the argmax of the true conditional distribution
    // should reproduce the bin-averaged true probabilities better as n
    // grows; the frequency-space chi-square discrepancy shrinks like 1/n.
    #[test]
    fn conditional_frequencies_converge_with_sample_size() {
        let cfg = moderate_config(1);
        let discrepancy = |n: usize| -> f64 {
            let (xs, labels) = draw_samples(&cfg, n, 5).unwrap();
            let probs: Vec<ProbVector> = xs
                .iter()
                .map(|x| conditional_probs(x, &cfg).unwrap())
                .collect();
            let mut total = 0.0;
            for bin in 0..cfg.k {
                let members: Vec<usize> = (0..n)
                    .filter(|&i| probs[i].argmax() == bin)
                    .collect();
                if members.is_empty() {
                    continue;
                }
                let m = members.len() as f64;
                for class in 0..cfg.k {
                    let mean_true = members
                        .iter()
                        .map(|&i| probs[i].as_slice()[class])
                        .sum::<f64>()
                        / m;
                    let freq = members.iter().filter(|&&i| labels[i] == class).count() as f64 / m;
                    total += (m / n as f64) * (freq - mean_true).powi(2) / mean_true.max(1e-3);
                }
            }
            total
        };
        let coarse = discrepancy(1_000);
        let fine = discrepancy(100_000);
        assert!(
            fine < coarse,
            "discrepancy should shrink: {coarse} -> {fine}"
        );
        assert!(fine < 1e-3, "discrepancy at n=1e5 is {fine}");
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let cfg = DgpConfig::example(2, 3).unwrap();
        let (features, labels) = draw_samples(&cfg, 200, 7).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &features, &labels).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_1,x_2,x_3,scenario_index\n"));
        let (f2, l2) = read_csv(&buf[..]).unwrap();
        assert_eq!(features, f2);
        assert_eq!(labels, l2);
    }

    #[test]
    fn csv_rejects_malformed_input() {
        assert!(read_csv(&b""[..]).is_err());
        assert!(read_csv(&b"x_1,x_2,label\n1,2,0\n"[..]).is_err());
        assert!(read_csv(&b"x_2,scenario_index\n1,0\n"[..]).is_err());
        assert!(read_csv(&b"x_1,scenario_index\noops,0\n"[..]).is_err());
        assert!(read_csv(&b"x_1,scenario_index\n1.0,0,9\n"[..]).is_err());
        assert!(read_csv(&b"x_1,scenario_index\n1.0,-2\n"[..]).is_err());
        assert!(read_csv(&b"x_1,scenario_index\nnan,0\n"[..]).is_err());

        let (f, l) = read_csv(&b"x_1,scenario_index\n1.5,2\n-0.25,0\n"[..]).unwrap();
        assert_eq!(f, vec![vec![1.5], vec![-0.25]]);
        assert_eq!(l, vec![2, 0]);

        assert!(write_csv(&mut Vec::new(), &[vec![1.0]], &[0, 1]).is_err());
        assert!(write_csv(&mut Vec::new(), &[], &[]).is_err());
        assert!(write_csv(&mut Vec::new(), &[vec![1.0], vec![2.0, 3.0]], &[0, 1]).is_err());
    }
}
