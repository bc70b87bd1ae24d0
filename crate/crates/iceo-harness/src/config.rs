//! Experiment configuration: one TOML file drives a whole sweep.
//!
//! Every constant of the benchmark study ships as a default, so an empty
//! config file (or none at all) reproduces the reference experiment. A
//! partial file overrides only the keys it names; unknown keys are
//! rejected rather than silently ignored.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use iceo_core::datagen::DgpConfig;
use iceo_core::error::{Error, Result};
use iceo_core::oracle::OracleConfig;
use iceo_core::problems::ProblemInstance;
use iceo_core::simplex::ScenarioSet;
use iceo_core::surrogate::{
    generate_surrogate_samples, KernelModel, MlpFitConfig, MlpSurrogate, Surrogate,
    SurrogateSampling,
};

/// A benchmarked decision policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// End-to-end trained hypothesis deployed through the oracle.
    Iceo,
    /// Feature-blind empirical frequencies.
    Saa,
    /// Two-step predict-then-optimize (cross-entropy fit).
    Pto,
    /// k-nearest-neighbor scenario reweighting.
    PresKnn,
    /// Gaussian-kernel scenario reweighting.
    PresKernel,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Iceo => "iceo",
            Method::Saa => "saa",
            Method::Pto => "pto",
            Method::PresKnn => "pres-knn",
            Method::PresKernel => "pres-kernel",
        }
    }
}

/// Multi-item newsvendor instance parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub holding: Vec<f64>,
    pub stockout: Vec<f64>,
    pub budget: f64,
    pub scenarios: Vec<Vec<f64>>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection {
            holding: vec![1.0, 1.3],
            stockout: vec![9.0, 8.0],
            budget: 50.0,
            scenarios: vec![
                vec![33.0, 15.0],
                vec![71.0, 4.0],
                vec![17.0, 47.0],
                vec![4.0, 43.0],
            ],
        }
    }
}

impl ProblemSection {
    pub fn build(&self) -> Result<ProblemInstance> {
        let scenarios = ScenarioSet::new(self.scenarios.clone())?;
        ProblemInstance::newsvendor(
            scenarios,
            self.holding.clone(),
            self.stockout.clone(),
            self.budget,
        )
    }
}

/// Ground-truth data generator parameters. The class weights themselves are
/// drawn per simulation; only their shape and scale live here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgpSection {
    pub input_dim: usize,
    /// Feature variance (features are centered Gaussians).
    pub variance: f64,
    /// Logit power for the benchmark sweep; 1 keeps the truth inside the
    /// softmax-linear class.
    pub degree: u32,
}

impl Default for DgpSection {
    fn default() -> Self {
        DgpSection { input_dim: 3, variance: 5.0, degree: 1 }
    }
}

impl DgpSection {
    /// Instantiate the generator for one simulation's ground truth.
    pub fn build(&self, k: usize, degree: u32, weight_seed: u64) -> Result<DgpConfig> {
        DgpConfig::seeded(self.input_dim, k, self.variance, degree, weight_seed)
    }
}

/// Which oracle approximation the training loop differentiates through.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum SurrogateSection {
    /// One-hidden-layer network fitted with relative error loss.
    Mlp {
        #[serde(default = "default_mlp_samples")]
        samples: usize,
        #[serde(default = "default_mlp_hidden")]
        hidden: usize,
        #[serde(default = "default_mlp_epochs")]
        epochs: usize,
        #[serde(default = "default_mlp_lr")]
        learning_rate: f64,
        #[serde(default = "default_mlp_batch")]
        batch_size: usize,
        #[serde(default)]
        noise_sigma: f64,
    },
    /// Kernel ridge regression with a polynomial kernel.
    Krr {
        #[serde(default = "default_krr_samples")]
        samples: usize,
        #[serde(default = "default_krr_offset")]
        offset: f64,
        #[serde(default = "default_krr_degree")]
        degree: u32,
        #[serde(default = "default_krr_lambda")]
        lambda: f64,
        #[serde(default)]
        noise_sigma: f64,
    },
    /// Bernstein polynomial interpolation on the simplex lattice.
    Bernstein {
        #[serde(default = "default_bernstein_order")]
        order: usize,
        #[serde(default)]
        noise_sigma: f64,
    },
}

fn default_mlp_samples() -> usize {
    600
}
fn default_mlp_hidden() -> usize {
    64
}
fn default_mlp_epochs() -> usize {
    300
}
fn default_mlp_lr() -> f64 {
    1e-2
}
fn default_mlp_batch() -> usize {
    64
}
fn default_krr_samples() -> usize {
    500
}
fn default_krr_offset() -> f64 {
    1.0
}
fn default_krr_degree() -> u32 {
    3
}
fn default_krr_lambda() -> f64 {
    1e-6
}
fn default_bernstein_order() -> usize {
    8
}

impl Default for SurrogateSection {
    fn default() -> Self {
        SurrogateSection::Mlp {
            samples: default_mlp_samples(),
            hidden: default_mlp_hidden(),
            epochs: default_mlp_epochs(),
            learning_rate: default_mlp_lr(),
            batch_size: default_mlp_batch(),
            noise_sigma: 0.0,
        }
    }
}

impl SurrogateSection {
    /// Solve the oracle on the sample plan and fit the configured model.
    pub fn fit(
        &self,
        prob: &ProblemInstance,
        rho: f64,
        oracle: &OracleConfig,
        sample_seed: u64,
        fit_seed: u64,
    ) -> Result<Surrogate> {
        match *self {
            SurrogateSection::Mlp {
                samples,
                hidden,
                epochs,
                learning_rate,
                batch_size,
                noise_sigma,
            } => {
                let plan = generate_surrogate_samples(
                    prob,
                    rho,
                    SurrogateSampling::Uniform { count: samples },
                    noise_sigma,
                    sample_seed,
                    oracle,
                )?;
                let cfg = MlpFitConfig {
                    hidden,
                    epochs,
                    learning_rate,
                    batch_size,
                    seed: fit_seed,
                };
                Ok(Surrogate::Mlp(MlpSurrogate::fit(&plan, &cfg)?))
            }
            SurrogateSection::Krr { samples, offset, degree, lambda, noise_sigma } => {
                let plan = generate_surrogate_samples(
                    prob,
                    rho,
                    SurrogateSampling::Uniform { count: samples },
                    noise_sigma,
                    sample_seed,
                    oracle,
                )?;
                Ok(Surrogate::Kernel(KernelModel::fit(&plan, offset, degree, lambda)?))
            }
            SurrogateSection::Bernstein { order, noise_sigma } => {
                let plan = generate_surrogate_samples(
                    prob,
                    rho,
                    SurrogateSampling::Grid { order },
                    noise_sigma,
                    sample_seed,
                    oracle,
                )?;
                Ok(Surrogate::Bernstein(
                    iceo_core::surrogate::BernsteinModel::fit(&plan)?,
                ))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SurrogateSection::Mlp {
                samples,
                hidden,
                epochs,
                learning_rate,
                batch_size,
                noise_sigma,
            } => {
                if samples == 0 || hidden == 0 || epochs == 0 || batch_size == 0 {
                    return Err(Error::domain("mlp surrogate sizes must be >= 1"));
                }
                if !(learning_rate > 0.0) || !learning_rate.is_finite() {
                    return Err(Error::domain("mlp surrogate learning rate must be > 0"));
                }
                check_noise(noise_sigma)
            }
            SurrogateSection::Krr { samples, offset, degree, lambda, noise_sigma } => {
                if samples == 0 {
                    return Err(Error::domain("krr surrogate needs samples >= 1"));
                }
                if degree == 0 {
                    return Err(Error::domain("krr kernel degree must be >= 1"));
                }
                if !(offset >= 0.0) || !offset.is_finite() {
                    return Err(Error::domain("krr kernel offset must be >= 0"));
                }
                if !(lambda > 0.0) || !lambda.is_finite() {
                    return Err(Error::domain("krr ridge lambda must be > 0"));
                }
                check_noise(noise_sigma)
            }
            SurrogateSection::Bernstein { order, noise_sigma } => {
                if order == 0 {
                    return Err(Error::domain("bernstein order must be >= 1"));
                }
                check_noise(noise_sigma)
            }
        }
    }
}

fn check_noise(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::domain("noise sigma must be finite and >= 0"));
    }
    Ok(())
}

/// Which conditional-distribution class gets trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HypothesisKind {
    Linear,
    Mlp,
}

/// Hypothesis-training knobs shared by the end-to-end and two-step methods.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub hypothesis: HypothesisKind,
    /// Hidden width when the hypothesis is an MLP.
    pub hidden: usize,
    pub init_scale: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Candidate Adam step sizes; the best validation score wins.
    pub learning_rates: Vec<f64>,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            hypothesis: HypothesisKind::Linear,
            hidden: 32,
            init_scale: 0.1,
            epochs: 150,
            batch_size: 32,
            patience: 25,
            learning_rates: vec![1e-3, 1e-2],
        }
    }
}

/// Oracle solver settings used everywhere in a sweep: surrogate sampling,
/// hyperparameter tuning, and test-time deployment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        // 10k subgradient steps lands within ~0.1% of the budget scale on
        // the reference instance while keeping full sweeps under the wall
        // clock of a coffee break.
        OracleSection { max_iters: 10_000, tol: 1e-8 }
    }
}

impl OracleSection {
    pub fn build(&self) -> OracleConfig {
        OracleConfig { max_iters: self.max_iters, tol: self.tol }
    }
}

/// Hyperparameter grids for the prescriptive baselines.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningSection {
    pub knn_neighbors: Vec<usize>,
    /// Bandwidths as multiples of the median pairwise train distance.
    pub bandwidth_multipliers: Vec<f64>,
}

impl Default for TuningSection {
    fn default() -> Self {
        TuningSection {
            knn_neighbors: vec![5, 10, 20, 50],
            bandwidth_multipliers: vec![0.5, 1.0, 2.0, 4.0],
        }
    }
}

/// Misspecification study: logit powers to sweep at one sample size.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MisspecSection {
    pub degrees: Vec<u32>,
    pub sample_size: usize,
}

impl Default for MisspecSection {
    fn default() -> Self {
        MisspecSection { degrees: vec![1, 2, 3, 4], sample_size: 500 }
    }
}

/// Everything a sweep needs; the default value is the reference benchmark.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Root seed every stream derives from.
    pub seed: u64,
    /// Output directory, joined under the output root.
    pub output_dir: String,
    pub sample_sizes: Vec<usize>,
    pub simulations: usize,
    pub test_size: usize,
    pub rho: f64,
    /// Share of each training set held out for validation.
    pub validation_fraction: f64,
    pub methods: Vec<Method>,
    /// Also deploy the oracle on the true conditionals of each test point,
    /// recording a per-simulation baseline row (method "truth", n = 0).
    /// Off by default so record counts are exactly methods x sizes x sims.
    pub record_truth: bool,
    /// Replaces the derived test-data stream; leave unset outside of
    /// seed-isolation diagnostics.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_seed: Option<u64>,
    pub problem: ProblemSection,
    pub dgp: DgpSection,
    pub surrogate: SurrogateSection,
    pub training: TrainingSection,
    pub oracle: OracleSection,
    pub tuning: TuningSection,
    pub misspec: MisspecSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: "iceo-out".to_string(),
            sample_sizes: vec![100, 300, 500, 700],
            simulations: 25,
            test_size: 1000,
            rho: 0.01,
            validation_fraction: 0.2,
            methods: vec![
                Method::Iceo,
                Method::Saa,
                Method::Pto,
                Method::PresKnn,
                Method::PresKernel,
            ],
            record_truth: false,
            test_seed: None,
            problem: ProblemSection::default(),
            dgp: DgpSection::default(),
            surrogate: SurrogateSection::default(),
            training: TrainingSection::default(),
            oracle: OracleSection::default(),
            tuning: TuningSection::default(),
            misspec: MisspecSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parse a TOML file and validate it. A missing key falls back to the
    /// reference default; an unknown key is an error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty() {
            return Err(Error::domain("sample_sizes must not be empty"));
        }
        for &n in &self.sample_sizes {
            if n < 5 {
                return Err(Error::domain(format!(
                    "sample size {n} too small to split into train and validation"
                )));
            }
        }
        if self.simulations == 0 {
            return Err(Error::domain("simulations must be >= 1"));
        }
        if self.test_size == 0 {
            return Err(Error::domain("test_size must be >= 1"));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::domain("rho must be finite and > 0"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::domain("validation_fraction must lie in (0, 1)"));
        }
        if self.methods.is_empty() {
            return Err(Error::domain("methods must not be empty"));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::domain(format!("method {} listed twice", m.name())));
            }
        }
        if self.output_dir.is_empty() {
            return Err(Error::domain("output_dir must not be empty"));
        }
        let k = self.problem.scenarios.len();
        if k < 2 {
            return Err(Error::domain("need at least two scenarios"));
        }
        // Shape errors surface with full context at build time.
        self.problem.build()?;
        if self.dgp.input_dim == 0 {
            return Err(Error::domain("dgp input_dim must be >= 1"));
        }
        if !(self.dgp.variance > 0.0) || !self.dgp.variance.is_finite() {
            return Err(Error::domain("dgp variance must be finite and > 0"));
        }
        if self.dgp.degree == 0 {
            return Err(Error::domain("dgp degree must be >= 1"));
        }
        self.surrogate.validate()?;
        let t = &self.training;
        if t.hidden == 0 || t.epochs == 0 || t.batch_size == 0 {
            return Err(Error::domain("training sizes must be >= 1"));
        }
        if !(t.init_scale > 0.0) || !t.init_scale.is_finite() {
            return Err(Error::domain("training init_scale must be > 0"));
        }
        if t.learning_rates.is_empty() {
            return Err(Error::domain("training learning_rates must not be empty"));
        }
        for &lr in &t.learning_rates {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(Error::domain("learning rates must be finite and > 0"));
            }
        }
        if self.oracle.max_iters == 0 {
            return Err(Error::domain("oracle max_iters must be >= 1"));
        }
        if !(self.oracle.tol >= 0.0) || !self.oracle.tol.is_finite() {
            return Err(Error::domain("oracle tol must be finite and >= 0"));
        }
        if self.tuning.knn_neighbors.is_empty() {
            return Err(Error::domain("tuning knn_neighbors must not be empty"));
        }
        if self.tuning.bandwidth_multipliers.is_empty() {
            return Err(Error::domain("tuning bandwidth_multipliers must not be empty"));
        }
        for &m in &self.tuning.bandwidth_multipliers {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::domain("bandwidth multipliers must be > 0"));
            }
        }
        if self.misspec.degrees.is_empty() {
            return Err(Error::domain("misspec degrees must not be empty"));
        }
        if self.misspec.degrees.iter().any(|&d| d == 0) {
            return Err(Error::domain("misspec degrees must be >= 1"));
        }
        if self.misspec.sample_size < 5 {
            return Err(Error::domain("misspec sample_size too small to split"));
        }
        Ok(())
    }

    /// Train/validation sizes for a sample of `n` points.
    pub fn split_sizes(&self, n: usize) -> (usize, usize) {
        let val = ((n as f64) * self.validation_fraction).round() as usize;
        let val = val.clamp(1, n - 1);
        (n - val, val)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_benchmark() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.sample_sizes, vec![100, 300, 500, 700]);
        assert_eq!(cfg.simulations, 25);
        assert_eq!(cfg.test_size, 1000);
        assert_eq!(cfg.rho, 0.01);
        assert_eq!(cfg.methods.len(), 5);
        assert_eq!(cfg.problem.budget, 50.0);
        assert_eq!(cfg.problem.holding, vec![1.0, 1.3]);
        assert_eq!(cfg.problem.stockout, vec![9.0, 8.0]);
        assert_eq!(cfg.problem.scenarios.len(), 4);
        assert_eq!(cfg.dgp.input_dim, 3);
        assert_eq!(cfg.dgp.variance, 5.0);
        assert_eq!(cfg.dgp.degree, 1);
        assert_eq!(cfg.misspec.degrees, vec![1, 2, 3, 4]);
        assert_eq!(cfg.misspec.sample_size, 500);
        cfg.validate().unwrap();

        // The built instance matches the library's reference instance.
        let built = cfg.problem.build().unwrap();
        let reference = ProblemInstance::example_newsvendor();
        let w = [12.0, 7.5];
        for k in 0..4 {
            assert_eq!(built.cost(&w, k), reference.cost(&w, k));
        }
    }

    #[test]
    fn empty_toml_is_the_default() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg.simulations, ExperimentConfig::default().simulations);
    }

    #[test]
    fn partial_toml_overrides_only_named_keys() {
        let cfg = ExperimentConfig::from_toml(
            "simulations = 3\nsample_sizes = [40]\n\n[training]\nepochs = 9\n",
        )
        .unwrap();
        assert_eq!(cfg.simulations, 3);
        assert_eq!(cfg.sample_sizes, vec![40]);
        assert_eq!(cfg.training.epochs, 9);
        // Untouched sections keep their defaults.
        assert_eq!(cfg.training.batch_size, 32);
        assert_eq!(cfg.rho, 0.01);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("simulatons = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[training]\nepochz = 9\n").is_err());
    }

    #[test]
    fn method_names_roundtrip() {
        let cfg =
            ExperimentConfig::from_toml("methods = [\"iceo\", \"pres-knn\"]\n").unwrap();
        assert_eq!(cfg.methods, vec![Method::Iceo, Method::PresKnn]);
        assert_eq!(Method::PresKernel.name(), "pres-kernel");
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.rho = 0.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.methods = vec![Method::Saa, Method::Saa];
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.validation_fraction = 1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.sample_sizes = vec![3];
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.problem.holding = vec![1.0];
        assert!(cfg.validate().is_err(), "holding length must match item count");
    }

    #[test]
    fn surrogate_kinds_parse() {
        let cfg = ExperimentConfig::from_toml(
            "[surrogate]\nkind = \"krr\"\nsamples = 200\nlambda = 1e-5\n",
        )
        .unwrap();
        match cfg.surrogate {
            SurrogateSection::Krr { samples, lambda, degree, offset, .. } => {
                assert_eq!(samples, 200);
                assert_eq!(lambda, 1e-5);
                assert_eq!(degree, 3);
                assert_eq!(offset, 1.0);
            }
            other => panic!("parsed wrong surrogate: {other:?}"),
        }

        let cfg =
            ExperimentConfig::from_toml("[surrogate]\nkind = \"bernstein\"\norder = 6\n")
                .unwrap();
        match cfg.surrogate {
            SurrogateSection::Bernstein { order, .. } => assert_eq!(order, 6),
            other => panic!("parsed wrong surrogate: {other:?}"),
        }
    }

    #[test]
    fn split_sizes_honor_the_fraction() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.split_sizes(100), (80, 20));
        assert_eq!(cfg.split_sizes(700), (560, 140));
        // Tiny n still leaves both sides nonempty.
        assert_eq!(cfg.split_sizes(5), (4, 1));
    }

    #[test]
    fn config_echo_roundtrips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back.sample_sizes, cfg.sample_sizes);
        assert_eq!(back.methods, cfg.methods);
        assert_eq!(text, back.to_toml().unwrap());
    }
}
