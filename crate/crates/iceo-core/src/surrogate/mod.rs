//! Differentiable surrogates for the regularized oracle.
//!
//! The exact oracle p -> w_rho(p) is continuous but not differentiable, so
//! end-to-end training composes the hypothesis with a smooth approximation
//! fitted offline from oracle evaluations. Three families are provided:
//! Bernstein lattice polynomials ([`bernstein`]), polynomial-kernel ridge
//! regression ([`krr`]), and a small tanh network ([`mlp`]). All expose the
//! same evaluate/Jacobian surface through [`Surrogate`].

pub mod bernstein;
pub mod krr;
pub mod mlp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::oracle::{solve_regularized, OracleConfig};
use crate::problems::ProblemInstance;
use crate::simplex::{enumerate_grid, sample_simplex_uniform, ProbVector};

pub use bernstein::BernsteinModel;
pub use krr::KernelModel;
pub use mlp::{MlpFitConfig, MlpSurrogate};

/// Where surrogate training inputs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurrogateSampling {
    /// The full order-`s` simplex lattice (required by the Bernstein fit).
    Grid { order: usize },
    /// `count` uniform draws from the simplex.
    Uniform { count: usize },
}

/// Oracle training pairs (p_i, w_i), optionally with additive Gaussian noise
/// on the decisions.
#[derive(Debug, Clone)]
pub struct SurrogateSamples {
    pub probs: Vec<ProbVector>,
    pub decisions: Vec<Vec<f64>>,
    pub sampling: SurrogateSampling,
    pub rho: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Evaluate the oracle on a sample plan, warm-starting each solve from the
/// previous solution (grid neighbors are close, so this cuts iterations).
/// With `noise_sigma > 0`, decisions become w_rho(p) + sigma * eps,
/// eps ~ N(0, I); noised decisions may leave the feasible region and are
/// stored raw.
pub fn generate_surrogate_samples(
    prob: &ProblemInstance,
    rho: f64,
    sampling: SurrogateSampling,
    noise_sigma: f64,
    seed: u64,
    cfg: &OracleConfig,
) -> Result<SurrogateSamples> {
    if noise_sigma < 0.0 || !noise_sigma.is_finite() {
        return Err(Error::domain("noise sigma must be finite and >= 0"));
    }
    let k = prob.num_scenarios();
    let probs: Vec<ProbVector> = match sampling {
        SurrogateSampling::Grid { order } => enumerate_grid(k, order)?.points().collect(),
        SurrogateSampling::Uniform { count } => {
            if count == 0 {
                return Err(Error::domain("need at least one surrogate sample"));
            }
            sample_simplex_uniform(k, count, seed)?
        }
    };
    let mut decisions = Vec::with_capacity(probs.len());
    let mut warm: Option<Vec<f64>> = None;
    for p in &probs {
        let sol = solve_regularized(prob, p, rho, cfg, warm.as_deref())?;
        warm = Some(sol.w.clone());
        decisions.push(sol.w);
    }
    if noise_sigma > 0.0 {
        // Separate stream from the simplex sampler so sigma = 0 and sigma > 0
        // runs share the same probs for a given seed.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        for w in &mut decisions {
            for x in w.iter_mut() {
                let eps: f64 = StandardNormal.sample(&mut rng);
                *x += noise_sigma * eps;
            }
        }
    }
    Ok(SurrogateSamples {
        probs,
        decisions,
        sampling,
        rho,
        noise_sigma,
        seed,
    })
}

impl SurrogateSamples {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Scenario count K of the sampled distributions.
    pub fn k(&self) -> usize {
        self.probs.first().map_or(0, |p| p.len())
    }

    /// Decision dimension d of the sampled oracle outputs.
    pub fn decision_dim(&self) -> usize {
        self.decisions.first().map_or(0, |w| w.len())
    }
}

/// A fitted differentiable oracle approximation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Surrogate {
    Bernstein(BernsteinModel),
    Kernel(KernelModel),
    Mlp(MlpSurrogate),
}

impl Surrogate {
    pub fn kind(&self) -> &'static str {
        match self {
            Surrogate::Bernstein(_) => "bernstein",
            Surrogate::Kernel(_) => "kernel",
            Surrogate::Mlp(_) => "mlp",
        }
    }

    /// Input dimension K.
    pub fn k(&self) -> usize {
        match self {
            Surrogate::Bernstein(m) => m.k(),
            Surrogate::Kernel(m) => m.k(),
            Surrogate::Mlp(m) => m.k(),
        }
    }

    /// Output dimension d.
    pub fn decision_dim(&self) -> usize {
        match self {
            Surrogate::Bernstein(m) => m.decision_dim(),
            Surrogate::Kernel(m) => m.decision_dim(),
            Surrogate::Mlp(m) => m.decision_dim(),
        }
    }

    /// Approximate decision w~(p). Outputs are unconstrained; project before
    /// costing them as deployed decisions.
    pub fn eval(&self, p: &ProbVector) -> Result<Vec<f64>> {
        match self {
            Surrogate::Bernstein(m) => m.eval(p),
            Surrogate::Kernel(m) => m.eval(p),
            Surrogate::Mlp(m) => m.eval(p),
        }
    }

    /// Jacobian d w~ / d p, shape d x K.
    pub fn jacobian(&self, p: &ProbVector) -> Result<Vec<Vec<f64>>> {
        match self {
            Surrogate::Bernstein(m) => m.jacobian(p),
            Surrogate::Kernel(m) => m.jacobian(p),
            Surrogate::Mlp(m) => m.jacobian(p),
        }
    }
}

/// Container format version accepted by [`ModelContainer::load_json`].
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Versioned on-disk wrapper so fitted surrogates can be reused across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelContainer {
    pub format_version: u32,
    pub k: usize,
    pub decision_dim: usize,
    pub rho: f64,
    pub seed: u64,
    pub model: Surrogate,
}

impl ModelContainer {
    pub fn new(model: Surrogate, rho: f64, seed: u64) -> Self {
        ModelContainer {
            format_version: MODEL_FORMAT_VERSION,
            k: model.k(),
            decision_dim: model.decision_dim(),
            rho,
            seed,
            model,
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Parse(format!("serialize model: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let container: ModelContainer = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("parse model container: {e}")))?;
        if container.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                container.format_version
            )));
        }
        if container.model.k() != container.k
            || container.model.decision_dim() != container.decision_dim
        {
            return Err(Error::Parse(
                "container metadata disagrees with model dimensions".into(),
            ));
        }
        Ok(container)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> OracleConfig {
        OracleConfig {
            max_iters: 20_000,
            tol: 1e-8,
        }
    }

    #[test]
    fn grid_sampling_covers_the_lattice() {
        let prob = ProblemInstance::example_newsvendor();
        let s = generate_surrogate_samples(
            &prob,
            0.01,
            SurrogateSampling::Grid { order: 3 },
            0.0,
            1,
            &quick_cfg(),
        )
        .unwrap();
        assert_eq!(s.len(), 20); // C(6,3)
        assert_eq!(s.k(), 4);
        assert_eq!(s.decision_dim(), 2);
        // Lattice point (0,0,0,1) is the interior optimum (4, 43).
        let idx = s
            .probs
            .iter()
            .position(|p| p.as_slice() == [0.0, 0.0, 0.0, 1.0])
            .unwrap();
        assert!((s.decisions[idx][0] - 4.0).abs() < 0.3);
        assert!((s.decisions[idx][1] - 43.0).abs() < 0.3);
    }

    #[test]
    fn uniform_sampling_is_seeded_and_noise_reuses_probs() {
        let prob = ProblemInstance::example_newsvendor();
        let clean = generate_surrogate_samples(
            &prob,
            0.01,
            SurrogateSampling::Uniform { count: 8 },
            0.0,
            7,
            &quick_cfg(),
        )
        .unwrap();
        let noisy = generate_surrogate_samples(
            &prob,
            0.01,
            SurrogateSampling::Uniform { count: 8 },
            0.5,
            7,
            &quick_cfg(),
        )
        .unwrap();
        assert_eq!(clean.probs, noisy.probs);
        assert_ne!(clean.decisions, noisy.decisions);
        let max_shift = clean
            .decisions
            .iter()
            .flatten()
            .zip(noisy.decisions.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_shift > 0.01 && max_shift < 5.0, "shift {max_shift}");
    }

    #[test]
    fn rejects_bad_sampling_args() {
        let prob = ProblemInstance::example_newsvendor();
        assert!(generate_surrogate_samples(
            &prob,
            0.01,
            SurrogateSampling::Uniform { count: 0 },
            0.0,
            1,
            &quick_cfg()
        )
        .is_err());
        assert!(generate_surrogate_samples(
            &prob,
            0.01,
            SurrogateSampling::Uniform { count: 4 },
            -1.0,
            1,
            &quick_cfg()
        )
        .is_err());
    }

    #[test]
    fn container_roundtrips_and_rejects_other_versions() {
        let prob = ProblemInstance::example_newsvendor();
        let samples = generate_surrogate_samples(
            &prob,
            0.01,
            SurrogateSampling::Grid { order: 2 },
            0.0,
            1,
            &quick_cfg(),
        )
        .unwrap();
        let model = Surrogate::Bernstein(bernstein::BernsteinModel::fit(&samples).unwrap());
        let container = ModelContainer::new(model, 0.01, 1);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        container.save_json(&path).unwrap();
        let back = ModelContainer::load_json(&path).unwrap();
        assert_eq!(back.k, 4);
        assert_eq!(back.decision_dim, 2);
        let p = ProbVector::uniform(4);
        assert_eq!(
            back.model.eval(&p).unwrap(),
            container.model.eval(&p).unwrap()
        );

        let mut tampered = serde_json::to_value(&container).unwrap();
        tampered["format_version"] = serde_json::json!(MODEL_FORMAT_VERSION + 1);
        let bad_path = dir.path().join("bad.json");
        std::fs::write(&bad_path, tampered.to_string()).unwrap();
        assert!(ModelContainer::load_json(&bad_path).is_err());
    }
}
