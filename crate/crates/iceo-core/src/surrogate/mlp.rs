//! Small feedforward surrogate trained with a mean absolute percentage loss,
//! |w~_j - w_j| / max(|w_j|, floor), which keeps coordinates with small
//! optimal values from being drowned out by large ones.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Adam, Dense1};
use crate::simplex::ProbVector;

use super::SurrogateSamples;

/// Relative-error denominator floor,
/// so targets near zero do not blow up the loss.
pub const MAPE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpFitConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlpFitConfig {
    fn default() -> Self {
        MlpFitConfig {
            hidden: 64,
            epochs: 200,
            learning_rate: 1e-2,
            batch_size: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpSurrogate {
    net: Dense1,
    k: usize,
    decision_dim: usize,
    /// Mean training loss per epoch, recorded during fitting.
    pub loss_trace: Vec<f64>,
}

impl MlpSurrogate {
    pub fn fit(samples: &SurrogateSamples, cfg: &MlpFitConfig) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("mlp fit needs at least one sample"));
        }
        if cfg.hidden == 0 || cfg.epochs == 0 || cfg.batch_size == 0 {
            return Err(Error::domain(
                "mlp config needs hidden, epochs, batch_size >= 1",
            ));
        }
        if !(cfg.learning_rate > 0.0) {
            return Err(Error::domain("mlp learning rate must be > 0"));
        }
        let k = samples.k();
        let d = samples.decision_dim();
        let mut net = Dense1::new(k, cfg.hidden, d, 0.1, cfg.seed);
        let mut opt = Adam::new(net.num_params(), cfg.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);

        let m = samples.len();
        let mut order: Vec<usize> = (0..m).collect();
        let mut param_grad = vec![0.0; net.num_params()];
        let mut loss_trace = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                param_grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / (batch.len() * d) as f64;
                for &i in batch {
                    let x = samples.probs[i].as_slice();
                    let target = &samples.decisions[i];
                    let pred = net.forward(x);
                    let mut grad_out = vec![0.0; d];
                    for j in 0..d {
                        let denom = target[j].abs().max(MAPE_FLOOR);
                        let diff = pred[j] - target[j];
                        epoch_loss += diff.abs() / denom / (m * d) as f64;
                        grad_out[j] = diff.signum() / denom * scale;
                    }
                    net.backprop(x, &grad_out, &mut param_grad);
                }
                opt.step(net.params_mut(), &param_grad);
            }
            loss_trace.push(epoch_loss);
        }
        Ok(MlpSurrogate {
            net,
            k,
            decision_dim: d,
            loss_trace,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn decision_dim(&self) -> usize {
        self.decision_dim
    }

    fn check_input(&self, p: &ProbVector) -> Result<()> {
        if p.len() != self.k {
            return Err(Error::dim(format!(
                "input has {} entries, model has K = {}",
                p.len(),
                self.k
            )));
        }
        Ok(())
    }

    pub fn eval(&self, p: &ProbVector) -> Result<Vec<f64>> {
        self.check_input(p)?;
        Ok(self.net.forward(p.as_slice()))
    }

    pub fn jacobian(&self, p: &ProbVector) -> Result<Vec<Vec<f64>>> {
        self.check_input(p)?;
        Ok(self.net.input_jacobian(p.as_slice()))
    }
}
