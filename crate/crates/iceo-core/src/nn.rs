//! Small dense network and optimizer shared by the oracle surrogate and the
//! softmax hypothesis: one hidden tanh layer with explicit backprop, and Adam
//! over a flat parameter vector. No autodiff framework; the Jacobians these
//! nets expose are part of the library contract and are tested against finite
//! differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Fully connected `input -> hidden (tanh) -> output (linear)` network with
/// parameters stored flat as [w1 | b1 | w2 | b2], w1 and w2 row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense1 {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    params: Vec<f64>,
}

impl Dense1 {
    /// Weights drawn from N(0, scale^2) with the given seed; biases zero.
    pub fn new(input: usize, hidden: usize, output: usize, scale: f64, seed: u64) -> Self {
        assert!(input > 0 && hidden > 0 && output > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).expect("positive scale");
        let n = Self::param_count(input, hidden, output);
        let mut params = vec![0.0; n];
        let w1_len = hidden * input;
        let w2_off = w1_len + hidden;
        for p in &mut params[..w1_len] {
            *p = normal.sample(&mut rng);
        }
        for p in &mut params[w2_off..w2_off + output * hidden] {
            *p = normal.sample(&mut rng);
        }
        Dense1 {
            input,
            hidden,
            output,
            params,
        }
    }

    pub fn param_count(input: usize, hidden: usize, output: usize) -> usize {
        hidden * input + hidden + output * hidden + output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn output_dim(&self) -> usize {
        self.output
    }

    #[inline]
    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let w1_len = self.hidden * self.input;
        let b1_end = w1_len + self.hidden;
        let w2_end = b1_end + self.output * self.hidden;
        (
            &self.params[..w1_len],
            &self.params[w1_len..b1_end],
            &self.params[b1_end..w2_end],
            &self.params[w2_end..],
        )
    }

    /// Hidden activations tanh(W1 x + b1).
    fn hidden_act(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input);
        let (w1, b1, _, _) = self.split();
        let mut z = vec![0.0; self.hidden];
        for h in 0..self.hidden {
            let row = &w1[h * self.input..(h + 1) * self.input];
            let a: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b1[h];
            z[h] = a.tanh();
        }
        z
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let z = self.hidden_act(x);
        let (_, _, w2, b2) = self.split();
        let mut out = vec![0.0; self.output];
        for (o, out_o) in out.iter_mut().enumerate() {
            let row = &w2[o * self.hidden..(o + 1) * self.hidden];
            *out_o = row.iter().zip(&z).map(|(w, zh)| w * zh).sum::<f64>() + b2[o];
        }
        out
    }

    /// Jacobian d out / d x, shape output x input: W2 diag(1 - z^2) W1.
    pub fn input_jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let z = self.hidden_act(x);
        let (w1, _, w2, _) = self.split();
        let mut jac = vec![vec![0.0; self.input]; self.output];
        for (o, row) in jac.iter_mut().enumerate() {
            for h in 0..self.hidden {
                let s = w2[o * self.hidden + h] * (1.0 - z[h] * z[h]);
                if s == 0.0 {
                    continue;
                }
                let w1row = &w1[h * self.input..(h + 1) * self.input];
                for (ri, w) in row.iter_mut().zip(w1row) {
                    *ri += s * w;
                }
            }
        }
        jac
    }

    /// Reverse-mode step: accumulate d(grad_out . out)/d params into
    /// `param_grad` (same layout as the flat parameters) and return the
    /// gradient with respect to the input.
    pub fn backprop(&self, x: &[f64], grad_out: &[f64], param_grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad_out.len(), self.output);
        debug_assert_eq!(param_grad.len(), self.params.len());
        let z = self.hidden_act(x);
        let (w1, _, w2, _) = self.split();
        let w1_len = self.hidden * self.input;
        let b1_end = w1_len + self.hidden;
        let w2_end = b1_end + self.output * self.hidden;

        // Output layer: dL/dW2[o][h] = g_o z_h, dL/db2[o] = g_o.
        let mut dz = vec![0.0; self.hidden];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let base = b1_end + o * self.hidden;
            for h in 0..self.hidden {
                param_grad[base + h] += g * z[h];
                dz[h] += g * w2[o * self.hidden + h];
            }
            param_grad[w2_end + o] += g;
        }
        // Through tanh: da_h = (1 - z_h^2) dz_h.
        let mut dx = vec![0.0; self.input];
        for h in 0..self.hidden {
            let da = (1.0 - z[h] * z[h]) * dz[h];
            if da == 0.0 {
                continue;
            }
            let base = h * self.input;
            for i in 0..self.input {
                param_grad[base + i] += da * x[i];
                dx[i] += da * w1[base + i];
            }
            param_grad[w1_len + h] += da;
        }
        dx
    }
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(dim: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// One update in place. Gradient length must match the tracked dimension.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}
