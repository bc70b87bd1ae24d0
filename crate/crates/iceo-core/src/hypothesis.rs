//! Conditional-distribution hypotheses f: R^p -> simplex, built as a softmax
//! over parameterized logits. Two logit classes: linear (Bx + b) and a
//! one-hidden-layer tanh network. Training needs gradients with respect to
//! the parameters, pulled back through the softmax differential
//! diag(f) - f f^T.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Dense1;
use crate::simplex::{softmax, ProbVector};

/// Additive guard inside cross-entropy's log, so a zero predicted
/// probability yields a large finite loss instead of infinity.
pub const CE_LOG_GUARD: f64 = 1e-12;

/// Logits are an affine map: f(x) = softmax(Bx + b).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SoftmaxLinearHypothesis {
    k: usize,
    input_dim: usize,
    /// Flat parameters, B row-major then b.
    params: Vec<f64>,
}

impl SoftmaxLinearHypothesis {
    pub fn new(k: usize, input_dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).expect("scale must be finite and >= 0");
        let params = (0..k * input_dim + k)
            .map(|_| normal.sample(&mut rng))
            .collect();
        SoftmaxLinearHypothesis {
            k,
            input_dim,
            params,
        }
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let (weights, bias) = self.params.split_at(self.k * self.input_dim);
        (0..self.k)
            .map(|r| {
                let row = &weights[r * self.input_dim..(r + 1) * self.input_dim];
                bias[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// Accumulate d(logits . grad_logits)/d params.
    fn backprop_logits(&self, x: &[f64], grad_logits: &[f64], param_grad: &mut [f64]) {
        let (w_grad, b_grad) = param_grad.split_at_mut(self.k * self.input_dim);
        for (r, g) in grad_logits.iter().enumerate() {
            for (j, v) in x.iter().enumerate() {
                w_grad[r * self.input_dim + j] += g * v;
            }
            b_grad[r] += g;
        }
    }
}

/// Logits come from one tanh hidden layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SoftmaxMlpHypothesis {
    net: Dense1,
}

/// Default hidden width for the network logit class.
pub const DEFAULT_HIDDEN_WIDTH: usize = 32;

impl SoftmaxMlpHypothesis {
    pub fn new(k: usize, input_dim: usize, hidden: usize, scale: f64, seed: u64) -> Self {
        let mut net = Dense1::new(input_dim, hidden, k, scale, seed);
        // Dense1 zero-initializes biases; this class draws every parameter
        // from the same Gaussian.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).expect("scale must be finite and >= 0");
        for p in net.params_mut() {
            *p = normal.sample(&mut rng);
        }
        SoftmaxMlpHypothesis { net }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hypothesis {
    Linear(SoftmaxLinearHypothesis),
    Mlp(SoftmaxMlpHypothesis),
}

impl Hypothesis {
    pub fn linear(k: usize, input_dim: usize, scale: f64, seed: u64) -> Self {
        Hypothesis::Linear(SoftmaxLinearHypothesis::new(k, input_dim, scale, seed))
    }

    pub fn mlp(k: usize, input_dim: usize, hidden: usize, scale: f64, seed: u64) -> Self {
        Hypothesis::Mlp(SoftmaxMlpHypothesis::new(k, input_dim, hidden, scale, seed))
    }

    pub fn k(&self) -> usize {
        match self {
            Hypothesis::Linear(h) => h.k,
            Hypothesis::Mlp(h) => h.net.output_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Hypothesis::Linear(h) => h.input_dim,
            Hypothesis::Mlp(h) => h.net.input_dim(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Hypothesis::Linear(h) => h.params.len(),
            Hypothesis::Mlp(h) => h.net.num_params(),
        }
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Hypothesis::Linear(h) => &h.params,
            Hypothesis::Mlp(h) => h.net.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Hypothesis::Linear(h) => &mut h.params,
            Hypothesis::Mlp(h) => h.net.params_mut(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::dim(format!(
                "input has {} entries, hypothesis expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("hypothesis input must be finite"));
        }
        Ok(())
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Hypothesis::Linear(h) => h.logits(x),
            Hypothesis::Mlp(h) => h.net.forward(x),
        }
    }

    /// f(x) = softmax(logits(x)).
    pub fn forward(&self, x: &[f64]) -> Result<ProbVector> {
        self.check_input(x)?;
        ProbVector::new(softmax(&self.logits(x)))
    }

    /// Pull a cotangent on the output probabilities back to the parameters,
    /// accumulating into `param_grad`. The softmax stage maps a cotangent g
    /// to logit-space as f (.) g - (f . g) f.
    pub fn accumulate_param_grad(
        &self,
        x: &[f64],
        grad_probs: &[f64],
        param_grad: &mut [f64],
    ) -> Result<()> {
        self.check_input(x)?;
        if grad_probs.len() != self.k() {
            return Err(Error::dim("cotangent length must equal K".to_string()));
        }
        if param_grad.len() != self.num_params() {
            return Err(Error::dim("param_grad length mismatch".to_string()));
        }
        let f = softmax(&self.logits(x));
        let dot: f64 = f.iter().zip(grad_probs).map(|(a, b)| a * b).sum();
        let grad_logits: Vec<f64> = f
            .iter()
            .zip(grad_probs)
            .map(|(fi, gi)| fi * (gi - dot))
            .collect();
        match self {
            Hypothesis::Linear(h) => h.backprop_logits(x, &grad_logits, param_grad),
            Hypothesis::Mlp(h) => {
                h.net.backprop(x, &grad_logits, param_grad);
            }
        }
        Ok(())
    }

    /// Full Jacobian of f(x) with respect to the parameters, K x num_params.
    /// Row k is the pullback of the unit cotangent e_k.
    pub fn param_jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let k = self.k();
        let mut jac = Vec::with_capacity(k);
        let mut cotangent = vec![0.0; k];
        for r in 0..k {
            cotangent[r] = 1.0;
            let mut row = vec![0.0; self.num_params()];
            self.accumulate_param_grad(x, &cotangent, &mut row)?;
            cotangent[r] = 0.0;
            jac.push(row);
        }
        Ok(jac)
    }

    /// Loss -log(f_k(x) + guard) and its parameter gradient.
    pub fn cross_entropy(&self, x: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        if label >= self.k() {
            return Err(Error::dim(format!(
                "label {label} out of range for K = {}",
                self.k()
            )));
        }
        let f = self.forward(x)?;
        let loss = cross_entropy_loss(&f, label)?;
        let mut grad_probs = vec![0.0; self.k()];
        grad_probs[label] = -1.0 / (f[label] + CE_LOG_GUARD);
        let mut param_grad = vec![0.0; self.num_params()];
        self.accumulate_param_grad(x, &grad_probs, &mut param_grad)?;
        Ok((loss, param_grad))
    }
}

/// -log(f_k + guard) for an observed scenario index.
pub fn cross_entropy_loss(f_x: &ProbVector, label: usize) -> Result<f64> {
    if label >= f_x.len() {
        return Err(Error::dim(format!(
            "label {label} out of range for K = {}",
            f_x.len()
        )));
    }
    Ok(-(f_x[label] + CE_LOG_GUARD).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::max_rel_err;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn central_diff_param_jacobian(h: &Hypothesis, x: &[f64], step: f64) -> Vec<Vec<f64>> {
        let n = h.num_params();
        let k = h.k();
        let mut jac = vec![vec![0.0; n]; k];
        for j in 0..n {
            let mut plus = h.clone();
            plus.params_mut()[j] += step;
            let mut minus = h.clone();
            minus.params_mut()[j] -= step;
            let fp = plus.forward(x).unwrap();
            let fm = minus.forward(x).unwrap();
            for r in 0..k {
                jac[r][j] = (fp[r] - fm[r]) / (2.0 * step);
            }
        }
        jac
    }

    #[test]
    fn zero_parameters_give_uniform() {
        for mut h in [Hypothesis::linear(4, 3, 0.1, 1), Hypothesis::mlp(4, 3, 8, 0.1, 1)] {
            h.params_mut().iter_mut().for_each(|p| *p = 0.0);
            for x in [[0.0, 0.0, 0.0], [1.5, -2.0, 0.3]] {
                let f = h.forward(&x).unwrap();
                for i in 0..4 {
                    assert_abs_diff_eq!(f[i], 0.25, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn bias_shift_leaves_output_unchanged() {
        let h = Hypothesis::linear(3, 2, 0.5, 2);
        let mut shifted = h.clone();
        {
            let n = shifted.num_params();
            let bias = &mut shifted.params_mut()[n - 3..];
            bias.iter_mut().for_each(|b| *b += 7.25);
        }
        let x = [0.4, -1.1];
        let f = h.forward(&x).unwrap();
        let g = shifted.forward(&x).unwrap();
        assert_eq!(f.argmax(), g.argmax());
        for i in 0..3 {
            assert_abs_diff_eq!(f[i], g[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_forward_matches_manual_softmax() {
        let h = Hypothesis::linear(3, 2, 0.7, 3);
        let x = [0.9, -0.4];
        let p = h.params().to_vec();
        let logits = [
            p[0] * x[0] + p[1] * x[1] + p[6],
            p[2] * x[0] + p[3] * x[1] + p[7],
            p[4] * x[0] + p[5] * x[1] + p[8],
        ];
        let manual = softmax(&logits);
        let f = h.forward(&x).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(f[i], manual[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn param_jacobian_matches_finite_differences() {
        let x = [0.3, -0.8];
        for h in [Hypothesis::linear(3, 2, 0.4, 4), Hypothesis::mlp(3, 2, 4, 0.4, 4)] {
            let jac = h.param_jacobian(&x).unwrap();
            let fd = central_diff_param_jacobian(&h, &x, 1e-6);
            for (row, fd_row) in jac.iter().zip(&fd) {
                assert!(max_rel_err(row, fd_row) < 1e-5);
            }
        }
    }

    #[test]
    fn jacobian_columns_sum_to_zero() {
        // Output probabilities sum to one, so every parameter direction is
        // tangent to the simplex.
        let x = [1.2, 0.1];
        for h in [Hypothesis::linear(4, 2, 0.6, 5), Hypothesis::mlp(4, 2, 6, 0.6, 5)] {
            let jac = h.param_jacobian(&x).unwrap();
            for j in 0..h.num_params() {
                let col: f64 = jac.iter().map(|row| row[j]).sum();
                assert_abs_diff_eq!(col, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn uniform_point_bias_differential_is_centered_identity() {
        // At zero parameters f is uniform and d f_k / d b_j reduces to
        // delta_kj / K - 1 / K^2.
        let k = 4;
        let mut h = Hypothesis::linear(k, 2, 0.1, 6);
        h.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let jac = h.param_jacobian(&[0.7, -0.2]).unwrap();
        let bias_off = h.num_params() - k;
        let kf = k as f64;
        for r in 0..k {
            for j in 0..k {
                let want = if r == j { 1.0 / kf } else { 0.0 } - 1.0 / (kf * kf);
                assert_abs_diff_eq!(jac[r][bias_off + j], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cross_entropy_reference_values() {
        let near_point_mass = ProbVector::new(vec![1.0 - 2e-9, 1e-9, 1e-9]).unwrap();
        assert!(cross_entropy_loss(&near_point_mass, 0).unwrap() < 1e-8);
        let uniform = ProbVector::uniform(5);
        // The log guard shifts the value by guard / f_k = 5e-12.
        assert_abs_diff_eq!(
            cross_entropy_loss(&uniform, 3).unwrap(),
            5.0f64.ln(),
            epsilon = 1e-10
        );
        assert!(cross_entropy_loss(&uniform, 5).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let x = [0.5, -0.3];
        for h in [Hypothesis::linear(3, 2, 0.4, 7), Hypothesis::mlp(3, 2, 4, 0.4, 7)] {
            let (_, grad) = h.cross_entropy(&x, 1).unwrap();
            let n = h.num_params();
            let mut fd = vec![0.0; n];
            for j in 0..n {
                let step = 1e-6;
                let mut plus = h.clone();
                plus.params_mut()[j] += step;
                let mut minus = h.clone();
                minus.params_mut()[j] -= step;
                let lp = plus.cross_entropy(&x, 1).unwrap().0;
                let lm = minus.cross_entropy(&x, 1).unwrap().0;
                fd[j] = (lp - lm) / (2.0 * step);
            }
            assert!(max_rel_err(&grad, &fd) < 1e-5);
        }
    }

    #[test]
    fn forward_stays_on_simplex_for_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let hyps = [Hypothesis::linear(4, 3, 1.5, 9), Hypothesis::mlp(4, 3, 8, 1.5, 9)];
        for _ in 0..5_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-50.0..50.0)).collect();
            for h in &hyps {
                // ProbVector construction inside forward validates membership.
                h.forward(&x).unwrap();
            }
        }
    }

    #[test]
    fn grid_minimum_of_cross_entropy_recovers_conditional_frequencies() {
        // p = 1, K = 2, x in {-1, +1}; labels drawn so that
        // P(k=0 | x=-1) = 0.8 and P(k=0 | x=+1) = 0.3. The dataset holds
        // those frequencies exactly. Brute-force the (slope, bias) grid and
        // check the best grid point reproduces the conditional frequencies.
        let mut xs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..8 {
            xs.push([-1.0]);
            labels.push(0);
        }
        for _ in 0..2 {
            xs.push([-1.0]);
            labels.push(1);
        }
        for _ in 0..3 {
            xs.push([1.0]);
            labels.push(0);
        }
        for _ in 0..7 {
            xs.push([1.0]);
            labels.push(1);
        }

        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut h = Hypothesis::linear(2, 1, 0.0, 0);
        let steps: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.05).collect();
        for &slope in &steps {
            for &bias in &steps {
                {
                    let p = h.params_mut();
                    // Second class pinned to zero logit; one slope and one
                    // bias then span all decision boundaries for K = 2.
                    p[0] = slope;
                    p[1] = 0.0;
                    p[2] = bias;
                    p[3] = 0.0;
                }
                let total: f64 = xs
                    .iter()
                    .zip(&labels)
                    .map(|(x, &k)| h.cross_entropy(x, k).unwrap().0)
                    .sum();
                if total < best.0 {
                    best = (total, slope, bias);
                }
            }
        }
        {
            let p = h.params_mut();
            p[0] = best.1;
            p[1] = 0.0;
            p[2] = best.2;
            p[3] = 0.0;
        }
        let f_neg = h.forward(&[-1.0]).unwrap();
        let f_pos = h.forward(&[1.0]).unwrap();
        assert!((f_neg[0] - 0.8).abs() < 0.05, "got {}", f_neg[0]);
        assert!((f_pos[0] - 0.3).abs() < 0.05, "got {}", f_pos[0]);
    }
}
