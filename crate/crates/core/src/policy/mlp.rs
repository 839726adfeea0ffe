use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const DEFAULT_HIDDEN: [usize; 2] = [32, 32];
pub const INITIAL_LOG_STD: f64 = -std::f64::consts::LN_2;

/// Tanh multilayer perceptron producing the mean of a diagonal Gaussian,
/// with a state-independent learnable log standard deviation.
///
/// All parameters live in one flat vector: for each layer the weight
/// matrix (row-major, `out × in`) then the bias, and finally `log_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMlp {
    pub sizes: Vec<usize>,
    /// Multiplied into the input features before the first layer.
    pub input_scale: Vec<f64>,
    pub theta: Vec<f64>,
}

pub(crate) struct Forward {
    /// Input followed by every layer's output (post-activation for hidden layers).
    acts: Vec<Vec<f64>>,
}

impl GaussianMlp {
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, input_scale: Vec<f64>, rng: &mut SimRng) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.contains(&0) {
            return Err(Error::config("MLP layers must have positive width"));
        }
        if input_scale.len() != input_dim {
            return Err(Error::config(format!(
                "input scale has {} entries for {input_dim} inputs",
                input_scale.len()
            )));
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        let mut theta = Vec::new();
        let layers = sizes.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let mut limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if l + 1 == layers {
                limit *= 0.1;
            }
            theta.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)));
            theta.extend(std::iter::repeat_n(0.0, fan_out));
        }
        theta.extend(std::iter::repeat_n(INITIAL_LOG_STD, output_dim));
        Ok(GaussianMlp {
            sizes,
            input_scale,
            theta,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    fn expected_len(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>() + self.output_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) {
            return Err(Error::validation("MLP needs at least an input and an output layer"));
        }
        if self.theta.len() != self.expected_len() || self.input_scale.len() != self.input_dim() {
            return Err(Error::validation("MLP parameter vector does not match its layer sizes"));
        }
        if self.log_std().iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("log_std must be finite"));
        }
        Ok(())
    }

    pub fn log_std(&self) -> &[f64] {
        &self.theta[self.theta.len() - self.output_dim()..]
    }

    pub(crate) fn forward(&self, input: &[f64]) -> Result<Forward> {
        if input.len() != self.input_dim() {
            return Err(Error::config(format!(
                "MLP expects {} features, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        let mut acts = vec![input.iter().zip(&self.input_scale).map(|(x, s)| x * s).collect::<Vec<f64>>()];
        let layers = self.sizes.len() - 1;
        let mut offset = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.theta[offset..offset + n_in * n_out];
            let b = &self.theta[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = &acts[l];
            let mut y: Vec<f64> = (0..n_out)
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(y);
            offset += n_in * n_out + n_out;
        }
        Ok(Forward { acts })
    }

    pub fn mean(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.acts.pop().unwrap_or_default())
    }

    /// Adds `scale · ∂/∂θ Σ_o g_o μ_o` into `out`, where `g` is the
    /// gradient with respect to the mean output.
    pub(crate) fn backprop_mean(&self, fwd: &Forward, grad_mean: &[f64], scale: f64, out: &mut [f64]) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta: Vec<f64> = grad_mean.iter().map(|g| g * scale).collect();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &fwd.acts[l];
            for o in 0..n_out {
                let row = off + o * n_in;
                for i in 0..n_in {
                    out[row + i] += delta[o] * x[i];
                }
                out[off + n_in * n_out + o] += delta[o];
            }
            if l > 0 {
                let w = &self.theta[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|i| {
                        let back: f64 = (0..n_out).map(|o| w[o * n_in + i] * delta[o]).sum();
                        back * (1.0 - x[i] * x[i])
                    })
                    .collect();
            }
        }
    }
}

pub(crate) fn output(fwd: &Forward) -> &[f64] {
    fwd.acts.last().map(Vec::as_slice).unwrap_or(&[])
}
