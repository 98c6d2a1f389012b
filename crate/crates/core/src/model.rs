//! The growth-rate network `f(y) = head(MLP(y))` and its exact derivatives.
//!
//! The network maps a scaled cumulative value to a growth rate. It never
//! sees time: the dynamics are autonomous. With the default ReLU head the
//! output is non-negative for every finite input, which is what makes every
//! Euler forecast non-decreasing.
//!
//! Parameters are flattened layer by layer, weights (row-major, `out x in`)
//! before biases. Gradients with respect to the parameters and the Adam
//! optimizer state use the same layout.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ModeError, Result};

/// Default layer widths: scalar in, hidden layers of 2 and 4 units, scalar out.
pub const DEFAULT_ARCHITECTURE: [usize; 4] = [1, 2, 4, 1];

/// The network's output is growth per day, in scaled units. Integrating
/// over a gap of `dt` minutes advances the state by `dt / 1440 * f(y)`.
pub const RATE_TIME_UNIT_MINUTES: f64 = 1440.0;

/// Converts a gap in minutes to the network's time unit.
#[inline]
pub fn model_time(dt_minutes: f64) -> f64 {
    dt_minutes / RATE_TIME_UNIT_MINUTES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    #[default]
    Relu,
}

/// Output activation applied to the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Non-negative rate; forecasts are guaranteed non-decreasing.
    #[default]
    Relu,
    /// No output activation (the monotone-head ablation).
    Identity,
    /// Smooth positive head, only for gradient diagnostics near kinks.
    Softplus,
}

impl Head {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Head::Relu => relu(z),
            Head::Identity => z,
            Head::Softplus => softplus(z),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Head::Relu => relu_grad(z),
            Head::Identity => 1.0,
            Head::Softplus => sigmoid(z),
        }
    }
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

// Subgradient 0 at the kink.
#[inline]
fn relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Derivatives of the rate with respect to its input and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RateJacobians {
    pub d_rate_d_y: f64,
    pub d_rate_d_theta: Vec<f64>,
}

/// Weights and biases of the rate network.
///
/// Immutable once built except through [`MlpParams::set_flat`], which the
/// optimizer uses to write back an updated parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    architecture: Vec<usize>,
    /// Per layer, row-major `architecture[l + 1] x architecture[l]`.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    hidden_activation: HiddenActivation,
    head: Head,
}

fn validate_architecture(architecture: &[usize]) -> Result<()> {
    if architecture.len() < 2 {
        return Err(ModeError::InvalidArchitecture(format!(
            "need at least 2 layers, got {}",
            architecture.len()
        )));
    }
    if let Some(pos) = architecture.iter().position(|&w| w == 0) {
        return Err(ModeError::InvalidArchitecture(format!(
            "layer {pos} has width 0"
        )));
    }
    if architecture[0] != 1 || architecture[architecture.len() - 1] != 1 {
        return Err(ModeError::InvalidArchitecture(format!(
            "input and output widths must be 1, got {architecture:?}"
        )));
    }
    Ok(())
}

impl MlpParams {
    /// Fan-in scaled uniform weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
    pub fn init(seed: u64, architecture: &[usize], head: Head) -> Result<Self> {
        validate_architecture(architecture)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(architecture.len() - 1);
        let mut biases = Vec::with_capacity(architecture.len() - 1);
        for pair in architecture.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            weights.push((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            architecture: architecture.to_vec(),
            weights,
            biases,
            hidden_activation: HiddenActivation::Relu,
            head,
        })
    }

    /// All-zero network; its rate is 0 everywhere.
    pub fn zeros(architecture: &[usize], head: Head) -> Result<Self> {
        validate_architecture(architecture)?;
        let weights = architecture.windows(2).map(|p| vec![0.0; p[0] * p[1]]).collect();
        let biases = architecture.windows(2).map(|p| vec![0.0; p[1]]).collect();
        Ok(Self {
            architecture: architecture.to_vec(),
            weights,
            biases,
            hidden_activation: HiddenActivation::Relu,
            head,
        })
    }

    /// Builds a network from explicit matrices (`layer_weights[l][row][col]`).
    pub fn from_layers(
        layer_weights: Vec<Vec<Vec<f64>>>,
        layer_biases: Vec<Vec<f64>>,
        head: Head,
    ) -> Result<Self> {
        if layer_weights.is_empty() {
            return Err(ModeError::InvalidArchitecture("no layers".into()));
        }
        if layer_weights.len() != layer_biases.len() {
            return Err(ModeError::InvalidArchitecture(format!(
                "{} weight matrices but {} bias vectors",
                layer_weights.len(),
                layer_biases.len()
            )));
        }
        let mut architecture = vec![layer_weights[0].first().map_or(0, Vec::len)];
        let mut weights = Vec::with_capacity(layer_weights.len());
        for (l, (matrix, bias)) in layer_weights.iter().zip(&layer_biases).enumerate() {
            let fan_in = architecture[l];
            if matrix.iter().any(|row| row.len() != fan_in) {
                return Err(ModeError::InvalidArchitecture(format!(
                    "layer {l}: every row must have {fan_in} columns"
                )));
            }
            if bias.len() != matrix.len() {
                return Err(ModeError::InvalidArchitecture(format!(
                    "layer {l}: {} rows but {} biases",
                    matrix.len(),
                    bias.len()
                )));
            }
            architecture.push(matrix.len());
            weights.push(matrix.iter().flatten().copied().collect::<Vec<_>>());
        }
        validate_architecture(&architecture)?;
        let params = Self {
            architecture,
            weights,
            biases: layer_biases,
            hidden_activation: HiddenActivation::Relu,
            head,
        };
        if params.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(ModeError::InvalidArchitecture("non-finite parameter".into()));
        }
        Ok(params)
    }

    pub fn architecture(&self) -> &[usize] {
        &self.architecture
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn hidden_activation(&self) -> HiddenActivation {
        self.hidden_activation
    }

    /// Same weights under a different output head.
    pub fn with_head(mut self, head: Head) -> Self {
        self.head = head;
        self
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Weight matrix of layer `l` as rows.
    pub fn layer_weights(&self, l: usize) -> Vec<Vec<f64>> {
        let fan_in = self.architecture[l];
        self.weights[l].chunks(fan_in).map(<[f64]>::to_vec).collect()
    }

    pub fn layer_biases(&self, l: usize) -> &[f64] {
        &self.biases[l]
    }

    pub fn param_count(&self) -> usize {
        self.architecture.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            flat.extend_from_slice(w);
            flat.extend_from_slice(b);
        }
        flat
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(ModeError::ShapeMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&flat[offset..offset + nw]);
            offset += nw;
            b.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn from_flat(&self, flat: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.set_flat(flat)?;
        Ok(out)
    }

    /// Growth rate at the scaled value `y`.
    pub fn rate(&self, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(ModeError::NonFiniteInput(y));
        }
        let mut act = vec![y];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let fan_in = self.architecture[l];
            let next: Vec<f64> = w
                .chunks(fan_in)
                .zip(b)
                .map(|(row, bias)| {
                    let z = row.iter().zip(&act).map(|(wi, ai)| wi * ai).sum::<f64>() + bias;
                    if l == last {
                        self.head.apply(z)
                    } else {
                        relu(z)
                    }
                })
                .collect();
            act = next;
        }
        Ok(act[0])
    }

    /// Returns `(f(y), df/dy)` and adds `upstream * df/dtheta` into `grad`.
    ///
    /// `grad` must have [`param_count`](Self::param_count) entries.
    pub fn rate_vjp(&self, y: f64, upstream: f64, grad: &mut [f64]) -> Result<(f64, f64)> {
        if !y.is_finite() {
            return Err(ModeError::NonFiniteInput(y));
        }
        if grad.len() != self.param_count() {
            return Err(ModeError::ShapeMismatch {
                expected: self.param_count(),
                got: grad.len(),
            });
        }
        let n_layers = self.weights.len();
        // inputs[l] feeds layer l; pre[l] is that layer's pre-activation.
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut act = vec![y];
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let fan_in = self.architecture[l];
            let z: Vec<f64> = w
                .chunks(fan_in)
                .zip(b)
                .map(|(row, bias)| row.iter().zip(&act).map(|(wi, ai)| wi * ai).sum::<f64>() + bias)
                .collect();
            let next = if l == n_layers - 1 {
                z.iter().map(|&v| self.head.apply(v)).collect()
            } else {
                z.iter().map(|&v| relu(v)).collect()
            };
            inputs.push(std::mem::replace(&mut act, next));
            pre.push(z);
        }
        let rate = act[0];

        let offsets = self.layer_offsets();
        let mut delta: Vec<f64> = pre[n_layers - 1]
            .iter()
            .map(|&z| self.head.derivative(z))
            .collect();
        let mut d_input = 0.0;
        for l in (0..n_layers).rev() {
            let fan_in = self.architecture[l];
            let w_off = offsets[l];
            let b_off = w_off + self.weights[l].len();
            for (row, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let g = upstream * d;
                for (col, &a) in inputs[l].iter().enumerate() {
                    grad[w_off + row * fan_in + col] += g * a;
                }
                grad[b_off + row] += g;
            }
            let mut back = vec![0.0; fan_in];
            for (row, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (col, slot) in back.iter_mut().enumerate() {
                    *slot += self.weights[l][row * fan_in + col] * d;
                }
            }
            if l == 0 {
                d_input = back[0];
            } else {
                delta = back
                    .iter()
                    .zip(&pre[l - 1])
                    .map(|(&b, &z)| b * relu_grad(z))
                    .collect();
            }
        }
        Ok((rate, d_input))
    }

    pub fn rate_jacobians(&self, y: f64) -> Result<RateJacobians> {
        let mut d_rate_d_theta = vec![0.0; self.param_count()];
        let (_, d_rate_d_y) = self.rate_vjp(y, 1.0, &mut d_rate_d_theta)?;
        Ok(RateJacobians {
            d_rate_d_y,
            d_rate_d_theta,
        })
    }

    /// Smallest |pre-activation| over all units at input `y`. Values near 0
    /// mean `y` sits near a ReLU kink, where finite differences are unreliable.
    pub fn kink_margin(&self, y: f64) -> f64 {
        let mut act = vec![y];
        let mut margin = f64::INFINITY;
        let n_layers = self.weights.len();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let fan_in = self.architecture[l];
            let z: Vec<f64> = w
                .chunks(fan_in)
                .zip(b)
                .map(|(row, bias)| row.iter().zip(&act).map(|(wi, ai)| wi * ai).sum::<f64>() + bias)
                .collect();
            let kinked = l < n_layers - 1 || self.head == Head::Relu;
            if kinked {
                margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            }
            act = z.into_iter().map(relu).collect();
        }
        margin
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.weights.len());
        let mut acc = 0;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            offsets.push(acc);
            acc += w.len() + b.len();
        }
        offsets
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            architecture: self.architecture.clone(),
            head: self.head,
            layer_weights: (0..self.num_layers()).map(|l| self.layer_weights(l)).collect(),
            layer_biases: self.biases.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let params = Self::from_layers(ckpt.layer_weights, ckpt.layer_biases, ckpt.head)?;
        if params.architecture != ckpt.architecture {
            return Err(ModeError::InvalidArchitecture(format!(
                "declared {:?} but matrices imply {:?}",
                ckpt.architecture, params.architecture
            )));
        }
        Ok(params)
    }

    pub fn save_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

/// On-disk parameter document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub architecture: Vec<usize>,
    pub head: Head,
    pub layer_weights: Vec<Vec<Vec<f64>>>,
    pub layer_biases: Vec<Vec<f64>>,
}
