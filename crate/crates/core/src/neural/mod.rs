//! Small feedforward networks with hand-written backpropagation.
//!
//! Every function approximator in the crate (world-model reward regressor,
//! demonstration value network, discriminator, actor and critics) is a
//! [`Net`]: a stack of dense layers with one hidden activation and an output
//! head. Parameters live in a single flat vector so the optimizer, the
//! finite-difference checker and checkpoints can treat them uniformly.

mod adam;
mod checkpoint;
mod gradcheck;

pub use adam::{adam_step, OptState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use gradcheck::{gradient_check, gradient_check_coords, relative_error};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Output head. A scalar network is a `Linear` head with one output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Linear,
    Softmax,
}

/// Gradient with the same flat layout as [`Net::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros(len: usize) -> Self {
        Gradients(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|g| *g *= factor);
    }

    /// `self += factor * other`
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        debug_assert_eq!(self.0.len(), other.0.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `layer_inputs[l]` is the input of dense layer `l`.
    layer_inputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    dims: Vec<usize>,
    activation: Activation,
    head: Head,
    params: Vec<f64>,
}

fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Net {
    /// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(dims: &[usize], activation: Activation, head: Head, seed: u64) -> Result<Self> {
        Self::check_dims(dims)?;
        let mut rng = seed::rng(seed);
        let mut params = Vec::with_capacity(param_count(dims));
        for w in dims.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] {
                params.push(rng.gen_range(-bound..bound));
            }
            for _ in 0..w[1] {
                params.push(rng.gen_range(-bound..bound));
            }
        }
        Ok(Net {
            dims: dims.to_vec(),
            activation,
            head,
            params,
        })
    }

    pub fn zeros(dims: &[usize], activation: Activation, head: Head) -> Result<Self> {
        Self::check_dims(dims)?;
        Ok(Net {
            dims: dims.to_vec(),
            activation,
            head,
            params: vec![0.0; param_count(dims)],
        })
    }

    /// Rebuild from raw parts, validating the parameter count.
    pub fn from_parts(
        dims: Vec<usize>,
        activation: Activation,
        head: Head,
        params: Vec<f64>,
    ) -> Result<Self> {
        Self::check_dims(&dims)?;
        if params.len() != param_count(&dims) {
            return Err(Error::data(format!(
                "parameter count {} does not match layer dims {:?}",
                params.len(),
                dims
            )));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::data(format!("non-finite parameter at index {i}")));
        }
        Ok(Net {
            dims,
            activation,
            head,
            params,
        })
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::usage(format!("invalid layer dims {dims:?}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Offset of the bias block of the last dense layer.
    pub fn output_bias_offset(&self) -> usize {
        self.params.len() - self.output_dim()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::usage(format!(
                "input has dimension {}, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(input)?.output)
    }

    /// Pre-head outputs (logits for a softmax head).
    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(input)?.logits)
    }

    pub fn trace(&self, input: &[f64]) -> Result<Trace> {
        self.check_input(input)?;
        let n_layers = self.dims.len() - 1;
        let mut layer_inputs = Vec::with_capacity(n_layers);
        let mut x = input.to_vec();
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let biases = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            let mut z = biases.to_vec();
            for (j, zj) in z.iter_mut().enumerate() {
                let row = &weights[j * fan_in..(j + 1) * fan_in];
                *zj += row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
            }
            offset += fan_in * fan_out + fan_out;
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            layer_inputs.push(std::mem::replace(&mut x, z));
        }
        let output = match self.head {
            Head::Linear => x.clone(),
            Head::Softmax => softmax(&x),
        };
        Ok(Trace {
            layer_inputs,
            logits: x,
            output,
        })
    }

    /// Accumulate parameter gradients given the gradient of the loss with
    /// respect to the pre-head outputs.
    pub fn accumulate_from_logits(&self, trace: &Trace, d_logits: &[f64], grads: &mut Gradients) {
        debug_assert_eq!(d_logits.len(), self.output_dim());
        debug_assert_eq!(grads.len(), self.params.len());
        let n_layers = self.dims.len() - 1;
        let mut delta = d_logits.to_vec();
        let mut end = self.params.len();
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let start = end - fan_in * fan_out - fan_out;
            let x = &trace.layer_inputs[l];
            {
                let (gw, gb) = grads.0[start..end].split_at_mut(fan_in * fan_out);
                for j in 0..fan_out {
                    let dj = delta[j];
                    if dj == 0.0 {
                        continue;
                    }
                    gb[j] += dj;
                    let row = &mut gw[j * fan_in..(j + 1) * fan_in];
                    for (g, v) in row.iter_mut().zip(x) {
                        *g += dj * v;
                    }
                }
            }
            if l > 0 {
                let weights = &self.params[start..start + fan_in * fan_out];
                let mut dx = vec![0.0; fan_in];
                for j in 0..fan_out {
                    let dj = delta[j];
                    if dj == 0.0 {
                        continue;
                    }
                    let row = &weights[j * fan_in..(j + 1) * fan_in];
                    for (d, w) in dx.iter_mut().zip(row) {
                        *d += dj * w;
                    }
                }
                for (d, h) in dx.iter_mut().zip(x) {
                    *d *= self.activation.derivative_from_output(*h);
                }
                delta = dx;
            }
            end = start;
        }
    }

    /// Map a gradient with respect to the head output onto the logits.
    pub fn head_backward(&self, trace: &Trace, upstream: &[f64]) -> Vec<f64> {
        match self.head {
            Head::Linear => upstream.to_vec(),
            Head::Softmax => {
                let p = &trace.output;
                let dot: f64 = p.iter().zip(upstream).map(|(a, b)| a * b).sum();
                p.iter().zip(upstream).map(|(pj, gj)| pj * (gj - dot)).collect()
            }
        }
    }

    /// Parameter gradients of `upstream · output(input)`.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<Gradients> {
        if upstream.len() != self.output_dim() {
            return Err(Error::usage(format!(
                "upstream gradient has dimension {}, network output is {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if upstream.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric("non-finite upstream gradient"));
        }
        let trace = self.trace(input)?;
        let d_logits = self.head_backward(&trace, upstream);
        let mut grads = Gradients::zeros(self.params.len());
        self.accumulate_from_logits(&trace, &d_logits, &mut grads);
        Ok(grads)
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients::zeros(self.params.len())
    }
}

/// Mean squared error of a single-output net over `(inputs[i], targets[i])`, with its gradient.
pub fn mse_loss_and_grads<X: AsRef<[f64]>>(net: &Net, inputs: &[X], targets: &[f64]) -> Result<(f64, Gradients)> {
    if inputs.is_empty() || inputs.len() != targets.len() || net.output_dim() != 1 {
        return Err(Error::usage("mse needs matching non-empty inputs and targets and a scalar net"));
    }
    let mut grads = net.zero_grads();
    let scale = 2.0 / inputs.len() as f64;
    let mut loss = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        let trace = net.trace(x.as_ref())?;
        let err = trace.output[0] - y;
        loss += err * err;
        net.accumulate_from_logits(&trace, &[scale * err], &mut grads);
    }
    Ok((loss / inputs.len() as f64, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_net_identity_activation_outputs_zero() {
        let net = Net::zeros(&[3, 4, 2], Activation::Identity, Head::Linear).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let net = Net::zeros(&[2, 3], Activation::Tanh, Head::Softmax).unwrap();
        let p = net.forward(&[0.3, 0.7]).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_weights_reproduce_input() {
        let mut params = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        params.extend([0.0; 3]);
        let net = Net::from_parts(vec![3, 3], Activation::Identity, Head::Linear, params).unwrap();
        assert_eq!(net.forward(&[0.25, -1.5, 3.0]).unwrap(), vec![0.25, -1.5, 3.0]);
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let net = Net::new(&[3, 2], Activation::Tanh, Head::Linear, 1).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[1000.0, -1000.0, 999.0]);
        assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let lp = log_softmax(&[1000.0, -1000.0, 999.0]);
        assert!(lp.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Net::new(&[4, 5, 3], Activation::Tanh, Head::Softmax, 3).unwrap();
        let g = net.backward(&[0.1, 0.2, 0.3, 0.4], &[0.0; 3]).unwrap();
        assert!(g.0.iter().all(|v| *v == 0.0));
        assert_eq!(g.len(), net.param_count());
    }

    #[test]
    fn output_bias_gradient_equals_upstream_scalar() {
        let net = Net::new(&[3, 6, 1], Activation::Tanh, Head::Linear, 9).unwrap();
        let g = net.backward(&[0.5, -0.3, 0.9], &[2.5]).unwrap();
        assert_eq!(g.0[net.output_bias_offset()], 2.5);
    }

    #[test]
    fn non_finite_upstream_is_numeric_error() {
        let net = Net::new(&[2, 1], Activation::Tanh, Head::Linear, 0).unwrap();
        assert!(matches!(
            net.backward(&[1.0, 1.0], &[f64::NAN]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn init_is_bounded_by_fan_in() {
        let net = Net::new(&[16, 4], Activation::Tanh, Head::Linear, 5).unwrap();
        assert!(net.params().iter().all(|p| p.abs() <= 0.25));
    }

    #[test]
    fn sigmoid_and_softplus_are_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }
}
