//! Fully connected layer `y = activation(W x + b)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels::{add_outer_batch, add_transposed_batch, affine_batch, sigmoid};
use super::params::{Parameterized, UniformInit};
use crate::error::{check_len, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `[out_dim x in_dim]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Weights uniform in `±1/sqrt(in_dim)`, zero biases.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        Self::with_init(in_dim, out_dim, activation, UniformInit::PLAIN, rng)
    }

    pub fn with_init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        init: UniformInit,
        rng: &mut R,
    ) -> Self {
        let weights = init.weights(in_dim * out_dim, in_dim, rng);
        let biases = init.biases(out_dim, in_dim, rng);
        Self {
            in_dim,
            out_dim,
            weights,
            biases,
            activation,
        }
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            biases: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        check_len("dense weights", in_dim * out_dim, weights.len())?;
        check_len("dense biases", out_dim, biases.len())?;
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            biases,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.in_dim, self.out_dim, self.activation)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        check_len("dense input", self.in_dim, input.len())?;
        let mut out = vec![0.0; self.out_dim];
        self.forward_batch(input, &mut out);
        Ok(out)
    }

    /// Batched forward; `inputs` holds `batch * in_dim` values.
    pub(crate) fn forward_batch(&self, inputs: &[f64], outputs: &mut [f64]) {
        affine_batch(&self.weights, &self.biases, self.in_dim, inputs, outputs);
        if self.activation != Activation::Linear {
            for y in outputs.iter_mut() {
                *y = self.activation.apply(*y);
            }
        }
    }

    /// Accumulates parameter gradients into `grads` and, when requested,
    /// writes the input gradient into `grad_inputs` (overwriting it).
    ///
    /// `grad_outputs` is consumed as scratch: on return it holds the gradient
    /// with respect to the pre-activation.
    pub(crate) fn backward_batch(
        &self,
        inputs: &[f64],
        outputs: &[f64],
        grad_outputs: &mut [f64],
        grads: &mut DenseLayer,
        grad_inputs: Option<&mut [f64]>,
    ) {
        if self.activation != Activation::Linear {
            for (g, y) in grad_outputs.iter_mut().zip(outputs) {
                *g *= self.activation.derivative_from_output(*y);
            }
        }
        let batch = inputs.len() / self.in_dim;
        for b in 0..batch {
            let row = &grad_outputs[b * self.out_dim..(b + 1) * self.out_dim];
            for (gb, d) in grads.biases.iter_mut().zip(row) {
                *gb += d;
            }
        }
        add_outer_batch(&mut grads.weights, self.in_dim, grad_outputs, inputs);
        if let Some(gx) = grad_inputs {
            gx.fill(0.0);
            add_transposed_batch(&self.weights, self.in_dim, grad_outputs, gx);
        }
    }
}

impl Parameterized for DenseLayer {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("weights", &self.weights);
        f("biases", &self.biases);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("weights", &mut self.weights);
        f("biases", &mut self.biases);
    }
}

/// `activation(W x + b)` for a single input vector.
pub fn dense_forward(layer: &DenseLayer, input: &[f64]) -> Result<Vec<f64>> {
    layer.forward(input)
}
