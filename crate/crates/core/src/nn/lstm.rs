//! LSTM cell with a constant forget-gate bias offset.
//!
//! Each gate owns a `[hidden x (input + hidden)]` matrix applied to the
//! concatenation `[x; h_prev]`.

use rand::Rng;

use super::kernels::{add_outer_batch, add_transposed_batch, affine_batch, sigmoid};
use super::params::{Parameterized, UniformInit};
use crate::error::{check_len, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Candidate = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Candidate, Gate::Output];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Candidate => "candidate",
            Gate::Output => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    input_dim: usize,
    hidden_dim: usize,
    /// Indexed by `Gate as usize`.
    pub weights: [Vec<f64>; 4],
    pub biases: [Vec<f64>; 4],
    /// Added to the forget-gate preactivation on every step.
    pub forget_bias_offset: f64,
}

/// Activations of one batched step, kept for backpropagation through time.
#[derive(Debug, Clone)]
pub(crate) struct LstmStepCache {
    pub xh: Vec<f64>,
    pub gates: [Vec<f64>; 4],
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmCellParams {
    /// Weights uniform in `±1/sqrt(input_dim + hidden_dim)`, zero biases.
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, forget_bias_offset: f64, rng: &mut R) -> Self {
        Self::with_init(input_dim, hidden_dim, forget_bias_offset, UniformInit::PLAIN, rng)
    }

    pub fn with_init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden_dim: usize,
        forget_bias_offset: f64,
        init: UniformInit,
        rng: &mut R,
    ) -> Self {
        let fan_in = input_dim + hidden_dim;
        let weights = std::array::from_fn(|_| init.weights(hidden_dim * fan_in, fan_in, rng));
        let biases = std::array::from_fn(|_| init.biases(hidden_dim, fan_in, rng));
        Self {
            input_dim,
            hidden_dim,
            weights,
            biases,
            forget_bias_offset,
        }
    }

    pub fn zeros(input_dim: usize, hidden_dim: usize, forget_bias_offset: f64) -> Self {
        let fan_in = input_dim + hidden_dim;
        Self {
            input_dim,
            hidden_dim,
            weights: std::array::from_fn(|_| vec![0.0; hidden_dim * fan_in]),
            biases: std::array::from_fn(|_| vec![0.0; hidden_dim]),
            forget_bias_offset,
        }
    }

    pub fn from_parts(
        input_dim: usize,
        hidden_dim: usize,
        weights: [Vec<f64>; 4],
        biases: [Vec<f64>; 4],
        forget_bias_offset: f64,
    ) -> Result<Self> {
        for g in Gate::ALL {
            check_len("lstm gate weights", hidden_dim * (input_dim + hidden_dim), weights[g as usize].len())?;
            check_len("lstm gate biases", hidden_dim, biases[g as usize].len())?;
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            weights,
            biases,
            forget_bias_offset,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim, self.hidden_dim, self.forget_bias_offset)
    }

    pub(crate) fn step_batch(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStepCache {
        let (ni, nh) = (self.input_dim, self.hidden_dim);
        let batch = h_prev.len() / nh;
        let width = ni + nh;
        let mut xh = vec![0.0; batch * width];
        for b in 0..batch {
            xh[b * width..b * width + ni].copy_from_slice(&x[b * ni..(b + 1) * ni]);
            xh[b * width + ni..(b + 1) * width].copy_from_slice(&h_prev[b * nh..(b + 1) * nh]);
        }
        let mut gates: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; batch * nh]);
        for g in Gate::ALL {
            let gi = g as usize;
            affine_batch(&self.weights[gi], &self.biases[gi], width, &xh, &mut gates[gi]);
            let out = &mut gates[gi];
            match g {
                Gate::Candidate => out.iter_mut().for_each(|v| *v = v.tanh()),
                Gate::Forget => {
                    let off = self.forget_bias_offset;
                    out.iter_mut().for_each(|v| *v = sigmoid(*v + off))
                }
                _ => out.iter_mut().for_each(|v| *v = sigmoid(*v)),
            }
        }
        let n = batch * nh;
        let mut c = vec![0.0; n];
        let mut tanh_c = vec![0.0; n];
        let mut h = vec![0.0; n];
        for k in 0..n {
            c[k] = gates[1][k] * c_prev[k] + gates[0][k] * gates[2][k];
            tanh_c[k] = c[k].tanh();
            h[k] = gates[3][k] * tanh_c[k];
        }
        LstmStepCache {
            xh,
            gates,
            c_prev: c_prev.to_vec(),
            tanh_c,
            c,
            h,
        }
    }

    /// One step of backpropagation through time.
    ///
    /// `dh` is the total gradient reaching this step's hidden output and
    /// `dc` the gradient flowing back from the next step's cell state. On
    /// return `dx`, `dh_prev` and `dc_prev` are overwritten.
    pub(crate) fn backward_step(
        &self,
        cache: &LstmStepCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmCellParams,
        dx: &mut [f64],
        dh_prev: &mut [f64],
        dc_prev: &mut [f64],
    ) {
        let (ni, nh) = (self.input_dim, self.hidden_dim);
        let width = ni + nh;
        let n = dh.len();
        let batch = n / nh;
        let [gi, gf, gg, go] = &cache.gates;
        let mut dz: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
        for k in 0..n {
            let dct = dc[k] + dh[k] * go[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
            dz[3][k] = dh[k] * cache.tanh_c[k] * go[k] * (1.0 - go[k]);
            dz[0][k] = dct * gg[k] * gi[k] * (1.0 - gi[k]);
            dz[2][k] = dct * gi[k] * (1.0 - gg[k] * gg[k]);
            dz[1][k] = dct * cache.c_prev[k] * gf[k] * (1.0 - gf[k]);
            dc_prev[k] = dct * gf[k];
        }
        let mut dxh = vec![0.0; batch * width];
        for g in 0..4 {
            for b in 0..batch {
                for (gb, d) in grads.biases[g].iter_mut().zip(&dz[g][b * nh..(b + 1) * nh]) {
                    *gb += d;
                }
            }
            add_outer_batch(&mut grads.weights[g], width, &dz[g], &cache.xh);
            add_transposed_batch(&self.weights[g], width, &dz[g], &mut dxh);
        }
        for b in 0..batch {
            dx[b * ni..(b + 1) * ni].copy_from_slice(&dxh[b * width..b * width + ni]);
            dh_prev[b * nh..(b + 1) * nh].copy_from_slice(&dxh[b * width + ni..(b + 1) * width]);
        }
    }
}

impl Parameterized for LstmCellParams {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for g in Gate::ALL {
            f(&format!("{}.weights", g.name()), &self.weights[g as usize]);
            f(&format!("{}.biases", g.name()), &self.biases[g as usize]);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for g in Gate::ALL {
            f(&format!("{}.weights", g.name()), &mut self.weights[g as usize]);
            f(&format!("{}.biases", g.name()), &mut self.biases[g as usize]);
        }
    }
}

/// Single LSTM step: returns `(h, c)`.
pub fn lstm_step(
    params: &LstmCellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len("lstm input", params.input_dim, x.len())?;
    check_len("lstm hidden state", params.hidden_dim, h_prev.len())?;
    check_len("lstm cell state", params.hidden_dim, c_prev.len())?;
    let cache = params.step_batch(x, h_prev, c_prev);
    Ok((cache.h, cache.c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_cell_from_zero_state_stays_zero() {
        let p = LstmCellParams::zeros(3, 2, 0.3);
        let (h, c) = lstm_step(&p, &[1.0, -4.0, 9.0], &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
    }

    #[test]
    fn forget_offset_scales_previous_cell() {
        let p = LstmCellParams::zeros(1, 1, 0.3);
        let (h, c) = lstm_step(&p, &[0.7], &[0.0], &[1.0]).unwrap();
        assert!((c[0] - 0.574443).abs() < 1e-6, "c = {}", c[0]);
        assert!((h[0] - 0.2593).abs() < 1e-4, "h = {}", h[0]);
    }

    #[test]
    fn no_offset_halves_previous_cell() {
        let p = LstmCellParams::zeros(1, 1, 0.0);
        let (h, c) = lstm_step(&p, &[0.0], &[0.0], &[2.0]).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert!((h[0] - 0.38080).abs() < 1e-5);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = LstmCellParams::zeros(2, 3, 0.0);
        assert!(lstm_step(&p, &[0.0; 2], &[0.0; 2], &[0.0; 3]).is_err());
        assert!(lstm_step(&p, &[0.0; 3], &[0.0; 3], &[0.0; 3]).is_err());
    }

    #[test]
    fn gate_ranges_hold_for_large_inputs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let p = LstmCellParams::new(2, 4, 0.3, &mut rng);
        for scale in [1.0, 50.0, 1e4] {
            let x = [scale, -scale];
            let h = [0.5 * scale; 4];
            let c = [-scale; 4];
            let cache = p.step_batch(&x, &h, &c);
            for g in Gate::ALL {
                for &v in &cache.gates[g as usize] {
                    if g == Gate::Candidate {
                        assert!((-1.0..=1.0).contains(&v));
                    } else {
                        assert!((0.0..=1.0).contains(&v));
                    }
                }
            }
        }
    }
}
