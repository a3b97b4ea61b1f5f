//! Minimal double-precision neural-network substrate: dense layers, LSTM
//! cells, softmax cross-entropy, Adam and finite-difference gradient checks.

mod adam;
mod dense;
mod gradcheck;
pub(crate) mod kernels;
mod loss;
mod lstm;
mod params;

pub use adam::{adam_update, AdamState};
pub use dense::{dense_forward, Activation, DenseLayer};
pub use gradcheck::{grad_check, grad_check_groups, Differentiable, GroupError};
pub use loss::{softmax, softmax_cross_entropy};
pub use lstm::{lstm_step, Gate, LstmCellParams};
pub(crate) use lstm::LstmStepCache;
pub use params::{Parameterized, UniformInit};

/// Rescales all groups so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<P: Parameterized + ?Sized>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.sum_squares().sqrt();
    if norm > max_norm && norm.is_finite() {
        let scale = max_norm / norm;
        grads.visit_params_mut(&mut |_, g| g.iter_mut().for_each(|v| *v *= scale));
    }
    norm
}
