//! Dueling Q-network: a shared hidden layer feeding separate value and
//! advantage heads, recombined as `Q = V + A - mean(A)`.

use rand::Rng;

use super::focal::{ActionKind, FocalState};
use crate::error::Result;
use crate::nn::{Activation, DenseLayer, Differentiable, Parameterized};

pub const QNET_INPUTS: usize = 2;
pub const QNET_HIDDEN: usize = 32;
pub const ACTION_COUNT: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct QNet {
    pub shared: DenseLayer,
    pub advantage: DenseLayer,
    pub value: DenseLayer,
}

struct QCache {
    inputs: Vec<f64>,
    hidden: Vec<f64>,
    advantage: Vec<f64>,
    value: Vec<f64>,
    q: Vec<f64>,
}

/// Network input for a state: `(start / K', end / K')`.
pub fn encode_state(state: FocalState, k_prime: usize) -> [f64; 2] {
    let kp = k_prime as f64;
    [state.start_idx as f64 / kp, state.end_idx as f64 / kp]
}

impl QNet {
    pub fn new<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            shared: DenseLayer::new(QNET_INPUTS, QNET_HIDDEN, Activation::Relu, rng),
            advantage: DenseLayer::new(QNET_HIDDEN, ACTION_COUNT, Activation::Linear, rng),
            value: DenseLayer::new(QNET_HIDDEN, 1, Activation::Linear, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            shared: self.shared.zeros_like(),
            advantage: self.advantage.zeros_like(),
            value: self.value.zeros_like(),
        }
    }

    fn forward_cached(&self, inputs: &[f64]) -> QCache {
        let batch = inputs.len() / QNET_INPUTS;
        let mut hidden = vec![0.0; batch * QNET_HIDDEN];
        self.shared.forward_batch(inputs, &mut hidden);
        let mut advantage = vec![0.0; batch * ACTION_COUNT];
        self.advantage.forward_batch(&hidden, &mut advantage);
        let mut value = vec![0.0; batch];
        self.value.forward_batch(&hidden, &mut value);
        let mut q = vec![0.0; batch * ACTION_COUNT];
        for b in 0..batch {
            let adv = &advantage[b * ACTION_COUNT..(b + 1) * ACTION_COUNT];
            let mean = adv.iter().sum::<f64>() / ACTION_COUNT as f64;
            for a in 0..ACTION_COUNT {
                q[b * ACTION_COUNT + a] = value[b] + adv[a] - mean;
            }
        }
        QCache {
            inputs: inputs.to_vec(),
            hidden,
            advantage,
            value,
            q,
        }
    }

    /// Returns `(V(s), A(s, .))` before recombination.
    pub fn heads(&self, state: FocalState, k_prime: usize) -> (f64, [f64; ACTION_COUNT]) {
        let c = self.forward_cached(&encode_state(state, k_prime));
        let mut adv = [0.0; ACTION_COUNT];
        adv.copy_from_slice(&c.advantage);
        (c.value[0], adv)
    }

    pub fn q_values(&self, state: FocalState, k_prime: usize) -> [f64; ACTION_COUNT] {
        let c = self.forward_cached(&encode_state(state, k_prime));
        let mut q = [0.0; ACTION_COUNT];
        q.copy_from_slice(&c.q);
        q
    }

    /// Mean squared TD error over `(input, action, target)` and its
    /// gradient, accumulated into `grads`.
    pub(crate) fn td_loss_and_grad(
        &self,
        inputs: &[f64],
        actions: &[usize],
        targets: &[f64],
        grads: Option<&mut QNet>,
    ) -> f64 {
        let batch = actions.len();
        let c = self.forward_cached(inputs);
        let mut loss = 0.0;
        let mut dq = vec![0.0; batch * ACTION_COUNT];
        for b in 0..batch {
            let r = c.q[b * ACTION_COUNT + actions[b]] - targets[b];
            loss += r * r;
            dq[b * ACTION_COUNT + actions[b]] = 2.0 * r / batch as f64;
        }
        loss /= batch as f64;
        let Some(grads) = grads else {
            return loss;
        };
        let mut dv = vec![0.0; batch];
        let mut da = vec![0.0; batch * ACTION_COUNT];
        for b in 0..batch {
            let row = &dq[b * ACTION_COUNT..(b + 1) * ACTION_COUNT];
            let total: f64 = row.iter().sum();
            dv[b] = total;
            for a in 0..ACTION_COUNT {
                da[b * ACTION_COUNT + a] = row[a] - total / ACTION_COUNT as f64;
            }
        }
        let mut dh_v = vec![0.0; batch * QNET_HIDDEN];
        let mut dh_a = vec![0.0; batch * QNET_HIDDEN];
        self.value
            .backward_batch(&c.hidden, &c.value, &mut dv, &mut grads.value, Some(&mut dh_v));
        self.advantage
            .backward_batch(&c.hidden, &c.advantage, &mut da, &mut grads.advantage, Some(&mut dh_a));
        for (x, y) in dh_v.iter_mut().zip(&dh_a) {
            *x += y;
        }
        self.shared
            .backward_batch(&c.inputs, &c.hidden, &mut dh_v, &mut grads.shared, None);
        loss
    }
}

impl Parameterized for QNet {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.shared.visit_params(&mut |n, p| f(&format!("shared.{n}"), p));
        self.advantage.visit_params(&mut |n, p| f(&format!("advantage.{n}"), p));
        self.value.visit_params(&mut |n, p| f(&format!("value.{n}"), p));
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.shared.visit_params_mut(&mut |n, p| f(&format!("shared.{n}"), p));
        self.advantage.visit_params_mut(&mut |n, p| f(&format!("advantage.{n}"), p));
        self.value.visit_params_mut(&mut |n, p| f(&format!("value.{n}"), p));
    }
}

/// `Q(s, .)` for a state.
pub fn q_forward(net: &QNet, state: FocalState, k_prime: usize) -> [f64; ACTION_COUNT] {
    net.q_values(state, k_prime)
}

/// The TD objective over a fixed batch, for gradient checking the dueling head.
pub struct TdObjective {
    pub net: QNet,
    pub inputs: Vec<f64>,
    pub actions: Vec<ActionKind>,
    pub targets: Vec<f64>,
}

impl TdObjective {
    fn action_indices(&self) -> Vec<usize> {
        self.actions.iter().map(|a| a.index()).collect()
    }
}

impl Parameterized for TdObjective {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &[f64])) {
        self.net.visit_params(f)
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.net.visit_params_mut(f)
    }
}

impl Differentiable for TdObjective {
    fn loss(&self) -> Result<f64> {
        Ok(self.net.td_loss_and_grad(&self.inputs, &self.action_indices(), &self.targets, None))
    }

    fn gradient(&self) -> Result<Vec<Vec<f64>>> {
        let mut g = self.net.zeros_like();
        self.net
            .td_loss_and_grad(&self.inputs, &self.action_indices(), &self.targets, Some(&mut g));
        Ok(g.flatten_groups())
    }
}
