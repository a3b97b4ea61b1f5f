use super::params::Parameterized;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with the usual `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn for_params<P: Parameterized + ?Sized>(params: &P) -> Self {
        Self::with_hyper(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper<P: Parameterized + ?Sized>(
        params: &P,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Self {
        let zeros: Vec<Vec<f64>> = params.group_sizes().into_iter().map(|n| vec![0.0; n]).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
            beta1,
            beta2,
            epsilon,
        }
    }
}

/// One bias-corrected Adam step. Gradients are validated before any
/// parameter is touched, so a rejected update leaves `params` and `state`
/// unchanged.
pub fn adam_update<P: Parameterized + ?Sized>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    let mut grad_groups = Vec::with_capacity(state.first_moment.len());
    let mut bad = None;
    grads.visit_params(&mut |name, g| {
        if bad.is_none() && g.iter().any(|v| !v.is_finite()) {
            bad = Some(name.to_owned());
        }
        grad_groups.push(g.to_vec());
    });
    if let Some(name) = bad {
        return Err(Error::Numeric(format!("gradient group `{name}`")));
    }
    let sizes = params.group_sizes();
    if sizes.len() != grad_groups.len() || sizes.len() != state.first_moment.len() {
        return Err(Error::Shape {
            context: "adam parameter groups",
            expected: sizes.len(),
            actual: grad_groups.len(),
        });
    }
    for (i, &n) in sizes.iter().enumerate() {
        for actual in [grad_groups[i].len(), state.first_moment[i].len(), state.second_moment[i].len()] {
            if actual != n {
                return Err(Error::Shape {
                    context: "adam parameter group length",
                    expected: n,
                    actual,
                });
            }
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let mut gi = 0;
    params.visit_params_mut(&mut |_, p| {
        let g = &grad_groups[gi];
        let m = &mut state.first_moment[gi];
        let v = &mut state.second_moment[gi];
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
        gi += 1;
    });
    Ok(())
}

impl Parameterized for Vec<f64> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &[f64])) {
        f("values", self);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("values", self);
    }
}
