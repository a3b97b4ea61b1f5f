//! Central finite-difference gradient verification.

use super::params::Parameterized;
use crate::error::{Error, Result};

/// A scalar objective over its own parameters with an analytic gradient.
pub trait Differentiable: Parameterized {
    fn loss(&self) -> Result<f64>;

    /// Gradient groups in the same order as `visit_params`.
    fn gradient(&self) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub group: String,
    pub max_relative_error: f64,
}

/// Max over elements of `|a - n| / max(1e-8, |a| + |n|)`.
pub fn grad_check<M: Differentiable>(model: &mut M, epsilon: f64) -> Result<f64> {
    Ok(grad_check_groups(model, epsilon)?
        .into_iter()
        .map(|g| g.max_relative_error)
        .fold(0.0, f64::max))
}

/// Per-group breakdown of [`grad_check`].
pub fn grad_check_groups<M: Differentiable>(model: &mut M, epsilon: f64) -> Result<Vec<GroupError>> {
    if !(epsilon > 0.0) {
        return Err(Error::validation("grad_check epsilon must be > 0"));
    }
    let base = model.loss()?;
    if !base.is_finite() {
        return Err(Error::Numeric("grad_check loss at probe point".into()));
    }
    let analytic = model.gradient()?;
    let mut names = Vec::new();
    model.visit_params(&mut |n, _| names.push(n.to_owned()));

    let mut report = Vec::with_capacity(names.len());
    for (gi, name) in names.into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        for k in 0..analytic[gi].len() {
            let plus = perturbed_loss(model, gi, k, epsilon)?;
            let minus = perturbed_loss(model, gi, k, -epsilon)?;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic[gi][k];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        report.push(GroupError {
            group: name,
            max_relative_error: worst,
        });
    }
    Ok(report)
}

fn perturbed_loss<M: Differentiable>(model: &mut M, group: usize, index: usize, delta: f64) -> Result<f64> {
    let mut original = 0.0;
    nudge(model, group, index, |v| {
        original = *v;
        *v += delta;
    });
    let loss = model.loss();
    nudge(model, group, index, |v| *v = original);
    let loss = loss?;
    if !loss.is_finite() {
        return Err(Error::Numeric("grad_check perturbed loss".into()));
    }
    Ok(loss)
}

fn nudge<M: Parameterized>(model: &mut M, group: usize, index: usize, mut f: impl FnMut(&mut f64)) {
    let mut gi = 0;
    model.visit_params_mut(&mut |_, p| {
        if gi == group {
            f(&mut p[index]);
        }
        gi += 1;
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `sum_i scale_i * theta_i^2` with a deliberately scalable analytic gradient.
    struct Quadratic {
        theta: Vec<f64>,
        grad_scale: f64,
    }

    impl Parameterized for Quadratic {
        fn visit_params(&self, f: &mut dyn FnMut(&str, &[f64])) {
            f("theta", &self.theta);
        }
        fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
            f("theta", &mut self.theta);
        }
    }

    impl Differentiable for Quadratic {
        fn loss(&self) -> Result<f64> {
            Ok(self.theta.iter().map(|t| t * t).sum())
        }
        fn gradient(&self) -> Result<Vec<Vec<f64>>> {
            Ok(vec![self.theta.iter().map(|t| 2.0 * t * self.grad_scale).collect()])
        }
    }

    #[test]
    fn single_parameter_quadratic_is_exact() {
        let mut m = Quadratic {
            theta: vec![3.0],
            grad_scale: 1.0,
        };
        assert!(grad_check(&mut m, 1e-5).unwrap() < 1e-9);
        assert_eq!(m.theta, vec![3.0]);
    }

    #[test]
    fn scaled_gradient_is_detected() {
        let mut m = Quadratic {
            theta: vec![1.0, -2.0, 0.5],
            grad_scale: 1.1,
        };
        let err = grad_check(&mut m, 1e-5).unwrap();
        assert!(err > 0.04, "{err}");
        assert!((err - 0.1 / 2.1).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_epsilon() {
        let mut m = Quadratic {
            theta: vec![1.0],
            grad_scale: 1.0,
        };
        assert!(grad_check(&mut m, 0.0).is_err());
    }
}
