use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// A container of named, flat parameter groups.
///
/// Visitation order is fixed per type; optimizers and serializers rely on it.
pub trait Parameterized {
    fn visit_params(&self, f: &mut dyn FnMut(&str, &[f64]));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p| n += p.len());
        n
    }

    fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        self.visit_params(&mut |_, p| sizes.push(p.len()));
        sizes
    }

    fn zero_params(&mut self) {
        self.visit_params_mut(&mut |_, p| p.fill(0.0));
    }

    /// Copies every group into a `Vec` each, in visitation order.
    fn flatten_groups(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, p| out.push(p.to_vec()));
        out
    }

    fn sum_squares(&self) -> f64 {
        let mut s = 0.0;
        self.visit_params(&mut |_, p| s += p.iter().map(|v| v * v).sum::<f64>());
        s
    }
}

/// Seeded uniform initialization in `[-gain/sqrt(fan_in), gain/sqrt(fan_in)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformInit {
    pub gain: f64,
    /// Draw biases from the weight range instead of zeroing them.
    pub random_bias: bool,
}

impl UniformInit {
    pub const PLAIN: Self = Self {
        gain: 1.0,
        random_bias: false,
    };

    pub fn bound(&self, fan_in: usize) -> f64 {
        self.gain / (fan_in.max(1) as f64).sqrt()
    }

    pub(crate) fn weights<R: Rng + ?Sized>(&self, len: usize, fan_in: usize, rng: &mut R) -> Vec<f64> {
        uniform(len, self.bound(fan_in), rng)
    }

    pub(crate) fn biases<R: Rng + ?Sized>(&self, len: usize, fan_in: usize, rng: &mut R) -> Vec<f64> {
        if self.random_bias {
            uniform(len, self.bound(fan_in), rng)
        } else {
            vec![0.0; len]
        }
    }
}

impl Default for UniformInit {
    fn default() -> Self {
        Self::PLAIN
    }
}

fn uniform<R: Rng + ?Sized>(len: usize, limit: f64, rng: &mut R) -> Vec<f64> {
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    (0..len).map(|_| dist.sample(rng)).collect()
}
