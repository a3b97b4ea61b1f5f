//! Cheap focal-zone reward: per-sample autoregressive fits over the focal
//! slice, scored by how well the coefficient vectors cluster by true label.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rs::RsMap;
use crate::sam::FocalState;

pub const DEFAULT_AR_ORDER: usize = 3;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArCoefficients(pub Vec<f64>);

impl ArCoefficients {
    pub fn order(&self) -> usize {
        self.0.len()
    }
}

/// Least-squares fit of `x[t] ~ sum_j phi_j x[t-j]` for `t = order..len`,
/// via ridge-damped normal equations.
pub fn fit_ar(series: &[f64], order: usize) -> Result<ArCoefficients> {
    if order == 0 {
        return Err(Error::validation("AR order must be >= 1"));
    }
    if series.len() < 2 * order + 1 {
        return Err(Error::validation(format!(
            "AR({order}) needs at least {} points, got {}",
            2 * order + 1,
            series.len()
        )));
    }
    let mut gram = vec![0.0; order * order];
    let mut rhs = vec![0.0; order];
    for t in order..series.len() {
        let y = series[t];
        for a in 0..order {
            let xa = series[t - 1 - a];
            rhs[a] += xa * y;
            for b in 0..=a {
                gram[a * order + b] += xa * series[t - 1 - b];
            }
        }
    }
    for a in 0..order {
        gram[a * order + a] += RIDGE;
        for b in 0..a {
            gram[b * order + a] = gram[a * order + b];
        }
    }
    let phi = solve_spd(&mut gram, rhs, order)?;
    Ok(ArCoefficients(phi))
}

/// Cholesky solve of a symmetric positive-definite system, in place.
fn solve_spd(a: &mut [f64], mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::Numeric("AR normal equations are not positive definite".into()));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        for k in 0..i {
            b[i] -= a[i * n + k] * b[k];
        }
        b[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            b[i] -= a[k * n + i] * b[k];
        }
        b[i] /= a[i * n + i];
    }
    Ok(b)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette with Euclidean distance. Singleton clusters score 0.
pub fn silhouette_score(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} points but {} labels",
            points.len(),
            labels.len()
        )));
    }
    let mut ids = BTreeMap::new();
    for &l in labels {
        let next = ids.len();
        ids.entry(l).or_insert(next);
    }
    if ids.len() < 2 {
        return Err(Error::validation("silhouette needs at least two clusters"));
    }
    let cluster: Vec<usize> = labels.iter().map(|l| ids[l]).collect();
    let nc = ids.len();
    let mut sizes = vec![0usize; nc];
    for &c in &cluster {
        sizes[c] += 1;
    }

    let n = points.len();
    let mut sums = vec![0.0; n * nc];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&points[i], &points[j]);
            sums[i * nc + cluster[j]] += d;
            sums[j * nc + cluster[i]] += d;
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = cluster[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[i * nc + own] / (sizes[own] - 1) as f64;
        let b = (0..nc)
            .filter(|&c| c != own)
            .map(|c| sums[i * nc + c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub silhouette: f64,
    pub length_penalty: f64,
    pub reward: f64,
}

/// `exp(ss + 1) / (e^2 - 1) - beta * focal_len / k_prime`.
pub fn reward_from_silhouette(silhouette: f64, focal_len: usize, k_prime: usize, beta: f64) -> RewardBreakdown {
    let length_penalty = beta * focal_len as f64 / k_prime as f64;
    let e2 = std::f64::consts::E * std::f64::consts::E;
    RewardBreakdown {
        silhouette,
        length_penalty,
        reward: (silhouette + 1.0).exp() / (e2 - 1.0) - length_penalty,
    }
}

/// Scores `state` over already-shuffled evaluation vectors.
pub fn evaluate_reward(
    state: FocalState,
    eval_samples: &[(Vec<f64>, usize)],
    beta: f64,
    k_prime: usize,
    order: usize,
) -> Result<RewardBreakdown> {
    let len = state.len();
    if len < 2 * order + 1 {
        return Err(Error::validation(format!(
            "focal length {len} too short for AR({order})"
        )));
    }
    if state.end_idx > k_prime {
        return Err(Error::validation(format!("focal end {} beyond K' = {k_prime}", state.end_idx)));
    }
    let mut points = Vec::with_capacity(eval_samples.len());
    let mut labels = Vec::with_capacity(eval_samples.len());
    for (x, label) in eval_samples {
        if x.len() != k_prime {
            return Err(Error::Shape {
                context: "shuffled evaluation sample",
                expected: k_prime,
                actual: x.len(),
            });
        }
        points.push(fit_ar(&x[state.start_idx..state.end_idx], order)?.0);
        labels.push(*label);
    }
    let ss = silhouette_score(&points, &labels)?;
    Ok(reward_from_silhouette(ss, len, k_prime, beta))
}

/// What a reward strategy reports for one focal state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub reward: f64,
    /// Present for silhouette-based rewards.
    pub silhouette: Option<f64>,
}

impl From<RewardBreakdown> for Scored {
    fn from(b: RewardBreakdown) -> Self {
        Scored {
            reward: b.reward,
            silhouette: Some(b.silhouette),
        }
    }
}

/// A reward over focal states.
pub trait RewardModel {
    fn name(&self) -> &str;
    fn evaluate(&self, state: FocalState) -> Result<Scored>;
}

/// Wraps a closure as a reward; used for planted-optimum searches.
pub struct FnReward<F> {
    name: String,
    f: F,
}

impl<F: Fn(FocalState) -> f64> FnReward<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F: Fn(FocalState) -> f64> RewardModel for FnReward<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, state: FocalState) -> Result<Scored> {
        Ok(Scored {
            reward: (self.f)(state),
            silhouette: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArRewardConfig {
    pub beta: f64,
    pub order: usize,
    pub eval_per_class: usize,
    pub seed: u64,
}

impl Default for ArRewardConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            order: DEFAULT_AR_ORDER,
            eval_per_class: 40,
            seed: 0,
        }
    }
}

/// Autoregressive-coefficient silhouette reward over a fixed, stratified,
/// pre-shuffled evaluation subset.
#[derive(Debug, Clone)]
pub struct ArSilhouetteReward {
    eval: Vec<(Vec<f64>, usize)>,
    k_prime: usize,
    beta: f64,
    order: usize,
}

impl ArSilhouetteReward {
    pub fn new(eval: Vec<(Vec<f64>, usize)>, k_prime: usize, beta: f64, order: usize) -> Self {
        Self {
            eval,
            k_prime,
            beta,
            order,
        }
    }

    pub fn from_dataset(train: &Dataset, rs_map: &RsMap, cfg: &ArRewardConfig) -> Result<Self> {
        let subset = stratified_subset(train, cfg.eval_per_class, cfg.seed);
        let eval = subset
            .into_iter()
            .map(|i| Ok((rs_map.apply(&train.samples[i].features)?, train.samples[i].label)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(eval, rs_map.k_prime(), cfg.beta, cfg.order))
    }

    pub fn eval_len(&self) -> usize {
        self.eval.len()
    }

    pub fn breakdown(&self, state: FocalState) -> Result<RewardBreakdown> {
        evaluate_reward(state, &self.eval, self.beta, self.k_prime, self.order)
    }
}

impl RewardModel for ArSilhouetteReward {
    fn name(&self) -> &str {
        "ar-silhouette"
    }

    fn evaluate(&self, state: FocalState) -> Result<Scored> {
        self.breakdown(state).map(Scored::from)
    }
}

/// Up to `per_class` seeded picks from each label, returned as sorted indices.
pub fn stratified_subset(ds: &Dataset, per_class: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::new();
    for label in 0..ds.class_count {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].label == label).collect();
        idx.shuffle(&mut rng);
        idx.truncate(per_class);
        picked.extend(idx);
    }
    picked.sort_unstable();
    picked
}
