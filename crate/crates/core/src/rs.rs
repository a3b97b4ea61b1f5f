//! Replicate-and-shuffle: tile a K-vector `h` times, apply one fixed
//! permutation, keep the first K' entries.
//!
//! The map is drawn once per experiment and shared by every sample, so
//! output position `j` always reads the same source channel.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsMap {
    k: usize,
    k_prime: usize,
    h: usize,
    /// Permutation of `0..h*k`; only the first `k_prime` entries are used.
    permutation: Vec<usize>,
}

impl RsMap {
    /// Draws a uniform permutation with a seeded Fisher-Yates shuffle.
    pub fn new(k: usize, k_prime: usize, seed: u64) -> Result<Self> {
        let h = replication_count(k, k_prime)?;
        let mut permutation: Vec<usize> = (0..h * k).collect();
        permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self {
            k,
            k_prime,
            h,
            permutation,
        })
    }

    /// Rebuilds a map from stored fields, checking every invariant.
    pub fn from_parts(k: usize, k_prime: usize, h: usize, permutation: Vec<usize>) -> Result<Self> {
        let expected_h = replication_count(k, k_prime)?;
        if h != expected_h {
            return Err(Error::validation(format!(
                "replication count {h} does not equal ceil({k_prime}/{k}) = {expected_h}"
            )));
        }
        check_len("rs permutation", h * k, permutation.len())?;
        let mut seen = vec![false; permutation.len()];
        for &p in &permutation {
            if p >= seen.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::validation("permutation not bijective"));
            }
        }
        Ok(Self {
            k,
            k_prime,
            h,
            permutation,
        })
    }

    /// The identity shuffle, i.e. plain tiling.
    pub fn identity(k: usize, k_prime: usize) -> Result<Self> {
        let h = replication_count(k, k_prime)?;
        Self::from_parts(k, k_prime, h, (0..h * k).collect())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn k_prime(&self) -> usize {
        self.k_prime
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Source channel feeding output position `j`.
    pub fn source_channel(&self, j: usize) -> usize {
        self.permutation[j] % self.k
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("rs input", self.k, x.len())?;
        Ok(self.permutation[..self.k_prime]
            .iter()
            .map(|&p| x[p % self.k])
            .collect())
    }

    /// Applies the map and keeps only `[start, end)` of the output.
    pub fn apply_window(&self, x: &[f64], start: usize, end: usize) -> Result<Vec<f64>> {
        check_len("rs input", self.k, x.len())?;
        if !(start < end && end <= self.k_prime) {
            return Err(Error::validation(format!(
                "window [{start}, {end}) outside [0, {})",
                self.k_prime
            )));
        }
        Ok(self.permutation[start..end]
            .iter()
            .map(|&p| x[p % self.k])
            .collect())
    }
}

/// `ceil(k_prime / k)`, so `h * k >= k_prime`.
pub fn replication_count(k: usize, k_prime: usize) -> Result<usize> {
    if k == 0 || k_prime <= k {
        return Err(Error::validation(format!(
            "need K' > K >= 1 (got K = {k}, K' = {k_prime})"
        )));
    }
    Ok(k_prime.div_ceil(k))
}

pub fn make_rs_map(k: usize, k_prime: usize, seed: u64) -> Result<RsMap> {
    RsMap::new(k, k_prime, seed)
}

pub fn apply_rs(map: &RsMap, x: &[f64]) -> Result<Vec<f64>> {
    map.apply(x)
}
