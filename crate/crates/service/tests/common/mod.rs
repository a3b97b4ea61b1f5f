#![allow(dead_code)]

use std::sync::OnceLock;

use focalbci_core::classifier::{train_classifier, ClassifierArch, ClassifierModel, TrainConfig};
use focalbci_core::data::{Dataset, Sample};
use focalbci_core::rs::RsMap;
use focalbci_core::sam::FocalState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CHANNELS: usize = 4;

/// Every channel of a class-`c` sample sits near `c - 2.5`.
pub fn planted(n_per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..6)
        .flat_map(|c| (0..n_per_class).map(move |_| c))
        .map(|c| Sample {
            features: (0..CHANNELS).map(|_| c as f64 - 2.5 + rng.random_range(-0.1..0.1)).collect(),
            label: c,
        })
        .collect();
    Dataset::new(samples, CHANNELS, 6).unwrap()
}

pub fn planted_model() -> &'static ClassifierModel {
    static MODEL: OnceLock<ClassifierModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let arch = ClassifierArch { hidden: 12, ..ClassifierArch::default() };
        let cfg = TrainConfig { iterations: 1500, learning_rate: 0.01, seed: 1, ..TrainConfig::default() };
        let rs = RsMap::new(CHANNELS, 8, 1).unwrap();
        train_classifier(&planted(30, 1), &rs, FocalState::new(0, 8).unwrap(), &arch, &cfg).unwrap()
    })
}

/// `n` fresh planted samples of one class.
pub fn window_of(label: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let ds = planted(n, seed);
    ds.samples.into_iter().filter(|s| s.label == label).map(|s| s.features).collect()
}
