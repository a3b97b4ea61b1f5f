//! Offline training pipeline: RS map, focal-zone selection by registered
//! strategy, classifier training and the persisted model document.

use crate::classifier::{train_classifier_with_progress, ClassifierArch, ClassifierModel, TrainConfig};
use crate::data::Dataset;
use crate::model_file::{Hyperparameters, ModelFile, TrainingMetadata};
use crate::reward::ArRewardConfig;
use crate::rs::RsMap;
use crate::sam::SamConfig;
use crate::strategy::{reward_registry, selector_registry, Selection, SelectionContext};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub k_prime: usize,
    pub selector: String,
    pub reward: String,
    /// Window length for the fixed-length selectors.
    pub focal_length: usize,
    pub sam: SamConfig,
    pub ar_reward: ArRewardConfig,
    pub arch: ClassifierArch,
    pub train: TrainConfig,
    /// Seeds the RS permutation, the search, the reward subset and training.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_prime: 224,
            selector: "sam".into(),
            reward: "ar-silhouette".into(),
            focal_length: 24,
            sam: SamConfig::default(),
            ar_reward: ArRewardConfig::default(),
            arch: ClassifierArch::default(),
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    fn seeded(&self) -> (SamConfig, ArRewardConfig, TrainConfig) {
        (
            SamConfig { seed: self.seed, ..self.sam },
            ArRewardConfig { seed: self.seed, ..self.ar_reward },
            TrainConfig { seed: self.seed, ..self.train },
        )
    }
}

pub struct PipelineOutput {
    pub model: ClassifierModel,
    pub selection: Selection,
    /// Training loss per iteration.
    pub losses: Vec<f64>,
    pub file: ModelFile,
}

/// Builds the RS map and picks the focal zone without training.
pub fn select_focal_zone(train: &Dataset, cfg: &PipelineConfig) -> Result<(RsMap, Selection)> {
    let rs_map = RsMap::new(train.channel_count, cfg.k_prime, cfg.seed)?;
    let selection = select_with(train, &rs_map, cfg)?;
    Ok((rs_map, selection))
}

fn select_with(train: &Dataset, rs_map: &RsMap, cfg: &PipelineConfig) -> Result<Selection> {
    let (sam, reward, train_config) = cfg.seeded();
    let selectors = selector_registry();
    let rewards = reward_registry();
    let selector = selectors.get(&cfg.selector)?;
    rewards.get(&cfg.reward)?;
    let ctx = SelectionContext {
        train,
        rs_map,
        sam,
        reward,
        arch: cfg.arch,
        train_config,
        length: cfg.focal_length,
        seed: cfg.seed,
    };
    selector.select(&ctx, &rewards, &cfg.reward)
}

pub fn run_pipeline(
    train: &Dataset,
    cfg: &PipelineConfig,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<PipelineOutput> {
    let (rs_map, selection) = select_focal_zone(train, cfg)?;
    let (sam, _, train_config) = cfg.seeded();
    let mut losses = Vec::with_capacity(train_config.iterations);
    let model = train_classifier_with_progress(train, &rs_map, selection.state, &cfg.arch, &train_config, &mut |i, l| {
        losses.push(l);
        progress(i, l);
    })?;
    let file = ModelFile::from_model(
        &model,
        Hyperparameters {
            train: train_config,
            sam: (cfg.selector == "sam").then_some(sam),
        },
        TrainingMetadata {
            seed: cfg.seed,
            dataset_fingerprint: train.fingerprint(),
            focal_selector: cfg.selector.clone(),
            focal_reward: selection.reward,
        },
    );
    Ok(PipelineOutput {
        model,
        selection,
        losses,
        file,
    })
}
