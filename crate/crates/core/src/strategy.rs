//! Named strategy registries for focal-zone selectors and reward models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{train_classifier, ClassifierArch, TrainConfig};
use crate::data::{split, Dataset};
use crate::error::{Error, Result};
use crate::reward::{ArRewardConfig, ArSilhouetteReward, RewardModel, Scored};
use crate::rs::RsMap;
use crate::sam::{optimize_focal_zone, FocalState, HistoryEntry, SamConfig};

/// Name-keyed collection of boxed strategies, kept in registration order.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<(String, Box<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: Vec::new(),
        }
    }

    /// Adds or replaces the entry called `name`.
    pub fn register(&mut self, name: impl Into<String>, item: Box<T>) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = item,
            None => self.entries.push((name, item)),
        }
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, item)| item.as_ref())
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_owned(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }
}

/// Everything a strategy may need to score or pick focal zones.
#[derive(Debug, Clone)]
pub struct SelectionContext<'a> {
    pub train: &'a Dataset,
    pub rs_map: &'a RsMap,
    pub sam: SamConfig,
    pub reward: ArRewardConfig,
    pub arch: ClassifierArch,
    pub train_config: TrainConfig,
    /// Window length for the fixed-length selectors.
    pub length: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub state: FocalState,
    pub reward: Option<f64>,
    pub history: Vec<HistoryEntry>,
}

pub trait RewardFactory: Send + Sync {
    fn build<'a>(&self, ctx: &SelectionContext<'a>) -> Result<Box<dyn RewardModel + 'a>>;
}

pub trait FocalSelector: Send + Sync {
    fn select(&self, ctx: &SelectionContext<'_>, rewards: &Registry<dyn RewardFactory>, reward_name: &str)
        -> Result<Selection>;
}

struct ArSilhouetteFactory;

impl RewardFactory for ArSilhouetteFactory {
    fn build<'a>(&self, ctx: &SelectionContext<'a>) -> Result<Box<dyn RewardModel + 'a>> {
        Ok(Box::new(ArSilhouetteReward::from_dataset(ctx.train, ctx.rs_map, &ctx.reward)?))
    }
}

/// Trains a classifier on the focal zone and scores held-out accuracy.
pub struct ClassifierAccuracyReward<'a> {
    fit: Dataset,
    holdout: Dataset,
    rs_map: &'a RsMap,
    arch: ClassifierArch,
    config: TrainConfig,
}

impl<'a> ClassifierAccuracyReward<'a> {
    pub fn new(train: &Dataset, rs_map: &'a RsMap, arch: ClassifierArch, config: TrainConfig) -> Result<Self> {
        let (fit, holdout) = split(train, 0.8, config.seed)?;
        Ok(Self {
            fit,
            holdout,
            rs_map,
            arch,
            config,
        })
    }
}

impl RewardModel for ClassifierAccuracyReward<'_> {
    fn name(&self) -> &str {
        "classifier-accuracy"
    }

    fn evaluate(&self, state: FocalState) -> Result<Scored> {
        let model = train_classifier(&self.fit, self.rs_map, state, &self.arch, &self.config)?;
        Ok(Scored {
            reward: model.evaluate(&self.holdout)?.accuracy,
            silhouette: None,
        })
    }
}

struct ClassifierAccuracyFactory;

impl RewardFactory for ClassifierAccuracyFactory {
    fn build<'a>(&self, ctx: &SelectionContext<'a>) -> Result<Box<dyn RewardModel + 'a>> {
        Ok(Box::new(ClassifierAccuracyReward::new(
            ctx.train,
            ctx.rs_map,
            ctx.arch,
            ctx.train_config,
        )?))
    }
}

pub fn reward_registry() -> Registry<dyn RewardFactory> {
    let mut r: Registry<dyn RewardFactory> = Registry::new("reward");
    r.register("ar-silhouette", Box::new(ArSilhouetteFactory));
    r.register("classifier-accuracy", Box::new(ClassifierAccuracyFactory));
    r
}

struct SamSelector;

impl FocalSelector for SamSelector {
    fn select(
        &self,
        ctx: &SelectionContext<'_>,
        rewards: &Registry<dyn RewardFactory>,
        reward_name: &str,
    ) -> Result<Selection> {
        let reward = rewards.get(reward_name)?.build(ctx)?;
        let out = optimize_focal_zone(ctx.rs_map.k_prime(), &ctx.sam, reward.as_ref())?;
        Ok(Selection {
            state: out.best_state,
            reward: Some(out.best_reward),
            history: out.history,
        })
    }
}

fn checked_length(ctx: &SelectionContext<'_>) -> Result<usize> {
    let kp = ctx.rs_map.k_prime();
    if ctx.length < 2 || ctx.length > kp {
        return Err(Error::validation(format!("focal length {} outside [2, {kp}]", ctx.length)));
    }
    Ok(ctx.length)
}

/// Seeded uniformly placed window of the requested length.
pub fn random_window(k_prime: usize, length: usize, seed: u64) -> Result<FocalState> {
    if length == 0 || length > k_prime {
        return Err(Error::validation(format!("focal length {length} outside [1, {k_prime}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.random_range(0..=k_prime - length);
    FocalState::new(start, start + length)
}

pub fn center_window(k_prime: usize, length: usize) -> Result<FocalState> {
    if length == 0 || length > k_prime {
        return Err(Error::validation(format!("focal length {length} outside [1, {k_prime}]")));
    }
    let start = (k_prime - length) / 2;
    FocalState::new(start, start + length)
}

struct RandomSelector;

impl FocalSelector for RandomSelector {
    fn select(&self, ctx: &SelectionContext<'_>, _: &Registry<dyn RewardFactory>, _: &str) -> Result<Selection> {
        Ok(Selection {
            state: random_window(ctx.rs_map.k_prime(), checked_length(ctx)?, ctx.seed)?,
            reward: None,
            history: Vec::new(),
        })
    }
}

struct CenterSelector;

impl FocalSelector for CenterSelector {
    fn select(&self, ctx: &SelectionContext<'_>, _: &Registry<dyn RewardFactory>, _: &str) -> Result<Selection> {
        Ok(Selection {
            state: center_window(ctx.rs_map.k_prime(), checked_length(ctx)?)?,
            reward: None,
            history: Vec::new(),
        })
    }
}

struct FullSelector;

impl FocalSelector for FullSelector {
    fn select(&self, ctx: &SelectionContext<'_>, _: &Registry<dyn RewardFactory>, _: &str) -> Result<Selection> {
        Ok(Selection {
            state: FocalState::new(0, ctx.rs_map.k_prime())?,
            reward: None,
            history: Vec::new(),
        })
    }
}

pub fn selector_registry() -> Registry<dyn FocalSelector> {
    let mut r: Registry<dyn FocalSelector> = Registry::new("focal selector");
    r.register("sam", Box::new(SamSelector));
    r.register("random", Box::new(RandomSelector));
    r.register("center", Box::new(CenterSelector));
    r.register("full", Box::new(FullSelector));
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;

    #[test]
    fn unknown_names_list_alternatives() {
        let err = selector_registry().get("greedy").err().unwrap();
        let msg = err.to_string();
        assert!(msg.contains("greedy") && msg.contains("sam, random, center, full"), "{msg}");
        assert!(reward_registry().get("nope").is_err());
    }

    #[test]
    fn register_replaces_existing() {
        let mut r: Registry<dyn FocalSelector> = Registry::new("x");
        r.register("a", Box::new(CenterSelector));
        r.register("a", Box::new(RandomSelector));
        assert_eq!(r.names(), vec!["a"]);
    }

    #[test]
    fn windows_in_range_and_seeded() {
        for seed in 0..50 {
            let w = random_window(224, 60, seed).unwrap();
            assert_eq!(w.len(), 60);
            assert!(w.end_idx <= 224);
            assert_eq!(w, random_window(224, 60, seed).unwrap());
        }
        assert_eq!(center_window(224, 60).unwrap(), FocalState::new(82, 142).unwrap());
        assert!(random_window(10, 11, 0).is_err());
    }

    #[test]
    fn sam_selector_runs_through_registry() {
        let ds = generate_synthetic(10, 14, 0.1, 1).unwrap();
        let rs = RsMap::new(14, 56, 2).unwrap();
        let ctx = SelectionContext {
            train: &ds,
            rs_map: &rs,
            sam: SamConfig {
                episodes: 2,
                steps: 5,
                initial_length: 32,
                ..SamConfig::default()
            },
            reward: ArRewardConfig::default(),
            arch: ClassifierArch::default(),
            train_config: TrainConfig::default(),
            length: 32,
            seed: 0,
        };
        let sel = selector_registry()
            .get("sam")
            .unwrap()
            .select(&ctx, &reward_registry(), "ar-silhouette")
            .unwrap();
        assert_eq!(sel.history.len(), 10);
        assert!(sel.reward.is_some());
    }
}
