//! Experiment configuration.
//!
//! One TOML file with a section per stage. A single global seed drives the
//! whole run; stage seeds are derived from it by stable hashing, so the
//! `seed` fields inside the `[sft]` and `[grpo]` sections are ignored when
//! those stages run as part of a configured pipeline. Unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Decode;
use crate::grpo::GrpoConfig;
use crate::reward::RewardWeights;
use crate::sft::SftConfig;
use crate::tasks::DEFAULT_ACTIVITY_CLASSES;

/// Synthetic data generation parameters: grid shapes, dataset sizes, and the
/// feature noise amplitude shared by every generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub noise: f64,
    pub temporal_bins: usize,
    pub horizon: f64,
    pub box_grid: usize,
    pub box_size: f64,
    pub match_k: usize,
    pub activity_classes: Vec<String>,
    pub train_temporal: usize,
    pub train_box: usize,
    pub train_match: usize,
    pub train_activity: usize,
    /// Extra always-solved samples mixed into the training set (difficulty-
    /// filter stress; 0 by default).
    pub train_trivial: usize,
    /// Extra never-solved samples mixed into the training set.
    pub train_unsolvable: usize,
    pub demos_per_kind: usize,
    pub eval_per_kind: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            noise: 0.05,
            temporal_bins: 10,
            horizon: 10.0,
            box_grid: 5,
            box_size: 0.2,
            match_k: 4,
            activity_classes: DEFAULT_ACTIVITY_CLASSES.map(String::from).to_vec(),
            train_temporal: 500,
            train_box: 200,
            train_match: 200,
            train_activity: 200,
            train_trivial: 0,
            train_unsolvable: 0,
            demos_per_kind: 200,
            eval_per_kind: 200,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temporal_bins < 2 {
            return Err(Error::Config("temporal_bins must be >= 2".into()));
        }
        if self.horizon <= 0.0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.box_grid < 2 || !(0.0..1.0).contains(&self.box_size) || self.box_size <= 0.0 {
            return Err(Error::Config(
                "box_grid must be >= 2 and box_size in (0, 1)".into(),
            ));
        }
        if self.match_k < 2 || self.activity_classes.len() < 2 {
            return Err(Error::Config(
                "match_k and activity class count must be >= 2".into(),
            ));
        }
        if self.noise < 0.0 {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        let train_total = self.train_temporal
            + self.train_box
            + self.train_match
            + self.train_activity
            + self.train_trivial
            + self.train_unsolvable;
        if train_total == 0 || self.demos_per_kind == 0 || self.eval_per_kind == 0 {
            return Err(Error::Config(
                "train, demo, and eval sample counts must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Difficulty-filter band and probe rollout count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub group_size: usize,
    pub lo: f64,
    pub hi: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            lo: 0.05,
            hi: 0.95,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 {
            return Err(Error::Config("filter group_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lo) || !(0.0..=1.0).contains(&self.hi) || self.lo >= self.hi
        {
            return Err(Error::Config(format!(
                "filter thresholds must satisfy 0 <= lo < hi <= 1, got ({}, {})",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Evaluation stage settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub decode: Decode,
}

/// The full experiment: all stage parameters plus the global seed and the
/// output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: String,
    pub reward: RewardWeights,
    pub gen: GenConfig,
    pub sft: SftConfig,
    pub filter: FilterConfig,
    pub grpo: GrpoConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: "runs/default".into(),
            reward: RewardWeights::default(),
            gen: GenConfig::default(),
            sft: SftConfig::default(),
            filter: FilterConfig::default(),
            grpo: GrpoConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(format!(
                "config file {} not found",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        self.gen.validate()?;
        self.sft.validate()?;
        self.filter.validate()?;
        self.grpo.validate()?;
        if self.out_dir.is_empty() {
            return Err(Error::Config("out_dir must not be empty".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }
}
