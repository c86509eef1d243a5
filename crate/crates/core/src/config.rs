//! Run configuration: one TOML file covering data, market generation,
//! environment, network, PPO, PBT and evaluation settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, NormStats, DEFAULT_FEE};
use crate::io::{read_toml, IoError};
use crate::nn::ActorCriticSpec;
use crate::pbt::{PbtConfig, SearchSpace};
use crate::ppo::{HyperParams, TrainConfig};
use crate::synthetic::SyntheticConfig;

/// Overrides `output_dir` when set.
pub const OUTPUT_ROOT_ENV: &str = "IDTRADE_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset directory read by `train`, `tune` and `evaluate`.
    pub dir: PathBuf,
    pub ticks: Option<PathBuf>,
    pub day_ahead: Option<PathBuf>,
    pub forecasts: Option<PathBuf>,
    /// Products delivering from this instant on form the test set.
    pub test_after: Option<String>,
    /// Used when `test_after` is unset.
    pub test_fraction: f64,
    pub outlier_lower: f64,
    pub outlier_upper: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            ticks: None,
            day_ahead: None,
            forecasts: None,
            test_after: None,
            test_fraction: 0.2,
            outlier_lower: -50.0,
            outlier_upper: 150.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub fee: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self { fee: DEFAULT_FEE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: usize,
    pub eval_every: usize,
    /// Write `checkpoint_<iter>.json` every this many iterations; 0 disables.
    pub checkpoint_every: usize,
    /// Chronological tail of the training products held out for validation.
    pub validation_fraction: f64,
    /// Save the best-validation weights as the final policy instead of the last iterate.
    pub keep_best: bool,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self { iterations: 200, eval_every: 1, checkpoint_every: 50, validation_fraction: 0.2, keep_best: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub agents: Vec<String>,
    pub seed: u64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { agents: ["agent", "bl_first", "bl_wf", "bl_pf", "bl_random"].map(String::from).to_vec(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub synthetic: SyntheticConfig,
    pub env: EnvSection,
    pub net: ActorCriticSpec,
    pub ppo: HyperParams,
    pub train: TrainSection,
    pub pbt: PbtConfig,
    pub search: SearchSpace,
    pub evaluate: EvaluateSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let cfg: Self = read_toml(path)?;
        cfg.validate().map_err(|msg| IoError::Format { path: path.to_path_buf(), msg })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.ppo.validate().map_err(|e| e.to_string())?;
        self.synthetic.validate().map_err(|e| e.to_string())?;
        self.pbt.validate()?;
        self.search.validate()?;
        if !(self.data.test_fraction > 0.0 && self.data.test_fraction < 1.0) {
            return Err("data.test_fraction must lie in (0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.train.validation_fraction) {
            return Err("train.validation_fraction must lie in [0, 1)".into());
        }
        if !(self.env.fee >= 0.0) {
            return Err("env.fee must be non-negative".into());
        }
        Ok(())
    }

    /// `output_dir`, or the value of [`OUTPUT_ROOT_ENV`] when set.
    pub fn output_root(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }

    pub fn env_config(&self, stats: NormStats) -> EnvConfig {
        EnvConfig { fee: self.env.fee, stats }
    }

    pub fn train_config(&self, stats: NormStats) -> TrainConfig {
        TrainConfig {
            hp: self.ppo.clone(),
            net: self.net.clone(),
            env: self.env_config(stats),
            iterations: self.train.iterations,
            eval_every: self.train.eval_every,
            seed: self.train.seed,
        }
    }
}
