//! Proximal policy optimization: parallel rollouts, generalized advantage
//! estimation, and the clipped surrogate loss with KL, value-clip and
//! entropy terms.

mod advantage;
mod loss;
mod rollout;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use advantage::{compute_advantages, normalize};
pub use loss::{clipped_surrogate, ppo_loss, vanilla_pg_loss, LossStats, Minibatch};
pub use rollout::{collect_rollouts, RolloutBatch, RolloutWorker};
pub use trainer::{evaluate_policy, ppo_update, IterationLog, PolicyAgent, TrainConfig, Trainer, UpdateStats, LEARNING_CURVE_HEADER};

use crate::env::EnvError;
use crate::nn::NnError;

#[derive(Debug, Error, PartialEq)]
pub enum PpoError {
    #[error("non-finite loss in epoch {epoch}, minibatch {minibatch}")]
    NonFiniteLoss { epoch: usize, minibatch: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("no training episodes")]
    NoEpisodes,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// PPO hyperparameters. Defaults are the tuned values of the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub clip: f64,
    pub entropy_coef: f64,
    pub gamma: f64,
    pub kl_coef: f64,
    pub lr: f64,
    pub sgd_epochs: usize,
    pub minibatch: usize,
    pub train_batch: usize,
    pub vf_clip: f64,
    pub vf_loss_coef: f64,
    pub gae_lambda: f64,
    /// Parallel rollout actors.
    pub num_workers: usize,
    /// Global gradient-norm cap; none by default.
    pub max_grad_norm: Option<f64>,
    pub reward_shaping: RewardShaping,
}

/// Potential-based shaping applied to training rewards before advantage
/// estimation: `r + γ·Φ(s′) − Φ(s)` with `Φ = 0` at episode end.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardShaping {
    #[default]
    None,
    /// `Φ(s_t) = −p_t·a_{t−1}`: with γ = 1 the shaped reward is the
    /// mark-to-market change `a_t·(p_t − p_{t+1})` minus fees.
    MarkToMarket,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            clip: 0.432,
            entropy_coef: 0.001433,
            gamma: 0.0,
            kl_coef: 0.5,
            lr: 1e-4,
            sgd_epochs: 7,
            minibatch: 422,
            train_batch: 2532,
            vf_clip: 10.0,
            vf_loss_coef: 0.984103,
            gae_lambda: 1.0,
            num_workers: 12,
            max_grad_norm: None,
            reward_shaping: RewardShaping::None,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: String| Err(PpoError::InvalidHyperParams(m));
        if self.minibatch == 0 || self.train_batch == 0 || self.sgd_epochs == 0 || self.num_workers == 0 {
            return bad("batch sizes, epochs and workers must be positive".into());
        }
        if self.train_batch % self.minibatch != 0 {
            return bad(format!("minibatch {} must divide train_batch {}", self.minibatch, self.train_batch));
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]".into());
        }
        if !(self.clip > 0.0) || !(self.lr > 0.0) || !(self.vf_clip > 0.0) {
            return bad("clip, lr and vf_clip must be positive".into());
        }
        if self.kl_coef < 0.0 || self.entropy_coef < 0.0 || self.vf_loss_coef < 0.0 {
            return bad("loss coefficients must be non-negative".into());
        }
        if matches!(self.max_grad_norm, Some(n) if !(n > 0.0)) {
            return bad("max_grad_norm must be positive".into());
        }
        Ok(())
    }
}
