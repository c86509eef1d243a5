use std::sync::Arc;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{PpoError, RewardShaping};
use crate::env::{EnvConfig, MarketEpisode, Mode, Observation, TradingEnv, OBS_DIM};
use crate::nn::{gaussian, ActorCritic};
use crate::rng::{rng_for, Rng};

/// Transitions collected under one behavior policy.
///
/// Segments from different workers are concatenated in worker order. A
/// segment that stops mid-episode carries the value of its next state in
/// `bootstrap` at its last index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub obs: Vec<[f64; OBS_DIM]>,
    /// Unclamped action samples.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub means: Vec<f64>,
    pub log_stds: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub bootstrap: Vec<Option<f64>>,
    /// Normalized advantages (filled by `compute_advantages`).
    pub advantages: Vec<f64>,
    pub raw_advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Total reward of every episode finished during collection.
    pub episode_rewards: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    fn append(&mut self, other: RolloutBatch) {
        self.obs.extend(other.obs);
        self.actions.extend(other.actions);
        self.log_probs.extend(other.log_probs);
        self.means.extend(other.means);
        self.log_stds.extend(other.log_stds);
        self.rewards.extend(other.rewards);
        self.values.extend(other.values);
        self.dones.extend(other.dones);
        self.bootstrap.extend(other.bootstrap);
        self.episode_rewards.extend(other.episode_rewards);
    }
}

/// One actor: a private environment over randomly sampled training products.
#[derive(Debug, Clone)]
pub struct RolloutWorker {
    env: TradingEnv,
    episodes: Arc<Vec<Arc<MarketEpisode>>>,
    rng: Rng,
    obs: Option<Observation>,
    episode_reward: f64,
    shaping: RewardShaping,
    gamma: f64,
}

impl RolloutWorker {
    pub fn new(env_config: EnvConfig, episodes: Arc<Vec<Arc<MarketEpisode>>>, seed: u64, worker: u64) -> Self {
        Self { env: TradingEnv::new(env_config), episodes, rng: rng_for(seed, worker), obs: None, episode_reward: 0.0, shaping: RewardShaping::None, gamma: 1.0 }
    }

    /// Shaped rewards are stored in the batch; `episode_rewards` stay raw.
    pub fn with_shaping(mut self, shaping: RewardShaping, gamma: f64) -> Self {
        self.set_shaping(shaping, gamma);
        self
    }

    pub fn set_shaping(&mut self, shaping: RewardShaping, gamma: f64) {
        self.shaping = shaping;
        self.gamma = gamma;
    }

    fn potential(&self) -> Result<f64, PpoError> {
        Ok(match self.shaping {
            RewardShaping::None => 0.0,
            RewardShaping::MarkToMarket => {
                let v = self.env.view()?;
                -v.price * v.volume
            }
        })
    }

    pub fn env(&self) -> &TradingEnv {
        &self.env
    }

    fn start_episode(&mut self) -> Result<Observation, PpoError> {
        if self.episodes.is_empty() {
            return Err(PpoError::NoEpisodes);
        }
        let idx = self.rng.random_range(0..self.episodes.len());
        self.episode_reward = 0.0;
        Ok(self.env.reset(self.episodes[idx].clone(), Mode::Training)?)
    }

    /// Runs `n_steps` transitions under `policy`.
    pub fn collect(&mut self, policy: &ActorCritic, n_steps: usize) -> Result<RolloutBatch, PpoError> {
        let mut b = RolloutBatch::default();
        for i in 0..n_steps {
            let obs = match self.obs.take() {
                Some(o) => o,
                None => self.start_episode()?,
            };
            let (mean, log_std, value) = policy.infer(obs.as_slice())?;
            let z: f64 = self.rng.sample(StandardNormal);
            let action = mean + log_std.exp() * z;
            let phi = self.potential()?;
            let step = self.env.step(action)?;
            self.episode_reward += step.reward;
            let phi_next = if step.done { 0.0 } else { self.potential()? };

            b.obs.push(obs.0);
            b.actions.push(action);
            b.log_probs.push(gaussian::log_prob(action, mean, log_std));
            b.means.push(mean);
            b.log_stds.push(log_std);
            b.rewards.push(step.reward + self.gamma * phi_next - phi);
            b.values.push(value);
            b.dones.push(step.done);

            let last = i + 1 == n_steps;
            if step.done {
                b.episode_rewards.push(self.episode_reward);
                b.bootstrap.push(None);
            } else {
                if last {
                    b.bootstrap.push(Some(policy.infer(step.observation.as_slice())?.2));
                } else {
                    b.bootstrap.push(None);
                }
                self.obs = Some(step.observation);
            }
        }
        Ok(b)
    }
}

/// Collects exactly `n_steps` transitions, split as evenly as possible across
/// `workers` (earlier workers take the remainder). Workers run concurrently on
/// the shared immutable policy; output order is by worker index.
pub fn collect_rollouts(policy: &ActorCritic, workers: &mut [RolloutWorker], n_steps: usize) -> Result<RolloutBatch, PpoError> {
    if workers.is_empty() {
        return Err(PpoError::InvalidHyperParams("no rollout workers".into()));
    }
    let n = workers.len();
    let quota = |i: usize| n_steps / n + usize::from(i < n_steps % n);

    #[cfg(feature = "parallel")]
    let parts: Vec<Result<RolloutBatch, PpoError>> = {
        use rayon::prelude::*;
        workers.par_iter_mut().enumerate().map(|(i, w)| w.collect(policy, quota(i))).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<RolloutBatch, PpoError>> =
        workers.iter_mut().enumerate().map(|(i, w)| w.collect(policy, quota(i))).collect();

    let mut batch = RolloutBatch::default();
    for p in parts {
        batch.append(p?);
    }
    Ok(batch)
}
