use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{collect_rollouts, compute_advantages, ppo_loss, HyperParams, LossStats, Minibatch, PpoError, RolloutBatch, RolloutWorker};
use crate::agents::{run_episode, Agent};
use crate::env::{EnvConfig, MarketEpisode, MarketView, Mode, Observation, TradingEnv};
use crate::nn::{ActorCritic, ActorCriticSpec, Adam};
use crate::rng::{derive_seed, rng_for, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hp: HyperParams,
    pub net: ActorCriticSpec,
    pub env: EnvConfig,
    pub iterations: usize,
    /// Validation profit is measured every this many iterations (and at the last one).
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hp: HyperParams::default(),
            net: ActorCriticSpec::default(),
            env: EnvConfig::default(),
            iterations: 200,
            eval_every: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub loss: LossStats,
    pub minibatches: usize,
    /// Largest |τ − 1| seen in the first minibatch of the first epoch.
    pub first_ratio_deviation: f64,
}

/// One PPO update: `sgd_epochs` shuffled passes over the batch in minibatches
/// of `hp.minibatch`, one optimizer step per minibatch.
pub fn ppo_update(net: &mut ActorCritic, opt: &mut Adam, batch: &RolloutBatch, hp: &HyperParams, rng: &mut Rng) -> Result<UpdateStats, PpoError> {
    let n = batch.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut acc = LossStats::default();
    let mut count = 0usize;
    let mut first_dev = 0.0;
    opt.lr = hp.lr;
    for epoch in 0..hp.sgd_epochs {
        order.shuffle(rng);
        for (k, idx) in order.chunks(hp.minibatch.min(n).max(1)).enumerate() {
            let mb = Minibatch::gather(batch, idx);
            let out = net.forward(&mb.obs)?;
            let (stats, out_grads) = ppo_loss(&out, &mb, hp);
            if !stats.total.is_finite() {
                return Err(PpoError::NonFiniteLoss { epoch, minibatch: k });
            }
            if epoch == 0 && k == 0 {
                first_dev = out
                    .mean
                    .iter()
                    .zip(&mb.actions)
                    .zip(&mb.log_probs_old)
                    .map(|((&m, &a), &lp)| (crate::nn::gaussian::log_prob(a, m, out.log_std) - lp).exp() - 1.0)
                    .fold(0.0f64, |acc, d| acc.max(d.abs()));
            }
            let mut grads = net.backward(&out_grads)?;
            if let Some(max_norm) = hp.max_grad_norm {
                let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max_norm {
                    let s = max_norm / norm;
                    grads.iter_mut().for_each(|g| *g *= s);
                }
            }
            opt.step(net.params_mut(), &grads)?;
            acc.total += stats.total;
            acc.policy_loss += stats.policy_loss;
            acc.vf_loss += stats.vf_loss;
            acc.kl += stats.kl;
            acc.entropy += stats.entropy;
            acc.clip_frac += stats.clip_frac;
            acc.mean_ratio += stats.mean_ratio;
            count += 1;
        }
    }
    let c = count.max(1) as f64;
    let loss = LossStats {
        total: acc.total / c,
        policy_loss: acc.policy_loss / c,
        vf_loss: acc.vf_loss / c,
        kl: acc.kl / c,
        entropy: acc.entropy / c,
        clip_frac: acc.clip_frac / c,
        mean_ratio: acc.mean_ratio / c,
    };
    Ok(UpdateStats { loss, minibatches: count, first_ratio_deviation: first_dev })
}

/// The trained policy as an agent. Acts with the Gaussian mean unless a
/// sampling seed is given.
#[derive(Debug, Clone)]
pub struct PolicyAgent {
    net: ActorCritic,
    sampling: Option<(u64, Rng)>,
}

impl PolicyAgent {
    pub fn deterministic(net: ActorCritic) -> Self {
        Self { net, sampling: None }
    }

    pub fn stochastic(net: ActorCritic, seed: u64) -> Self {
        Self { net, sampling: Some((seed, rng_for(seed, 0))) }
    }

    pub fn net(&self) -> &ActorCritic {
        &self.net
    }
}

impl Agent for PolicyAgent {
    fn name(&self) -> &str {
        "agent"
    }

    fn reset(&mut self, episode_seed: u64) {
        if let Some((seed, rng)) = &mut self.sampling {
            *rng = rng_for(*seed, episode_seed);
        }
    }

    fn act(&mut self, obs: &Observation, _: &MarketView) -> f64 {
        let (mean, log_std, _) = self.net.infer(obs.as_slice()).expect("finite observation");
        match &mut self.sampling {
            None => mean,
            Some((_, rng)) => {
                use rand::Rng as _;
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                mean + log_std.exp() * z
            }
        }
    }
}

/// Mean evaluation-mode profit of the deterministic policy.
pub fn evaluate_policy(net: &ActorCritic, episodes: &[Arc<MarketEpisode>], env: &EnvConfig) -> Result<f64, PpoError> {
    if episodes.is_empty() {
        return Err(PpoError::NoEpisodes);
    }
    let run = |ep: &Arc<MarketEpisode>| -> Result<f64, PpoError> {
        let mut e = TradingEnv::new(*env);
        let mut agent = PolicyAgent::deterministic(net.clone());
        Ok(run_episode(&mut e, &mut agent, ep.clone(), Mode::Evaluation, 0)?.profit)
    };
    #[cfg(feature = "parallel")]
    let profits: Vec<Result<f64, PpoError>> = {
        use rayon::prelude::*;
        episodes.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let profits: Vec<Result<f64, PpoError>> = episodes.iter().map(run).collect();
    let mut total = 0.0;
    for p in profits {
        total += p?;
    }
    Ok(total / episodes.len() as f64)
}

pub const LEARNING_CURVE_HEADER: &str = "iter,mean_profit,policy_loss,vf_loss,kl,entropy,clip_frac";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationLog {
    pub iter: usize,
    /// Mean validation profit; NaN when not evaluated this iteration.
    pub mean_profit: f64,
    pub policy_loss: f64,
    pub vf_loss: f64,
    pub kl: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    /// Mean training-mode episode reward of the rollout batch.
    pub train_reward: f64,
}

impl IterationLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.iter, self.mean_profit, self.policy_loss, self.vf_loss, self.kl, self.entropy, self.clip_frac
        )
    }
}

/// PPO learner: owns the network, the optimizer and the rollout workers.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    net: ActorCritic,
    opt: Adam,
    workers: Vec<RolloutWorker>,
    validation: Vec<Arc<MarketEpisode>>,
    rng: Rng,
    iteration: usize,
    best: Option<(f64, ActorCritic)>,
}

impl Trainer {
    pub fn new(config: TrainConfig, train: Vec<Arc<MarketEpisode>>, validation: Vec<Arc<MarketEpisode>>) -> Result<Self, PpoError> {
        config.hp.validate()?;
        if train.is_empty() {
            return Err(PpoError::NoEpisodes);
        }
        let net_spec = ActorCriticSpec { seed: derive_seed(config.seed, 1), ..config.net.clone() };
        let net = ActorCritic::new(net_spec);
        let opt = Adam::new(net.param_count(), config.hp.lr);
        let train = Arc::new(train);
        let workers = (0..config.hp.num_workers)
            .map(|i| {
                RolloutWorker::new(config.env, train.clone(), derive_seed(config.seed, 2), i as u64)
                    .with_shaping(config.hp.reward_shaping, config.hp.gamma)
            })
            .collect();
        let rng = rng_for(config.seed, 3);
        Ok(Self { config, net, opt, workers, validation, rng, iteration: 0, best: None })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn net(&self) -> &ActorCritic {
        &self.net
    }

    pub fn optimizer(&self) -> &Adam {
        &self.opt
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Highest validation profit seen so far and the weights that produced it.
    pub fn best(&self) -> Option<(f64, &ActorCritic)> {
        self.best.as_ref().map(|(p, n)| (*p, n))
    }

    /// Best validated network, or the current one before any validation.
    pub fn best_net(&self) -> &ActorCritic {
        self.best.as_ref().map_or(&self.net, |(_, n)| n)
    }

    /// Replaces the hyperparameters used by following iterations. Batch
    /// geometry and worker count stay as constructed.
    pub fn set_hyperparams(&mut self, hp: HyperParams) -> Result<(), PpoError> {
        hp.validate()?;
        self.opt.lr = hp.lr;
        for w in &mut self.workers {
            w.set_shaping(hp.reward_shaping, hp.gamma);
        }
        self.config.hp = HyperParams { train_batch: self.config.hp.train_batch, num_workers: self.config.hp.num_workers, ..hp };
        Ok(())
    }

    /// Copies network weights and optimizer state from another trainer; the
    /// iteration counter, hyperparameters and workers stay.
    pub fn load_state_from(&mut self, other: &Trainer) {
        self.net = other.net.clone();
        self.opt = other.opt.clone();
        self.opt.lr = self.config.hp.lr;
    }

    pub fn validation_profit(&self) -> Result<f64, PpoError> {
        evaluate_policy(&self.net, &self.validation, &self.config.env)
    }

    /// Collect → advantages → update.
    pub fn iterate(&mut self) -> Result<IterationLog, PpoError> {
        let hp = self.config.hp.clone();
        let mut batch = collect_rollouts(&self.net, &mut self.workers, hp.train_batch)?;
        compute_advantages(&mut batch, hp.gamma, hp.gae_lambda);
        let stats = ppo_update(&mut self.net, &mut self.opt, &batch, &hp, &mut self.rng)?;
        self.iteration += 1;
        let eval_now = !self.validation.is_empty()
            && (self.iteration % self.config.eval_every.max(1) == 0 || self.iteration == self.config.iterations);
        let mean_profit = if eval_now { self.validation_profit()? } else { f64::NAN };
        if eval_now && self.best.as_ref().is_none_or(|(b, _)| mean_profit > *b) {
            self.best = Some((mean_profit, self.net.clone()));
        }
        let train_reward = if batch.episode_rewards.is_empty() {
            f64::NAN
        } else {
            batch.episode_rewards.iter().sum::<f64>() / batch.episode_rewards.len() as f64
        };
        Ok(IterationLog {
            iter: self.iteration,
            mean_profit,
            policy_loss: stats.loss.policy_loss,
            vf_loss: stats.loss.vf_loss,
            kl: stats.loss.kl,
            entropy: stats.loss.entropy,
            clip_frac: stats.loss.clip_frac,
            train_reward,
        })
    }

    /// Runs the configured number of iterations, calling `on_iteration` after each.
    pub fn train(&mut self, mut on_iteration: impl FnMut(&IterationLog, &ActorCritic)) -> Result<Vec<IterationLog>, PpoError> {
        let mut logs = Vec::with_capacity(self.config.iterations);
        while self.iteration < self.config.iterations {
            let log = self.iterate()?;
            on_iteration(&log, &self.net);
            logs.push(log);
        }
        Ok(logs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_market, SyntheticConfig};

    fn episodes(n: usize, seed: u64) -> Vec<Arc<MarketEpisode>> {
        generate_market(&SyntheticConfig { n_products: n, seed, ..Default::default() })
            .unwrap()
            .into_iter()
            .map(Arc::new)
            .collect()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            hp: HyperParams { train_batch: 422, minibatch: 211, num_workers: 2, sgd_epochs: 2, ..Default::default() },
            net: ActorCriticSpec { hidden: vec![16, 8], ..Default::default() },
            iterations: 2,
            ..Default::default()
        }
    }

    #[test]
    fn first_minibatch_uses_behavior_policy() {
        let mut t = Trainer::new(small_config(), episodes(4, 1), vec![]).unwrap();
        let hp = t.config.hp.clone();
        let mut batch = collect_rollouts(&t.net, &mut t.workers, hp.train_batch).unwrap();
        compute_advantages(&mut batch, hp.gamma, hp.gae_lambda);
        let stats = ppo_update(&mut t.net, &mut t.opt, &batch, &hp, &mut t.rng).unwrap();
        assert!(stats.first_ratio_deviation < 1e-12);
        assert_eq!(stats.minibatches, 4);
        assert!((0.0..=1.0).contains(&stats.loss.clip_frac));
    }

    #[test]
    fn training_is_deterministic_and_logs_every_iteration() {
        let cfg = small_config();
        let mut a = Trainer::new(cfg.clone(), episodes(4, 1), episodes(2, 9)).unwrap();
        let mut b = Trainer::new(cfg, episodes(4, 1), episodes(2, 9)).unwrap();
        let la = a.train(|_, _| {}).unwrap();
        let lb = b.train(|_, _| {}).unwrap();
        assert_eq!(la.len(), 2);
        assert_eq!(la, lb);
        assert_eq!(a.net().params(), b.net().params());
        assert!(la.iter().all(|l| l.mean_profit.is_finite()));
        let best = la.iter().map(|l| l.mean_profit).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.best().unwrap().0, best);
        assert_eq!(a.validation_profit().unwrap(), la[1].mean_profit);
    }

    #[test]
    fn checkpoint_reload_reproduces_profit() {
        let mut t = Trainer::new(small_config(), episodes(4, 1), vec![]).unwrap();
        t.train(|_, _| {}).unwrap();
        let val = episodes(3, 5);
        let before = evaluate_policy(t.net(), &val, &t.config.env).unwrap();
        let reloaded = ActorCritic::load_json(&t.net().save_json()).unwrap();
        assert_eq!(evaluate_policy(&reloaded, &val, &t.config.env).unwrap(), before);
    }

    #[test]
    fn csv_row_matches_header() {
        let log = IterationLog { iter: 3, mean_profit: 1.5, policy_loss: 0.1, vf_loss: 2.0, kl: 0.01, entropy: 0.4, clip_frac: 0.2, train_reward: 0.0 };
        assert_eq!(log.csv_row().split(',').count(), LEARNING_CURVE_HEADER.split(',').count());
        assert!(log.csv_row().starts_with("3,1.5,"));
    }
}
