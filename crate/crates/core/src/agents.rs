//! Agent interface and the four rule-based baselines.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::env::{episode_profit, EnvError, MarketEpisode, MarketView, Mode, Observation, TradeRecord, TradingEnv};
use crate::rng::{rng_for, Rng};

/// Volume changes below this are not counted as trades.
pub const TRADE_EPS: f64 = 1e-9;

pub trait Agent {
    fn name(&self) -> &str;
    /// Clears per-episode memory. Stochastic agents reseed from `episode_seed`.
    fn reset(&mut self, episode_seed: u64);
    /// Target volume for the current minute, nominally in [0, 1].
    fn act(&mut self, obs: &Observation, view: &MarketView) -> f64;
}

impl<A: Agent + ?Sized> Agent for Box<A> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn reset(&mut self, episode_seed: u64) {
        (**self).reset(episode_seed)
    }
    fn act(&mut self, obs: &Observation, view: &MarketView) -> f64 {
        (**self).act(obs, view)
    }
}

/// Sells the first wind forecast at t = 0 and holds.
#[derive(Debug, Clone, Default)]
pub struct FirstForecast;

impl Agent for FirstForecast {
    fn name(&self) -> &str {
        "bl_first"
    }
    fn reset(&mut self, _: u64) {}
    fn act(&mut self, _: &Observation, view: &MarketView) -> f64 {
        if view.t == 0 {
            view.wind
        } else {
            view.volume
        }
    }
}

/// Tracks the wind forecast exactly.
#[derive(Debug, Clone, Default)]
pub struct WindFollower;

impl Agent for WindFollower {
    fn name(&self) -> &str {
        "bl_wf"
    }
    fn reset(&mut self, _: u64) {}
    fn act(&mut self, _: &Observation, view: &MarketView) -> f64 {
        view.wind
    }
}

/// Sells a fixed increment when price stood above its 5-minute forecast for
/// two consecutive minutes (a fall is expected) and buys it back when it
/// stood below for two minutes.
#[derive(Debug, Clone)]
pub struct PriceForecast {
    pub increment: f64,
}

impl Default for PriceForecast {
    fn default() -> Self {
        Self { increment: 0.1 }
    }
}

impl PriceForecast {
    /// The decision rule on its own: next volume from the current one.
    pub fn rule(&self, t: usize, volume: f64, d_t: f64, d_prev: f64) -> f64 {
        if t == 0 {
            volume
        } else if d_t > 0.0 && d_prev > 0.0 {
            (volume + self.increment).min(1.0)
        } else if d_t < 0.0 && d_prev < 0.0 {
            (volume - self.increment).max(0.0)
        } else {
            volume
        }
    }
}

impl Agent for PriceForecast {
    fn name(&self) -> &str {
        "bl_pf"
    }
    fn reset(&mut self, _: u64) {}
    fn act(&mut self, _: &Observation, view: &MarketView) -> f64 {
        self.rule(view.t, view.volume, view.diff(), view.prev_diff())
    }
}

/// With probability `prob` draws a new volume from N(η_t, σ²), clamped to
/// [0, 1]; otherwise holds.
#[derive(Debug, Clone)]
pub struct RandomTrader {
    pub prob: f64,
    pub sigma: f64,
    seed: u64,
    rng: Rng,
    resamples: u64,
}

impl RandomTrader {
    pub fn new(sigma: f64, seed: u64) -> Self {
        Self { prob: 0.25, sigma: sigma.max(0.0), seed, rng: rng_for(seed, 0), resamples: 0 }
    }

    /// Number of fresh draws since construction.
    pub fn resamples(&self) -> u64 {
        self.resamples
    }

    pub fn sample(&mut self, wind: f64, volume: f64) -> f64 {
        if self.rng.random::<f64>() < self.prob {
            self.resamples += 1;
            let draw = if self.sigma > 0.0 {
                Normal::new(wind, self.sigma).expect("finite sigma").sample(&mut self.rng)
            } else {
                wind
            };
            draw.clamp(0.0, 1.0)
        } else {
            volume
        }
    }
}

impl Agent for RandomTrader {
    fn name(&self) -> &str {
        "bl_random"
    }
    fn reset(&mut self, episode_seed: u64) {
        self.rng = rng_for(self.seed, episode_seed);
    }
    fn act(&mut self, _: &Observation, view: &MarketView) -> f64 {
        self.sample(view.wind, view.volume)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub records: Vec<TradeRecord>,
    pub profit: f64,
    /// Steps with a volume change, forced correction excluded.
    pub action_steps: usize,
    /// Sum of rewards returned by the environment.
    pub total_reward: f64,
}

pub fn count_action_steps(records: &[TradeRecord]) -> usize {
    records.iter().filter(|r| !r.forced && r.delta_v.abs() > TRADE_EPS).count()
}

/// Runs `agent` over one full episode.
pub fn run_episode<A: Agent + ?Sized>(
    env: &mut TradingEnv,
    agent: &mut A,
    episode: Arc<MarketEpisode>,
    mode: Mode,
    episode_seed: u64,
) -> Result<EpisodeResult, EnvError> {
    agent.reset(episode_seed);
    let mut obs = env.reset(episode, mode)?;
    let mut total_reward = 0.0;
    loop {
        let view = env.view()?;
        let a = agent.act(&obs, &view);
        let step = env.step(a)?;
        total_reward += step.reward;
        obs = step.observation;
        if step.done {
            break;
        }
    }
    let records = env.trade_log().to_vec();
    Ok(EpisodeResult {
        profit: episode_profit(&records)?,
        action_steps: count_action_steps(&records),
        records,
        total_reward,
    })
}

/// Builds a baseline by its report name.
pub fn baseline(name: &str, wind_std: f64, seed: u64) -> Option<Box<dyn Agent + Send>> {
    match name {
        "bl_first" => Some(Box::new(FirstForecast)),
        "bl_wf" => Some(Box::new(WindFollower)),
        "bl_pf" => Some(Box::new(PriceForecast::default())),
        "bl_random" => Some(Box::new(RandomTrader::new(wind_std, seed))),
        _ => None,
    }
}
