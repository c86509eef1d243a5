//! Single-product trading environment.
//!
//! One episode covers the [`WINDOW_LEN`] minutes of a product. At step `t`
//! the agent states its target sold volume `a_t` in [0, 1] MWh; the change
//! `Δv = a_t − a_{t−1}` is traded at the minute price `p_t` and charged the
//! transaction fee. The last step (`t = T = 210`) is handled by mode:
//!
//! * training: a penalty `−0.1 (η_T − a_T)²` is added to the reward;
//! * evaluation: the position is forced to `η_T` by a correcting trade at
//!   `p_T` (fee included), so every agent delivers the forecast volume.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::{PriceStats, ProductSeries, WINDOW_LEN};

/// Index of the last step.
pub const T_LAST: usize = WINDOW_LEN - 1;
/// Number of observation features.
pub const OBS_DIM: usize = 12;
pub const DEFAULT_FEE: f64 = 0.2;
/// Coefficient of the terminal volume penalty.
pub const VOLUME_PENALTY: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("incomplete product: {0}")]
    IncompleteProduct(String),
    #[error("episode already finished")]
    EpisodeDone,
    #[error("environment has not been reset")]
    NotReset,
    #[error("incomplete episode: {0}")]
    IncompleteEpisode(String),
}

/// Wind-volume and short-horizon price forecasts aligned with a product window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTrack {
    wind: Vec<f64>,
    price_5min: Vec<f64>,
}

impl ForecastTrack {
    pub fn new(wind: Vec<f64>, price_5min: Vec<f64>) -> Result<Self, EnvError> {
        let track = Self { wind, price_5min };
        track.validate()?;
        Ok(track)
    }

    fn validate(&self) -> Result<(), EnvError> {
        if self.wind.len() != WINDOW_LEN || self.price_5min.len() != WINDOW_LEN {
            return Err(EnvError::IncompleteProduct(format!(
                "forecast lengths {}/{} != {WINDOW_LEN}",
                self.wind.len(),
                self.price_5min.len()
            )));
        }
        if self.wind.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(EnvError::IncompleteProduct("wind forecast outside [0, 1]".into()));
        }
        if self.price_5min.iter().any(|p| !p.is_finite()) {
            return Err(EnvError::IncompleteProduct("non-finite price forecast".into()));
        }
        Ok(())
    }

    pub fn wind(&self) -> &[f64] {
        &self.wind
    }

    pub fn price_5min(&self) -> &[f64] {
        &self.price_5min
    }
}

/// A product's price series together with its forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketEpisode {
    pub series: ProductSeries,
    pub forecast: ForecastTrack,
}

impl MarketEpisode {
    pub fn new(series: ProductSeries, forecast: ForecastTrack) -> Result<Self, EnvError> {
        let ep = Self { series, forecast };
        ep.validate()?;
        Ok(ep)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.series.prices().len() != WINDOW_LEN {
            return Err(EnvError::IncompleteProduct("price series length".into()));
        }
        self.forecast.validate()
    }

    pub fn price(&self, t: usize) -> f64 {
        self.series.prices()[t]
    }

    pub fn wind(&self, t: usize) -> f64 {
        self.forecast.wind[t]
    }

    pub fn price_forecast(&self, t: usize) -> f64 {
        self.forecast.price_5min[t]
    }

    /// Price minus its 5-minute forecast, raw units.
    pub fn diff(&self, t: usize) -> f64 {
        self.price(t) - self.price_forecast(t)
    }
}

/// Normalization constants taken from the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub price_mean: f64,
    pub price_std: f64,
    /// Standard deviation of all training wind-forecast values.
    pub wind_std: f64,
}

impl Default for NormStats {
    fn default() -> Self {
        Self { price_mean: 0.0, price_std: 1.0, wind_std: 0.0 }
    }
}

impl NormStats {
    pub fn from_training(episodes: &[MarketEpisode]) -> Self {
        let prices = PriceStats::from_series(episodes.iter().map(|e| &e.series));
        let winds: Vec<f64> = episodes.iter().flat_map(|e| e.forecast.wind.iter().copied()).collect();
        let wind_std = if winds.is_empty() {
            0.0
        } else {
            let m = winds.iter().sum::<f64>() / winds.len() as f64;
            (winds.iter().map(|w| (w - m) * (w - m)).sum::<f64>() / winds.len() as f64).sqrt()
        };
        Self { price_mean: prices.mean, price_std: prices.std, wind_std }
    }

    fn scale(&self) -> f64 {
        if self.price_std > 1e-12 {
            self.price_std
        } else {
            1.0
        }
    }

    pub fn z_price(&self, p: f64) -> f64 {
        (p - self.price_mean) / self.scale()
    }

    /// Differences of two prices are scaled but not shifted.
    pub fn z_diff(&self, d: f64) -> f64 {
        d / self.scale()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Training,
    Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// EUR per traded MWh.
    pub fee: f64,
    pub stats: NormStats,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { fee: DEFAULT_FEE, stats: NormStats::default() }
    }
}

/// Feature positions inside [`Observation`].
pub mod feature {
    pub const PRICE: usize = 0;
    pub const PREV_PRICE: usize = 1;
    pub const DAY_AHEAD: usize = 2;
    pub const FORECAST: usize = 3;
    pub const DIFF: usize = 4;
    pub const PREV_DIFF: usize = 5;
    pub const PORTFOLIO_PRICE: usize = 6;
    pub const MARKER: usize = 7;
    pub const WIND: usize = 8;
    pub const VOLUME: usize = 9;
    pub const VOL_DIFF: usize = 10;
    pub const TIME_TO_END: usize = 11;
}

/// Normalized 12-feature state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn marker(&self) -> f64 {
        self.0[feature::MARKER]
    }

    pub fn time_to_end(&self) -> f64 {
        self.0[feature::TIME_TO_END]
    }
}

/// Price marker: +1 when price exceeded its forecast in both the current and
/// previous minute, −1 when it was below in both, 0 otherwise.
pub fn price_marker(d_t: f64, d_prev: f64) -> f64 {
    if d_t > 0.0 && d_prev > 0.0 {
        1.0
    } else if d_t < 0.0 && d_prev < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn time_to_end(t: usize) -> f64 {
    1.0 - t as f64 / T_LAST as f64
}

/// Raw (unnormalized) market state for rule-based agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketView {
    pub t: usize,
    pub price: f64,
    pub prev_price: f64,
    pub forecast: f64,
    pub prev_forecast: f64,
    pub wind: f64,
    pub volume: f64,
    pub day_ahead: f64,
    pub portfolio_price: f64,
}

impl MarketView {
    pub fn diff(&self) -> f64 {
        self.price - self.forecast
    }

    pub fn prev_diff(&self) -> f64 {
        self.prev_price - self.prev_forecast
    }
}

/// One executed trade; `forced` marks the evaluation-mode terminal correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub t: usize,
    pub price: f64,
    /// Volume after the trade.
    pub action: f64,
    pub delta_v: f64,
    pub fee: f64,
    /// Reward contribution of this record.
    pub reward: f64,
    pub forced: bool,
}

impl TradeRecord {
    pub fn cash_flow(&self) -> f64 {
        self.price * self.delta_v - self.fee
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub price: f64,
    pub delta_v: f64,
    pub fee: f64,
    pub raw_action: f64,
    pub clamped: bool,
    pub volume_reward: f64,
    pub correction: Option<TradeRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub t: usize,
    pub volume: f64,
    pub portfolio_price: f64,
    pub cash: f64,
    pub fees_paid: f64,
    pub done: bool,
}

impl EnvState {
    fn initial() -> Self {
        Self { t: 0, volume: 0.0, portfolio_price: 0.0, cash: 0.0, fees_paid: 0.0, done: false }
    }
}

/// Cost-basis update of the net sold position.
fn update_portfolio_price(portfolio: f64, volume: f64, price: f64, delta_v: f64) -> f64 {
    let new_volume = volume + delta_v;
    if new_volume <= 0.0 {
        0.0
    } else if delta_v > 0.0 {
        (portfolio * volume + price * delta_v) / new_volume
    } else {
        portfolio
    }
}

#[derive(Debug, Clone)]
pub struct TradingEnv {
    config: EnvConfig,
    episode: Option<Arc<MarketEpisode>>,
    mode: Mode,
    state: EnvState,
    log: Vec<TradeRecord>,
}

impl TradingEnv {
    pub fn new(config: EnvConfig) -> Self {
        Self { config, episode: None, mode: Mode::Training, state: EnvState::initial(), log: Vec::new() }
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn episode(&self) -> Option<&Arc<MarketEpisode>> {
        self.episode.as_ref()
    }

    /// Trade log of the current episode, including a forced correction if any.
    pub fn trade_log(&self) -> &[TradeRecord] {
        &self.log
    }

    pub fn reset(&mut self, episode: Arc<MarketEpisode>, mode: Mode) -> Result<Observation, EnvError> {
        episode.validate()?;
        self.episode = Some(episode);
        self.mode = mode;
        self.state = EnvState::initial();
        self.log.clear();
        self.observe()
    }

    fn ep(&self) -> Result<&MarketEpisode, EnvError> {
        self.episode.as_deref().ok_or(EnvError::NotReset)
    }

    pub fn view(&self) -> Result<MarketView, EnvError> {
        let ep = self.ep()?;
        let t = self.state.t;
        let prev = t.saturating_sub(1);
        Ok(MarketView {
            t,
            price: ep.price(t),
            prev_price: ep.price(prev),
            forecast: ep.price_forecast(t),
            prev_forecast: ep.price_forecast(prev),
            wind: ep.wind(t),
            volume: self.state.volume,
            day_ahead: ep.series.day_ahead_price(),
            portfolio_price: self.state.portfolio_price,
        })
    }

    /// Unnormalized features in observation order.
    pub fn raw_features(&self) -> Result<[f64; OBS_DIM], EnvError> {
        let v = self.view()?;
        let (d, d_prev) = (v.diff(), v.prev_diff());
        Ok([
            v.price,
            v.prev_price,
            v.day_ahead,
            v.forecast,
            d,
            d_prev,
            v.portfolio_price,
            price_marker(d, d_prev),
            v.wind,
            v.volume,
            v.wind - v.volume,
            time_to_end(v.t),
        ])
    }

    pub fn observe(&self) -> Result<Observation, EnvError> {
        use feature::*;
        let mut x = self.raw_features()?;
        let s = &self.config.stats;
        for i in [PRICE, PREV_PRICE, DAY_AHEAD, FORECAST, PORTFOLIO_PRICE] {
            x[i] = s.z_price(x[i]);
        }
        for i in [DIFF, PREV_DIFF] {
            x[i] = s.z_diff(x[i]);
        }
        Ok(Observation(x))
    }

    fn trade(&mut self, t: usize, price: f64, target: f64, forced: bool) -> TradeRecord {
        let delta_v = target - self.state.volume;
        let fee = self.config.fee * delta_v.abs();
        let cash_flow = price * delta_v - fee;
        self.state.cash += cash_flow;
        self.state.fees_paid += fee;
        self.state.portfolio_price = update_portfolio_price(self.state.portfolio_price, self.state.volume, price, delta_v);
        self.state.volume = target;
        TradeRecord { t, price, action: target, delta_v, fee, reward: cash_flow, forced }
    }

    /// Advances one minute. Actions outside [0, 1] are clamped; NaN holds the
    /// current volume.
    pub fn step(&mut self, action: f64) -> Result<StepResult, EnvError> {
        if self.state.done {
            return Err(EnvError::EpisodeDone);
        }
        let ep = self.episode.clone().ok_or(EnvError::NotReset)?;
        let t = self.state.t;
        let target = if action.is_nan() { self.state.volume } else { action.clamp(0.0, 1.0) };
        let clamped = target != action;
        let price = ep.price(t);

        let mut record = self.trade(t, price, target, false);
        let mut volume_reward = 0.0;
        let mut correction = None;
        if t == T_LAST {
            let eta = ep.wind(T_LAST);
            match self.mode {
                Mode::Training => {
                    let gap = eta - target;
                    volume_reward = -VOLUME_PENALTY * gap * gap;
                    record.reward += volume_reward;
                }
                Mode::Evaluation => correction = Some(self.trade(t, price, eta, true)),
            }
            self.state.done = true;
        } else {
            self.state.t += 1;
        }
        self.log.push(record);
        if let Some(c) = correction {
            self.log.push(c);
        }
        let reward = record.reward + correction.map_or(0.0, |c| c.reward);
        Ok(StepResult {
            observation: self.observe()?,
            reward,
            done: self.state.done,
            info: StepInfo {
                price,
                delta_v: record.delta_v,
                fee: record.fee,
                raw_action: action,
                clamped,
                volume_reward,
                correction,
            },
        })
    }
}

/// Realised profit of a finished episode: Σ p·Δv − Σ fee over every record,
/// the forced correction included. Volume penalties are not cash.
pub fn episode_profit(records: &[TradeRecord]) -> Result<f64, EnvError> {
    let steps = records.iter().filter(|r| !r.forced).count();
    if steps != WINDOW_LEN {
        return Err(EnvError::IncompleteEpisode(format!("{steps} of {WINDOW_LEN} steps recorded")));
    }
    Ok(records.iter().map(|r| r.price * r.delta_v).sum::<f64>() - records.iter().map(|r| r.fee).sum::<f64>())
}

/// Trade log as `t,price,action,delta_v,fee,reward` rows.
pub fn trade_log_csv(records: &[TradeRecord]) -> String {
    let mut out = String::from("t,price,action,delta_v,fee,reward\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.t, r.price, r.action, r.delta_v, r.fee, r.reward);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::ProductId;
    use proptest::prelude::*;

    pub(crate) fn episode(prices: Vec<f64>, wind: Vec<f64>, forecast: Vec<f64>) -> Arc<MarketEpisode> {
        let pid: ProductId = "2018-06-01T10:00:00Z".parse().unwrap();
        let series = ProductSeries::from_prices(pid, prices).unwrap();
        Arc::new(MarketEpisode::new(series, ForecastTrack::new(wind, forecast).unwrap()).unwrap())
    }

    fn flat_episode(price: f64, eta: f64) -> Arc<MarketEpisode> {
        episode(vec![price; WINDOW_LEN], vec![eta; WINDOW_LEN], vec![price; WINDOW_LEN])
    }

    #[test]
    fn reset_state() {
        let mut env = TradingEnv::new(EnvConfig::default());
        let obs = env.reset(flat_episode(50.0, 0.6), Mode::Training).unwrap();
        assert_eq!(obs.get(feature::VOLUME), 0.0);
        assert_eq!(obs.time_to_end(), 1.0);
        assert_eq!(obs.get(feature::VOL_DIFF), 0.6);
        assert_eq!(env.state().cash, 0.0);
    }

    #[test]
    fn initial_diff_uses_raw_prices() {
        let mut prices = vec![50.0; WINDOW_LEN];
        prices[0] = 53.0;
        let mut env = TradingEnv::new(EnvConfig {
            stats: NormStats { price_mean: 40.0, price_std: 2.0, wind_std: 0.1 },
            ..Default::default()
        });
        env.reset(episode(prices, vec![0.5; WINDOW_LEN], vec![50.0; WINDOW_LEN]), Mode::Training).unwrap();
        let raw = env.raw_features().unwrap();
        assert_eq!(raw[feature::DIFF], 3.0);
        let obs = env.observe().unwrap();
        assert_eq!(obs.get(feature::DIFF), 1.5);
        assert_eq!(obs.get(feature::PRICE), 6.5);
        assert_eq!(obs.marker(), 1.0);
    }

    #[test]
    fn trade_reward_example() {
        let mut env = TradingEnv::new(EnvConfig::default());
        env.reset(flat_episode(50.0, 0.5), Mode::Training).unwrap();
        env.step(0.2).unwrap();
        let r = env.step(0.3).unwrap();
        assert!((r.reward - 4.98).abs() < 1e-12);
        let r = env.step(0.3).unwrap();
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn terminal_penalty_training_only() {
        let mut env = TradingEnv::new(EnvConfig::default());
        env.reset(flat_episode(50.0, 0.7), Mode::Training).unwrap();
        for _ in 0..T_LAST {
            let r = env.step(0.2).unwrap();
            assert_eq!(r.info.volume_reward, 0.0);
            assert!(!r.done);
        }
        let r = env.step(0.2).unwrap();
        assert!(r.done);
        assert!((r.info.volume_reward + 0.025).abs() < 1e-15);
        assert!((r.reward + 0.025).abs() < 1e-15);
        assert_eq!(env.step(0.2), Err(EnvError::EpisodeDone));
    }

    #[test]
    fn forced_correction_in_evaluation() {
        let mut env = TradingEnv::new(EnvConfig::default());
        env.reset(flat_episode(50.0, 0.0), Mode::Evaluation).unwrap();
        env.step(1.0).unwrap();
        for _ in 1..T_LAST {
            env.step(1.0).unwrap();
        }
        let r = env.step(1.0).unwrap();
        assert!(r.done);
        assert_eq!(r.info.volume_reward, 0.0);
        let c = r.info.correction.unwrap();
        assert_eq!(c.delta_v, -1.0);
        assert_eq!(env.state().volume, 0.0);
        let profit = episode_profit(env.trade_log()).unwrap();
        assert!((profit + 0.4).abs() < 1e-12);
        assert!((profit - env.state().cash).abs() < 1e-9);
    }

    #[test]
    fn null_episode_profit() {
        let mut env = TradingEnv::new(EnvConfig::default());
        env.reset(flat_episode(50.0, 0.0), Mode::Evaluation).unwrap();
        for _ in 0..WINDOW_LEN {
            env.step(0.0).unwrap();
        }
        assert_eq!(episode_profit(env.trade_log()).unwrap(), 0.0);
        assert!(matches!(episode_profit(&env.trade_log()[..10]), Err(EnvError::IncompleteEpisode(_))));
    }

    #[test]
    fn portfolio_price_tracks_cost_basis() {
        let mut prices = vec![50.0; WINDOW_LEN];
        prices[1] = 60.0;
        prices[2] = 10.0;
        let mut env = TradingEnv::new(EnvConfig::default());
        env.reset(episode(prices, vec![0.5; WINDOW_LEN], vec![50.0; WINDOW_LEN]), Mode::Training).unwrap();
        env.step(0.2).unwrap();
        assert_eq!(env.state().portfolio_price, 50.0);
        env.step(0.4).unwrap();
        assert!((env.state().portfolio_price - 55.0).abs() < 1e-12);
        env.step(0.1).unwrap();
        assert!((env.state().portfolio_price - 55.0).abs() < 1e-12);
        env.step(0.0).unwrap();
        assert_eq!(env.state().portfolio_price, 0.0);
    }

    #[test]
    fn marker_cases() {
        assert_eq!(price_marker(2.0, 3.0), 1.0);
        assert_eq!(price_marker(2.0, -1.0), 0.0);
        assert_eq!(price_marker(-2.0, -1.0), -1.0);
        assert_eq!(price_marker(0.0, 1.0), 0.0);
        assert_eq!(time_to_end(105), 0.5);
        assert_eq!(time_to_end(T_LAST), 0.0);
    }

    #[test]
    fn not_reset_and_bad_product() {
        let mut env = TradingEnv::new(EnvConfig::default());
        assert_eq!(env.step(0.5), Err(EnvError::NotReset));
        assert!(ForecastTrack::new(vec![0.5; 10], vec![1.0; WINDOW_LEN]).is_err());
        assert!(ForecastTrack::new(vec![1.5; WINDOW_LEN], vec![1.0; WINDOW_LEN]).is_err());
    }

    #[test]
    fn trade_log_rows() {
        let mut env = TradingEnv::new(EnvConfig::default());
        env.reset(flat_episode(50.0, 0.5), Mode::Evaluation).unwrap();
        for _ in 0..WINDOW_LEN {
            env.step(0.25).unwrap();
        }
        let csv = trade_log_csv(env.trade_log());
        assert!(csv.starts_with("t,price,action,delta_v,fee,reward\n0,50,0.25,0.25,0.05,12.45\n"));
        assert_eq!(csv.lines().count(), 1 + WINDOW_LEN + 1);
    }

    proptest! {
        #[test]
        fn clamp_and_accounting(actions in proptest::collection::vec(-3.0f64..3.0, WINDOW_LEN), eta in 0.0f64..=1.0) {
            let prices: Vec<f64> = (0..WINDOW_LEN).map(|k| 40.0 + (k as f64 * 0.37).sin() * 10.0).collect();
            let mut env = TradingEnv::new(EnvConfig::default());
            let mut obs = env.reset(episode(prices, vec![eta; WINDOW_LEN], vec![41.0; WINDOW_LEN]), Mode::Evaluation).unwrap();
            let mut total_reward = 0.0;
            let mut last_tte = f64::INFINITY;
            for (k, &a) in actions.iter().enumerate() {
                prop_assert!(obs.time_to_end() < last_tte);
                last_tte = obs.time_to_end();
                let r = env.step(a).unwrap();
                total_reward += r.reward;
                prop_assert!((0.0..=1.0).contains(&env.state().volume));
                prop_assert_eq!(r.done, k == T_LAST);
                let recomputed = env.trade_log().iter().fold(0.0, |c, t| c + (t.price * t.delta_v - t.fee));
                prop_assert_eq!(recomputed, env.state().cash);
                obs = r.observation;
            }
            prop_assert_eq!(env.state().volume, eta);
            prop_assert!((total_reward - env.state().cash).abs() < 1e-9);
        }
    }
}
