//! wasm-bindgen bindings behind the static page in `www/`.
//!
//! Three operations are exposed: generate a synthetic market, replay one
//! baseline on one product, and evaluate every baseline over the market.

use std::sync::Arc;

use idtrade::agents::{baseline, run_episode};
use idtrade::bound::episode_bound;
use idtrade::env::{EnvConfig, MarketEpisode, Mode, NormStats, TradingEnv};
use idtrade::metrics::{evaluate, EvalOptions};
use idtrade::synthetic::{generate_market, SyntheticConfig};
use wasm_bindgen::prelude::*;

pub const BASELINES: [&str; 4] = ["bl_first", "bl_wf", "bl_pf", "bl_random"];

#[wasm_bindgen]
pub struct Market {
    episodes: Vec<Arc<MarketEpisode>>,
    env: EnvConfig,
    seed: u64,
}

#[wasm_bindgen]
impl Market {
    /// `forecast_noise_std = 0` makes the 5-minute price forecast exact.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, n_products: usize, sawtooth_amplitude: f64, forecast_noise_std: f64) -> Result<Market, String> {
        let cfg = SyntheticConfig { n_products, seed: seed.into(), sawtooth_amplitude, forecast_noise_std, ..Default::default() };
        let episodes = generate_market(&cfg).map_err(|e| e.to_string())?;
        let stats = NormStats::from_training(&episodes);
        Ok(Self { episodes: episodes.into_iter().map(Arc::new).collect(), env: EnvConfig { stats, ..Default::default() }, seed: seed.into() })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    fn episode(&self, i: usize) -> Result<&Arc<MarketEpisode>, String> {
        self.episodes.get(i).ok_or_else(|| format!("product {i} out of range 0..{}", self.episodes.len()))
    }

    /// Delivery start, e.g. `2018-01-01T06:00:00Z`.
    pub fn product(&self, i: usize) -> Result<String, String> {
        Ok(self.episode(i)?.series.product().to_string())
    }

    pub fn prices(&self, i: usize) -> Result<Vec<f64>, String> {
        Ok(self.episode(i)?.series.prices().to_vec())
    }

    pub fn price_forecast(&self, i: usize) -> Result<Vec<f64>, String> {
        Ok(self.episode(i)?.forecast.price_5min().to_vec())
    }

    pub fn wind(&self, i: usize) -> Result<Vec<f64>, String> {
        Ok(self.episode(i)?.forecast.wind().to_vec())
    }

    /// Perfect-foresight profit bound on the 21-level volume grid.
    pub fn bound(&self, i: usize) -> Result<f64, String> {
        Ok(episode_bound(self.episode(i)?, self.env.fee))
    }

    /// Replays a baseline on product `i` in evaluation mode.
    pub fn run(&self, agent: &str, i: usize) -> Result<Replay, String> {
        let ep = self.episode(i)?.clone();
        let mut a = baseline(agent, self.env.stats.wind_std, self.seed).ok_or_else(|| format!("unknown agent {agent}"))?;
        let mut env = TradingEnv::new(self.env);
        let r = run_episode(&mut env, &mut a, ep, Mode::Evaluation, i as u64).map_err(|e| e.to_string())?;
        Ok(Replay {
            volumes: r.records.iter().filter(|t| !t.forced).map(|t| t.action).collect(),
            profit: r.profit,
            steps: r.action_steps,
        })
    }

    /// Metrics table of every baseline over the whole market.
    pub fn report(&self) -> Result<String, String> {
        let mut agents: Vec<_> = BASELINES.iter().filter_map(|n| baseline(n, self.env.stats.wind_std, self.seed)).collect();
        let report = evaluate(&mut agents, &self.episodes, &self.env, EvalOptions { seed: self.seed, strict: false }).map_err(|e| e.to_string())?;
        let bound: f64 = self.episodes.iter().map(|e| episode_bound(e, self.env.fee)).sum();
        Ok(format!("{}\nBound total net profit: {bound:.2}\n", report.table()))
    }
}

#[wasm_bindgen]
pub struct Replay {
    volumes: Vec<f64>,
    profit: f64,
    steps: usize,
}

#[wasm_bindgen]
impl Replay {
    /// Volume held after each minute, forced correction excluded.
    pub fn volumes(&self) -> Vec<f64> {
        self.volumes.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn profit(&self) -> f64 {
        self.profit
    }

    #[wasm_bindgen(getter)]
    pub fn steps(&self) -> usize {
        self.steps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use idtrade::market_data::WINDOW_LEN;

    #[test]
    fn market_series_have_window_length() {
        let m = Market::new(1, 3, 5.0, 0.0).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.prices(2).unwrap().len(), WINDOW_LEN);
        assert_eq!(m.wind(0).unwrap().len(), WINDOW_LEN);
        assert!(m.prices(3).is_err());
        assert!(m.product(0).unwrap().ends_with('Z'));
    }

    #[test]
    fn wind_follower_tracks_wind() {
        let m = Market::new(2, 2, 5.0, 0.0).unwrap();
        let r = m.run("bl_wf", 1).unwrap();
        assert_eq!(r.volumes(), m.wind(1).unwrap());
        assert!(r.profit().is_finite() && m.bound(1).unwrap().is_finite());
        assert!(m.run("nobody", 0).is_err());
    }

    #[test]
    fn report_lists_every_baseline() {
        let m = Market::new(3, 4, 0.0, 1.0).unwrap();
        let text = m.report().unwrap();
        assert!(BASELINES.iter().all(|b| text.lines().next().unwrap().contains(b)));
        assert!(text.contains("Bound total net profit"));
        assert_eq!(text, m.report().unwrap());
    }
}
