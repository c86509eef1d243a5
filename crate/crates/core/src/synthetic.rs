//! Synthetic products: mean-reverting minute prices with jumps and an optional
//! sawtooth cycle, plus wind-volume and 5-minute price forecasts.
//!
//! Randomness comes from ChaCha8 (see [`crate::rng`]); product `i` of a
//! market draws from stream `i` of the configured seed.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ForecastTrack, MarketEpisode};
use crate::market_data::{ProductId, ProductSeries, WINDOW_LEN};
use crate::rng::{rng_for, Rng};

/// Wind forecasts are recalculated every 15 minutes.
pub const WIND_UPDATE_MIN: usize = 15;
/// Price forecasts are recalculated every 5 minutes.
pub const PRICE_FORECAST_UPDATE_MIN: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_products: usize,
    /// Long-run price level, EUR/MWh.
    pub base_price: f64,
    /// Mean-reversion rate per minute.
    pub mean_reversion: f64,
    /// EUR/MWh per sqrt(minute).
    pub volatility: f64,
    pub jump_prob: f64,
    pub jump_scale: f64,
    pub forecast_noise_std: f64,
    pub wind_start: f64,
    pub wind_step_std: f64,
    /// Peak deviation of the sawtooth cycle, EUR/MWh. Zero disables it.
    pub sawtooth_amplitude: f64,
    /// Sawtooth period in minutes.
    pub sawtooth_period: f64,
    /// Delivery start of the first product; later products follow hourly.
    pub first_delivery: DateTime<Utc>,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_products: 240,
            base_price: 45.0,
            mean_reversion: 0.05,
            volatility: 1.5,
            jump_prob: 0.005,
            jump_scale: 15.0,
            forecast_noise_std: 1.0,
            wind_start: 0.5,
            wind_step_std: 0.05,
            sawtooth_amplitude: 0.0,
            sawtooth_period: 30.0,
            first_delivery: Utc.with_ymd_and_hms(2018, 1, 1, 6, 0, 0).unwrap(),
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        let finite = [
            self.base_price,
            self.mean_reversion,
            self.volatility,
            self.jump_prob,
            self.jump_scale,
            self.forecast_noise_std,
            self.wind_start,
            self.wind_step_std,
            self.sawtooth_amplitude,
            self.sawtooth_period,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return bad("all numeric fields must be finite");
        }
        if !(0.0..=1.0).contains(&self.jump_prob) {
            return bad("jump_prob must lie in [0, 1]");
        }
        if self.mean_reversion < 0.0 || self.volatility < 0.0 || self.jump_scale < 0.0 {
            return bad("mean_reversion, volatility and jump_scale must be non-negative");
        }
        if self.forecast_noise_std < 0.0 || self.wind_step_std < 0.0 {
            return bad("forecast and wind noise must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.wind_start) {
            return bad("wind_start must lie in [0, 1]");
        }
        if self.sawtooth_amplitude != 0.0 && !(self.sawtooth_period > 0.0) {
            return bad("sawtooth_period must be positive");
        }
        Ok(())
    }

    /// Stationary standard deviation of the diffusion part (no jumps).
    pub fn stationary_std(&self) -> f64 {
        if self.mean_reversion > 0.0 {
            self.volatility / (2.0 * self.mean_reversion).sqrt()
        } else {
            f64::INFINITY
        }
    }
}

fn sawtooth(minute: f64, phase: f64, period: f64) -> f64 {
    let x = (minute + phase) / period;
    2.0 * (x - x.floor()) - 1.0
}

/// One price path. The diffusion starts from its stationary distribution
/// (or at `base_price` without mean reversion) and uses the exact OU
/// transition; jumps displace the deviation, which then reverts.
pub fn generate_price_path(cfg: &SyntheticConfig, product: ProductId, rng: &mut Rng) -> ProductSeries {
    let theta = cfg.mean_reversion;
    let (decay, step_std) = if theta > 0.0 {
        let decay = (-theta).exp();
        (decay, cfg.volatility * ((1.0 - decay * decay) / (2.0 * theta)).sqrt())
    } else {
        (1.0, cfg.volatility)
    };
    let mut dev = if theta > 0.0 && cfg.volatility > 0.0 {
        cfg.stationary_std() * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    let phase = if cfg.sawtooth_amplitude != 0.0 { rng.random::<f64>() * cfg.sawtooth_period } else { 0.0 };

    let mut prices = Vec::with_capacity(WINDOW_LEN);
    for k in 0..WINDOW_LEN {
        if k > 0 {
            let z: f64 = if step_std > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            dev = dev * decay + step_std * z;
            if cfg.jump_prob > 0.0 && rng.random::<f64>() < cfg.jump_prob {
                let j: f64 = rng.sample(StandardNormal);
                dev += cfg.jump_scale * j;
            }
        }
        let cycle = if cfg.sawtooth_amplitude != 0.0 {
            cfg.sawtooth_amplitude * sawtooth(k as f64, phase, cfg.sawtooth_period)
        } else {
            0.0
        };
        prices.push(cfg.base_price + dev + cycle);
    }
    ProductSeries::new(product, prices, vec![false; WINDOW_LEN], cfg.base_price).expect("finite synthetic prices")
}

/// True mean of the prices strictly after minute `k`, up to five minutes
/// ahead and clipped at the window end. At the last minute the current price
/// is returned.
pub fn forward_mean(prices: &[f64], k: usize) -> f64 {
    let hi = (k + PRICE_FORECAST_UPDATE_MIN).min(prices.len() - 1);
    if hi <= k {
        return prices[k];
    }
    let window = &prices[k + 1..=hi];
    window.iter().sum::<f64>() / window.len() as f64
}

/// Forecast tracks for a price path. Price forecasts are refreshed at minutes
/// divisible by 5 and wind forecasts at minutes divisible by 15; in between,
/// both hold their last value.
pub fn generate_forecasts(path: &ProductSeries, cfg: &SyntheticConfig, rng: &mut Rng) -> ForecastTrack {
    let prices = path.prices();
    let noise = Normal::new(0.0, cfg.forecast_noise_std).expect("validated std");
    let wind_step = Normal::new(0.0, cfg.wind_step_std).expect("validated std");

    let mut price_5min = Vec::with_capacity(WINDOW_LEN);
    let mut wind = Vec::with_capacity(WINDOW_LEN);
    let mut current_fc = 0.0;
    let mut current_wind = cfg.wind_start.clamp(0.0, 1.0);
    for k in 0..WINDOW_LEN {
        if k % PRICE_FORECAST_UPDATE_MIN == 0 {
            let eps = if cfg.forecast_noise_std > 0.0 { noise.sample(rng) } else { 0.0 };
            current_fc = forward_mean(prices, k) + eps;
        }
        if k > 0 && k % WIND_UPDATE_MIN == 0 && cfg.wind_step_std > 0.0 {
            current_wind = (current_wind + wind_step.sample(rng)).clamp(0.0, 1.0);
        }
        price_5min.push(current_fc);
        wind.push(current_wind);
    }
    ForecastTrack::new(wind, price_5min).expect("generated forecasts are valid")
}

/// `cfg.n_products` hourly episodes; product `i` uses RNG stream `i`.
pub fn generate_market(cfg: &SyntheticConfig) -> Result<Vec<MarketEpisode>, SynthError> {
    cfg.validate()?;
    let build = |i: usize| {
        let mut rng = rng_for(cfg.seed, i as u64);
        let product = ProductId(cfg.first_delivery + Duration::hours(i as i64));
        let series = generate_price_path(cfg, product, &mut rng);
        let forecast = generate_forecasts(&series, cfg, &mut rng);
        MarketEpisode::new(series, forecast).expect("lengths match")
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok((0..cfg.n_products).into_par_iter().map(build).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok((0..cfg.n_products).map(build).collect())
    }
}
