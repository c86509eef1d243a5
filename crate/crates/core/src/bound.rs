//! Perfect-foresight profit bound by dynamic programming over a volume grid.

use crate::env::{MarketEpisode, T_LAST};

/// Volume grid used by [`episode_bound`]: 0, 0.05, …, 1.
pub const DEFAULT_LEVELS: usize = 21;

/// Best evaluation-mode profit when every price is known in advance and the
/// position may only take `levels` evenly spaced values in [0, 1].
///
/// The position starts at 0, trades at `prices[t]` for each `t`, and after the
/// last price is corrected to `eta_final` (itself not restricted to the grid)
/// at the last price with the fee.
pub fn dp_upper_bound(prices: &[f64], eta_final: f64, fee: f64, levels: usize) -> f64 {
    assert!(levels >= 2, "need at least two volume levels");
    let Some(&p_last) = prices.last() else {
        return 0.0;
    };
    let step = 1.0 / (levels - 1) as f64;
    let vol = |k: usize| k as f64 * step;
    let trade = |p: f64, from: f64, to: f64| p * (to - from) - fee * (to - from).abs();

    // best[k]: best cash with position at level k after the current step
    let mut best: Vec<f64> = (0..levels).map(|k| trade(prices[0], 0.0, vol(k))).collect();
    let mut next = vec![f64::NEG_INFINITY; levels];
    for &p in &prices[1..] {
        for (j, slot) in next.iter_mut().enumerate() {
            *slot = (0..levels).map(|k| best[k] + trade(p, vol(k), vol(j))).fold(f64::NEG_INFINITY, f64::max);
        }
        std::mem::swap(&mut best, &mut next);
    }
    (0..levels).map(|k| best[k] + trade(p_last, vol(k), eta_final)).fold(f64::NEG_INFINITY, f64::max)
}

/// [`dp_upper_bound`] for one product on the default 21-level grid.
pub fn episode_bound(episode: &MarketEpisode, fee: f64) -> f64 {
    dp_upper_bound(episode.series.prices(), episode.wind(T_LAST), fee, DEFAULT_LEVELS)
}
