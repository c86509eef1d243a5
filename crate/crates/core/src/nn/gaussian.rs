//! Closed forms for a 1-D Gaussian policy parameterised by mean and log-std.

use std::f64::consts::PI;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn log_prob(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) * (-log_std).exp();
    -0.5 * z * z - log_std - HALF_LN_2PI
}

/// `(∂/∂mean, ∂/∂log_std)` of [`log_prob`].
pub fn log_prob_grad(x: f64, mean: f64, log_std: f64) -> (f64, f64) {
    let inv_var = (-2.0 * log_std).exp();
    let diff = x - mean;
    (diff * inv_var, diff * diff * inv_var - 1.0)
}

/// Differential entropy ½ ln(2πe σ²).
pub fn entropy(log_std: f64) -> f64 {
    0.5 + HALF_LN_2PI + log_std
}

/// KL(old ‖ new).
pub fn kl(mean_old: f64, log_std_old: f64, mean_new: f64, log_std_new: f64) -> f64 {
    let var_old = (2.0 * log_std_old).exp();
    let inv_var_new = (-2.0 * log_std_new).exp();
    let dm = mean_old - mean_new;
    log_std_new - log_std_old + 0.5 * (var_old + dm * dm) * inv_var_new - 0.5
}

/// `(∂/∂mean_new, ∂/∂log_std_new)` of [`kl`].
pub fn kl_grad(mean_old: f64, log_std_old: f64, mean_new: f64, log_std_new: f64) -> (f64, f64) {
    let var_old = (2.0 * log_std_old).exp();
    let inv_var_new = (-2.0 * log_std_new).exp();
    let dm = mean_old - mean_new;
    (-dm * inv_var_new, 1.0 - (var_old + dm * dm) * inv_var_new)
}

/// Reference value of ½ ln(2πe σ²) computed from σ directly.
pub fn entropy_from_std(std: f64) -> f64 {
    0.5 * (2.0 * PI * std::f64::consts::E * std * std).ln()
}
