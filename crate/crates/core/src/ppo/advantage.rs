use super::RolloutBatch;

/// Generalized advantage estimation over a batch of concatenated segments.
///
/// Fills `raw_advantages`, `returns = raw_advantages + values` and the
/// batch-normalized `advantages`. With `gamma = 0` the raw advantage is
/// exactly `r_t − V(s_t)`.
pub fn compute_advantages(batch: &mut RolloutBatch, gamma: f64, lambda: f64) {
    let n = batch.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for i in (0..n).rev() {
        let segment_end = batch.dones[i] || batch.bootstrap[i].is_some() || i + 1 == n;
        let (next_value, carry) = if batch.dones[i] {
            (0.0, 0.0)
        } else if let Some(b) = batch.bootstrap[i] {
            (b, 0.0)
        } else if segment_end {
            (0.0, 0.0)
        } else {
            (batch.values[i + 1], next_adv)
        };
        let delta = batch.rewards[i] + gamma * next_value - batch.values[i];
        adv[i] = delta + gamma * lambda * carry;
        next_adv = adv[i];
    }
    batch.returns = adv.iter().zip(&batch.values).map(|(a, v)| a + v).collect();
    batch.advantages = normalize(&adv);
    batch.raw_advantages = adv;
}

/// Zero mean, unit (population) standard deviation. A constant input maps to zeros.
pub fn normalize(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let std = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let scale = if std > 1e-12 { std } else { 1.0 };
    x.iter().map(|v| (v - mean) / scale).collect()
}
