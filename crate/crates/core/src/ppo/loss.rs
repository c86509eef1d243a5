use super::{HyperParams, RolloutBatch};
use crate::nn::{gaussian, Matrix, OutputGrads, PolicyOutput};

/// Gathered rows of a rollout batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    pub obs: Matrix,
    pub actions: Vec<f64>,
    pub log_probs_old: Vec<f64>,
    pub means_old: Vec<f64>,
    pub log_stds_old: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub values_old: Vec<f64>,
}

impl Minibatch {
    pub fn gather(batch: &RolloutBatch, idx: &[usize]) -> Self {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let rows: Vec<&[f64]> = idx.iter().map(|&i| batch.obs[i].as_slice()).collect();
        Self {
            obs: Matrix::from_rows(&rows),
            actions: pick(&batch.actions),
            log_probs_old: pick(&batch.log_probs),
            means_old: pick(&batch.means),
            log_stds_old: pick(&batch.log_stds),
            advantages: pick(&batch.advantages),
            returns: pick(&batch.returns),
            values_old: pick(&batch.values),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossStats {
    pub total: f64,
    /// −mean clipped surrogate.
    pub policy_loss: f64,
    pub vf_loss: f64,
    pub kl: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub mean_ratio: f64,
}

/// `min(τ·Â, clip(τ, 1−ε, 1+ε)·Â)` and its derivative with respect to `τ`.
pub fn clipped_surrogate(ratio: f64, adv: f64, clip: f64) -> (f64, f64) {
    let unclipped = ratio * adv;
    let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * adv;
    if unclipped <= clipped {
        (unclipped, adv)
    } else {
        (clipped, 0.0)
    }
}

/// Clipped value loss `max((V − R)², (V_old + clip(V − V_old, ±c) − R)²)` and
/// its derivative with respect to `V`.
fn clipped_value_loss(v: f64, v_old: f64, target: f64, clip: f64) -> (f64, f64) {
    let l1 = (v - target) * (v - target);
    let delta = v - v_old;
    let v_clipped = v_old + delta.clamp(-clip, clip);
    let l2 = (v_clipped - target) * (v_clipped - target);
    if l1 >= l2 {
        (l1, 2.0 * (v - target))
    } else {
        let inside = delta.abs() < clip;
        (l2, if inside { 2.0 * (v_clipped - target) } else { 0.0 })
    }
}

/// Total loss
/// `−L_clip + vf_coef·L_vf + kl_coef·KL(π_old ‖ π) − entropy_coef·H(π)`,
/// each term averaged over the minibatch, with gradients with respect to
/// the network outputs.
pub fn ppo_loss(out: &PolicyOutput, mb: &Minibatch, hp: &HyperParams) -> (LossStats, OutputGrads) {
    let n = mb.len();
    let inv_n = 1.0 / n as f64;
    let ls = out.log_std;
    let mut g = OutputGrads::zeros(n);
    let mut s = LossStats::default();
    let mut clipped = 0usize;
    for i in 0..n {
        let mean = out.mean[i];
        let a = mb.actions[i];
        let logp = gaussian::log_prob(a, mean, ls);
        let ratio = (logp - mb.log_probs_old[i]).exp();
        let (surr, d_ratio) = clipped_surrogate(ratio, mb.advantages[i], hp.clip);
        if (ratio - 1.0).abs() > hp.clip {
            clipped += 1;
        }
        let (dlp_mean, dlp_ls) = gaussian::log_prob_grad(a, mean, ls);
        // −surr: d/dθ = −d_ratio · ratio · dlogp/dθ
        let coef = -d_ratio * ratio * inv_n;
        g.mean[i] += coef * dlp_mean;
        g.log_std += coef * dlp_ls;

        let kl = gaussian::kl(mb.means_old[i], mb.log_stds_old[i], mean, ls);
        let (dkl_mean, dkl_ls) = gaussian::kl_grad(mb.means_old[i], mb.log_stds_old[i], mean, ls);
        g.mean[i] += hp.kl_coef * dkl_mean * inv_n;
        g.log_std += hp.kl_coef * dkl_ls * inv_n;

        let (vf, dvf) = clipped_value_loss(out.value[i], mb.values_old[i], mb.returns[i], hp.vf_clip);
        g.value[i] = hp.vf_loss_coef * dvf * inv_n;

        s.policy_loss -= surr * inv_n;
        s.kl += kl * inv_n;
        s.vf_loss += vf * inv_n;
        s.mean_ratio += ratio * inv_n;
    }
    s.entropy = gaussian::entropy(ls);
    g.log_std -= hp.entropy_coef;
    s.clip_frac = clipped as f64 * inv_n;
    s.total = s.policy_loss + hp.vf_loss_coef * s.vf_loss + hp.kl_coef * s.kl - hp.entropy_coef * s.entropy;
    (s, g)
}

/// Plain policy-gradient objective `−mean(log π(a|s) · Â)` and its output gradients.
pub fn vanilla_pg_loss(out: &PolicyOutput, mb: &Minibatch) -> (f64, OutputGrads) {
    let n = mb.len();
    let inv_n = 1.0 / n as f64;
    let mut g = OutputGrads::zeros(n);
    let mut loss = 0.0;
    for i in 0..n {
        let a = mb.actions[i];
        let adv = mb.advantages[i];
        loss -= gaussian::log_prob(a, out.mean[i], out.log_std) * adv * inv_n;
        let (dm, dls) = gaussian::log_prob_grad(a, out.mean[i], out.log_std);
        g.mean[i] = -dm * adv * inv_n;
        g.log_std -= dls * adv * inv_n;
    }
    (loss, g)
}
