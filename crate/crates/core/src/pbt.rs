//! Population-based training: members train independently between
//! evaluation barriers; the bottom quantile then copies the state of a random
//! top-quantile member and perturbs or resamples its hyperparameters.

use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ppo::{HyperParams, PpoError, Trainer};
use crate::rng::{rng_for, Rng};

/// Something PBT can schedule.
pub trait PbtTask: Clone + Send {
    type Error: Send;

    fn hyperparams(&self) -> &HyperParams;
    fn set_hyperparams(&mut self, hp: HyperParams) -> Result<(), Self::Error>;
    /// Runs `iterations` more training iterations.
    fn train(&mut self, iterations: usize) -> Result<(), Self::Error>;
    /// Fitness; higher is better.
    fn evaluate(&self) -> Result<f64, Self::Error>;
    /// Takes over the learned state (weights, optimizer) of `other`, keeping
    /// its own iteration counter.
    fn load_state_from(&mut self, other: &Self);
    fn iteration(&self) -> usize;
}

impl PbtTask for Trainer {
    type Error = PpoError;

    fn hyperparams(&self) -> &HyperParams {
        &self.config().hp
    }

    fn set_hyperparams(&mut self, hp: HyperParams) -> Result<(), PpoError> {
        Trainer::set_hyperparams(self, hp)
    }

    fn train(&mut self, iterations: usize) -> Result<(), PpoError> {
        for _ in 0..iterations {
            self.iterate()?;
        }
        Ok(())
    }

    fn evaluate(&self) -> Result<f64, PpoError> {
        self.validation_profit()
    }

    fn load_state_from(&mut self, other: &Self) {
        Trainer::load_state_from(self, other)
    }

    fn iteration(&self) -> usize {
        Trainer::iteration(self)
    }
}

/// Closed interval, optionally sampled on a log scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub log: bool,
}

impl Range {
    pub const fn linear(lo: f64, hi: f64) -> Self {
        Self { lo, hi, log: false }
    }

    pub const fn log(lo: f64, hi: f64) -> Self {
        Self { lo, hi, log: true }
    }

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.random();
        let x = if self.log {
            (self.lo.ln() + u * (self.hi.ln() - self.lo.ln())).exp()
        } else {
            self.lo + u * (self.hi - self.lo)
        };
        self.clamp(x)
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lo..=self.hi).contains(&x)
    }

    fn valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi && (!self.log || self.lo > 0.0)
    }
}

/// Bounds of the six searched hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub clip: Range,
    pub entropy_coef: Range,
    pub gamma: Range,
    pub lr: Range,
    pub sgd_epochs: (usize, usize),
    pub vf_loss_coef: Range,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            clip: Range::linear(0.1, 0.5),
            entropy_coef: Range::log(1e-4, 1e-2),
            gamma: Range::linear(0.0, 1.0),
            lr: Range::log(1e-5, 1e-3),
            sgd_epochs: (3, 15),
            vf_loss_coef: Range::linear(0.1, 1.0),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), String> {
        let ranges = [self.clip, self.entropy_coef, self.gamma, self.lr, self.vf_loss_coef];
        if !ranges.iter().all(Range::valid) || self.sgd_epochs.0 == 0 || self.sgd_epochs.0 > self.sgd_epochs.1 {
            return Err("invalid search space bounds".into());
        }
        if self.gamma.lo < 0.0 || self.gamma.hi > 1.0 || self.clip.lo <= 0.0 || self.lr.lo <= 0.0 {
            return Err("search space leaves the valid hyperparameter domain".into());
        }
        Ok(())
    }

    /// Draws the six searched values; everything else comes from `base`.
    pub fn sample(&self, base: &HyperParams, rng: &mut Rng) -> HyperParams {
        HyperParams {
            clip: self.clip.sample(rng),
            entropy_coef: self.entropy_coef.sample(rng),
            gamma: self.gamma.sample(rng),
            lr: self.lr.sample(rng),
            sgd_epochs: rng.random_range(self.sgd_epochs.0..=self.sgd_epochs.1),
            vf_loss_coef: self.vf_loss_coef.sample(rng),
            ..base.clone()
        }
    }

    pub fn contains(&self, hp: &HyperParams) -> bool {
        self.clip.contains(hp.clip)
            && self.entropy_coef.contains(hp.entropy_coef)
            && self.gamma.contains(hp.gamma)
            && self.lr.contains(hp.lr)
            && (self.sgd_epochs.0..=self.sgd_epochs.1).contains(&hp.sgd_epochs)
            && self.vf_loss_coef.contains(hp.vf_loss_coef)
    }

    /// Per hyperparameter: resample with probability `resample_prob`,
    /// otherwise scale by one of `factors` (integers step by ±1), then clamp.
    pub fn explore(&self, hp: &HyperParams, resample_prob: f64, factors: (f64, f64), rng: &mut Rng) -> HyperParams {
        let perturb = |r: &Range, x: f64, rng: &mut Rng| {
            if rng.random_bool(resample_prob) {
                r.sample(rng)
            } else {
                let f = if rng.random_bool(0.5) { factors.0 } else { factors.1 };
                r.clamp(x * f)
            }
        };
        let clip = perturb(&self.clip, hp.clip, rng);
        let entropy_coef = perturb(&self.entropy_coef, hp.entropy_coef, rng);
        let gamma = perturb(&self.gamma, hp.gamma, rng);
        let lr = perturb(&self.lr, hp.lr, rng);
        let (lo, hi) = self.sgd_epochs;
        let sgd_epochs = if rng.random_bool(resample_prob) {
            rng.random_range(lo..=hi)
        } else if rng.random_bool(0.5) {
            hp.sgd_epochs.saturating_sub(1).clamp(lo, hi)
        } else {
            (hp.sgd_epochs + 1).clamp(lo, hi)
        };
        let vf_loss_coef = perturb(&self.vf_loss_coef, hp.vf_loss_coef, rng);
        HyperParams { clip, entropy_coef, gamma, lr, sgd_epochs, vf_loss_coef, ..hp.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PbtConfig {
    pub population: usize,
    /// Training iterations between evaluation barriers.
    pub eval_interval: usize,
    /// Training iterations per member.
    pub budget: usize,
    /// Fraction of the population in each of the top and bottom groups.
    pub quantile: f64,
    pub resample_prob: f64,
    pub perturb_factors: (f64, f64),
    pub seed: u64,
}

impl Default for PbtConfig {
    fn default() -> Self {
        Self { population: 8, eval_interval: 10, budget: 500, quantile: 0.25, resample_prob: 0.25, perturb_factors: (0.8, 1.2), seed: 0 }
    }
}

impl PbtConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.population < 2 {
            return Err("population must be at least 2".into());
        }
        if self.eval_interval == 0 || self.budget == 0 {
            return Err("eval_interval and budget must be positive".into());
        }
        if !(self.quantile > 0.0 && self.quantile <= 0.5) || !(0.0..=1.0).contains(&self.resample_prob) {
            return Err("quantile must lie in (0, 0.5], resample_prob in [0, 1]".into());
        }
        Ok(())
    }

    /// Members in each of the top and bottom groups.
    pub fn group_size(&self) -> usize {
        ((self.population as f64 * self.quantile).ceil() as usize).clamp(1, self.population / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Evaluate,
    Exploit,
    Explore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbtEvent {
    pub round: usize,
    pub member: usize,
    pub iteration: usize,
    pub kind: EventKind,
    /// Member score at the barrier (the source's score for exploits).
    pub score: f64,
    pub source: Option<usize>,
    pub hyperparams: HyperParams,
}

pub const HISTORY_HEADER: &str = "round,member,iteration,event,score,source,clip,entropy_coef,gamma,lr,sgd_epochs,vf_loss_coef";

/// Event log as comma-separated rows under [`HISTORY_HEADER`].
pub fn history_csv(events: &[PbtEvent]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for e in events {
        let kind = match e.kind {
            EventKind::Evaluate => "evaluate",
            EventKind::Exploit => "exploit",
            EventKind::Explore => "explore",
        };
        let h = &e.hyperparams;
        let source = e.source.map(|s| s.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{kind},{},{source},{},{},{},{},{},{}",
            e.round, e.member, e.iteration, e.score, h.clip, h.entropy_coef, h.gamma, h.lr, h.sgd_epochs, h.vf_loss_coef
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct PbtMember<T> {
    pub id: usize,
    pub task: T,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct PbtOutcome<T> {
    pub members: Vec<PbtMember<T>>,
    pub history: Vec<PbtEvent>,
    /// Index into `members` of the best final score.
    pub best: usize,
}

impl<T> PbtOutcome<T> {
    pub fn best_member(&self) -> &PbtMember<T> {
        &self.members[self.best]
    }
}

fn train_all<T: PbtTask>(members: &mut [PbtMember<T>], iterations: usize) -> Result<(), T::Error> {
    #[cfg(feature = "parallel")]
    let results: Vec<Result<f64, T::Error>> = {
        use rayon::prelude::*;
        members.par_iter_mut().map(|m| m.task.train(iterations).and_then(|_| m.task.evaluate())).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<f64, T::Error>> =
        members.iter_mut().map(|m| m.task.train(iterations).and_then(|_| m.task.evaluate())).collect();
    for (m, r) in members.iter_mut().zip(results) {
        m.score = r?;
    }
    Ok(())
}

fn best_index<T>(members: &[PbtMember<T>]) -> usize {
    let mut best = 0;
    for (i, m) in members.iter().enumerate() {
        if m.score > members[best].score {
            best = i;
        }
    }
    best
}

/// Member indices sorted by score, best first; ties keep member order.
fn ranking<T>(members: &[PbtMember<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| members[b].score.total_cmp(&members[a].score));
    order
}

/// Runs PBT over `tasks` (one per member); initial hyperparameters are drawn
/// from `space`.
pub fn pbt_run<T: PbtTask>(tasks: Vec<T>, space: &SearchSpace, cfg: &PbtConfig) -> Result<PbtOutcome<T>, T::Error> {
    assert_eq!(tasks.len(), cfg.population, "one task per member");
    let mut rng = rng_for(cfg.seed, 0);
    let mut members = Vec::with_capacity(tasks.len());
    for (id, mut task) in tasks.into_iter().enumerate() {
        let hp = space.sample(task.hyperparams(), &mut rng);
        task.set_hyperparams(hp)?;
        members.push(PbtMember { id, task, score: f64::NEG_INFINITY });
    }
    let k = cfg.group_size();
    let mut history = Vec::new();
    let mut done = 0;
    let mut round = 0;
    while done < cfg.budget {
        let step = cfg.eval_interval.min(cfg.budget - done);
        train_all(&mut members, step)?;
        done += step;
        round += 1;
        for m in &members {
            history.push(PbtEvent {
                round,
                member: m.id,
                iteration: m.task.iteration(),
                kind: EventKind::Evaluate,
                score: m.score,
                source: None,
                hyperparams: m.task.hyperparams().clone(),
            });
        }
        if done >= cfg.budget {
            break;
        }
        let order = ranking(&members);
        let (top, bottom) = (&order[..k], &order[order.len() - k..]);
        for &loser in bottom {
            let winner = top[rng.random_range(0..top.len())];
            let source = members[winner].task.clone();
            let score = members[winner].score;
            let m = &mut members[loser];
            m.task.load_state_from(&source);
            m.score = score;
            history.push(PbtEvent {
                round,
                member: m.id,
                iteration: m.task.iteration(),
                kind: EventKind::Exploit,
                score,
                source: Some(winner),
                hyperparams: source.hyperparams().clone(),
            });
            let hp = space.explore(source.hyperparams(), cfg.resample_prob, cfg.perturb_factors, &mut rng);
            m.task.set_hyperparams(hp.clone())?;
            history.push(PbtEvent {
                round,
                member: m.id,
                iteration: m.task.iteration(),
                kind: EventKind::Explore,
                score,
                source: Some(winner),
                hyperparams: hp,
            });
        }
    }
    let best = best_index(&members);
    Ok(PbtOutcome { members, history, best })
}

/// Baseline with the same compute: every member keeps its sampled
/// hyperparameters for the whole budget. Returns the members after training.
pub fn random_search<T: PbtTask>(tasks: Vec<T>, space: &SearchSpace, cfg: &PbtConfig) -> Result<PbtOutcome<T>, T::Error> {
    let mut rng = rng_for(cfg.seed, 0);
    let mut members = Vec::with_capacity(tasks.len());
    for (id, mut task) in tasks.into_iter().enumerate() {
        let hp = space.sample(task.hyperparams(), &mut rng);
        task.set_hyperparams(hp)?;
        members.push(PbtMember { id, task, score: f64::NEG_INFINITY });
    }
    train_all(&mut members, cfg.budget)?;
    let best = best_index(&members);
    Ok(PbtOutcome { members, history: Vec::new(), best })
}

/// One-dimensional quadratic toy task: `θ` descends `(θ − 1)²` with the
/// member's learning rate as step size; fitness is `−(θ − 1)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTask {
    pub theta: f64,
    hp: HyperParams,
    iteration: usize,
}

impl QuadraticTask {
    pub fn new(theta: f64) -> Self {
        Self { theta, hp: HyperParams::default(), iteration: 0 }
    }

    /// Step-size space for the toy task.
    pub fn search_space() -> SearchSpace {
        SearchSpace { lr: Range::log(1e-4, 0.2), ..SearchSpace::default() }
    }
}

impl PbtTask for QuadraticTask {
    type Error = std::convert::Infallible;

    fn hyperparams(&self) -> &HyperParams {
        &self.hp
    }

    fn set_hyperparams(&mut self, hp: HyperParams) -> Result<(), Self::Error> {
        self.hp = hp;
        Ok(())
    }

    fn train(&mut self, iterations: usize) -> Result<(), Self::Error> {
        for _ in 0..iterations {
            self.theta -= self.hp.lr * 2.0 * (self.theta - 1.0);
            self.iteration += 1;
        }
        Ok(())
    }

    fn evaluate(&self) -> Result<f64, Self::Error> {
        Ok(-(self.theta - 1.0) * (self.theta - 1.0))
    }

    fn load_state_from(&mut self, other: &Self) {
        self.theta = other.theta;
    }

    fn iteration(&self) -> usize {
        self.iteration
    }
}
