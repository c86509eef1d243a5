//! Evaluation harness: runs agents over a test set and summarizes per-product
//! profits in the layout of the results table.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{run_episode, Agent};
use crate::env::{EnvConfig, EnvError, MarketEpisode, MarketView, Mode, Observation, TradingEnv};
use crate::rng::derive_seed;

/// Name of the reference agent for the improvement row.
pub const REFERENCE_AGENT: &str = "bl_wf";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no agents to evaluate")]
    NoAgents,
    #[error("no test products")]
    NoProducts,
    #[error("agent {agent} chose {action} at t = {t} on product {product}")]
    AgentViolation { agent: String, product: String, t: usize, action: f64 },
    #[error("profit matrix shape does not match agent and product lists")]
    Shape,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Quantile with linear interpolation between closest ranks, `q ∈ [0, 1]`.
pub fn quantile(x: &[f64], q: f64) -> f64 {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// `(total − reference)/|reference| · 100`; `None` for a zero reference.
pub fn improvement(total: f64, reference: f64) -> Option<f64> {
    (reference != 0.0).then(|| (total - reference) / reference.abs() * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub q10: f64,
    pub q90: f64,
    pub total: f64,
    /// Percent improvement of the total over the reference agent.
    pub improvement: Option<f64>,
    /// Percent of products where this agent had the highest profit, ties split.
    pub best_share: f64,
    /// Mean number of action steps per product.
    pub steps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub products: Vec<String>,
    pub agents: Vec<AgentMetrics>,
    /// `profits[agent][product]`.
    pub profits: Vec<Vec<f64>>,
    /// `action_steps[agent][product]`.
    pub action_steps: Vec<Vec<usize>>,
}

impl EvaluationReport {
    /// Computes every statistic from the raw per-product results.
    pub fn from_results(names: Vec<String>, products: Vec<String>, profits: Vec<Vec<f64>>, action_steps: Vec<Vec<usize>>) -> Result<Self, MetricsError> {
        if names.is_empty() {
            return Err(MetricsError::NoAgents);
        }
        if products.is_empty() {
            return Err(MetricsError::NoProducts);
        }
        let n = products.len();
        if profits.len() != names.len()
            || action_steps.len() != names.len()
            || profits.iter().any(|p| p.len() != n)
            || action_steps.iter().any(|s| s.len() != n)
        {
            return Err(MetricsError::Shape);
        }

        let mut best = vec![0.0; names.len()];
        for j in 0..n {
            let top = profits.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max);
            let winners: Vec<usize> = (0..names.len()).filter(|&i| profits[i][j] == top).collect();
            for &i in &winners {
                best[i] += 1.0 / winners.len() as f64;
            }
        }
        let totals: Vec<f64> = profits.iter().map(|p| p.iter().sum()).collect();
        let reference = names.iter().position(|a| a == REFERENCE_AGENT).map(|i| totals[i]);

        let agents = names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let p = &profits[i];
                AgentMetrics {
                    name: name.clone(),
                    mean: totals[i] / n as f64,
                    median: quantile(p, 0.5),
                    std: std_dev(p),
                    q10: quantile(p, 0.1),
                    q90: quantile(p, 0.9),
                    total: totals[i],
                    improvement: reference.and_then(|r| improvement(totals[i], r)),
                    best_share: 100.0 * best[i] / n as f64,
                    steps: action_steps[i].iter().sum::<usize>() as f64 / n as f64,
                }
            })
            .collect();
        Ok(Self { products, agents, profits, action_steps })
    }

    pub fn agent(&self, name: &str) -> Option<&AgentMetrics> {
        self.agents.iter().find(|a| a.name == name)
    }

    /// Text table, one column per agent.
    pub fn table(&self) -> String {
        type Cell = fn(&AgentMetrics) -> String;
        let rows: [(&str, Cell); 9] = [
            ("Mean", |a| format!("{:.2}", a.mean)),
            ("Median", |a| format!("{:.2}", a.median)),
            ("Standard Deviation", |a| format!("{:.2}", a.std)),
            ("10% Quantile", |a| format!("{:.2}", a.q10)),
            ("90% Quantile", |a| format!("{:.2}", a.q90)),
            ("Total net profit", |a| format!("{:.2}", a.total)),
            ("% Improvement to BL_WF", |a| a.improvement.map_or_else(|| "n/a".into(), |v| format!("{v:.2}"))),
            ("Best Performance in %", |a| format!("{:.2}", a.best_share)),
            ("Steps", |a| format!("{:.2}", a.steps)),
        ];
        let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
        let cells: Vec<Vec<String>> = rows.iter().map(|(_, f)| self.agents.iter().map(f).collect()).collect();
        let col_w: Vec<usize> = (0..self.agents.len())
            .map(|i| cells.iter().map(|r| r[i].len()).chain([self.agents[i].name.len()]).max().unwrap_or(0))
            .collect();

        let mut out = String::new();
        let _ = write!(out, "{:label_w$}", "");
        for (a, w) in self.agents.iter().zip(&col_w) {
            let _ = write!(out, "  {:>w$}", a.name);
        }
        out.push('\n');
        for ((label, _), row) in rows.iter().zip(&cells) {
            let _ = write!(out, "{label:label_w$}");
            for (c, w) in row.iter().zip(&col_w) {
                let _ = write!(out, "  {c:>w$}");
            }
            out.push('\n');
        }
        out
    }

    /// Per-product profits, one column per agent.
    pub fn profits_csv(&self) -> String {
        let mut out = String::from("product");
        for a in &self.agents {
            out.push(',');
            out.push_str(&a.name);
        }
        out.push('\n');
        for (j, p) in self.products.iter().enumerate() {
            out.push_str(p);
            for row in &self.profits {
                let _ = write!(out, ",{}", row[j]);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `report.txt`, `profits.csv` and `summary.json` into `dir`.
    pub fn emit(&self, dir: &Path) -> Result<(), MetricsError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), self.table())?;
        fs::write(dir.join("profits.csv"), self.profits_csv())?;
        fs::write(dir.join("summary.json"), self.to_json())?;
        Ok(())
    }
}

struct Checked<'a> {
    inner: &'a mut (dyn Agent + Send),
    violation: Option<(usize, f64)>,
}

impl Agent for Checked<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn reset(&mut self, episode_seed: u64) {
        self.inner.reset(episode_seed)
    }

    fn act(&mut self, obs: &Observation, view: &MarketView) -> f64 {
        let a = self.inner.act(obs, view);
        if self.violation.is_none() && !(0.0..=1.0).contains(&a) {
            self.violation = Some((view.t, a));
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub seed: u64,
    /// Report actions outside [0, 1] as errors instead of clamping them.
    pub strict: bool,
}

/// Runs every agent over every test product in order, in evaluation mode.
/// Product `j` is played with episode seed `derive_seed(seed, j)` by every agent.
pub fn evaluate(
    agents: &mut [Box<dyn Agent + Send>],
    test: &[Arc<MarketEpisode>],
    env: &EnvConfig,
    opts: EvalOptions,
) -> Result<EvaluationReport, MetricsError> {
    if agents.is_empty() {
        return Err(MetricsError::NoAgents);
    }
    if test.is_empty() {
        return Err(MetricsError::NoProducts);
    }
    let run = |agent: &mut Box<dyn Agent + Send>| -> Result<(Vec<f64>, Vec<usize>), MetricsError> {
        let mut e = TradingEnv::new(*env);
        let mut profits = Vec::with_capacity(test.len());
        let mut steps = Vec::with_capacity(test.len());
        for (j, ep) in test.iter().enumerate() {
            let mut checked = Checked { inner: agent.as_mut(), violation: None };
            let r = run_episode(&mut e, &mut checked, ep.clone(), Mode::Evaluation, derive_seed(opts.seed, j as u64))?;
            if let (true, Some((t, action))) = (opts.strict, checked.violation) {
                return Err(MetricsError::AgentViolation { agent: agent.name().to_string(), product: ep.series.product().to_string(), t, action });
            }
            profits.push(r.profit);
            steps.push(r.action_steps);
        }
        Ok((profits, steps))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(Vec<f64>, Vec<usize>), MetricsError>> = {
        use rayon::prelude::*;
        agents.par_iter_mut().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(Vec<f64>, Vec<usize>), MetricsError>> = agents.iter_mut().map(run).collect();

    let names = agents.iter().map(|a| a.name().to_string()).collect();
    let products = test.iter().map(|e| e.series.product().to_string()).collect();
    let mut profits = Vec::with_capacity(agents.len());
    let mut steps = Vec::with_capacity(agents.len());
    for r in results {
        let (p, s) = r?;
        profits.push(p);
        steps.push(s);
    }
    EvaluationReport::from_results(names, products, profits, steps)
}
