//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.
//!
//! Run a subset by number: `cargo test -p idtrade --test acceptance -- 1 5 9`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::Rng as _;
use rand_distr::StandardNormal;

use idtrade::agents::{baseline, count_action_steps, run_episode, Agent, FirstForecast, PriceForecast, RandomTrader, WindFollower};
use idtrade::bound::episode_bound;
use idtrade::config::RunConfig;
use idtrade::env::{EnvConfig, ForecastTrack, MarketEpisode, MarketView, Mode, NormStats, Observation, TradingEnv, T_LAST};
use idtrade::io::{validation_split, Dataset};
use idtrade::market_data::{aggregate_vwap, filter_outlier_products, OutlierBounds, ProductId, ProductSeries, SplitRule, Tick, WINDOW_LEN};
use idtrade::metrics::{evaluate, EvalOptions, EvaluationReport};
use idtrade::nn::{gaussian, ActorCritic, ActorCriticSpec, Matrix};
use idtrade::pbt::{pbt_run, random_search, EventKind, PbtConfig, QuadraticTask};
use idtrade::ppo::{clipped_surrogate, compute_advantages, evaluate_policy, ppo_loss, HyperParams, Minibatch, RolloutBatch, RolloutWorker, Trainer};
use idtrade::rng::{rng_for, Rng};
use idtrade::synthetic::{generate_market, SyntheticConfig};

type Outcome = Result<String, String>;

const FEE: f64 = 0.2;
const VOL_COEF: f64 = 0.1;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {:.2}s, limit {:.0}s", took.as_secs_f64(), limit.as_secs_f64()))
}

fn product(i: usize) -> ProductId {
    ProductId(Utc.with_ymd_and_hms(2018, 3, 1, 12, 0, 0).unwrap() + chrono::Duration::hours(i as i64))
}

fn flat_episode(i: usize, price: f64, eta: f64) -> Arc<MarketEpisode> {
    let series = ProductSeries::from_prices(product(i), vec![price; WINDOW_LEN]).unwrap();
    let track = ForecastTrack::new(vec![eta; WINDOW_LEN], vec![price; WINDOW_LEN]).unwrap();
    Arc::new(MarketEpisode::new(series, track).unwrap())
}

fn market(n: usize, seed: u64) -> Vec<Arc<MarketEpisode>> {
    generate_market(&SyntheticConfig { n_products: n, seed, ..Default::default() }).unwrap().into_iter().map(Arc::new).collect()
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

// ---------------------------------------------------------------- 1

fn trade_oracle(p: f64, from: f64, to: f64) -> f64 {
    p * (to - from) - FEE * (to - from).abs()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_for(101, 0);
    let mut tuples: Vec<(f64, f64, f64, f64)> = vec![(50.0, 0.2, 0.3, 0.7), (50.0, 0.3, 0.2, 0.7)];
    while tuples.len() < 1000 {
        tuples.push((rng.random_range(-50.0..150.0), rng.random(), rng.random(), rng.random()));
    }
    let mut env = TradingEnv::new(EnvConfig::default());
    let mut worst = 0.0f64;
    for (i, &(p, a_prev, a_t, eta)) in tuples.iter().enumerate() {
        env.reset(flat_episode(i, p, eta), Mode::Training).map_err(|e| e.to_string())?;
        env.step(a_prev).map_err(|e| e.to_string())?;
        let r = env.step(a_t).map_err(|e| e.to_string())?.reward;
        worst = worst.max((r - trade_oracle(p, a_prev, a_t)).abs());
        for _ in 2..T_LAST {
            env.step(a_t).map_err(|e| e.to_string())?;
        }
        // terminal: trade back to a_prev, then the volume penalty on η − a_prev
        let last = env.step(a_prev).map_err(|e| e.to_string())?;
        let penalty = -VOL_COEF * (eta - a_prev) * (eta - a_prev);
        worst = worst.max((last.info.volume_reward - penalty).abs());
        worst = worst.max((last.reward - (trade_oracle(p, a_t, a_prev) + penalty)).abs());
        ensure(last.done, || format!("tuple {i}: episode not done after {} steps", T_LAST + 1))?;
    }
    ensure((trade_oracle(50.0, 0.2, 0.3) - 4.98).abs() < 1e-12, || "hand example 4.98".into())?;
    ensure((-VOL_COEF * (0.7f64 - 0.2).powi(2) + 0.025).abs() < 1e-12, || "hand example -0.025".into())?;
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    within_time(start, Duration::from_secs(1))?;
    Ok(format!("{} tuples, max deviation {worst:e}", tuples.len()))
}

// ---------------------------------------------------------------- 2

/// Plays fixed random actions, ignoring the observation.
struct Scripted(Vec<f64>);

impl Agent for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }
    fn reset(&mut self, _: u64) {}
    fn act(&mut self, _: &Observation, view: &MarketView) -> f64 {
        self.0[view.t]
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let eps = market(100, 202);
    let stats = NormStats::from_training(&eps.iter().map(|e| (**e).clone()).collect::<Vec<_>>());
    let mut env = TradingEnv::new(EnvConfig { stats, ..Default::default() });
    let mut rng = rng_for(202, 1);
    for (j, ep) in eps.iter().enumerate() {
        let actions: Vec<f64> = (0..WINDOW_LEN).map(|_| rng.random_range(-0.2..1.2)).collect();
        let res = run_episode(&mut env, &mut Scripted(actions.clone()), ep.clone(), Mode::Evaluation, 0).map_err(|e| e.to_string())?;

        let (mut v, mut cash, mut fees) = (0.0f64, 0.0f64, 0.0f64);
        for (t, &a) in actions.iter().enumerate() {
            let target = a.clamp(0.0, 1.0);
            let p = ep.series.prices()[t];
            cash += p * (target - v) - FEE * (target - v).abs();
            fees += FEE * (target - v).abs();
            v = target;
        }
        let (p, eta) = (ep.series.prices()[T_LAST], ep.forecast.wind()[T_LAST]);
        cash += p * (eta - v) - FEE * (eta - v).abs();
        fees += FEE * (eta - v).abs();

        let state = env.state();
        let from_log = res.records.iter().fold(0.0, |c, r| c + r.cash_flow());
        ensure(state.cash == cash && from_log == cash, || format!("episode {j}: env cash {} log {from_log} oracle {cash}", state.cash))?;
        ensure(state.fees_paid == fees, || format!("episode {j}: fees {} vs {fees}", state.fees_paid))?;
        ensure((res.profit - cash).abs() <= 1e-9 * (1.0 + cash.abs()), || format!("episode {j}: profit {} vs {cash}", res.profit))?;
        ensure(state.volume == eta, || format!("episode {j}: final volume {} != eta {eta}", state.volume))?;
    }
    let mut agents: Vec<Box<dyn Agent + Send>> =
        ["bl_first", "bl_wf", "bl_pf", "bl_random"].iter().map(|n| baseline(n, stats.wind_std, 7).unwrap()).collect();
    for agent in agents.iter_mut() {
        for (j, ep) in eps.iter().enumerate() {
            run_episode(&mut env, agent, ep.clone(), Mode::Evaluation, j as u64).map_err(|e| e.to_string())?;
            let eta = ep.forecast.wind()[T_LAST];
            ensure(env.state().volume == eta, || format!("{} ends at {} on episode {j}, eta {eta}", agent.name(), env.state().volume))?;
        }
    }
    within_time(start, Duration::from_secs(5))?;
    Ok(format!("{} episodes exact; 4 baselines end at eta_T", eps.len()))
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_for(303, 0);
    let hp = HyperParams::default();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for k in 0..20u64 {
        let depth = rng.random_range(1..=3);
        let spec = ActorCriticSpec {
            obs_dim: rng.random_range(2..=6),
            hidden: (0..depth).map(|_| rng.random_range(2..=8)).collect(),
            init_log_std: rng.random_range(-1.0..0.0),
            policy_gain: 1.0,
            seed: k,
            ..Default::default()
        };
        let mut net = ActorCritic::new(spec.clone());
        let n = rng.random_range(3..=12);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..spec.obs_dim).map(|_| normal(&mut rng)).collect()).collect();
        let obs = Matrix::from_rows(&rows);
        let out = net.evaluate(&obs).map_err(|e| e.to_string())?;
        let std = out.log_std.exp();
        let means_old: Vec<f64> = out.mean.iter().map(|m| m + 0.02 * std * normal(&mut rng)).collect();
        let ls_old = out.log_std + 0.01;
        let actions: Vec<f64> = out.mean.iter().map(|m| m + std * normal(&mut rng)).collect();
        let mb = Minibatch {
            obs: obs.clone(),
            log_probs_old: actions.iter().zip(&means_old).map(|(&a, &m)| gaussian::log_prob(a, m, ls_old)).collect(),
            actions,
            means_old,
            log_stds_old: vec![ls_old; n],
            advantages: (0..n).map(|_| normal(&mut rng)).collect(),
            returns: out.value.iter().map(|v| v + normal(&mut rng)).collect(),
            values_old: out.value.iter().map(|v| v + 0.5 * normal(&mut rng)).collect(),
        };
        let fwd = net.forward(&obs).map_err(|e| e.to_string())?;
        let (stats, og) = ppo_loss(&fwd, &mb, &hp);
        ensure(stats.clip_frac == 0.0, || format!("net {k}: ratios left the clip band"))?;
        let analytic = net.backward(&og).map_err(|e| e.to_string())?;

        let h = 1e-6;
        let loss_at = |params: &[f64]| {
            let probe = ActorCritic::from_params(spec.clone(), params.to_vec()).unwrap();
            ppo_loss(&probe.evaluate(&obs).unwrap(), &mb, &hp).0.total
        };
        let mut params = net.params().to_vec();
        let mut diff2 = 0.0;
        let mut norm2 = 0.0f64;
        let mut fd_norm2 = 0.0f64;
        for i in 0..params.len() {
            let x = params[i];
            params[i] = x + h;
            let up = loss_at(&params);
            params[i] = x - h;
            let down = loss_at(&params);
            params[i] = x;
            let fd = (up - down) / (2.0 * h);
            diff2 += (fd - analytic[i]).powi(2);
            norm2 += analytic[i].powi(2);
            fd_norm2 += fd * fd;
        }
        let rel = diff2.sqrt() / norm2.max(fd_norm2).sqrt().max(1e-12);
        worst = worst.max(rel);
        checked += params.len();
    }
    ensure(worst < 1e-4, || format!("worst relative error {worst:e}"))?;
    within_time(start, Duration::from_secs(30))?;
    Ok(format!("20 networks, {checked} parameters, worst relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let mut rng = rng_for(404, 0);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(1..300);
        let mut b = RolloutBatch::default();
        for i in 0..n {
            b.rewards.push(10.0 * normal(&mut rng));
            b.values.push(5.0 * normal(&mut rng));
            let done = rng.random::<f64>() < 0.05;
            b.dones.push(done);
            b.bootstrap.push((!done && (i + 1 == n || rng.random::<f64>() < 0.05)).then(|| normal(&mut rng)));
        }
        compute_advantages(&mut b, 0.0, rng.random());
        for i in 0..n {
            worst = worst.max((b.raw_advantages[i] - (b.rewards[i] - b.values[i])).abs());
        }
    }

    let eps = market(6, 404);
    let stats = NormStats::from_training(&eps.iter().map(|e| (**e).clone()).collect::<Vec<_>>());
    let net = ActorCritic::new(ActorCriticSpec { hidden: vec![16, 16], seed: 4, ..Default::default() });
    let mut worker = RolloutWorker::new(EnvConfig { stats, ..Default::default() }, Arc::new(eps), 404, 0);
    let mut b = worker.collect(&net, 700).map_err(|e| e.to_string())?;
    compute_advantages(&mut b, 0.0, 0.95);
    for i in 0..b.len() {
        worst = worst.max((b.raw_advantages[i] - (b.rewards[i] - b.values[i])).abs());
    }
    ensure(worst <= 1e-12, || format!("max |A - (r - V)| = {worst:e}"))?;
    Ok(format!("50 random batches and a 700-step rollout, max deviation {worst:e}"))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let eps = HyperParams::default().clip;
    ensure(eps == 0.432, || format!("default clip {eps}"))?;
    let cases: [(&str, f64, f64, (f64, f64)); 5] = [
        ("tau=1.5, A=2 clipped", 1.5, 2.0, (1.432 * 2.0, 0.0)),
        ("tau=1, A=2 identity", 1.0, 2.0, (2.0, 2.0)),
        ("tau=1, A=-3 identity", 1.0, -3.0, (-3.0, -3.0)),
        ("tau=2, A=-1 unclipped", 2.0, -1.0, (-2.0, -1.0)),
        ("tau=0.01, A=-1 clipped", 0.01, -1.0, (-(1.0 - 0.432), 0.0)),
    ];
    for (name, tau, adv, want) in cases {
        let got = clipped_surrogate(tau, adv, eps);
        ensure(got == want, || format!("{name}: got {got:?}, want {want:?}"))?;
    }
    Ok(format!("{} cases exact", cases.len()))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/sawtooth.toml");
    let base = RunConfig::load(&path).map_err(|e| e.to_string())?;
    let bounds = OutlierBounds::new(base.data.outlier_lower, base.data.outlier_upper).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut failed = false;
    for seed in 0..3u64 {
        let start = Instant::now();
        let mut cfg = base.clone();
        cfg.synthetic.seed = seed;
        cfg.train.seed = seed;
        let eps = generate_market(&cfg.synthetic).map_err(|e| e.to_string())?;
        let data = Dataset::from_market(eps, SplitRule::TestFraction(cfg.data.test_fraction), Some(bounds)).map_err(|e| e.to_string())?;
        let test: Vec<Arc<MarketEpisode>> = data.test.iter().cloned().map(Arc::new).collect();
        let (train, val) = validation_split(data.train, cfg.train.validation_fraction);
        let env = cfg.env_config(data.stats);
        let mut trainer = Trainer::new(cfg.train_config(data.stats), train, val).map_err(|e| e.to_string())?;
        trainer.train(|_, _| {}).map_err(|e| e.to_string())?;
        let agent = evaluate_policy(trainer.best_net(), &test, &env).map_err(|e| e.to_string())?;

        let mut e = TradingEnv::new(env);
        let mut wf = WindFollower;
        let mut wf_total = 0.0;
        for ep in &test {
            wf_total += run_episode(&mut e, &mut wf, ep.clone(), Mode::Evaluation, 0).map_err(|e| e.to_string())?.profit;
        }
        let wf_mean = wf_total / test.len() as f64;
        let bound = test.iter().map(|ep| episode_bound(ep, env.fee)).sum::<f64>() / test.len() as f64;
        let secs = start.elapsed().as_secs_f64();
        let gain = (agent - wf_mean) / wf_mean.abs();
        let share = agent / bound;
        let ok = gain >= 0.25 && share >= 0.70 && secs < 600.0 && trainer.iteration() <= 200;
        failed |= !ok;
        lines.push(format!(
            "seed {seed}: agent {agent:.2}, bl_wf {wf_mean:.2} ({:+.1}%), bound {bound:.2} ({:.1}%), {} iterations, {secs:.0}s{}",
            100.0 * gain,
            100.0 * share,
            trainer.iteration(),
            if ok { "" } else { " <- FAIL" }
        ));
    }
    let detail = lines.join("; ");
    if failed {
        Err(detail)
    } else {
        Ok(detail)
    }
}

// ---------------------------------------------------------------- 7

fn pf_oracle(ep: &MarketEpisode) -> Vec<f64> {
    let d = |t: usize| ep.series.prices()[t] - ep.forecast.price_5min()[t];
    let mut v = 0.0f64;
    let mut trace = vec![v];
    for t in 1..WINDOW_LEN {
        if d(t) > 0.0 && d(t - 1) > 0.0 {
            v = (v + 0.1).min(1.0);
        } else if d(t) < 0.0 && d(t - 1) < 0.0 {
            v = (v - 0.1).max(0.0);
        }
        trace.push(v);
    }
    trace
}

fn criterion_7() -> Outcome {
    let eps = market(60, 707);
    let stats = NormStats::from_training(&eps.iter().map(|e| (**e).clone()).collect::<Vec<_>>());
    let mut env = TradingEnv::new(EnvConfig { stats, ..Default::default() });
    let run = |env: &mut TradingEnv, agent: &mut dyn Agent, ep: &Arc<MarketEpisode>, seed: u64| {
        run_episode(env, agent, ep.clone(), Mode::Evaluation, seed).map_err(|e| e.to_string())
    };

    let mut random = RandomTrader::new(stats.wind_std, 7);
    let mut steps = 0usize;
    let mut moves = 0usize;
    let mut k = 0u64;
    while steps < 100_000 {
        let r = run(&mut env, &mut random, &eps[k as usize % eps.len()], k)?;
        steps += WINDOW_LEN;
        moves += count_action_steps(&r.records);
        k += 1;
    }
    let freq = random.resamples() as f64 / steps as f64;
    ensure((freq - 0.25).abs() <= 0.01, || format!("bl_random resample frequency {freq:.4}"))?;
    ensure(moves as u64 <= random.resamples(), || "bl_random traded without resampling".into())?;

    let mut first_max = 0;
    let mut pf_trades = 0;
    for (j, ep) in eps.iter().take(50).enumerate() {
        let wf = run(&mut env, &mut WindFollower, ep, 0)?;
        for r in wf.records.iter().filter(|r| !r.forced) {
            ensure(r.action == ep.forecast.wind()[r.t], || format!("bl_wf off eta at product {j}, t {}", r.t))?;
        }
        let first = run(&mut env, &mut FirstForecast, ep, 0)?;
        first_max = first_max.max(count_action_steps(&first.records));
        let pf = run(&mut env, &mut PriceForecast::default(), ep, 0)?;
        let want = pf_oracle(ep);
        let got: Vec<f64> = pf.records.iter().filter(|r| !r.forced).map(|r| r.action).collect();
        ensure(got == want, || format!("bl_pf trace differs from the rule oracle on product {j}"))?;
        pf_trades += count_action_steps(&pf.records);
    }
    ensure(first_max <= 1, || format!("bl_first made {first_max} voluntary trades"))?;
    Ok(format!(
        "bl_random frequency {freq:.4} over {steps} steps; bl_wf = eta; bl_first <= {first_max} trade; bl_pf matches oracle on 50 products ({pf_trades} trades)"
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let space = QuadraticTask::search_space();
    let mut wins = 0;
    let mut exploits = 0;
    for seed in 0..20 {
        let cfg = PbtConfig { population: 8, eval_interval: 5, budget: 40, seed, ..Default::default() };
        let pop = || vec![QuadraticTask::new(-2.0); cfg.population];
        let p = pbt_run(pop(), &space, &cfg).map_err(|_| "pbt failed".to_string())?;
        let r = random_search(pop(), &space, &cfg).map_err(|_| "random search failed".to_string())?;
        if p.best_member().score >= r.best_member().score {
            wins += 1;
        }
        let g = cfg.group_size();
        let rounds = p.history.iter().map(|e| e.round).max().unwrap_or(0);
        for round in 0..=rounds {
            let mut evals: Vec<(usize, f64)> =
                p.history.iter().filter(|e| e.round == round && e.kind == EventKind::Evaluate).map(|e| (e.member, e.score)).collect();
            evals.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let top: Vec<usize> = evals.iter().take(g).map(|e| e.0).collect();
            for e in p.history.iter().filter(|e| e.round == round && e.kind == EventKind::Exploit) {
                exploits += 1;
                ensure(!top.contains(&e.member), || format!("seed {seed} round {round}: top member {} overwritten", e.member))?;
            }
        }
    }
    ensure(wins >= 16, || format!("PBT >= random search in {wins}/20 trials"))?;
    Ok(format!("PBT >= random search in {wins}/20 trials; {exploits} exploits, none on a top-quantile member"))
}

// ---------------------------------------------------------------- 9

fn kth_smallest(x: &[f64], k: usize) -> f64 {
    *x.iter()
        .find(|&&v| {
            let below = x.iter().filter(|&&y| y < v).count();
            let at_most = x.iter().filter(|&&y| y <= v).count();
            below <= k && k < at_most
        })
        .unwrap()
}

fn oracle_quantile(x: &[f64], q: f64) -> f64 {
    let h = (x.len() - 1) as f64 * q;
    let (lo, hi) = (kth_smallest(x, h.floor() as usize), kth_smallest(x, h.ceil() as usize));
    lo + (h - h.floor()) * (hi - lo)
}

fn oracle_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let pairs: f64 = x.iter().flat_map(|a| x.iter().map(move |b| (a - b) * (a - b))).sum();
    (pairs / (2.0 * n * n)).sqrt()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

const GOLDEN_TABLE: &str = "                        agent  bl_wf
Mean                     2.50   2.00
Median                   2.50   2.00
Standard Deviation       1.12   0.00
10% Quantile             1.30   2.00
90% Quantile             3.70   2.00
Total net profit        10.00   8.00
% Improvement to BL_WF  25.00   0.00
Best Performance in %   62.50  37.50
Steps                    2.50   4.00
";

fn criterion_9() -> Outcome {
    let eps = market(30, 909);
    let stats = NormStats::from_training(&eps.iter().map(|e| (**e).clone()).collect::<Vec<_>>());
    let env = EnvConfig { stats, ..Default::default() };
    let names = ["bl_first", "bl_wf", "bl_pf", "bl_random"];
    let mut agents: Vec<Box<dyn Agent + Send>> = names.iter().map(|n| baseline(n, stats.wind_std, 3).unwrap()).collect();
    let opts = EvalOptions { seed: 9, strict: true };
    let report = evaluate(&mut agents, &eps, &env, opts).map_err(|e| e.to_string())?;

    let mut logs: Vec<Vec<(f64, usize)>> = Vec::new();
    let mut e = TradingEnv::new(env);
    for name in names {
        let mut agent = baseline(name, stats.wind_std, 3).unwrap();
        let mut per = Vec::new();
        for (j, ep) in eps.iter().enumerate() {
            let r = run_episode(&mut e, &mut agent, ep.clone(), Mode::Evaluation, idtrade::rng::derive_seed(opts.seed, j as u64))
                .map_err(|e| e.to_string())?;
            let cash: f64 = r.records.iter().map(|t| t.price * t.delta_v - t.fee).sum();
            let trades = r.records.iter().filter(|t| !t.forced && t.delta_v.abs() > 1e-9).count();
            per.push((cash, trades));
        }
        logs.push(per);
    }
    let n = eps.len() as f64;
    let totals: Vec<f64> = logs.iter().map(|p| p.iter().map(|x| x.0).sum()).collect();
    let wf_total = totals[1];
    for (i, m) in report.agents.iter().enumerate() {
        let p: Vec<f64> = logs[i].iter().map(|x| x.0).collect();
        for (j, &v) in p.iter().enumerate() {
            ensure(close(report.profits[i][j], v), || format!("{}: profit {j} {} vs {v}", m.name, report.profits[i][j]))?;
        }
        let best: f64 = (0..p.len())
            .map(|j| {
                let top = logs.iter().map(|l| l[j].0).fold(f64::NEG_INFINITY, f64::max);
                let tied = logs.iter().filter(|l| l[j].0 == top).count() as f64;
                if p[j] == top {
                    1.0 / tied
                } else {
                    0.0
                }
            })
            .sum();
        let want = [
            ("mean", m.mean, totals[i] / n),
            ("median", m.median, oracle_quantile(&p, 0.5)),
            ("std", m.std, oracle_std(&p)),
            ("q10", m.q10, oracle_quantile(&p, 0.1)),
            ("q90", m.q90, oracle_quantile(&p, 0.9)),
            ("total", m.total, totals[i]),
            ("improvement", m.improvement.unwrap_or(f64::NAN), (totals[i] - wf_total) / wf_total.abs() * 100.0),
            ("best share", m.best_share, 100.0 * best / n),
            ("steps", m.steps, logs[i].iter().map(|x| x.1).sum::<usize>() as f64 / n),
        ];
        for (what, got, oracle) in want {
            ensure(close(got, oracle), || format!("{} {what}: {got} vs oracle {oracle}", m.name))?;
        }
    }

    let fixed = EvaluationReport::from_results(
        vec!["agent".into(), "bl_wf".into()],
        (0..4).map(|j| format!("p{j}")).collect(),
        vec![vec![1.0, 2.0, 3.0, 4.0], vec![2.0; 4]],
        vec![vec![1, 2, 3, 4], vec![4; 4]],
    )
    .map_err(|e| e.to_string())?;
    let table = fixed.table();
    ensure(table == GOLDEN_TABLE, || format!("table differs:\n{table}"))?;
    let back = EvaluationReport::from_json(&fixed.to_json()).map_err(|e| e.to_string())?;
    ensure(back.table() == table, || "table changed after a JSON round trip".into())?;
    Ok(format!("{} agents x {} products match the oracle; golden table stable", names.len(), eps.len()))
}

// ---------------------------------------------------------------- 10

fn vwap_oracle(ticks: &[Tick], id: ProductId) -> Vec<f64> {
    let start = id.window_start().timestamp_millis();
    let mut groups: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for t in ticks {
        let minute = (t.timestamp.timestamp_millis() - start).div_euclid(60_000);
        let g = groups.entry(minute).or_default();
        g.0 += t.price * t.volume;
        g.1 += t.volume;
    }
    let mut last = groups.range(..0).next_back().map(|(_, g)| g.0 / g.1);
    (0..WINDOW_LEN as i64)
        .map(|m| {
            if let Some(g) = groups.get(&m) {
                last = Some(g.0 / g.1);
            }
            last.unwrap()
        })
        .collect()
}

fn criterion_10() -> Outcome {
    let mut rng = rng_for(1010, 0);
    let mut ticks_total = 0;
    for i in 0..40 {
        let id = product(i);
        let start = id.window_start();
        let mut ticks = Vec::new();
        // one pre-window trade seeds products whose first window minute is empty
        ticks.push(Tick { timestamp: start - chrono::Duration::seconds(rng.random_range(1..600)), product: id, price: 40.0, volume: 1.0 });
        for _ in 0..rng.random_range(50..600) {
            let ms = rng.random_range(-600_000..(WINDOW_LEN as i64 + 5) * 60_000);
            ticks.push(Tick {
                timestamp: start + chrono::Duration::milliseconds(ms),
                product: id,
                price: rng.random_range(-20.0..120.0),
                volume: rng.random_range(0.1..25.0),
            });
        }
        ticks_total += ticks.len();
        let series = aggregate_vwap(&ticks, id).map_err(|e| e.to_string())?;
        ensure(series.prices().len() == WINDOW_LEN, || format!("product {i}: {} entries", series.prices().len()))?;
        let in_window: Vec<Tick> =
            ticks.iter().copied().filter(|t| (t.timestamp - start).num_milliseconds() < WINDOW_LEN as i64 * 60_000).collect();
        let want = vwap_oracle(&in_window, id);
        for (m, (&got, &w)) in series.prices().iter().zip(&want).enumerate() {
            ensure((got - w).abs() <= 1e-9 * (1.0 + w.abs()), || format!("product {i} minute {m}: {got} vs {w}"))?;
        }
    }

    let bounds = OutlierBounds::default();
    let violators: Vec<usize> = (0..3288).filter(|k| k % 100 == 7).collect();
    let mut products = Vec::with_capacity(3288);
    for k in 0..3288usize {
        let mut prices: Vec<f64> = (0..WINDOW_LEN).map(|m| 40.0 + ((k * 31 + m * 7) % 90) as f64).collect();
        if k % 5 == 0 {
            prices[k % WINDOW_LEN] = 150.0;
            prices[(k + 1) % WINDOW_LEN] = -50.0;
        }
        if violators.contains(&k) {
            prices[(k * 13) % WINDOW_LEN] = if k % 2 == 0 { 150.01 } else { -50.01 };
        }
        products.push(ProductSeries::from_prices(product(k), prices).map_err(|e| e.to_string())?);
    }
    let out = filter_outlier_products(products, bounds);
    ensure(violators.len() == 33 && out.removed == 33, || format!("removed {} of 3288, constructed {}", out.removed, violators.len()))?;
    let kept: Vec<ProductId> = out.retained.iter().map(|s| s.product()).collect();
    let want: Vec<ProductId> = (0..3288).filter(|k| !violators.contains(k)).map(product).collect();
    ensure(kept == want, || "retained set differs from the non-violators".into())?;
    Ok(format!("40 products / {ticks_total} ticks match the grouped-mean oracle; outlier filter removed 33 of 3288"))
}

fn main() -> ExitCode {
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (n, run) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n}: PASS  {detail}  ({secs:.2}s)"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n}: FAIL  {detail}  ({secs:.2}s)");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
