use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use idtrade::agents::{baseline, Agent};
use idtrade::config::RunConfig;
use idtrade::env::{MarketEpisode, NormStats};
use idtrade::io::{parse_forecasts_csv, validation_split, read_text, write_text, write_toml, DataDir, Dataset, SplitManifest, TrainStats};
use idtrade::market_data::{aggregate_all, parse_day_ahead_csv, parse_ticks_csv, parse_utc, split_train_test, OutlierBounds, SplitRule};
use idtrade::metrics::{evaluate, EvalOptions, EvaluationReport};
use idtrade::nn::ActorCritic;
use idtrade::pbt::{history_csv, pbt_run};
use idtrade::ppo::{PolicyAgent, Trainer, LEARNING_CURVE_HEADER};
use idtrade::rng::derive_seed;
use idtrade::synthetic::generate_market;

#[derive(Parser)]
#[command(name = "idtrade", version, about = "Intraday electricity trading with PPO")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Aggregate transaction ticks into per-product minute series and split them.
    Ingest(IngestArgs),
    /// Generate a synthetic market in the dataset layout.
    Synth(SynthArgs),
    /// Train a PPO agent.
    Train(TrainArgs),
    /// Population-based hyperparameter search.
    Tune(TuneArgs),
    /// Run agents over the test set and write the report.
    Evaluate(EvalArgs),
    /// Re-render a saved evaluation summary.
    Report(ReportArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration; defaults apply to everything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// CSV with columns timestamp,product,price,volume.
    #[arg(long)]
    ticks: Option<PathBuf>,
    /// CSV with columns product,price.
    #[arg(long)]
    day_ahead: Option<PathBuf>,
    /// CSV with columns product,minute,wind,price_5min.
    #[arg(long)]
    forecasts: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Products delivering at or after this date/time form the test set.
    #[arg(long)]
    test_after: Option<String>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    outlier_upper: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    outlier_lower: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    products: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    eval_interval: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Policy checkpoint; required when `agent` is listed.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated: agent, bl_first, bl_wf, bl_pf, bl_random.
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// `summary.json` written by `evaluate`.
    #[arg(long)]
    summary: PathBuf,
    /// Also write report.txt and profits.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Domain(e)
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Failure::Usage(msg.into()))
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig> {
    match &arg.config {
        None => Ok(RunConfig::default()),
        Some(p) if !p.is_file() => usage(format!("config file not found: {}", p.display())),
        Some(p) => RunConfig::load(p).map_err(|e| Failure::Usage(format!("invalid config: {e}"))),
    }
}

fn check(cfg: &RunConfig) -> Result<()> {
    cfg.validate().or_else(|e| usage(format!("invalid configuration: {e}")))
}

fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>, sub: &str) -> PathBuf {
    flag.unwrap_or_else(|| cfg.output_root().join(sub))
}

fn persist_config(dir: &Path, cfg: &RunConfig) -> anyhow::Result<()> {
    write_text(&dir.join("config.toml"), &cfg.to_toml())?;
    Ok(())
}

fn split_rule(cfg: &RunConfig) -> Result<(SplitRule, String)> {
    match &cfg.data.test_after {
        Some(s) => {
            let t = parse_utc(s).or_else(|e| usage(format!("--test-after: {e}")))?;
            Ok((SplitRule::TestFrom(t), format!("test_from = {}", t.to_rfc3339())))
        }
        None => Ok((SplitRule::TestFraction(cfg.data.test_fraction), format!("test_fraction = {}", cfg.data.test_fraction))),
    }
}

fn bounds(cfg: &RunConfig) -> Result<OutlierBounds> {
    OutlierBounds::new(cfg.data.outlier_lower, cfg.data.outlier_upper).or_else(|e| usage(e.to_string()))
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    let d = &mut cfg.data;
    d.ticks = a.ticks.or(d.ticks.take());
    d.day_ahead = a.day_ahead.or(d.day_ahead.take());
    d.forecasts = a.forecasts.or(d.forecasts.take());
    d.test_after = a.test_after.or(d.test_after.take());
    d.test_fraction = a.test_fraction.unwrap_or(d.test_fraction);
    d.outlier_upper = a.outlier_upper.unwrap_or(d.outlier_upper);
    d.outlier_lower = a.outlier_lower.unwrap_or(d.outlier_lower);
    if let Some(out) = a.out {
        d.dir = out;
    }
    check(&cfg)?;
    let Some(ticks_path) = cfg.data.ticks.clone() else {
        return usage("--ticks is required");
    };
    let (rule, rule_text) = split_rule(&cfg)?;
    let bounds = bounds(&cfg)?;

    let ticks = parse_ticks_csv(&read_text(&ticks_path)?).with_context(|| ticks_path.display().to_string())?;
    let mut series = aggregate_all(&ticks).context("aggregating ticks")?;
    if let Some(p) = &cfg.data.day_ahead {
        let da = parse_day_ahead_csv(&read_text(p)?).with_context(|| p.display().to_string())?;
        series = series
            .into_iter()
            .map(|s| match da.iter().find(|(id, _)| *id == s.product()) {
                Some(&(_, price)) => s.with_day_ahead(price),
                None => s,
            })
            .collect();
    }
    let forecasts = match &cfg.data.forecasts {
        Some(p) => Some(parse_forecasts_csv(&read_text(p)?).with_context(|| p.display().to_string())?),
        None => None,
    };
    let split = split_train_test(series, rule, Some(bounds)).context("splitting products")?;

    let dir = DataDir::new(&cfg.data.dir);
    let mut train_eps = Vec::new();
    for s in split.train.iter().chain(&split.test) {
        dir.write_series(s)?;
        if let Some(f) = &forecasts {
            let track = f
                .iter()
                .find(|(id, _)| *id == s.product())
                .map(|(_, t)| t.clone())
                .ok_or_else(|| anyhow!("no forecasts for product {}", s.product()))?;
            dir.write_forecast(s.product(), &track)?;
            if split.train.iter().any(|t| t.product() == s.product()) {
                train_eps.push(MarketEpisode::new(s.clone(), track).map_err(anyhow::Error::from)?);
            }
        }
    }
    dir.write_manifest(&SplitManifest {
        rule: rule_text,
        removed_outliers: split.removed_outliers,
        train: split.train.iter().map(|s| s.product()).collect(),
        test: split.test.iter().map(|s| s.product()).collect(),
    })?;
    dir.write_stats(&TrainStats {
        price_mean: split.train_stats.mean,
        price_std: split.train_stats.std,
        price_count: split.train_stats.count,
        wind_std: forecasts.is_some().then(|| NormStats::from_training(&train_eps).wind_std),
    })?;
    persist_config(&cfg.data.dir, &cfg)?;
    println!(
        "ingested {} products: {} train, {} test, {} removed as outliers -> {}",
        split.train.len() + split.test.len() + split.removed_outliers,
        split.train.len(),
        split.test.len(),
        split.removed_outliers,
        cfg.data.dir.display()
    );
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(out) = a.out {
        cfg.data.dir = out;
    }
    if let Some(seed) = a.seed {
        cfg.synthetic.seed = seed;
    }
    if let Some(n) = a.products {
        cfg.synthetic.n_products = n;
    }
    check(&cfg)?;
    let (rule, _) = split_rule(&cfg)?;
    let bounds = bounds(&cfg)?;
    let market = generate_market(&cfg.synthetic).context("generating market")?;
    let n = market.len();
    let data = Dataset::from_market(market, rule, Some(bounds)).context("splitting products")?;
    data.write(&DataDir::new(&cfg.data.dir))?;
    persist_config(&cfg.data.dir, &cfg)?;
    println!("generated {n} products ({} train, {} test) -> {}", data.train.len(), data.test.len(), cfg.data.dir.display());
    Ok(())
}

fn load_data(dir: &Path) -> Result<Dataset> {
    if !dir.join("split.toml").is_file() {
        return usage(format!("no dataset at {} (run ingest or synth first)", dir.display()));
    }
    Ok(DataDir::new(dir).load().map_err(anyhow::Error::from)?)
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(d) = a.data {
        cfg.data.dir = d;
    }
    if let Some(n) = a.iterations {
        cfg.train.iterations = n;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    check(&cfg)?;
    let out = out_dir(&cfg, a.out, "train");
    let data = load_data(&cfg.data.dir)?;
    let (train_eps, val_eps) = validation_split(data.train, cfg.train.validation_fraction);
    persist_config(&out, &cfg)?;

    let mut trainer = Trainer::new(cfg.train_config(data.stats), train_eps, val_eps).map_err(anyhow::Error::from)?;
    let mut curve = String::from(LEARNING_CURVE_HEADER);
    curve.push('\n');
    let every = cfg.train.checkpoint_every;
    let start = Instant::now();
    let mut io_error = None;
    trainer
        .train(|log, net| {
            curve.push_str(&log.csv_row());
            curve.push('\n');
            if every > 0 && log.iter % every == 0 {
                if let Err(e) = write_text(&out.join(format!("checkpoint_{:04}.json", log.iter)), &net.save_json()) {
                    io_error.get_or_insert(e);
                }
            }
            if log.mean_profit.is_finite() {
                eprintln!("iter {:4}  validation profit {:9.3}  ({:.1}s)", log.iter, log.mean_profit, start.elapsed().as_secs_f64());
            }
        })
        .map_err(anyhow::Error::from)?;
    if let Some(e) = io_error {
        return Err(anyhow::Error::from(e).into());
    }
    write_text(&out.join("learning_curve.csv"), &curve)?;
    let policy = if cfg.train.keep_best { trainer.best_net() } else { trainer.net() };
    write_text(&out.join("policy.json"), &policy.save_json())?;
    match trainer.best() {
        Some((p, _)) => println!("trained {} iterations; best validation profit {p:.3}; policy -> {}", trainer.iteration(), out.join("policy.json").display()),
        None => println!("trained {} iterations; policy -> {}", trainer.iteration(), out.join("policy.json").display()),
    }
    Ok(())
}

fn tune(a: TuneArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(d) = a.data {
        cfg.data.dir = d;
    }
    if let Some(n) = a.population {
        cfg.pbt.population = n;
    }
    if let Some(n) = a.eval_interval {
        cfg.pbt.eval_interval = n;
    }
    if let Some(n) = a.budget {
        cfg.pbt.budget = n;
    }
    if let Some(s) = a.seed {
        cfg.pbt.seed = s;
    }
    check(&cfg)?;
    let out = out_dir(&cfg, a.out, "tune");
    let data = load_data(&cfg.data.dir)?;
    let (train_eps, val_eps) = validation_split(data.train, cfg.train.validation_fraction);
    if val_eps.is_empty() {
        return usage("tune needs a validation slice (train.validation_fraction > 0)");
    }
    persist_config(&out, &cfg)?;
    let members = (0..cfg.pbt.population)
        .map(|i| {
            let mut tc = cfg.train_config(data.stats);
            tc.seed = derive_seed(cfg.train.seed, i as u64);
            tc.iterations = cfg.pbt.budget;
            tc.eval_every = usize::MAX;
            Trainer::new(tc, train_eps.clone(), val_eps.clone())
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(anyhow::Error::from)?;
    let outcome = pbt_run(members, &cfg.search, &cfg.pbt).map_err(anyhow::Error::from)?;
    write_text(&out.join("pbt_history.csv"), &history_csv(&outcome.history))?;
    let best = outcome.best_member();
    write_text(&out.join("best_policy.json"), &best.task.net().save_json())?;
    write_toml(&out.join("best_hyperparams.toml"), &best.task.config().hp)?;
    println!("best member {} with validation profit {:.3} -> {}", best.id, best.score, out.display());
    Ok(())
}

fn evaluate_cmd(a: EvalArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(d) = a.data {
        cfg.data.dir = d;
    }
    if let Some(list) = a.agents {
        cfg.evaluate.agents = list.into_iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(s) = a.seed {
        cfg.evaluate.seed = s;
    }
    check(&cfg)?;
    if cfg.evaluate.agents.is_empty() {
        return usage("no agents given");
    }
    let mut agents: Vec<Box<dyn Agent + Send>> = Vec::new();
    let data = load_data(&cfg.data.dir)?;
    for name in &cfg.evaluate.agents {
        if name == "agent" {
            let Some(path) = &a.checkpoint else {
                return usage("--checkpoint is required to evaluate `agent`");
            };
            if !path.is_file() {
                return usage(format!("checkpoint not found: {}", path.display()));
            }
            let net = ActorCritic::load_json(&read_text(path)?).map_err(anyhow::Error::from)?;
            agents.push(Box::new(PolicyAgent::deterministic(net)));
        } else {
            match baseline(name, data.stats.wind_std, cfg.evaluate.seed) {
                Some(b) => agents.push(b),
                None => return usage(format!("unknown agent `{name}`")),
            }
        }
    }
    let out = out_dir(&cfg, a.out, "evaluate");
    persist_config(&out, &cfg)?;
    let test: Vec<Arc<MarketEpisode>> = data.test.into_iter().map(Arc::new).collect();
    let report = evaluate(&mut agents, &test, &cfg.env_config(data.stats), EvalOptions { seed: cfg.evaluate.seed, strict: false })
        .map_err(anyhow::Error::from)?;
    report.emit(&out).map_err(anyhow::Error::from)?;
    print!("{}", report.table());
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    if !a.summary.is_file() {
        return usage(format!("summary not found: {}", a.summary.display()));
    }
    let r = EvaluationReport::from_json(&read_text(&a.summary)?).map_err(anyhow::Error::from)?;
    if let Some(out) = a.out {
        write_text(&out.join("report.txt"), &r.table())?;
        write_text(&out.join("profits.csv"), &r.profits_csv())?;
    }
    print!("{}", r.table());
    Ok(())
}

impl From<idtrade::io::IoError> for Failure {
    fn from(e: idtrade::io::IoError) -> Self {
        Failure::Domain(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Ingest(a) => ingest(a),
        Cmd::Synth(a) => synth(a),
        Cmd::Train(a) => train(a),
        Cmd::Tune(a) => tune(a),
        Cmd::Evaluate(a) => evaluate_cmd(a),
        Cmd::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
