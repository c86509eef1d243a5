//! On-disk dataset layout shared by `ingest` and `synth`:
//!
//! ```text
//! <dir>/products/<YYYYMMDDTHHMM>.json   one ProductSeries each
//! <dir>/forecasts/<YYYYMMDDTHHMM>.json  one ForecastTrack each (optional for ingest)
//! <dir>/split.toml                      train/test product lists
//! <dir>/train_stats.toml                normalization statistics of the train side
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, ForecastTrack, MarketEpisode, NormStats};
use crate::market_data::{parse_utc, split_train_test, DataError, OutlierBounds, ProductId, ProductSeries, SplitRule, WINDOW_LEN};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("no forecast file for product {0}")]
    MissingForecast(ProductId),
    #[error("product {0} listed in the split manifest has no series file")]
    MissingProduct(ProductId),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn fmt_err(path: &Path, msg: impl ToString) -> IoError {
    IoError::Format { path: path.to_path_buf(), msg: msg.to_string() }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| fmt_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_text(path, &serde_json::to_string(value).map_err(|e| fmt_err(path, e))?)
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    toml::from_str(&read_text(path)?).map_err(|e| fmt_err(path, e))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_text(path, &toml::to_string(value).map_err(|e| fmt_err(path, e))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    /// How the split was made, e.g. `test_fraction = 0.2` or `test_from = ...`.
    pub rule: String,
    pub removed_outliers: usize,
    pub train: Vec<ProductId>,
    pub test: Vec<ProductId>,
}

/// Normalization statistics as stored next to the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub price_mean: f64,
    pub price_std: f64,
    pub price_count: usize,
    /// Absent when the dataset has no forecasts.
    pub wind_std: Option<f64>,
}

impl TrainStats {
    pub fn norm(&self) -> NormStats {
        NormStats { price_mean: self.price_mean, price_std: self.price_std, wind_std: self.wind_std.unwrap_or(0.0) }
    }
}

pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn product_path(&self, id: ProductId) -> PathBuf {
        self.root.join("products").join(format!("{}.json", id.compact()))
    }

    pub fn forecast_path(&self, id: ProductId) -> PathBuf {
        self.root.join("forecasts").join(format!("{}.json", id.compact()))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("split.toml")
    }

    pub fn stats_path(&self) -> PathBuf {
        self.root.join("train_stats.toml")
    }

    pub fn write_series(&self, series: &ProductSeries) -> Result<(), IoError> {
        write_json(&self.product_path(series.product()), series)
    }

    pub fn write_forecast(&self, id: ProductId, track: &ForecastTrack) -> Result<(), IoError> {
        write_json(&self.forecast_path(id), track)
    }

    pub fn write_manifest(&self, m: &SplitManifest) -> Result<(), IoError> {
        write_toml(&self.manifest_path(), m)
    }

    pub fn write_stats(&self, s: &TrainStats) -> Result<(), IoError> {
        write_toml(&self.stats_path(), s)
    }

    pub fn read_manifest(&self) -> Result<SplitManifest, IoError> {
        read_toml(&self.manifest_path())
    }

    pub fn read_stats(&self) -> Result<TrainStats, IoError> {
        read_toml(&self.stats_path())
    }

    pub fn read_series(&self, id: ProductId) -> Result<ProductSeries, IoError> {
        let path = self.product_path(id);
        if !path.exists() {
            return Err(IoError::MissingProduct(id));
        }
        read_json(&path)
    }

    pub fn read_episode(&self, id: ProductId) -> Result<MarketEpisode, IoError> {
        let series = self.read_series(id)?;
        let path = self.forecast_path(id);
        if !path.exists() {
            return Err(IoError::MissingForecast(id));
        }
        let track: ForecastTrack = read_json(&path)?;
        Ok(MarketEpisode::new(series, track)?)
    }

    /// Reads the manifest, the statistics and every listed episode.
    pub fn load(&self) -> Result<Dataset, IoError> {
        let manifest = self.read_manifest()?;
        let stats = self.read_stats()?;
        let train = manifest.train.iter().map(|&id| self.read_episode(id)).collect::<Result<Vec<_>, _>>()?;
        let test = manifest.test.iter().map(|&id| self.read_episode(id)).collect::<Result<Vec<_>, _>>()?;
        let mut norm = stats.norm();
        if stats.wind_std.is_none() {
            norm.wind_std = NormStats::from_training(&train).wind_std;
        }
        Ok(Dataset { manifest, stats: norm, train, test })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: SplitManifest,
    pub stats: NormStats,
    pub train: Vec<MarketEpisode>,
    pub test: Vec<MarketEpisode>,
}

impl Dataset {
    /// Splits generated episodes by `rule`, dropping training outliers, and
    /// computes the normalization statistics of what remains on the train side.
    pub fn from_market(market: Vec<MarketEpisode>, rule: SplitRule, bounds: Option<OutlierBounds>) -> Result<Self, IoError> {
        let rule_text = match rule {
            SplitRule::TestFraction(f) => format!("test_fraction = {f}"),
            SplitRule::TestFrom(t) => format!("test_from = {}", t.to_rfc3339()),
        };
        let split = split_train_test(market.iter().map(|e| e.series.clone()).collect(), rule, bounds)?;
        let pick = |ids: &[ProductSeries]| -> Vec<MarketEpisode> {
            ids.iter().filter_map(|s| market.iter().find(|e| e.series.product() == s.product()).cloned()).collect()
        };
        let train = pick(&split.train);
        let test = pick(&split.test);
        let manifest = SplitManifest {
            rule: rule_text,
            removed_outliers: split.removed_outliers,
            train: train.iter().map(|e| e.series.product()).collect(),
            test: test.iter().map(|e| e.series.product()).collect(),
        };
        Ok(Self { manifest, stats: NormStats::from_training(&train), train, test })
    }

    /// Writes every episode, the manifest and the statistics under `dir`.
    pub fn write(&self, dir: &DataDir) -> Result<(), IoError> {
        for ep in self.train.iter().chain(&self.test) {
            dir.write_series(&ep.series)?;
            dir.write_forecast(ep.series.product(), &ep.forecast)?;
        }
        dir.write_manifest(&self.manifest)?;
        dir.write_stats(&TrainStats {
            price_mean: self.stats.price_mean,
            price_std: self.stats.price_std,
            price_count: self.train.len() * WINDOW_LEN,
            wind_std: Some(self.stats.wind_std),
        })
    }
}

/// Chronological tail of the training products held out for validation.
/// Keeps at least one product on each side when `fraction > 0` and there are two or more.
pub fn validation_split(train: Vec<MarketEpisode>, fraction: f64) -> (Vec<Arc<MarketEpisode>>, Vec<Arc<MarketEpisode>>) {
    let n = train.len();
    let mut n_val = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && n >= 2 {
        n_val = n_val.clamp(1, n - 1);
    }
    let mut eps: Vec<Arc<MarketEpisode>> = train.into_iter().map(Arc::new).collect();
    let val = eps.split_off(n - n_val.min(n));
    (eps, val)
}

/// Reads forecasts from `product,minute,wind,price_5min` lines (header
/// required); every product needs all 211 minutes.
pub fn parse_forecasts_csv(text: &str) -> Result<Vec<(ProductId, ForecastTrack)>, DataError> {
    let mut rows: BTreeMap<ProductId, Vec<Option<(f64, f64)>>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line_no = i + 1;
        let bad = |msg: String| DataError::Parse { line: line_no, msg };
        if i == 0 {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != ["product", "minute", "wind", "price_5min"] {
                return Err(bad(format!("expected header product,minute,wind,price_5min, got {line}")));
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", f.len())));
        }
        let product = ProductId(parse_utc(f[0]).map_err(|e| bad(e.to_string()))?);
        let minute: usize = f[1].parse().map_err(|e| bad(format!("minute: {e}")))?;
        let wind: f64 = f[2].parse().map_err(|e| bad(format!("wind: {e}")))?;
        let price: f64 = f[3].parse().map_err(|e| bad(format!("price_5min: {e}")))?;
        if minute >= WINDOW_LEN {
            return Err(bad(format!("minute {minute} outside 0..{WINDOW_LEN}")));
        }
        rows.entry(product).or_insert_with(|| vec![None; WINDOW_LEN])[minute] = Some((wind, price));
    }
    rows.into_iter()
        .map(|(id, mins)| {
            let full: Option<Vec<(f64, f64)>> = mins.into_iter().collect();
            let full = full.ok_or_else(|| DataError::InsufficientData(format!("forecasts for {id} miss minutes")))?;
            let (wind, price): (Vec<f64>, Vec<f64>) = full.into_iter().unzip();
            let track = ForecastTrack::new(wind, price).map_err(|e| DataError::InsufficientData(e.to_string()))?;
            Ok((id, track))
        })
        .collect()
}
