//! Transaction ingestion: minute VWAP bars over the trading window, outlier
//! filtering and the chronological train/test split.
//!
//! The trading window of a product spans from 4 h before delivery to 30 min
//! before delivery. Both endpoint minutes are included, which yields
//! [`WINDOW_LEN`] = 211 one-minute buckets. Buckets are left-closed and
//! right-open: a tick at second 0 of minute `m` belongs to bucket `m`.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of minute steps in one product window.
pub const WINDOW_LEN: usize = 211;
/// Minutes between window start and delivery start.
pub const WINDOW_START_PTD_MIN: i64 = 240;
/// Minutes between the last window minute and delivery start.
pub const WINDOW_END_PTD_MIN: i64 = 30;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("no ticks supplied")]
    EmptyInput,
    #[error("no tick at or before the first window minute of product {0}; cannot seed prices")]
    NoSeedPrice(ProductId),
    #[error("tick for product {tick} passed while aggregating product {expected}")]
    ForeignTick { expected: ProductId, tick: ProductId },
    #[error("invalid tick: {0}")]
    InvalidTick(String),
    #[error("product series must have {WINDOW_LEN} entries, got {0}")]
    WrongLength(usize),
    #[error("non-finite price at minute {0}")]
    NonFinitePrice(usize),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid outlier bounds: upper {upper} must exceed lower {lower}")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Delivery start of an hourly product (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ProductId(pub DateTime<Utc>);

impl ProductId {
    pub fn delivery_start(&self) -> DateTime<Utc> {
        self.0
    }

    /// Start of the first window minute.
    pub fn window_start(&self) -> DateTime<Utc> {
        self.0 - Duration::minutes(WINDOW_START_PTD_MIN)
    }

    /// File-name friendly form, e.g. `20180915T2000`.
    pub fn compact(&self) -> String {
        self.0.format("%Y%m%dT%H%M").to_string()
    }
}

impl fmt::Display for ProductId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%dT%H:%M:%SZ"))
    }
}

impl From<ProductId> for String {
    fn from(p: ProductId) -> Self {
        p.to_string()
    }
}

impl TryFrom<String> for ProductId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for ProductId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_utc(s).map(ProductId)
    }
}

/// Parses an ISO-8601 timestamp. Strings without an offset are taken as UTC.
pub fn parse_utc(s: &str) -> Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(Utc.from_utc_datetime(&naive));
        }
    }
    if let Ok(date) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight")));
    }
    Err(format!("unrecognised timestamp `{s}`"))
}

/// A single transaction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tick {
    pub timestamp: DateTime<Utc>,
    pub product: ProductId,
    /// EUR/MWh
    pub price: f64,
    /// MWh, strictly positive
    pub volume: f64,
}

impl Tick {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.volume > 0.0) || !self.volume.is_finite() {
            return Err(DataError::InvalidTick(format!("volume {} must be positive", self.volume)));
        }
        if !self.price.is_finite() {
            return Err(DataError::InvalidTick(format!("price {} is not finite", self.price)));
        }
        if self.timestamp >= self.product.delivery_start() {
            return Err(DataError::InvalidTick(format!(
                "tick at {} is not before delivery of {}",
                self.timestamp, self.product
            )));
        }
        Ok(())
    }
}

/// Minute-resolution VWAP series of one product over its trading window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries", into = "RawSeries")]
pub struct ProductSeries {
    product: ProductId,
    prices: Vec<f64>,
    filled: Vec<bool>,
    day_ahead_price: f64,
}

#[derive(Serialize, Deserialize)]
struct RawSeries {
    product: ProductId,
    day_ahead_price: f64,
    prices: Vec<f64>,
    filled: Vec<bool>,
}

impl TryFrom<RawSeries> for ProductSeries {
    type Error = DataError;
    fn try_from(r: RawSeries) -> Result<Self, Self::Error> {
        ProductSeries::new(r.product, r.prices, r.filled, r.day_ahead_price)
    }
}

impl From<ProductSeries> for RawSeries {
    fn from(s: ProductSeries) -> Self {
        RawSeries { product: s.product, day_ahead_price: s.day_ahead_price, prices: s.prices, filled: s.filled }
    }
}

impl ProductSeries {
    pub fn new(product: ProductId, prices: Vec<f64>, filled: Vec<bool>, day_ahead_price: f64) -> Result<Self, DataError> {
        if prices.len() != WINDOW_LEN {
            return Err(DataError::WrongLength(prices.len()));
        }
        if filled.len() != WINDOW_LEN {
            return Err(DataError::WrongLength(filled.len()));
        }
        if let Some(i) = prices.iter().position(|p| !p.is_finite()) {
            return Err(DataError::NonFinitePrice(i));
        }
        if !day_ahead_price.is_finite() {
            return Err(DataError::InvalidTick("day-ahead price is not finite".into()));
        }
        Ok(Self { product, prices, filled, day_ahead_price })
    }

    /// Series without forward-filled minutes; day-ahead price defaults to the first price.
    pub fn from_prices(product: ProductId, prices: Vec<f64>) -> Result<Self, DataError> {
        let day_ahead = prices.first().copied().unwrap_or(0.0);
        Self::new(product, prices, vec![false; WINDOW_LEN], day_ahead)
    }

    pub fn product(&self) -> ProductId {
        self.product
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn filled_mask(&self) -> &[bool] {
        &self.filled
    }

    pub fn day_ahead_price(&self) -> f64 {
        self.day_ahead_price
    }

    pub fn with_day_ahead(mut self, price: f64) -> Self {
        self.day_ahead_price = price;
        self
    }

    pub fn max_price(&self) -> f64 {
        self.prices.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_price(&self) -> f64 {
        self.prices.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Aggregates the ticks of one product into its minute VWAP series.
///
/// Ticks are stably sorted by timestamp first. Ticks after the last window
/// minute are ignored. Ticks before the window only serve to seed the first
/// value when the first window minute has no trade: the VWAP of the latest
/// pre-window minute with trades is used.
pub fn aggregate_vwap(ticks: &[Tick], product: ProductId) -> Result<ProductSeries, DataError> {
    if ticks.is_empty() {
        return Err(DataError::EmptyInput);
    }
    for t in ticks {
        if t.product != product {
            return Err(DataError::ForeignTick { expected: product, tick: t.product });
        }
        t.validate()?;
    }
    let mut sorted: Vec<&Tick> = ticks.iter().collect();
    sorted.sort_by_key(|t| t.timestamp);

    let start = product.window_start();
    let mut pv = [0.0f64; WINDOW_LEN];
    let mut vol = [0.0f64; WINDOW_LEN];
    // (minute index relative to window start, Σpv, Σv) of the latest pre-window minute
    let mut seed: Option<(i64, f64, f64)> = None;

    for t in sorted {
        let minute = (t.timestamp - start).num_milliseconds().div_euclid(60_000);
        if minute < 0 {
            match &mut seed {
                Some((m, spv, sv)) if *m == minute => {
                    *spv += t.price * t.volume;
                    *sv += t.volume;
                }
                _ => seed = Some((minute, t.price * t.volume, t.volume)),
            }
        } else if (minute as usize) < WINDOW_LEN {
            let k = minute as usize;
            pv[k] += t.price * t.volume;
            vol[k] += t.volume;
        }
    }

    let mut last = seed.map(|(_, spv, sv)| spv / sv);
    let mut prices = Vec::with_capacity(WINDOW_LEN);
    let mut filled = Vec::with_capacity(WINDOW_LEN);
    for k in 0..WINDOW_LEN {
        if vol[k] > 0.0 {
            let p = pv[k] / vol[k];
            prices.push(p);
            filled.push(false);
            last = Some(p);
        } else {
            let p = last.ok_or(DataError::NoSeedPrice(product))?;
            prices.push(p);
            filled.push(true);
        }
    }
    let day_ahead = prices[0];
    ProductSeries::new(product, prices, filled, day_ahead)
}

/// Groups ticks by product and aggregates each group. Output is sorted by delivery.
pub fn aggregate_all(ticks: &[Tick]) -> Result<Vec<ProductSeries>, DataError> {
    if ticks.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let mut groups: std::collections::BTreeMap<ProductId, Vec<Tick>> = Default::default();
    for t in ticks {
        groups.entry(t.product).or_default().push(*t);
    }
    groups.into_iter().map(|(p, ts)| aggregate_vwap(&ts, p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierBounds {
    pub lower: f64,
    pub upper: f64,
}

impl OutlierBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self, DataError> {
        if !(upper > lower) {
            return Err(DataError::InvalidBounds { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, series: &ProductSeries) -> bool {
        series.prices().iter().all(|&p| p >= self.lower && p <= self.upper)
    }
}

impl Default for OutlierBounds {
    fn default() -> Self {
        Self { lower: -50.0, upper: 150.0 }
    }
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub retained: Vec<ProductSeries>,
    pub removed: usize,
}

/// Keeps products whose whole minute series lies within the closed bounds.
pub fn filter_outlier_products(products: Vec<ProductSeries>, bounds: OutlierBounds) -> FilterOutcome {
    let before = products.len();
    let retained: Vec<_> = products.into_iter().filter(|p| bounds.contains(p)).collect();
    FilterOutcome { removed: before - retained.len(), retained }
}

/// Price normalization statistics, computed from training data only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl PriceStats {
    /// Population mean/std over every minute price of every product.
    pub fn from_series<'a>(products: impl IntoIterator<Item = &'a ProductSeries>) -> Self {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut all = Vec::new();
        for p in products {
            for &x in p.prices() {
                sum += x;
                n += 1;
                all.push(x);
            }
        }
        if n == 0 {
            return Self { mean: 0.0, std: 1.0, count: 0 };
        }
        let mean = sum / n as f64;
        let var = all.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        Self { mean, std: var.sqrt(), count: n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitRule {
    /// Chronological tail of this fraction goes to test.
    TestFraction(f64),
    /// Products delivering on or after this instant go to test.
    TestFrom(DateTime<Utc>),
}

#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: Vec<ProductSeries>,
    pub test: Vec<ProductSeries>,
    pub train_stats: PriceStats,
    /// Training products dropped by the outlier filter.
    pub removed_outliers: usize,
}

/// Chronological split. The outlier filter, when given, is applied to the
/// training side only.
pub fn split_train_test(
    mut products: Vec<ProductSeries>,
    rule: SplitRule,
    bounds: Option<OutlierBounds>,
) -> Result<DataSplit, DataError> {
    products.sort_by_key(|p| p.product());
    let cut = match rule {
        SplitRule::TestFraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(DataError::InsufficientData(format!("test fraction {f} outside (0, 1)")));
            }
            let n_test = (products.len() as f64 * f).round() as usize;
            products.len().saturating_sub(n_test)
        }
        SplitRule::TestFrom(t) => products.partition_point(|p| p.product().delivery_start() < t),
    };
    let test = products.split_off(cut);
    let (train, removed) = match bounds {
        Some(b) => {
            let out = filter_outlier_products(products, b);
            (out.retained, out.removed)
        }
        None => (products, 0),
    };
    if train.is_empty() {
        return Err(DataError::InsufficientData("training side is empty".into()));
    }
    if test.is_empty() {
        return Err(DataError::InsufficientData("test side is empty".into()));
    }
    let train_stats = PriceStats::from_series(&train);
    Ok(DataSplit { train, test, train_stats, removed_outliers: removed })
}

/// Reads ticks from `timestamp,product,price,volume` lines (header required).
pub fn parse_ticks_csv(text: &str) -> Result<Vec<Tick>, DataError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(DataError::EmptyInput)?;
    let cols: Vec<_> = header.split(',').map(str::trim).collect();
    if cols != ["timestamp", "product", "price", "volume"] {
        return Err(DataError::Parse { line: 1, msg: format!("unexpected header `{header}`") });
    }
    let mut ticks = Vec::new();
    for (i, line) in lines {
        let err = |msg: String| DataError::Parse { line: i + 1, msg };
        let f: Vec<_> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, got {}", f.len())));
        }
        let tick = Tick {
            timestamp: parse_utc(f[0]).map_err(err)?,
            product: f[1].parse().map_err(err)?,
            price: f[2].parse().map_err(|e| err(format!("price: {e}")))?,
            volume: f[3].parse().map_err(|e| err(format!("volume: {e}")))?,
        };
        tick.validate().map_err(|e| err(e.to_string()))?;
        ticks.push(tick);
    }
    if ticks.is_empty() {
        return Err(DataError::EmptyInput);
    }
    Ok(ticks)
}

/// Reads `product,price` day-ahead lines (header required).
pub fn parse_day_ahead_csv(text: &str) -> Result<Vec<(ProductId, f64)>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        if i == 0 {
            if line.trim() != "product,price" {
                return Err(DataError::Parse { line: 1, msg: format!("unexpected header `{line}`") });
            }
            continue;
        }
        let err = |msg: String| DataError::Parse { line: i + 1, msg };
        let (p, price) = line.split_once(',').ok_or_else(|| err("expected 2 fields".into()))?;
        let price: f64 = price.trim().parse().map_err(|e| err(format!("price: {e}")))?;
        out.push((p.parse().map_err(err)?, price));
    }
    Ok(out)
}
