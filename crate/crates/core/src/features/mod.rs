//! Clickstream feature extraction: turns raw view/purchase events into, per
//! base date, one labeled sample per customer-product pair seen in the
//! lookback window, plus per-category count tensors.
//!
//! Recency and frequency can each be measured in page views, sessions or
//! days. Purchases never count as views: all recency/frequency counters are
//! driven by view events only.

mod ingest;

pub use ingest::{read_events, read_events_from, IngestSummary};

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CountTensor, GridSpec};

/// One clickstream record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickEvent {
    pub timestamp: DateTime<Utc>,
    pub customer_id: String,
    pub product_id: String,
    pub category_id: String,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    View,
    Purchase,
}

/// Recency feature: which counter measures "how long ago".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecencyFeature {
    /// Page views since the last view of the product.
    ViewR,
    /// Completed sessions since the last view of the product.
    SesR,
    /// Days since the last view of the product.
    DayR,
}

impl RecencyFeature {
    /// Default number of levels `|I|` for this feature.
    pub fn default_levels(self) -> usize {
        match self {
            RecencyFeature::ViewR => 24,
            RecencyFeature::SesR => 12,
            RecencyFeature::DayR => 24,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RecencyFeature::ViewR => "viewr",
            RecencyFeature::SesR => "sesr",
            RecencyFeature::DayR => "dayr",
        }
    }
}

/// Frequency feature: which counter measures "how often".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyFeature {
    /// Number of views of the product.
    ViewF,
    /// Number of distinct sessions with a view of the product.
    SesF,
    /// Number of distinct days with a view of the product.
    DayF,
}

impl FrequencyFeature {
    /// Default number of levels `|J|` for this feature.
    pub fn default_levels(self) -> usize {
        match self {
            FrequencyFeature::ViewF => 16,
            FrequencyFeature::SesF => 8,
            FrequencyFeature::DayF => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FrequencyFeature::ViewF => "viewf",
            FrequencyFeature::SesF => "sesf",
            FrequencyFeature::DayF => "dayf",
        }
    }
}

/// Feature extraction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub recency_feature: RecencyFeature,
    pub frequency_feature: FrequencyFeature,
    pub recency_levels: usize,
    pub frequency_levels: usize,
    pub lookback_days: i64,
    pub label_horizon_days: i64,
    pub session_gap_minutes: i64,
    pub outlier_top_fraction: f64,
}

impl FeatureConfig {
    /// Config with the per-feature default level counts.
    pub fn new(recency: RecencyFeature, frequency: FrequencyFeature) -> Self {
        Self {
            recency_feature: recency,
            frequency_feature: frequency,
            recency_levels: recency.default_levels(),
            frequency_levels: frequency.default_levels(),
            lookback_days: 28,
            label_horizon_days: 1,
            session_gap_minutes: 30,
            outlier_top_fraction: 0.01,
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.recency_levels, self.frequency_levels)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        if self.lookback_days < 1 || self.label_horizon_days < 1 || self.session_gap_minutes < 1 {
            return Err(Error::InvalidInput(
                "lookback, horizon and session gap must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.outlier_top_fraction) {
            return Err(Error::InvalidInput(format!(
                "outlier fraction must lie in [0, 1), got {}",
                self.outlier_top_fraction
            )));
        }
        Ok(())
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::new(RecencyFeature::DayR, FrequencyFeature::ViewF)
    }
}

/// One labeled customer-product pair for one base date.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub base_date: NaiveDate,
    pub customer_id: String,
    pub product_id: String,
    pub category_id: String,
    /// Recency level, `1..=recency_levels`; higher is more recent.
    pub recency: usize,
    /// Frequency level, `1..=frequency_levels`.
    pub frequency: usize,
    pub purchased: bool,
}

/// Recency level for `m` elapsed units: `max(levels + 1 - m, 1)`.
///
/// `m >= 1` is a contract: a pair is only featurized when it has at least one
/// view strictly before the base date.
pub fn recency_level(m: u64, levels: usize) -> usize {
    assert!(m >= 1, "elapsed units must be >= 1");
    let levels = levels as u64;
    (levels + 1).saturating_sub(m).max(1) as usize
}

/// Frequency level for a count of `n` units: `min(n, levels)`.
pub fn frequency_level(n: u64, levels: usize) -> usize {
    assert!(n >= 1, "unit count must be >= 1");
    n.min(levels as u64) as usize
}

/// Removes every event of the top `ceil(fraction * customers)` customers by
/// purchase count. Ties at the cutoff are resolved by removing the
/// lexicographically larger customer id first, so the result is deterministic.
pub fn exclude_outlier_customers(
    events: Vec<ClickEvent>,
    fraction: f64,
) -> Result<Vec<ClickEvent>> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!(
            "outlier fraction must lie in [0, 1), got {fraction}"
        )));
    }
    if fraction == 0.0 {
        return Ok(events);
    }
    let mut purchases: BTreeMap<&str, u64> = BTreeMap::new();
    for e in &events {
        let c = purchases.entry(e.customer_id.as_str()).or_insert(0);
        if e.kind == EventKind::Purchase {
            *c += 1;
        }
    }
    let to_remove = (fraction * purchases.len() as f64).ceil() as usize;
    let mut ranked: Vec<(&str, u64)> = purchases.iter().map(|(&id, &n)| (id, n)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| b.0.cmp(a.0)));
    let removed: std::collections::BTreeSet<String> = ranked
        .iter()
        .take(to_remove)
        .map(|&(id, _)| id.to_string())
        .collect();
    Ok(events
        .into_iter()
        .filter(|e| !removed.contains(&e.customer_id))
        .collect())
}

/// Keeps each sample independently with probability `rate`, using the seeded
/// generator; deterministic for a fixed seed.
pub fn subsample(samples: Vec<Sample>, rate: f64, seed: u64) -> Result<Vec<Sample>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "sampling rate must lie in (0, 1], got {rate}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(samples
        .into_iter()
        .filter(|_| rng.random::<f64>() < rate)
        .collect())
}

/// Tallies samples into a per-category count tensor.
pub fn aggregate_counts(
    samples: &[Sample],
    grid: GridSpec,
    categories: &[String],
) -> Result<CountTensor> {
    let index: BTreeMap<&str, usize> = categories
        .iter()
        .enumerate()
        .map(|(k, id)| (id.as_str(), k))
        .collect();
    let mut tensor = CountTensor::zeros(grid, categories.to_vec());
    for s in samples {
        let k = *index.get(s.category_id.as_str()).ok_or_else(|| {
            Error::InvalidInput(format!("unknown category id {:?}", s.category_id))
        })?;
        if !grid.contains(s.recency, s.frequency) {
            return Err(Error::InvalidInput(format!(
                "sample at ({}, {}) is outside the {}x{} grid",
                s.recency, s.frequency, grid.recency_levels, grid.frequency_levels
            )));
        }
        tensor.increment(k, s.recency, s.frequency, s.purchased);
    }
    Ok(tensor)
}

/// All category ids occurring in a sample set, sorted and deduplicated.
pub fn collect_categories(samples: &[Sample]) -> Vec<String> {
    let set: std::collections::BTreeSet<&str> =
        samples.iter().map(|s| s.category_id.as_str()).collect();
    set.into_iter().map(str::to_string).collect()
}

/// Emits, for each base date, one sample per customer-product pair with at
/// least one view in the lookback window. Recency and frequency are measured
/// in the configured units; `purchased` is true iff the pair has a purchase
/// in `[base_date, base_date + label_horizon_days)`.
pub fn build_samples(
    events: &[ClickEvent],
    base_dates: &[NaiveDate],
    config: &FeatureConfig,
) -> Result<Vec<Sample>> {
    config.validate()?;
    if base_dates.is_empty() {
        return Err(Error::InvalidInput("no base dates given".into()));
    }

    // per-customer views and purchases, time-sorted
    struct CustomerLog<'a> {
        views: Vec<(DateTime<Utc>, &'a ClickEvent)>,
        purchases: Vec<(DateTime<Utc>, &'a ClickEvent)>,
    }
    let mut by_customer: BTreeMap<&str, CustomerLog> = BTreeMap::new();
    for e in events {
        let log = by_customer
            .entry(e.customer_id.as_str())
            .or_insert_with(|| CustomerLog {
                views: Vec::new(),
                purchases: Vec::new(),
            });
        match e.kind {
            EventKind::View => log.views.push((e.timestamp, e)),
            EventKind::Purchase => log.purchases.push((e.timestamp, e)),
        }
    }
    for log in by_customer.values_mut() {
        log.views.sort_by_key(|&(t, _)| t);
        log.purchases.sort_by_key(|&(t, _)| t);
    }

    let gap = Duration::minutes(config.session_gap_minutes);
    let mut samples = Vec::new();

    for &base_date in base_dates {
        let base_start = base_date.and_hms_opt(0, 0, 0).unwrap().and_utc();
        let window_start = base_start - Duration::days(config.lookback_days);
        let label_end = base_start + Duration::days(config.label_horizon_days);

        for (customer, log) in &by_customer {
            let lo = log.views.partition_point(|&(t, _)| t < window_start);
            let hi = log.views.partition_point(|&(t, _)| t < base_start);
            let window = &log.views[lo..hi];
            if window.is_empty() {
                continue;
            }

            // session index per view: a gap above the threshold starts a new one
            let mut session_of = Vec::with_capacity(window.len());
            let mut session_first: Vec<DateTime<Utc>> = Vec::new();
            for (pos, &(t, _)) in window.iter().enumerate() {
                if pos == 0 || t - window[pos - 1].0 > gap {
                    session_first.push(t);
                }
                session_of.push(session_first.len() - 1);
            }

            // group the window's views per product
            struct PairStats {
                last_pos: usize,
                view_count: u64,
                days: std::collections::BTreeSet<NaiveDate>,
                sessions: std::collections::BTreeSet<usize>,
                category: String,
            }
            let mut per_product: BTreeMap<&str, PairStats> = BTreeMap::new();
            for (pos, &(t, e)) in window.iter().enumerate() {
                let stats = per_product
                    .entry(e.product_id.as_str())
                    .or_insert_with(|| PairStats {
                        last_pos: pos,
                        view_count: 0,
                        days: Default::default(),
                        sessions: Default::default(),
                        category: e.category_id.clone(),
                    });
                stats.last_pos = pos;
                stats.view_count += 1;
                stats.days.insert(t.date_naive());
                stats.sessions.insert(session_of[pos]);
            }

            for (product, stats) in &per_product {
                let last_time = window[stats.last_pos].0;
                let m = match config.recency_feature {
                    RecencyFeature::DayR => {
                        (base_date - last_time.date_naive()).num_days().max(1) as u64
                    }
                    RecencyFeature::ViewR => {
                        // site-wide views strictly after the last view of the
                        // product, plus one
                        window
                            .iter()
                            .skip(stats.last_pos + 1)
                            .filter(|&&(t, _)| t > last_time)
                            .count() as u64
                            + 1
                    }
                    RecencyFeature::SesR => {
                        // sessions opened strictly after the last view of the
                        // product, plus one
                        session_first.iter().filter(|&&t| t > last_time).count() as u64 + 1
                    }
                };
                let n = match config.frequency_feature {
                    FrequencyFeature::ViewF => stats.view_count,
                    FrequencyFeature::DayF => stats.days.len() as u64,
                    FrequencyFeature::SesF => stats.sessions.len() as u64,
                };
                let purchased = {
                    let lo = log.purchases.partition_point(|&(t, _)| t < base_start);
                    log.purchases[lo..]
                        .iter()
                        .take_while(|&&(t, _)| t < label_end)
                        .any(|&(_, e)| e.product_id == *product)
                };
                samples.push(Sample {
                    base_date,
                    customer_id: customer.to_string(),
                    product_id: product.to_string(),
                    category_id: stats.category.clone(),
                    recency: recency_level(m, config.recency_levels),
                    frequency: frequency_level(n, config.frequency_levels),
                    purchased,
                });
            }
        }
    }
    Ok(samples)
}
