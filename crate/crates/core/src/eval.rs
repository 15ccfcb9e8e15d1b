//! Top-N purchase prediction and its metrics: per-customer recall, precision
//! and F1 averaged over customers and then over base dates, plus mean average
//! precision over each customer's full ranking of viewed products.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Sample;
use crate::types::{GridSpec, LatentClassModel, ProbabilityTable};

/// Scores (category, recency, frequency) triples under a fitted model.
///
/// Categories seen in training are scored by posterior mixing,
/// `sum_s z_ks x_ijs`; unseen categories fall back to prior mixing with
/// `pi_s`. With a single class both reduce to the table value itself.
#[derive(Debug, Clone)]
pub struct ModelScorer {
    grid: GridSpec,
    pi: Vec<f64>,
    tables: Vec<ProbabilityTable>,
    memberships: BTreeMap<String, Vec<f64>>,
}

impl ModelScorer {
    pub fn new(
        pi: Vec<f64>,
        tables: Vec<ProbabilityTable>,
        categories: &[String],
        memberships: &[Vec<f64>],
    ) -> Result<Self> {
        let grid = tables
            .first()
            .map(|t| t.grid)
            .ok_or_else(|| Error::InvalidInput("model has no tables".into()))?;
        if tables.iter().any(|t| t.grid != grid) || pi.len() != tables.len() {
            return Err(Error::InvalidInput("inconsistent model tables".into()));
        }
        if categories.len() != memberships.len() {
            return Err(Error::InvalidInput(
                "membership rows do not match category list".into(),
            ));
        }
        let memberships = categories
            .iter()
            .cloned()
            .zip(memberships.iter().cloned())
            .collect();
        Ok(Self {
            grid,
            pi,
            tables,
            memberships,
        })
    }

    pub fn from_model(model: &LatentClassModel, categories: &[String]) -> Result<Self> {
        Self::new(
            model.pi.clone(),
            model.tables.clone(),
            categories,
            &model.memberships,
        )
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Choice probability for a pair in `category` at levels `(i, j)`.
    pub fn score(&self, category: &str, i: usize, j: usize) -> f64 {
        let weights = self.memberships.get(category).unwrap_or(&self.pi);
        weights
            .iter()
            .zip(&self.tables)
            .map(|(w, t)| w * t.value(i, j))
            .sum()
    }
}

/// One scored customer-product pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub customer_id: String,
    pub product_id: String,
    pub score: f64,
    /// Frequency level, the first tie-break key (view frequency under the
    /// default feature set).
    pub frequency: usize,
    pub purchased: bool,
}

/// Scores every sample of one test set. Fails if a sample's levels fall
/// outside the model grid.
pub fn score_pairs(scorer: &ModelScorer, samples: &[Sample]) -> Result<Vec<ScoredPair>> {
    samples
        .iter()
        .map(|s| {
            if !scorer.grid.contains(s.recency, s.frequency) {
                return Err(Error::InvalidInput(format!(
                    "sample grid levels ({}, {}) do not fit the model grid {}x{}",
                    s.recency,
                    s.frequency,
                    scorer.grid.recency_levels,
                    scorer.grid.frequency_levels
                )));
            }
            Ok(ScoredPair {
                customer_id: s.customer_id.clone(),
                product_id: s.product_id.clone(),
                score: scorer.score(&s.category_id, s.recency, s.frequency),
                frequency: s.frequency,
                purchased: s.purchased,
            })
        })
        .collect()
}

/// Ranking order: descending score, then descending frequency (the ViewF
/// tie-break), then ascending product id for a deterministic total order.
pub fn rank_order(a: &ScoredPair, b: &ScoredPair) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.frequency.cmp(&a.frequency))
        .then_with(|| a.product_id.cmp(&b.product_id))
}

/// Top-N selection for one customer's scored pairs. Customers with fewer
/// than `n` viewed products keep them all.
pub fn select_top_n(pairs: &[ScoredPair], n: usize) -> Vec<ScoredPair> {
    let mut ranked: Vec<ScoredPair> = pairs.to_vec();
    ranked.sort_by(rank_order);
    ranked.truncate(n);
    ranked
}

/// Recall, precision and F1 of one customer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Standard set metrics. Customers without purchases are excluded from
/// averaging, hence `None`; an empty selection scores zero precision and F1.
/// `recall = precision = 0` yields `f1 = 0`.
pub fn prf1(selected: &BTreeSet<&str>, purchased: &BTreeSet<&str>) -> Option<Prf1> {
    if purchased.is_empty() {
        return None;
    }
    let hits = selected.intersection(purchased).count() as f64;
    let recall = hits / purchased.len() as f64;
    let precision = if selected.is_empty() {
        0.0
    } else {
        hits / selected.len() as f64
    };
    let f1 = if recall + precision > 0.0 {
        2.0 * recall * precision / (recall + precision)
    } else {
        0.0
    };
    Some(Prf1 {
        recall,
        precision,
        f1,
    })
}

/// Average precision of one ranked list of purchase flags: the mean, over
/// purchased items, of the precision at their rank. `None` without purchases.
pub fn average_precision(ranked_purchase_flags: &[bool]) -> Option<f64> {
    let mut hits = 0u64;
    let mut sum = 0.0;
    for (rank0, &flag) in ranked_purchase_flags.iter().enumerate() {
        if flag {
            hits += 1;
            sum += hits as f64 / (rank0 + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Mean average precision over customers with at least one purchase.
pub fn mean_average_precision(rankings: &[Vec<bool>]) -> Option<f64> {
    let aps: Vec<f64> = rankings
        .iter()
        .filter_map(|r| average_precision(r))
        .collect();
    (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Customer-averaged metrics for one selection size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNMetrics {
    pub n: usize,
    pub mean_recall: f64,
    pub mean_precision: f64,
    pub mean_f1: f64,
}

/// Metrics of one base date's test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseDateReport {
    pub date: NaiveDate,
    /// Customers with at least one purchased-and-viewed product.
    pub customers_evaluated: usize,
    pub by_n: Vec<TopNMetrics>,
    pub map: f64,
}

/// Evaluation across base dates: per-date customer averages, then unweighted
/// averages across dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_values: Vec<usize>,
    pub per_base_date: Vec<BaseDateReport>,
    pub overall_by_n: Vec<TopNMetrics>,
    pub overall_map: f64,
    /// Base dates with no purchasing customer; they contribute nothing.
    pub skipped_base_dates: Vec<NaiveDate>,
}

/// Runs top-N evaluation of a model over test samples grouped by base date.
pub fn run_evaluation(
    scorer: &ModelScorer,
    samples: &[Sample],
    n_values: &[usize],
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no test samples".into()));
    }
    if n_values.is_empty() || n_values.contains(&0) {
        return Err(Error::InvalidInput("top-N sizes must be >= 1".into()));
    }

    let mut by_date: BTreeMap<NaiveDate, Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        by_date.entry(s.base_date).or_default().push(s);
    }

    let evaluated: Vec<(NaiveDate, Option<BaseDateReport>)> = by_date
        .par_iter()
        .map(|(&date, date_samples)| {
            let report = evaluate_base_date(scorer, date, date_samples, n_values)?;
            Ok((date, report))
        })
        .collect::<Result<_>>()?;

    let mut per_base_date = Vec::new();
    let mut skipped_base_dates = Vec::new();
    for (date, report) in evaluated {
        match report {
            Some(r) => per_base_date.push(r),
            None => {
                log::warn!("base date {date} has no purchasing customer; skipped");
                skipped_base_dates.push(date);
            }
        }
    }

    let dates = per_base_date.len() as f64;
    let overall_by_n = n_values
        .iter()
        .enumerate()
        .map(|(pos, &n)| TopNMetrics {
            n,
            mean_recall: per_base_date
                .iter()
                .map(|r| r.by_n[pos].mean_recall)
                .sum::<f64>()
                / dates,
            mean_precision: per_base_date
                .iter()
                .map(|r| r.by_n[pos].mean_precision)
                .sum::<f64>()
                / dates,
            mean_f1: per_base_date
                .iter()
                .map(|r| r.by_n[pos].mean_f1)
                .sum::<f64>()
                / dates,
        })
        .collect();
    let overall_map = per_base_date.iter().map(|r| r.map).sum::<f64>() / dates;

    Ok(EvalReport {
        n_values: n_values.to_vec(),
        per_base_date,
        overall_by_n,
        overall_map,
        skipped_base_dates,
    })
}

fn evaluate_base_date(
    scorer: &ModelScorer,
    date: NaiveDate,
    samples: &[&Sample],
    n_values: &[usize],
) -> Result<Option<BaseDateReport>> {
    let owned: Vec<Sample> = samples.iter().map(|&s| s.clone()).collect();
    let scored = score_pairs(scorer, &owned)?;

    let mut by_customer: BTreeMap<&str, Vec<&ScoredPair>> = BTreeMap::new();
    for pair in &scored {
        by_customer
            .entry(pair.customer_id.as_str())
            .or_default()
            .push(pair);
    }

    let mut sums = vec![
        Prf1 {
            recall: 0.0,
            precision: 0.0,
            f1: 0.0,
        };
        n_values.len()
    ];
    let mut ap_sum = 0.0;
    let mut evaluated = 0usize;

    for pairs in by_customer.values() {
        let purchased: BTreeSet<&str> = pairs
            .iter()
            .filter(|p| p.purchased)
            .map(|p| p.product_id.as_str())
            .collect();
        if purchased.is_empty() {
            continue;
        }
        evaluated += 1;

        let mut ranked: Vec<ScoredPair> = pairs.iter().map(|&p| p.clone()).collect();
        ranked.sort_by(rank_order);
        let flags: Vec<bool> = ranked.iter().map(|p| p.purchased).collect();
        ap_sum += average_precision(&flags).unwrap_or(0.0);

        for (pos, &n) in n_values.iter().enumerate() {
            let selected: BTreeSet<&str> = ranked
                .iter()
                .take(n)
                .map(|p| p.product_id.as_str())
                .collect();
            let m = prf1(&selected, &purchased).unwrap();
            sums[pos].recall += m.recall;
            sums[pos].precision += m.precision;
            sums[pos].f1 += m.f1;
        }
    }

    if evaluated == 0 {
        return Ok(None);
    }
    let count = evaluated as f64;
    Ok(Some(BaseDateReport {
        date,
        customers_evaluated: evaluated,
        by_n: n_values
            .iter()
            .zip(&sums)
            .map(|(&n, s)| TopNMetrics {
                n,
                mean_recall: s.recall / count,
                mean_precision: s.precision / count,
                mean_f1: s.f1 / count,
            })
            .collect(),
        map: ap_sum / count,
    }))
}

/// Membership of one category in a class profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMembership {
    pub category_id: String,
    pub membership: f64,
}

/// Summary of one latent class: size, hard-assigned categories and table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub class: usize,
    pub pi: f64,
    /// Categories whose highest membership points here, best first.
    pub categories: Vec<CategoryMembership>,
    pub table: ProbabilityTable,
}

/// Probability-vs-level curves per class at a fixed opposite level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSeries {
    pub fixed_level: usize,
    /// `per_class[s][level - 1]`.
    pub per_class: Vec<Vec<f64>>,
}

/// Class summaries comparable across classes: sizes, hard category
/// assignments and one-dimensional table slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfilesReport {
    pub classes: Vec<ClassProfile>,
    /// Choice probability as a function of recency at a fixed frequency level.
    pub by_recency_at_frequency: Vec<SliceSeries>,
    /// Choice probability as a function of frequency at a fixed recency level.
    pub by_frequency_at_recency: Vec<SliceSeries>,
}

/// Builds class profiles from a fitted model and its category list.
pub fn report_class_profiles(
    model: &LatentClassModel,
    categories: &[String],
) -> Result<ClassProfilesReport> {
    if categories.len() != model.memberships.len() {
        return Err(Error::InvalidInput(
            "category list does not match membership rows".into(),
        ));
    }
    let grid = model
        .tables
        .first()
        .map(|t| t.grid)
        .ok_or_else(|| Error::InvalidInput("model has no tables".into()))?;

    let mut assigned: Vec<Vec<CategoryMembership>> = vec![Vec::new(); model.classes()];
    for (k, row) in model.memberships.iter().enumerate() {
        let best = row
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.total_cmp(b))
            .map(|(s, _)| s)
            .unwrap_or(0);
        assigned[best].push(CategoryMembership {
            category_id: categories[k].clone(),
            membership: row[best],
        });
    }
    for list in &mut assigned {
        list.sort_by(|a, b| {
            b.membership
                .total_cmp(&a.membership)
                .then_with(|| a.category_id.cmp(&b.category_id))
        });
    }

    let classes = assigned
        .into_iter()
        .enumerate()
        .map(|(s, categories)| ClassProfile {
            class: s + 1,
            pi: model.pi[s],
            categories,
            table: model.tables[s].clone(),
        })
        .collect();

    let mut frequency_levels = vec![1, grid.frequency_levels];
    frequency_levels.dedup();
    let by_recency_at_frequency = frequency_levels
        .into_iter()
        .map(|j| SliceSeries {
            fixed_level: j,
            per_class: model
                .tables
                .iter()
                .map(|t| (1..=grid.recency_levels).map(|i| t.value(i, j)).collect())
                .collect(),
        })
        .collect();

    let mut recency_levels = vec![grid.recency_levels.div_ceil(4) * 3, grid.recency_levels];
    recency_levels[0] = recency_levels[0].clamp(1, grid.recency_levels);
    recency_levels.dedup();
    let by_frequency_at_recency = recency_levels
        .into_iter()
        .map(|i| SliceSeries {
            fixed_level: i,
            per_class: model
                .tables
                .iter()
                .map(|t| (1..=grid.frequency_levels).map(|j| t.value(i, j)).collect())
                .collect(),
        })
        .collect();

    Ok(ClassProfilesReport {
        classes,
        by_recency_at_frequency,
        by_frequency_at_recency,
    })
}
