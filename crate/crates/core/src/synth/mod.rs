//! Synthetic data with planted latent structure, plus the brute-force lattice
//! oracle used by the test suites. All generators draw from a single seeded
//! generator in a fixed iteration order, so outputs are reproducible.

mod oracle;

pub use oracle::{oracle_fit, ORACLE_MAX_CELLS};

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{ClickEvent, EventKind, Sample};
use crate::types::{check_shape_constraints, CountTensor, ProbabilityTable, ShapeMode};

/// Ground truth accompanying a planted tensor or sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    /// Class index of each category.
    pub assignment: Vec<usize>,
    pub tables: Vec<ProbabilityTable>,
    /// Class proportions implied by the hard assignment.
    pub pi: Vec<f64>,
}

/// Exposure counts `n_ijk` for the planted tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExposurePlan {
    /// The same count in every cell of every category.
    Uniform(u64),
    /// A per-cell grid shared by all categories, `counts[i-1][j-1]`.
    PerCell(Vec<Vec<u64>>),
}

fn validate_planted(tables: &[ProbabilityTable], assignment: &[usize]) -> Result<()> {
    if tables.is_empty() {
        return Err(Error::InvalidInput(
            "need at least one planted table".into(),
        ));
    }
    let grid = tables[0].grid;
    for (s, t) in tables.iter().enumerate() {
        if t.grid != grid {
            return Err(Error::InvalidInput(
                "planted tables disagree on the grid".into(),
            ));
        }
        if !check_shape_constraints(t, ShapeMode::Mcc, 1e-9).is_empty()
            || !t.box_violations().is_empty()
        {
            return Err(Error::InvalidInput(format!(
                "planted table {s} is not mcc-feasible"
            )));
        }
    }
    if assignment.iter().any(|&s| s >= tables.len()) {
        return Err(Error::InvalidInput(
            "assignment points past the last class".into(),
        ));
    }
    Ok(())
}

fn assignment_pi(assignment: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &s in assignment {
        counts[s] += 1;
    }
    counts
        .into_iter()
        .map(|c| c as f64 / assignment.len() as f64)
        .collect()
}

/// Draws a count tensor from planted per-class tables: each cell's purchase
/// count is binomial with the planted probability of the category's class.
pub fn generate_planted_tensor(
    tables: &[ProbabilityTable],
    assignment: &[usize],
    categories: &[String],
    exposures: &ExposurePlan,
    seed: u64,
) -> Result<(CountTensor, PlantedTruth)> {
    validate_planted(tables, assignment)?;
    if assignment.len() != categories.len() {
        return Err(Error::InvalidInput(
            "assignment length does not match the category list".into(),
        ));
    }
    let grid = tables[0].grid;
    let exposure_at = |i: usize, j: usize| -> Result<u64> {
        match exposures {
            ExposurePlan::Uniform(n) => Ok(*n),
            ExposurePlan::PerCell(cells) => cells
                .get(i - 1)
                .and_then(|row| row.get(j - 1))
                .copied()
                .ok_or_else(|| Error::InvalidInput("exposure grid too small".into())),
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut n = Vec::with_capacity(categories.len());
    let mut q = Vec::with_capacity(categories.len());
    for &class in assignment {
        let table = &tables[class];
        let mut nk = vec![vec![0u64; grid.frequency_levels]; grid.recency_levels];
        let mut qk = vec![vec![0u64; grid.frequency_levels]; grid.recency_levels];
        for i in 1..=grid.recency_levels {
            for j in 1..=grid.frequency_levels {
                let trials = exposure_at(i, j)?;
                nk[i - 1][j - 1] = trials;
                if trials > 0 {
                    let dist = Binomial::new(trials, table.value(i, j))
                        .map_err(|e| Error::InvalidInput(e.to_string()))?;
                    qk[i - 1][j - 1] = dist.sample(&mut rng);
                }
            }
        }
        n.push(nk);
        q.push(qk);
    }

    let tensor = CountTensor::new(grid, categories.to_vec(), n, q)?;
    let truth = PlantedTruth {
        assignment: assignment.to_vec(),
        tables: tables.to_vec(),
        pi: assignment_pi(assignment, tables.len()),
    };
    Ok((tensor, truth))
}

/// How planted test samples are drawn for one base date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSampleConfig {
    pub base_date: NaiveDate,
    pub customers: usize,
    /// Distinct products viewed per customer.
    pub products_per_customer: usize,
    pub products_per_category: usize,
    /// Unnormalized draw weights over recency levels; `None` is uniform.
    pub recency_weights: Option<Vec<f64>>,
    /// Unnormalized draw weights over frequency levels; `None` is uniform.
    pub frequency_weights: Option<Vec<f64>>,
    pub seed: u64,
}

impl PlantedSampleConfig {
    pub fn new(base_date: NaiveDate, customers: usize, products_per_customer: usize) -> Self {
        Self {
            base_date,
            customers,
            products_per_customer,
            products_per_category: 3,
            recency_weights: None,
            frequency_weights: None,
            seed: 0,
        }
    }
}

fn draw_level(rng: &mut impl Rng, levels: usize, weights: Option<&[f64]>) -> Result<usize> {
    let Some(weights) = weights else {
        return Ok(rng.random_range(1..=levels));
    };
    if weights.len() != levels || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput(
            "level weights must be nonnegative, one per level".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput("level weights sum to zero".into()));
    }
    let mut draw = rng.random::<f64>() * total;
    for (level0, w) in weights.iter().enumerate() {
        draw -= w;
        if draw < 0.0 {
            return Ok(level0 + 1);
        }
    }
    Ok(levels)
}

/// Draws per-customer test samples from the planted model: every customer
/// views `products_per_customer` distinct products (spread over the
/// categories) at levels drawn from the configured distributions, and
/// purchases each with the planted probability of the product's class.
pub fn generate_planted_samples(
    tables: &[ProbabilityTable],
    assignment: &[usize],
    categories: &[String],
    config: &PlantedSampleConfig,
) -> Result<Vec<Sample>> {
    validate_planted(tables, assignment)?;
    if assignment.len() != categories.len() {
        return Err(Error::InvalidInput(
            "assignment length does not match the category list".into(),
        ));
    }
    let grid = tables[0].grid;
    let universe: Vec<(usize, String)> = (0..categories.len())
        .flat_map(|k| {
            (0..config.products_per_category).map(move |t| (k, format!("{:03}-p{t:03}", k)))
        })
        .collect();
    if universe.is_empty() {
        return Err(Error::InvalidInput("empty product universe".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(config.customers * config.products_per_customer);
    for c in 0..config.customers {
        let customer_id = format!("c{c:05}");
        // sample distinct product indices
        let take = config.products_per_customer.min(universe.len());
        let mut chosen = std::collections::BTreeSet::new();
        while chosen.len() < take {
            chosen.insert(rng.random_range(0..universe.len()));
        }
        for idx in chosen {
            let (k, product_id) = &universe[idx];
            let i = draw_level(
                &mut rng,
                grid.recency_levels,
                config.recency_weights.as_deref(),
            )?;
            let j = draw_level(
                &mut rng,
                grid.frequency_levels,
                config.frequency_weights.as_deref(),
            )?;
            let p = tables[assignment[*k]].value(i, j);
            samples.push(Sample {
                base_date: config.base_date,
                customer_id: customer_id.clone(),
                product_id: product_id.clone(),
                category_id: categories[*k].clone(),
                recency: i,
                frequency: j,
                purchased: rng.random::<f64>() < p,
            });
        }
    }
    Ok(samples)
}

/// Generation profile for a synthetic clickstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickstreamProfile {
    pub start_date: NaiveDate,
    pub days: usize,
    pub customers: usize,
    pub products_per_category: usize,
    /// Class of each category; the number of categories is this list's length.
    pub class_of_category: Vec<usize>,
    /// One mcc-feasible purchase-propensity table per class, indexed by the
    /// pair's current (day-recency, view-frequency) levels.
    pub class_tables: Vec<ProbabilityTable>,
    /// Probability that a given customer views a given product on a given day.
    pub daily_view_prob: f64,
    /// Views per (customer, product, day) when viewing, drawn uniformly.
    pub max_views_per_burst: usize,
    /// Feature window driving the purchase propensity.
    pub lookback_days: i64,
}

/// Generates a deterministic event stream whose purchase behavior follows the
/// planted per-class tables: each day, every pair viewed within the lookback
/// window purchases with the planted probability at its current levels.
#[allow(clippy::needless_range_loop)]
pub fn generate_synthetic_clickstream(
    profile: &ClickstreamProfile,
    seed: u64,
) -> Result<Vec<ClickEvent>> {
    validate_planted(&profile.class_tables, &profile.class_of_category)?;
    if !(0.0..=1.0).contains(&profile.daily_view_prob) {
        return Err(Error::InvalidInput(
            "daily_view_prob must lie in [0, 1]".into(),
        ));
    }
    if profile.max_views_per_burst == 0 || profile.lookback_days < 1 {
        return Err(Error::InvalidInput(
            "max_views_per_burst and lookback_days must be >= 1".into(),
        ));
    }
    let grid = profile.class_tables[0].grid;
    let categories = profile.class_of_category.len();

    // per (customer, product): view dates and total view count in the stream
    struct PairState {
        view_dates: Vec<NaiveDate>,
        views: u64,
    }
    let products: Vec<(usize, String, String)> = (0..categories)
        .flat_map(|k| {
            (0..profile.products_per_category)
                .map(move |t| (k, format!("cat{k:03}"), format!("cat{k:03}-p{t:03}")))
        })
        .collect();

    let mut state: Vec<Vec<PairState>> = (0..profile.customers)
        .map(|_| {
            products
                .iter()
                .map(|_| PairState {
                    view_dates: Vec::new(),
                    views: 0,
                })
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    for day in 0..profile.days {
        let date = profile.start_date + Duration::days(day as i64);
        for c in 0..profile.customers {
            let customer_id = format!("c{c:05}");
            let mut minute_of_day = 9 * 60; // views paced through the day
            for (p, (k, category_id, product_id)) in products.iter().enumerate() {
                // purchase decision first: driven by the window *before* today
                let pair = &state[c][p];
                let window_start = date - Duration::days(profile.lookback_days);
                let views_in_window = pair
                    .view_dates
                    .iter()
                    .filter(|&&d| d >= window_start && d < date)
                    .count() as u64;
                if views_in_window > 0 {
                    let last = *pair.view_dates.iter().filter(|&&d| d < date).max().unwrap();
                    let m = (date - last).num_days().max(1) as u64;
                    let i = crate::features::recency_level(m, grid.recency_levels);
                    let j =
                        crate::features::frequency_level(views_in_window, grid.frequency_levels);
                    let p_buy = profile.class_tables[profile.class_of_category[*k]].value(i, j);
                    if rng.random::<f64>() < p_buy {
                        events.push(ClickEvent {
                            timestamp: date.and_hms_opt(8, 0, 0).unwrap().and_utc(),
                            customer_id: customer_id.clone(),
                            product_id: product_id.clone(),
                            category_id: category_id.clone(),
                            kind: EventKind::Purchase,
                        });
                    }
                }
                // then today's views
                if rng.random::<f64>() < profile.daily_view_prob {
                    let burst = rng.random_range(1..=profile.max_views_per_burst);
                    for _ in 0..burst {
                        let ts = date
                            .and_hms_opt(
                                (minute_of_day / 60) as u32,
                                (minute_of_day % 60) as u32,
                                0,
                            )
                            .unwrap()
                            .and_utc();
                        minute_of_day = (minute_of_day + 7) % (24 * 60);
                        events.push(ClickEvent {
                            timestamp: ts,
                            customer_id: customer_id.clone(),
                            product_id: product_id.clone(),
                            category_id: category_id.clone(),
                            kind: EventKind::View,
                        });
                        let pair = &mut state[c][p];
                        pair.views += 1;
                        if pair.view_dates.last() != Some(&date) {
                            pair.view_dates.push(date);
                        }
                    }
                }
            }
        }
    }
    events.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.customer_id.cmp(&b.customer_id))
            .then_with(|| a.product_id.cmp(&b.product_id))
            .then_with(|| a.kind.cmp(&b.kind))
    });
    Ok(events)
}
