//! Domain types shared by every stage of the pipeline: the probability grid,
//! probability tables under shape constraints, per-category count tensors and
//! the fitted latent-class model.
//!
//! Grid levels are 1-based: recency levels run `1..=recency_levels`, frequency
//! levels `1..=frequency_levels`, matching the feature definitions. Tables are
//! stored row-major by recency level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when verifying solver outputs against the shape constraints.
pub const DEFAULT_SHAPE_SLACK: f64 = 1e-9;

/// Dimensions of the recency x frequency grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub recency_levels: usize,
    pub frequency_levels: usize,
}

impl GridSpec {
    pub fn new(recency_levels: usize, frequency_levels: usize) -> Result<Self> {
        if recency_levels == 0 || frequency_levels == 0 {
            return Err(Error::InvalidInput(format!(
                "grid must have at least one level per axis, got {recency_levels}x{frequency_levels}"
            )));
        }
        Ok(Self {
            recency_levels,
            frequency_levels,
        })
    }

    pub fn cells(&self) -> usize {
        self.recency_levels * self.frequency_levels
    }

    /// Flat row-major index of 1-based levels `(i, j)`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= 1 && i <= self.recency_levels);
        debug_assert!(j >= 1 && j <= self.frequency_levels);
        (i - 1) * self.frequency_levels + (j - 1)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        (1..=self.recency_levels).contains(&i) && (1..=self.frequency_levels).contains(&j)
    }
}

/// Which constraint set a table was fitted under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeTag {
    /// No shape constraints (e.g. a rendered logistic table).
    None,
    /// Non-decreasing in recency and frequency.
    Monotone,
    /// Monotone plus convex in recency and concave in frequency.
    Mcc,
}

/// Constraint set to check a table against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeMode {
    Monotone,
    Mcc,
}

/// Constraint family of a shape violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFamily {
    MonotoneRecency,
    MonotoneFrequency,
    ConvexRecency,
    ConcaveFrequency,
}

/// A violated shape constraint: the family, the 1-based cell anchoring the
/// constraint (its lowest involved levels) and the signed residual. Residuals
/// are >= 0 when the constraint holds; a violation has residual < -slack.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeViolation {
    pub family: ConstraintFamily,
    pub at: (usize, usize),
    pub residual: f64,
}

/// An |I| x |J| grid of choice probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTable {
    pub grid: GridSpec,
    /// Box bound: every cell satisfies `epsilon <= x <= 1 - epsilon`.
    pub epsilon: f64,
    pub shape: ShapeTag,
    /// `values[i-1][j-1]` is the choice probability at recency level `i`,
    /// frequency level `j`.
    pub values: Vec<Vec<f64>>,
}

impl ProbabilityTable {
    pub fn new(
        grid: GridSpec,
        epsilon: f64,
        shape: ShapeTag,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let table = Self {
            grid,
            epsilon,
            shape,
            values,
        };
        table.validate_dims()?;
        Ok(table)
    }

    /// Constant table, the trivially feasible member of every constraint set.
    pub fn constant(grid: GridSpec, epsilon: f64, shape: ShapeTag, value: f64) -> Self {
        Self {
            grid,
            epsilon,
            shape,
            values: vec![vec![value; grid.frequency_levels]; grid.recency_levels],
        }
    }

    pub fn from_flat(grid: GridSpec, epsilon: f64, shape: ShapeTag, flat: &[f64]) -> Result<Self> {
        if flat.len() != grid.cells() {
            return Err(Error::InvalidInput(format!(
                "flat table has {} cells, grid wants {}",
                flat.len(),
                grid.cells()
            )));
        }
        let values = flat
            .chunks(grid.frequency_levels)
            .map(|row| row.to_vec())
            .collect();
        Ok(Self {
            grid,
            epsilon,
            shape,
            values,
        })
    }

    pub fn validate_dims(&self) -> Result<()> {
        if self.values.len() != self.grid.recency_levels
            || self
                .values
                .iter()
                .any(|r| r.len() != self.grid.frequency_levels)
        {
            return Err(Error::InvalidInput(format!(
                "table dimensions do not match grid {}x{}",
                self.grid.recency_levels, self.grid.frequency_levels
            )));
        }
        let epsilon_ok = self.epsilon.is_finite() && self.epsilon > 0.0 && self.epsilon < 0.5;
        if !epsilon_ok {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    /// Value at 1-based levels `(i, j)`.
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i - 1][j - 1]
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    /// Cells outside the `[epsilon, 1 - epsilon]` box, with the (negative)
    /// distance to the nearest bound.
    pub fn box_violations(&self) -> Vec<((usize, usize), f64)> {
        let mut out = Vec::new();
        for i in 1..=self.grid.recency_levels {
            for j in 1..=self.grid.frequency_levels {
                let x = self.value(i, j);
                let r = (x - self.epsilon).min(1.0 - self.epsilon - x);
                if r < 0.0 {
                    out.push(((i, j), r));
                }
            }
        }
        out
    }
}

/// Checks a table against the monotonicity (and, in `Mcc` mode, the
/// convexity-in-recency and concavity-in-frequency) constraints.
///
/// Returns every constraint whose residual is below `-slack`; an empty list
/// means the table is feasible at that slack. Box bounds are checked
/// separately by [`ProbabilityTable::box_violations`].
pub fn check_shape_constraints(
    table: &ProbabilityTable,
    mode: ShapeMode,
    slack: f64,
) -> Vec<ShapeViolation> {
    let ni = table.grid.recency_levels;
    let nj = table.grid.frequency_levels;
    let mut out = Vec::new();
    let mut push = |family, at, residual: f64| {
        if residual < -slack {
            out.push(ShapeViolation {
                family,
                at,
                residual,
            });
        }
    };

    for i in 1..=ni {
        for j in 1..=nj {
            if i < ni {
                push(
                    ConstraintFamily::MonotoneRecency,
                    (i, j),
                    table.value(i + 1, j) - table.value(i, j),
                );
            }
            if j < nj {
                push(
                    ConstraintFamily::MonotoneFrequency,
                    (i, j),
                    table.value(i, j + 1) - table.value(i, j),
                );
            }
            if mode == ShapeMode::Mcc {
                if i + 2 <= ni {
                    // increments in recency must not shrink
                    push(
                        ConstraintFamily::ConvexRecency,
                        (i, j),
                        (table.value(i + 2, j) - table.value(i + 1, j))
                            - (table.value(i + 1, j) - table.value(i, j)),
                    );
                }
                if j + 2 <= nj {
                    // increments in frequency must not grow
                    push(
                        ConstraintFamily::ConcaveFrequency,
                        (i, j),
                        (table.value(i, j + 1) - table.value(i, j))
                            - (table.value(i, j + 2) - table.value(i, j + 1)),
                    );
                }
            }
        }
    }
    out
}

/// Per-(recency, frequency, category) pair counts `n` and purchase counts `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTensor {
    grid: GridSpec,
    categories: Vec<String>,
    /// `n[k][i-1][j-1]`: customer-product pairs at cell `(i, j)` in category `k`.
    n: Vec<Vec<Vec<u64>>>,
    /// `q[k][i-1][j-1]`: pairs among them that led to a purchase.
    q: Vec<Vec<Vec<u64>>>,
}

impl CountTensor {
    pub fn new(
        grid: GridSpec,
        categories: Vec<String>,
        n: Vec<Vec<Vec<u64>>>,
        q: Vec<Vec<Vec<u64>>>,
    ) -> Result<Self> {
        let tensor = Self {
            grid,
            categories,
            n,
            q,
        };
        tensor.validate()?;
        Ok(tensor)
    }

    pub fn zeros(grid: GridSpec, categories: Vec<String>) -> Self {
        let zero =
            vec![vec![vec![0u64; grid.frequency_levels]; grid.recency_levels]; categories.len()];
        Self {
            grid,
            categories,
            n: zero.clone(),
            q: zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.categories.len();
        let dims_ok = |t: &Vec<Vec<Vec<u64>>>| {
            t.len() == k
                && t.iter().all(|m| {
                    m.len() == self.grid.recency_levels
                        && m.iter().all(|r| r.len() == self.grid.frequency_levels)
                })
        };
        if !dims_ok(&self.n) || !dims_ok(&self.q) {
            return Err(Error::InvalidInput(
                "count tensor dimensions do not match grid/categories".into(),
            ));
        }
        for k in 0..self.categories.len() {
            for i in 1..=self.grid.recency_levels {
                for j in 1..=self.grid.frequency_levels {
                    if self.q(k, i, j) > self.n(k, i, j) {
                        return Err(Error::InvalidInput(format!(
                            "q > n at category {:?}, cell ({i}, {j})",
                            self.categories[k]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    /// Pair count for category index `k` at 1-based levels `(i, j)`.
    #[inline]
    pub fn n(&self, k: usize, i: usize, j: usize) -> u64 {
        self.n[k][i - 1][j - 1]
    }

    /// Purchase count for category index `k` at 1-based levels `(i, j)`.
    #[inline]
    pub fn q(&self, k: usize, i: usize, j: usize) -> u64 {
        self.q[k][i - 1][j - 1]
    }

    pub fn increment(&mut self, k: usize, i: usize, j: usize, purchased: bool) {
        self.n[k][i - 1][j - 1] += 1;
        if purchased {
            self.q[k][i - 1][j - 1] += 1;
        }
    }

    pub fn total_pairs(&self) -> u64 {
        self.n.iter().flatten().flatten().sum()
    }

    pub fn total_purchases(&self) -> u64 {
        self.q.iter().flatten().flatten().sum()
    }
}

/// A fitted finite mixture of probability tables over product categories.
///
/// Classes are kept in canonical order (descending `pi`, ties broken by
/// lexicographically smaller table values) so that fits are reproducible
/// across runs despite EM label-switching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentClassModel {
    /// Class sizes; a point on the open simplex.
    pub pi: Vec<f64>,
    /// One probability table per class.
    pub tables: Vec<ProbabilityTable>,
    /// `memberships[k][s]`: posterior probability that category `k` belongs
    /// to class `s`. Rows sum to 1. Row order matches the tensor's categories.
    pub memberships: Vec<Vec<f64>>,
    pub final_log_likelihood: f64,
}

impl LatentClassModel {
    pub fn classes(&self) -> usize {
        self.pi.len()
    }

    /// Reorders classes into canonical order and permutes membership columns
    /// to match. Returns the permutation applied (`perm[new] = old`).
    pub fn canonicalize(&mut self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.classes()).collect();
        let tables = &self.tables;
        let pi = &self.pi;
        order.sort_by(|&a, &b| {
            pi[b]
                .total_cmp(&pi[a])
                .then_with(|| lex_cmp_tables(&tables[a], &tables[b]))
        });
        self.pi = order.iter().map(|&s| pi[s]).collect();
        self.tables = order.iter().map(|&s| tables[s].clone()).collect();
        for row in &mut self.memberships {
            let old = row.clone();
            for (new_s, &old_s) in order.iter().enumerate() {
                row[new_s] = old[old_s];
            }
        }
        order
    }

    pub fn validate(&self, simplex_tol: f64) -> Result<()> {
        let s = self.classes();
        if s == 0 || self.tables.len() != s {
            return Err(Error::InvalidInput("model must have >= 1 class".into()));
        }
        let pi_sum: f64 = self.pi.iter().sum();
        let positive = |p: &&f64| p.is_finite() && **p > 0.0;
        if (pi_sum - 1.0).abs() > simplex_tol || !self.pi.iter().all(|p| positive(&p)) {
            return Err(Error::InvalidInput(format!(
                "class sizes must be positive and sum to 1, got {:?}",
                self.pi
            )));
        }
        for row in &self.memberships {
            if row.len() != s {
                return Err(Error::InvalidInput("membership row length mismatch".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > simplex_tol || row.iter().any(|&z| !(0.0..=1.0).contains(&z)) {
                return Err(Error::InvalidInput(format!(
                    "membership row must lie on the simplex, got {row:?}"
                )));
            }
        }
        Ok(())
    }
}

fn lex_cmp_tables(a: &ProbabilityTable, b: &ProbabilityTable) -> std::cmp::Ordering {
    for (ra, rb) in a.values.iter().zip(&b.values) {
        for (va, vb) in ra.iter().zip(rb) {
            let c = va.total_cmp(vb);
            if c != std::cmp::Ordering::Equal {
                return c;
            }
        }
    }
    std::cmp::Ordering::Equal
}
