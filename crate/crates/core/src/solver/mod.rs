//! Shape-restricted maximum-likelihood fitting of probability tables.
//!
//! Maximizes the weighted binomial log-likelihood
//! `sum_ij (a_ij ln x_ij + b_ij ln(1 - x_ij))` over an |I| x |J| table
//! subject to either the monotonicity constraints or the full set of
//! monotonicity, convexity-in-recency and concavity-in-frequency constraints,
//! plus the `[eps, 1 - eps]` box. The problem is concave with linear
//! constraints, so the returned table attains the global constrained maximum
//! up to the configured duality gap.

mod banded;
mod barrier;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CountTensor, GridSpec, ProbabilityTable, ShapeMode, ShapeTag};

/// Effective per-cell purchase (`a`) and non-purchase (`b`) weights.
///
/// With unit weights these are the raw counts `q_ij` and `n_ij - q_ij`; in
/// the latent-class M-step they are membership-weighted sums over categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCellCounts {
    grid: GridSpec,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl WeightedCellCounts {
    pub fn new(grid: GridSpec, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != grid.cells() || b.len() != grid.cells() {
            return Err(Error::InvalidInput(format!(
                "weights must have {} cells, got {}/{}",
                grid.cells(),
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "cell weights must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { grid, a, b })
    }

    /// Row-major `a` grids, `a[i-1][j-1]`.
    pub fn from_grids(grid: GridSpec, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self> {
        let flatten = |v: Vec<Vec<f64>>| v.into_iter().flatten().collect::<Vec<_>>();
        Self::new(grid, flatten(a), flatten(b))
    }

    /// Unit-weight counts with categories collapsed: `a = sum_k q_ijk`.
    pub fn from_tensor(tensor: &CountTensor) -> Self {
        let grid = tensor.grid();
        let mut a = vec![0.0; grid.cells()];
        let mut b = vec![0.0; grid.cells()];
        for k in 0..tensor.num_categories() {
            for i in 1..=grid.recency_levels {
                for j in 1..=grid.frequency_levels {
                    let idx = grid.index(i, j);
                    let q = tensor.q(k, i, j) as f64;
                    a[idx] += q;
                    b[idx] += tensor.n(k, i, j) as f64 - q;
                }
            }
        }
        Self { grid, a, b }
    }

    /// Membership-weighted counts for one class: `a_ij = sum_k z_k q_ijk`.
    pub fn weighted_from_tensor(tensor: &CountTensor, class_weights: &[f64]) -> Result<Self> {
        if class_weights.len() != tensor.num_categories() {
            return Err(Error::InvalidInput(format!(
                "got {} class weights for {} categories",
                class_weights.len(),
                tensor.num_categories()
            )));
        }
        let grid = tensor.grid();
        let mut a = vec![0.0; grid.cells()];
        let mut b = vec![0.0; grid.cells()];
        for (k, &z) in class_weights.iter().enumerate() {
            if !z.is_finite() || z < 0.0 {
                return Err(Error::InvalidInput(
                    "class weights must be finite and >= 0".into(),
                ));
            }
            for i in 1..=grid.recency_levels {
                for j in 1..=grid.frequency_levels {
                    let idx = grid.index(i, j);
                    let q = tensor.q(k, i, j) as f64;
                    a[idx] += z * q;
                    b[idx] += z * (tensor.n(k, i, j) as f64 - q);
                }
            }
        }
        Ok(Self { grid, a, b })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    #[inline]
    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn total_weight(&self) -> f64 {
        self.a.iter().sum::<f64>() + self.b.iter().sum::<f64>()
    }

    /// Pooled purchase rate `sum(a) / total`, or 0.5 when there is no weight.
    pub fn pooled_rate(&self) -> f64 {
        let total = self.total_weight();
        if total > 0.0 {
            self.a.iter().sum::<f64>() / total
        } else {
            0.5
        }
    }
}

/// Solver tolerances and barrier schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Box bound: probabilities are confined to `[epsilon, 1 - epsilon]`.
    pub epsilon: f64,
    /// Relative duality-gap tolerance (the objective is normalized by the
    /// total weight, so this is a per-unit-weight KKT residual).
    pub kkt_tol: f64,
    /// Newton iteration cap per centering step.
    pub max_newton_iterations: usize,
    /// Multiplicative barrier schedule `t <- mu * t`.
    pub barrier_mu: f64,
    /// Initial barrier parameter.
    pub barrier_t0: f64,
    /// Optional Laplace pseudo-count added to both `a` and `b` of every cell.
    pub pseudo_count: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            kkt_tol: 1e-8,
            max_newton_iterations: 60,
            barrier_mu: 20.0,
            barrier_t0: 1.0,
            pseudo_count: 0.0,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        let epsilon_ok = self.epsilon.is_finite() && self.epsilon > 0.0 && self.epsilon < 0.5;
        if !epsilon_ok {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        let schedule_ok = self.kkt_tol > 0.0 && self.barrier_mu > 1.0 && self.barrier_t0 > 0.0;
        if !schedule_ok {
            return Err(Error::InvalidInput("invalid solver tolerances".into()));
        }
        if !self.pseudo_count.is_finite() || self.pseudo_count < 0.0 {
            return Err(Error::InvalidInput(
                "pseudo_count must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Maximum-likelihood table under the monotonicity constraints.
pub fn fit_monotone(
    counts: &WeightedCellCounts,
    config: &SolverConfig,
) -> Result<ProbabilityTable> {
    fit(counts, config, ShapeMode::Monotone)
}

/// Maximum-likelihood table under monotonicity, convexity in recency and
/// concavity in frequency (the MCC constraint set).
pub fn fit_mcc(counts: &WeightedCellCounts, config: &SolverConfig) -> Result<ProbabilityTable> {
    fit(counts, config, ShapeMode::Mcc)
}

fn fit(
    counts: &WeightedCellCounts,
    config: &SolverConfig,
    mode: ShapeMode,
) -> Result<ProbabilityTable> {
    config.validate()?;
    let grid = counts.grid();
    let tag = match mode {
        ShapeMode::Monotone => ShapeTag::Monotone,
        ShapeMode::Mcc => ShapeTag::Mcc,
    };

    let cells = grid.cells();
    let pc = config.pseudo_count;
    let a_raw: Vec<f64> = counts.a().iter().map(|v| v + pc).collect();
    let b_raw: Vec<f64> = counts.b().iter().map(|v| v + pc).collect();
    let total: f64 = a_raw.iter().sum::<f64>() + b_raw.iter().sum::<f64>();

    let pooled = if total > 0.0 {
        a_raw.iter().sum::<f64>() / total
    } else {
        0.5
    };
    let x0 = barrier::strictly_feasible_start(grid, pooled, config.epsilon);
    if total <= 0.0 {
        // objective is identically zero; any feasible table is optimal
        return ProbabilityTable::from_flat(grid, config.epsilon, tag, &x0);
    }

    // normalize so tolerances are relative to the data size and scaling all
    // weights by a constant leaves the iterates unchanged
    let a: Vec<f64> = a_raw.iter().map(|v| v / total).collect();
    let b: Vec<f64> = b_raw.iter().map(|v| v / total).collect();

    let cons = barrier::build_constraints(grid, mode, config.epsilon);
    debug_assert!(cells == a.len());
    let x = barrier::maximize(x0, &a, &b, &cons, config)?;
    let table = ProbabilityTable::from_flat(grid, config.epsilon, tag, &x)?;
    debug_assert!(
        crate::types::check_shape_constraints(&table, mode, crate::types::DEFAULT_SHAPE_SLACK)
            .is_empty()
            && table.box_violations().is_empty()
    );
    Ok(table)
}

/// Weighted binomial log-likelihood of a table, binomial coefficients omitted:
/// `sum_ij (a_ij ln x_ij + b_ij ln(1 - x_ij))`.
pub fn objective_value(table: &ProbabilityTable, counts: &WeightedCellCounts) -> Result<f64> {
    if table.grid != counts.grid() {
        return Err(Error::InvalidInput(format!(
            "table grid {}x{} does not match counts grid {}x{}",
            table.grid.recency_levels,
            table.grid.frequency_levels,
            counts.grid().recency_levels,
            counts.grid().frequency_levels
        )));
    }
    let mut value = 0.0;
    let grid = table.grid;
    for i in 1..=grid.recency_levels {
        for j in 1..=grid.frequency_levels {
            let x = table.value(i, j);
            if !(0.0 < x && x < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "table value {x} at ({i}, {j}) is outside (0, 1)"
                )));
            }
            let idx = grid.index(i, j);
            value += counts.a()[idx] * x.ln() + counts.b()[idx] * (1.0 - x).ln();
        }
    }
    Ok(value)
}
