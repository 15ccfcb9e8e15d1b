//! Latent-class logistic regression baseline: per class, the choice
//! probability is `sigmoid(beta0 + beta1 * i + beta2 * j)` in the raw
//! (unstandardized) recency and frequency levels. The mixture structure, the
//! EM loop, the posterior and class-size updates are shared with the
//! latent-class MCC model; only the M-step differs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{run_em, EmConfig, FitDiagnostics};
use crate::error::Result;
use crate::solver::WeightedCellCounts;
use crate::types::{CountTensor, GridSpec, LatentClassModel, ProbabilityTable, ShapeTag};

/// Magnitude cap applied per coefficient when the likelihood has no interior
/// maximizer (perfect separation).
pub const BETA_CAP: f64 = 50.0;

/// Gradient tolerance of the Newton solve, on the weight-normalized objective.
pub const GRAD_TOL: f64 = 1e-8;

/// Logistic coefficients of one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticClassParams {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Set when a coefficient ended at the `BETA_CAP` bound.
    pub capped: bool,
}

impl LogisticClassParams {
    pub fn beta(&self) -> [f64; 3] {
        [self.beta0, self.beta1, self.beta2]
    }
}

/// A fitted latent-class logistic model: the shared mixture structure plus
/// per-class coefficients. `model.tables` holds the rendered (clamped)
/// per-class tables actually used for likelihoods and prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LclrFit {
    pub model: LatentClassModel,
    pub params: Vec<LogisticClassParams>,
    pub diagnostics: FitDiagnostics,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Renders the logistic surface on the grid, clamped to the epsilon box so it
/// can flow through the same likelihood and scoring paths as the MCC tables.
pub fn logistic_table(
    params: &LogisticClassParams,
    grid: GridSpec,
    epsilon: f64,
) -> ProbabilityTable {
    let values = (1..=grid.recency_levels)
        .map(|i| {
            (1..=grid.frequency_levels)
                .map(|j| {
                    let z = params.beta0 + params.beta1 * i as f64 + params.beta2 * j as f64;
                    sigmoid(z).clamp(epsilon, 1.0 - epsilon)
                })
                .collect()
        })
        .collect();
    ProbabilityTable {
        grid,
        epsilon,
        shape: ShapeTag::None,
        values,
    }
}

/// Maximizes the weighted logistic log-likelihood
/// `sum_ij (a_ij ln p_ij + b_ij ln(1 - p_ij))` over the coefficients by
/// damped Newton steps. The objective is normalized by the total weight, so
/// `GRAD_TOL` is a relative stationarity tolerance. Under perfect separation
/// the coefficients are capped at `BETA_CAP` and flagged.
pub fn fit_weighted_logistic(counts: &WeightedCellCounts) -> LogisticClassParams {
    let grid = counts.grid();
    let total = counts.total_weight();
    let mut params = LogisticClassParams {
        beta0: 0.0,
        beta1: 0.0,
        beta2: 0.0,
        capped: false,
    };
    if total <= 0.0 {
        return params;
    }

    let cells: Vec<(f64, f64, f64, f64)> = (1..=grid.recency_levels)
        .flat_map(|i| (1..=grid.frequency_levels).map(move |j| (i, j)))
        .map(|(i, j)| {
            let idx = grid.index(i, j);
            (
                i as f64,
                j as f64,
                counts.a()[idx] / total,
                counts.b()[idx] / total,
            )
        })
        .collect();

    let loglik = |beta: &[f64; 3]| -> f64 {
        cells
            .iter()
            .map(|&(i, j, a, b)| {
                let z = beta[0] + beta[1] * i + beta[2] * j;
                // ln sigma(z) = -ln(1 + exp(-z)), stable both ways
                let ln_p = -softplus(-z);
                let ln_1p = -softplus(z);
                a * ln_p + b * ln_1p
            })
            .sum()
    };

    let mut beta = [0.0f64; 3];
    let mut value = loglik(&beta);
    // Iterate until the step stalls rather than until the gradient is small:
    // under separation the gradient decays exponentially while the optimum
    // still lies at infinity, and the iterates must reach the cap.
    for _ in 0..200 {
        let mut grad = [0.0f64; 3];
        let mut hess = [[0.0f64; 3]; 3];
        for &(i, j, a, b) in &cells {
            let u = [1.0, i, j];
            let p = sigmoid(beta[0] + beta[1] * i + beta[2] * j);
            let w = a + b;
            let r = a - w * p;
            let h = w * p * (1.0 - p);
            for c in 0..3 {
                grad[c] += r * u[c];
                for d in 0..3 {
                    hess[c][d] += h * u[c] * u[d];
                }
            }
        }

        let step = match solve3(&hess, &grad) {
            Some(step) => step,
            None => {
                // ridge fallback for a (near-)singular curvature matrix
                let mut ridged = hess;
                let bump = 1e-10 + 1e-8 * (hess[0][0] + hess[1][1] + hess[2][2]);
                for (c, row) in ridged.iter_mut().enumerate() {
                    row[c] += bump;
                }
                match solve3(&ridged, &grad) {
                    Some(step) => step,
                    None => break,
                }
            }
        };

        // damp until the (normalized) likelihood does not decrease
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let mut trial = beta;
            for c in 0..3 {
                trial[c] = (trial[c] + scale * step[c]).clamp(-BETA_CAP, BETA_CAP);
            }
            let trial_value = loglik(&trial);
            if trial_value >= value - 1e-15 {
                let delta: f64 = trial
                    .iter()
                    .zip(&beta)
                    .map(|(t, b)| (t - b).abs())
                    .fold(0.0, f64::max);
                beta = trial;
                value = trial_value;
                moved = delta > 1e-14;
                break;
            }
            scale *= 0.5;
        }
        if !moved {
            break;
        }
    }

    params.beta0 = beta[0];
    params.beta1 = beta[1];
    params.beta2 = beta[2];
    params.capped = beta.iter().any(|b| b.abs() >= BETA_CAP);
    params
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Gaussian elimination with partial pivoting on a 3x3 system.
#[allow(clippy::needless_range_loop)]
fn solve3(a: &[[f64; 3]; 3], rhs: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = [[0.0f64; 4]; 3];
    for r in 0..3 {
        m[r][..3].copy_from_slice(&a[r]);
        m[r][3] = rhs[r];
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&r1, &r2| m[r1][col].abs().total_cmp(&m[r2][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for r in (col + 1)..3 {
            let f = m[r][col] / m[col][col];
            for c in col..4 {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = [0.0f64; 3];
    for r in (0..3).rev() {
        let mut v = m[r][3];
        for c in (r + 1)..3 {
            v -= m[r][c] * x[c];
        }
        x[r] = v / m[r][r];
        if !x[r].is_finite() {
            return None;
        }
    }
    Some(x)
}

/// Latent-class logistic regression via the shared EM loop, with the
/// weighted logistic fit as the per-class M-step.
pub fn lclr_em_fit(tensor: &CountTensor, config: &EmConfig) -> Result<LclrFit> {
    let grid = tensor.grid();
    let epsilon = config.solver.epsilon;
    let (model, params, diagnostics) = run_em(tensor, config, &|tensor, z| {
        let classes = z.first().map_or(0, Vec::len);
        (0..classes)
            .into_par_iter()
            .map(|s| {
                let column: Vec<f64> = z.iter().map(|row| row[s]).collect();
                let counts = WeightedCellCounts::weighted_from_tensor(tensor, &column)?;
                let params = fit_weighted_logistic(&counts);
                Ok((logistic_table(&params, grid, epsilon), params))
            })
            .collect()
    })?;
    Ok(LclrFit {
        model,
        params,
        diagnostics,
    })
}
