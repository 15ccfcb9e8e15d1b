//! EM fitting of the latent-class model: categories are soft-assigned to
//! classes, each class gets its own shape-constrained probability table.
//!
//! One iteration is an E-step (membership update by Bayes rule) followed by
//! an M-step (class sizes by weighted counting, tables by weighted
//! constrained maximum likelihood). A chain enters at the M-step from its
//! random initial memberships; that entry step does not count toward the
//! iteration cap. Several independent restart chains are run and the one
//! with the best observed log-likelihood wins.
//!
//! All event likelihoods are computed in the log domain with the binomial
//! coefficients omitted: they are constant in the tables, so they cancel in
//! the posterior ratio and shift the observed log-likelihood by a constant.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{fit_mcc, SolverConfig, WeightedCellCounts};
use crate::types::{CountTensor, LatentClassModel, ProbabilityTable};

/// Column sums below `EMPTY_CLASS_TOL * |K|` mark a chain as degenerate.
pub const EMPTY_CLASS_TOL: f64 = 1e-8;

/// EM settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Number of latent classes `|S|`.
    pub classes: usize,
    /// Cap on E+M iterations per chain.
    pub max_em_iterations: usize,
    /// Stop a chain once the relative log-likelihood increase drops below this.
    pub loglik_rel_tol: f64,
    /// Number of independent restart chains.
    pub restarts: usize,
    /// Master seed; chain sub-seeds are drawn from it up front.
    pub seed: u64,
    pub solver: SolverConfig,
}

impl EmConfig {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            max_em_iterations: 10,
            loglik_rel_tol: 1e-6,
            restarts: 10,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }

    fn validate(&self, tensor: &CountTensor) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::InvalidInput("need at least one class".into()));
        }
        if self.restarts == 0 || self.max_em_iterations == 0 {
            return Err(Error::InvalidInput(
                "restarts and max_em_iterations must be >= 1".into(),
            ));
        }
        let tol_ok = self.loglik_rel_tol.is_finite() && self.loglik_rel_tol > 0.0;
        if !tol_ok {
            return Err(Error::InvalidInput("loglik_rel_tol must be > 0".into()));
        }
        if tensor.num_categories() == 0 {
            return Err(Error::InvalidInput("tensor has no categories".into()));
        }
        Ok(())
    }
}

/// Per-chain audit trail of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Observed log-likelihood after the entry M-step and after each
    /// iteration, per chain; empty for failed chains. Termination is judged
    /// on this quantity.
    pub traces: Vec<Vec<f64>>,
    /// Complete-data log-likelihood at the same points, recorded alongside.
    pub complete_data_traces: Vec<Vec<f64>>,
    pub failed_chains: Vec<usize>,
    pub degenerate_chains: Vec<usize>,
    pub chosen_restart: usize,
    /// True when no chain avoided an empty class; the best one is kept anyway.
    pub all_chains_degenerate: bool,
    pub final_log_likelihood: f64,
}

/// A fitted latent-class MCC model plus its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    pub model: LatentClassModel,
    pub diagnostics: FitDiagnostics,
}

/// Log conditional likelihood of category `k`'s counts under one table,
/// binomial coefficients omitted.
pub fn log_event_likelihood(tensor: &CountTensor, k: usize, table: &ProbabilityTable) -> f64 {
    let grid = tensor.grid();
    let mut ll = 0.0;
    for i in 1..=grid.recency_levels {
        for j in 1..=grid.frequency_levels {
            let n = tensor.n(k, i, j);
            if n == 0 {
                continue;
            }
            let q = tensor.q(k, i, j);
            let x = table.value(i, j);
            ll += q as f64 * x.ln() + (n - q) as f64 * (1.0 - x).ln();
        }
    }
    ll
}

fn event_loglik_matrix(tensor: &CountTensor, tables: &[ProbabilityTable]) -> Vec<Vec<f64>> {
    (0..tensor.num_categories())
        .map(|k| {
            tables
                .iter()
                .map(|t| log_event_likelihood(tensor, k, t))
                .collect()
        })
        .collect()
}

/// Posterior membership matrix via Bayes rule, computed with log-sum-exp.
/// Every row sums to 1.
pub fn posterior_memberships(
    tensor: &CountTensor,
    pi: &[f64],
    tables: &[ProbabilityTable],
) -> Vec<Vec<f64>> {
    let log_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
    event_loglik_matrix(tensor, tables)
        .into_iter()
        .map(|lls| {
            let scores: Vec<f64> = lls.iter().zip(&log_pi).map(|(ll, lp)| ll + lp).collect();
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let total: f64 = weights.iter().sum();
            weights.into_iter().map(|w| w / total).collect()
        })
        .collect()
}

/// Class sizes from memberships: `pi_s = sum_k z_ks / |K|`.
pub fn update_class_sizes(memberships: &[Vec<f64>]) -> Vec<f64> {
    let k = memberships.len() as f64;
    let classes = memberships.first().map_or(0, Vec::len);
    (0..classes)
        .map(|s| memberships.iter().map(|row| row[s]).sum::<f64>() / k)
        .collect()
}

/// M-step tables: one weighted MCC fit per class, classes independent.
pub fn m_step_tables(
    tensor: &CountTensor,
    memberships: &[Vec<f64>],
    solver: &SolverConfig,
) -> Result<Vec<ProbabilityTable>> {
    let classes = memberships.first().map_or(0, Vec::len);
    (0..classes)
        .into_par_iter()
        .map(|s| {
            let column: Vec<f64> = memberships.iter().map(|row| row[s]).collect();
            let counts = WeightedCellCounts::weighted_from_tensor(tensor, &column)?;
            fit_mcc(&counts, solver)
        })
        .collect()
}

/// Observed (mixture) log-likelihood `sum_k ln sum_s pi_s f(E_k; X_s)`,
/// binomial coefficients omitted. This is the quantity EM ascends.
pub fn observed_log_likelihood(
    tensor: &CountTensor,
    pi: &[f64],
    tables: &[ProbabilityTable],
) -> f64 {
    let log_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
    event_loglik_matrix(tensor, tables)
        .into_iter()
        .map(|lls| {
            let scores: Vec<f64> = lls.iter().zip(&log_pi).map(|(ll, lp)| ll + lp).collect();
            log_sum_exp(&scores)
        })
        .sum()
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

/// Complete-data log-likelihood `sum_ks z_ks (ln pi_s + ln f(E_k; X_s))`,
/// with the `0 * ln 0` convention for empty memberships.
pub fn complete_data_log_likelihood(
    tensor: &CountTensor,
    memberships: &[Vec<f64>],
    pi: &[f64],
    tables: &[ProbabilityTable],
) -> f64 {
    let log_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
    event_loglik_matrix(tensor, tables)
        .into_iter()
        .zip(memberships)
        .map(|(lls, row)| {
            row.iter()
                .zip(lls.iter().zip(&log_pi))
                .filter(|&(&z, _)| z > 0.0)
                .map(|(&z, (ll, lp))| z * (ll + lp))
                .sum::<f64>()
        })
        .sum()
}

/// Fits the latent-class MCC model with multiple restarts; returns the chain
/// with the best observed log-likelihood, classes in canonical order.
pub fn em_fit(tensor: &CountTensor, config: &EmConfig) -> Result<EmFit> {
    let (model, _, diagnostics) = run_em(tensor, config, &|tensor, z| {
        m_step_tables(tensor, z, &config.solver)
            .map(|tables| tables.into_iter().map(|t| (t, ())).collect())
    })?;
    Ok(EmFit { model, diagnostics })
}

pub(crate) struct ChainOutcome<P> {
    pi: Vec<f64>,
    tables: Vec<ProbabilityTable>,
    payloads: Vec<P>,
    memberships: Vec<Vec<f64>>,
    final_ll: f64,
    trace: Vec<f64>,
    complete_trace: Vec<f64>,
    degenerate: bool,
}

/// M-step callback: returns one `(likelihood table, payload)` per class.
pub(crate) type MStepFn<'a, P> =
    dyn Fn(&CountTensor, &[Vec<f64>]) -> Result<Vec<(ProbabilityTable, P)>> + Sync + 'a;

/// Shared EM driver: the posterior, class-size, restart and selection logic
/// used by both the MCC model and the logistic baseline. For the MCC model
/// the M-step payload is empty, for the baseline it is the regression
/// coefficients.
pub(crate) fn run_em<P: Clone + Send>(
    tensor: &CountTensor,
    config: &EmConfig,
    m_step: &MStepFn<P>,
) -> Result<(LatentClassModel, Vec<P>, FitDiagnostics)> {
    config.validate(tensor)?;

    let mut seed_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let chain_seeds: Vec<u64> = (0..config.restarts).map(|_| seed_rng.random()).collect();

    let outcomes: Vec<std::result::Result<ChainOutcome<P>, String>> = chain_seeds
        .par_iter()
        .map(|&chain_seed| run_chain(tensor, config, chain_seed, m_step).map_err(|e| e.to_string()))
        .collect();

    let mut traces = vec![Vec::new(); config.restarts];
    let mut complete_data_traces = vec![Vec::new(); config.restarts];
    let mut failed_chains = Vec::new();
    let mut degenerate_chains = Vec::new();
    for (idx, outcome) in outcomes.iter().enumerate() {
        match outcome {
            Ok(chain) => {
                traces[idx] = chain.trace.clone();
                complete_data_traces[idx] = chain.complete_trace.clone();
                if chain.degenerate {
                    degenerate_chains.push(idx);
                }
            }
            Err(_) => failed_chains.push(idx),
        }
    }

    let pick = |allow_degenerate: bool| -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (idx, outcome) in outcomes.iter().enumerate() {
            if let Ok(chain) = outcome {
                if chain.degenerate && !allow_degenerate {
                    continue;
                }
                if best.is_none_or(|(_, ll)| chain.final_ll > ll) {
                    best = Some((idx, chain.final_ll));
                }
            }
        }
        best.map(|(idx, _)| idx)
    };
    let (chosen, all_chains_degenerate) = match pick(false) {
        Some(idx) => (idx, false),
        None => {
            let idx = pick(true).ok_or_else(|| {
                Error::Numerical(format!(
                    "all {} EM chains failed; first error: {}",
                    config.restarts,
                    outcomes
                        .iter()
                        .find_map(|o| o.as_ref().err())
                        .cloned()
                        .unwrap_or_default()
                ))
            })?;
            log::warn!("every EM chain ended with an empty class; keeping the best one");
            (idx, true)
        }
    };

    let chain = match &outcomes[chosen] {
        Ok(chain) => chain,
        Err(_) => unreachable!(),
    };
    let mut model = LatentClassModel {
        pi: chain.pi.clone(),
        tables: chain.tables.clone(),
        memberships: chain.memberships.clone(),
        final_log_likelihood: chain.final_ll,
    };
    let perm = model.canonicalize();
    let payloads: Vec<P> = perm.iter().map(|&s| chain.payloads[s].clone()).collect();

    let diagnostics = FitDiagnostics {
        traces,
        complete_data_traces,
        failed_chains,
        degenerate_chains,
        chosen_restart: chosen,
        all_chains_degenerate,
        final_log_likelihood: chain.final_ll,
    };
    Ok((model, payloads, diagnostics))
}

fn run_chain<P>(
    tensor: &CountTensor,
    config: &EmConfig,
    chain_seed: u64,
    m_step: &MStepFn<P>,
) -> Result<ChainOutcome<P>> {
    let mut rng = ChaCha8Rng::seed_from_u64(chain_seed);
    let mut z = init_memberships(tensor.num_categories(), config.classes, &mut rng);
    let mut degenerate = has_empty_class(&z);

    // entry M-step from the initial memberships; not counted as an iteration
    let mut pi = update_class_sizes(&z);
    let mut fits = m_step(tensor, &z)?;
    let (mut ll, first_q) = {
        let tables: Vec<_> = fits.iter().map(|(t, _)| t.clone()).collect();
        (
            observed_log_likelihood(tensor, &pi, &tables),
            complete_data_log_likelihood(tensor, &z, &pi, &tables),
        )
    };
    let mut trace = vec![ll];
    let mut complete_trace = vec![first_q];

    for _ in 0..config.max_em_iterations {
        let tables: Vec<_> = fits.iter().map(|(t, _)| t.clone()).collect();
        z = posterior_memberships(tensor, &pi, &tables);
        degenerate |= has_empty_class(&z);
        pi = update_class_sizes(&z);
        fits = m_step(tensor, &z)?;
        let tables: Vec<_> = fits.iter().map(|(t, _)| t.clone()).collect();
        let new_ll = observed_log_likelihood(tensor, &pi, &tables);
        // EM ascent, with slack for the solver tolerance
        debug_assert!(
            new_ll >= ll - 1e-6,
            "observed log-likelihood fell: {ll} -> {new_ll}"
        );
        trace.push(new_ll);
        complete_trace.push(complete_data_log_likelihood(tensor, &z, &pi, &tables));
        let rel = (new_ll - ll) / ll.abs().max(1.0);
        ll = new_ll;
        if rel < config.loglik_rel_tol {
            break;
        }
    }

    // report the exact posterior under the final parameters
    let (tables, payloads): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
    let memberships = posterior_memberships(tensor, &pi, &tables);
    degenerate |= has_empty_class(&memberships);

    Ok(ChainOutcome {
        pi,
        tables,
        payloads,
        memberships,
        final_ll: ll,
        trace,
        complete_trace,
        degenerate,
    })
}

/// Each row drawn from a symmetric Dirichlet(1), i.e. uniform on the simplex.
fn init_memberships(categories: usize, classes: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..categories)
        .map(|_| {
            let draws: Vec<f64> = (0..classes)
                .map(|_| -(1.0 - rng.random::<f64>()).ln())
                .collect();
            let total: f64 = draws.iter().sum();
            if total > 0.0 {
                draws.into_iter().map(|e| e / total).collect()
            } else {
                vec![1.0 / classes as f64; classes]
            }
        })
        .collect()
}

fn has_empty_class(z: &[Vec<f64>]) -> bool {
    let classes = z.first().map_or(0, Vec::len);
    let threshold = EMPTY_CLASS_TOL * z.len() as f64;
    (0..classes).any(|s| z.iter().map(|row| row[s]).sum::<f64>() < threshold)
}
