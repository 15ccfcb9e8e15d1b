use std::path::PathBuf;

use clap::Args;
use clickchoice_core::em::{em_fit, observed_log_likelihood, EmConfig, FitDiagnostics};
use clickchoice_core::io::{read_tensor, write_json, ModelDocument, ModelKind};
use clickchoice_core::lclr::lclr_em_fit;
use clickchoice_core::solver::{fit_mcc, fit_monotone, SolverConfig, WeightedCellCounts};
use clickchoice_core::types::LatentClassModel;
use clickchoice_core::{Error, Result};
use serde::Serialize;

use crate::config::{resolve, resolve_required, FileConfig};

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelArg {
    /// Single table under monotonicity constraints.
    Mono,
    /// Single table under the full MCC constraint set.
    Mcc,
    /// Latent-class MCC mixture fitted by EM.
    Lcmcc,
    /// Latent-class logistic regression baseline.
    Lclr,
}

impl ModelArg {
    fn kind(self) -> ModelKind {
        match self {
            ModelArg::Mono => ModelKind::Mono,
            ModelArg::Mcc => ModelKind::Mcc,
            ModelArg::Lcmcc => ModelKind::Lcmcc,
            ModelArg::Lclr => ModelKind::Lclr,
        }
    }
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    model: Option<ModelArg>,

    /// Count tensor document (JSON).
    #[arg(long, value_name = "PATH")]
    tensor: PathBuf,

    /// Output model document (JSON).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Latent classes |S| for lcmcc/lclr.
    #[arg(long, value_name = "S")]
    classes: Option<usize>,

    /// Independent EM restarts.
    #[arg(long, value_name = "R")]
    restarts: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    /// EM iteration cap per chain.
    #[arg(long, value_name = "N")]
    max_iter: Option<usize>,

    /// EM stops once the relative log-likelihood increase drops below this.
    #[arg(long, value_name = "TOL")]
    loglik_rel_tol: Option<f64>,

    /// Probability box bound.
    #[arg(long, value_name = "EPS")]
    epsilon: Option<f64>,

    /// Solver duality-gap tolerance, relative to the total weight.
    #[arg(long, value_name = "TOL")]
    kkt_tol: Option<f64>,

    /// Laplace pseudo-count added to every cell.
    #[arg(long, value_name = "C")]
    pseudo_count: Option<f64>,
}

#[derive(Serialize)]
struct ResolvedFitConfig {
    model: String,
    tensor: String,
    classes: usize,
    restarts: usize,
    seed: u64,
    max_iter: usize,
    loglik_rel_tol: f64,
    epsilon: f64,
    kkt_tol: f64,
    pseudo_count: f64,
}

pub fn run(args: FitArgs, file_config: &FileConfig) -> Result<()> {
    let section = &file_config.fit;
    let model_arg = match args.model {
        Some(m) => m,
        None => match section.model.as_deref() {
            Some("mono") => ModelArg::Mono,
            Some("mcc") => ModelArg::Mcc,
            Some("lcmcc") => ModelArg::Lcmcc,
            Some("lclr") => ModelArg::Lclr,
            Some(other) => {
                return Err(Error::InvalidInput(format!(
                    "unknown model {other:?} in config file"
                )))
            }
            None => return Err(Error::InvalidInput("--model is required".into())),
        },
    };

    let latent = matches!(model_arg, ModelArg::Lcmcc | ModelArg::Lclr);
    let classes = if latent {
        resolve_required(args.classes, section.classes, "--classes")?
    } else {
        1
    };

    let solver = SolverConfig {
        epsilon: resolve(args.epsilon, section.epsilon, 1e-5),
        kkt_tol: resolve(args.kkt_tol, section.kkt_tol, 1e-8),
        pseudo_count: resolve(args.pseudo_count, section.pseudo_count, 0.0),
        ..SolverConfig::default()
    };
    let em_config = EmConfig {
        classes,
        max_em_iterations: resolve(args.max_iter, section.max_iter, 10),
        loglik_rel_tol: resolve(args.loglik_rel_tol, section.loglik_rel_tol, 1e-6),
        restarts: resolve(args.restarts, section.restarts, 10),
        seed: resolve(args.seed, section.seed, 0),
        solver: solver.clone(),
    };

    let resolved = ResolvedFitConfig {
        model: model_arg.kind().name().to_string(),
        tensor: args.tensor.display().to_string(),
        classes,
        restarts: em_config.restarts,
        seed: em_config.seed,
        max_iter: em_config.max_em_iterations,
        loglik_rel_tol: em_config.loglik_rel_tol,
        epsilon: solver.epsilon,
        kkt_tol: solver.kkt_tol,
        pseudo_count: solver.pseudo_count,
    };
    log::info!("resolved config: {}", serde_json::to_string(&resolved)?);

    let tensor_doc = read_tensor(&args.tensor)?;
    let tensor = &tensor_doc.tensor;
    let categories = tensor.categories().to_vec();

    let mut doc = match model_arg {
        ModelArg::Mono | ModelArg::Mcc => {
            let counts = WeightedCellCounts::from_tensor(tensor);
            let table = match model_arg {
                ModelArg::Mono => fit_monotone(&counts, &solver)?,
                _ => fit_mcc(&counts, &solver)?,
            };
            let tables = vec![table];
            let ll = observed_log_likelihood(tensor, &[1.0], &tables);
            let model = LatentClassModel {
                pi: vec![1.0],
                tables,
                memberships: vec![vec![1.0]; categories.len()],
                final_log_likelihood: ll,
            };
            let diagnostics = FitDiagnostics {
                traces: vec![vec![ll]],
                complete_data_traces: vec![vec![ll]],
                failed_chains: vec![],
                degenerate_chains: vec![],
                chosen_restart: 0,
                all_chains_degenerate: false,
                final_log_likelihood: ll,
            };
            ModelDocument::from_model(model_arg.kind(), &model, categories, None, diagnostics)?
        }
        ModelArg::Lcmcc => {
            let fit = em_fit(tensor, &em_config)?;
            log::info!(
                "best restart {} of {}, log-likelihood {:.6}",
                fit.diagnostics.chosen_restart,
                em_config.restarts,
                fit.model.final_log_likelihood
            );
            ModelDocument::from_model(
                ModelKind::Lcmcc,
                &fit.model,
                categories,
                None,
                fit.diagnostics,
            )?
        }
        ModelArg::Lclr => {
            let fit = lclr_em_fit(tensor, &em_config)?;
            log::info!(
                "best restart {} of {}, log-likelihood {:.6}",
                fit.diagnostics.chosen_restart,
                em_config.restarts,
                fit.model.final_log_likelihood
            );
            ModelDocument::from_model(
                ModelKind::Lclr,
                &fit.model,
                categories,
                Some(&fit.params),
                fit.diagnostics,
            )?
        }
    };
    doc.feature_names = tensor_doc.feature_names.clone();
    doc.config = Some(serde_json::to_value(&resolved)?);
    write_json(&args.out, &doc)?;
    Ok(())
}
