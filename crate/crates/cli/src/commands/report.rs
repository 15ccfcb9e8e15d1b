use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use clickchoice_core::eval::{report_class_profiles, ClassProfilesReport};
use clickchoice_core::io::{
    read_model, read_versioned, write_json, ModelKind, ReportDocument, SCHEMA_VERSION,
};
use clickchoice_core::{Error, Result};
use serde::Serialize;

use crate::config::FileConfig;

#[derive(Args)]
pub struct ReportArgs {
    /// Fitted model document (JSON).
    #[arg(long, value_name = "PATH")]
    model: PathBuf,

    /// Output class-profiles document (JSON).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Evaluation reports to summarize side by side (repeatable).
    #[arg(long = "eval", value_name = "PATH")]
    evals: Vec<PathBuf>,

    /// Directory for the cross-model summary CSVs; required with --eval.
    #[arg(long, value_name = "DIR")]
    plots_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResolvedReportConfig {
    model: String,
    evals: Vec<String>,
}

#[derive(Serialize)]
struct ProfilesDocument {
    schema_version: u32,
    model_kind: ModelKind,
    final_log_likelihood: f64,
    profiles: ClassProfilesReport,
    config: ResolvedReportConfig,
}

pub fn run(args: ReportArgs, _file_config: &FileConfig) -> Result<()> {
    let resolved = ResolvedReportConfig {
        model: args.model.display().to_string(),
        evals: args.evals.iter().map(|p| p.display().to_string()).collect(),
    };
    log::info!("resolved config: {}", serde_json::to_string(&resolved)?);
    let doc = read_model(&args.model)?;
    let model = doc.to_model();
    let profiles = report_class_profiles(&model, &doc.memberships.categories)?;
    for profile in &profiles.classes {
        log::info!(
            "class {}: pi = {:.3}, {} categories",
            profile.class,
            profile.pi,
            profile.categories.len()
        );
    }
    write_json(
        &args.out,
        &ProfilesDocument {
            schema_version: SCHEMA_VERSION,
            model_kind: doc.kind,
            final_log_likelihood: doc.diagnostics.final_log_likelihood,
            profiles,
            config: resolved,
        },
    )?;

    if !args.evals.is_empty() {
        let dir = args.plots_dir.as_deref().ok_or_else(|| {
            Error::InvalidInput("--plots-dir is required when --eval reports are given".into())
        })?;
        summarize_evals(dir, &args.evals)?;
    }
    Ok(())
}

/// Cross-model comparison series: overall F1 per selection size and overall
/// MAP, one row per evaluation report, labeled by file stem.
fn summarize_evals(dir: &Path, evals: &[PathBuf]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut f1 = BufWriter::new(File::create(dir.join("f1_summary.csv"))?);
    let mut map = BufWriter::new(File::create(dir.join("map_summary.csv"))?);
    writeln!(f1, "label,model,n,mean_f1")?;
    writeln!(map, "label,model,map")?;
    for path in evals {
        let doc: ReportDocument = read_versioned(path)?;
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("report");
        for m in &doc.report.overall_by_n {
            writeln!(
                f1,
                "{label},{},{},{}",
                doc.model_kind.name(),
                m.n,
                m.mean_f1
            )?;
        }
        writeln!(
            map,
            "{label},{},{}",
            doc.model_kind.name(),
            doc.report.overall_map
        )?;
    }
    f1.flush()?;
    map.flush()?;
    Ok(())
}
