use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use clickchoice_core::eval::{run_evaluation, EvalReport};
use clickchoice_core::io::{
    read_model, read_samples_jsonl, write_json, ReportDocument, SCHEMA_VERSION,
};
use clickchoice_core::{Error, Result};
use serde::Serialize;

use crate::config::FileConfig;

#[derive(Args)]
pub struct EvaluateArgs {
    /// Fitted model document (JSON).
    #[arg(long, value_name = "PATH")]
    model: PathBuf,

    /// Test samples (JSON lines), as written by `features`.
    #[arg(long, value_name = "PATH")]
    samples: PathBuf,

    /// Comma-separated selection sizes, e.g. `3,5,10`.
    #[arg(long, value_name = "N,N,...")]
    top_n: Option<String>,

    /// Output report (JSON).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Also write plottable CSV series into this directory.
    #[arg(long, value_name = "DIR")]
    emit_plots: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResolvedEvaluateConfig {
    model: String,
    samples: String,
    top_n: Vec<usize>,
}

fn parse_top_n(spec: &str) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("invalid top-N value {part:?}")))
        })
        .collect()
}

pub fn run(args: EvaluateArgs, file_config: &FileConfig) -> Result<()> {
    let top_n = match &args.top_n {
        Some(spec) => parse_top_n(spec)?,
        None => file_config
            .evaluate
            .top_n
            .clone()
            .unwrap_or_else(|| vec![3, 5, 10]),
    };
    let resolved = ResolvedEvaluateConfig {
        model: args.model.display().to_string(),
        samples: args.samples.display().to_string(),
        top_n: top_n.clone(),
    };
    log::info!("resolved config: {}", serde_json::to_string(&resolved)?);

    let model_doc = read_model(&args.model)?;
    let samples = read_samples_jsonl(&args.samples)?;
    let scorer = model_doc.scorer()?;

    let report = run_evaluation(&scorer, &samples, &top_n)?;
    log::info!(
        "evaluated {} base dates, overall MAP {:.4}",
        report.per_base_date.len(),
        report.overall_map
    );

    let doc = ReportDocument {
        schema_version: SCHEMA_VERSION,
        model_kind: model_doc.kind,
        report,
        config: Some(serde_json::to_value(&resolved)?),
    };
    write_json(&args.out, &doc)?;

    if let Some(dir) = &args.emit_plots {
        emit_plots(dir, &doc.report)?;
    }
    Ok(())
}

/// Plottable CSV series: F1 by selection size and MAP, one row per base
/// date plus an `overall` row.
fn emit_plots(dir: &Path, report: &EvalReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    let mut f1 = BufWriter::new(File::create(dir.join("f1_by_n.csv"))?);
    writeln!(f1, "base_date,n,mean_recall,mean_precision,mean_f1")?;
    for date_report in &report.per_base_date {
        for m in &date_report.by_n {
            writeln!(
                f1,
                "{},{},{},{},{}",
                date_report.date, m.n, m.mean_recall, m.mean_precision, m.mean_f1
            )?;
        }
    }
    for m in &report.overall_by_n {
        writeln!(
            f1,
            "overall,{},{},{},{}",
            m.n, m.mean_recall, m.mean_precision, m.mean_f1
        )?;
    }
    f1.flush()?;

    let mut map = BufWriter::new(File::create(dir.join("map.csv"))?);
    writeln!(map, "base_date,map")?;
    for date_report in &report.per_base_date {
        writeln!(map, "{},{}", date_report.date, date_report.map)?;
    }
    writeln!(map, "overall,{}", report.overall_map)?;
    map.flush()?;
    Ok(())
}
