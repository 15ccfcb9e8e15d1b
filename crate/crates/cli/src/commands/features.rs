use std::path::PathBuf;

use chrono::NaiveDate;
use clap::Args;
use clickchoice_core::features::{
    aggregate_counts, build_samples, collect_categories, exclude_outlier_customers, read_events,
    subsample, FeatureConfig, FrequencyFeature, RecencyFeature,
};
use clickchoice_core::io::{
    write_json, write_samples_jsonl, FeatureNames, TensorDocument, SCHEMA_VERSION,
};
use clickchoice_core::{Error, Result};
use serde::Serialize;

use crate::config::{resolve, FileConfig};

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum RecencyArg {
    Viewr,
    Sesr,
    Dayr,
}

impl From<RecencyArg> for RecencyFeature {
    fn from(value: RecencyArg) -> Self {
        match value {
            RecencyArg::Viewr => RecencyFeature::ViewR,
            RecencyArg::Sesr => RecencyFeature::SesR,
            RecencyArg::Dayr => RecencyFeature::DayR,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
pub enum FrequencyArg {
    Viewf,
    Sesf,
    Dayf,
}

impl From<FrequencyArg> for FrequencyFeature {
    fn from(value: FrequencyArg) -> Self {
        match value {
            FrequencyArg::Viewf => FrequencyFeature::ViewF,
            FrequencyArg::Sesf => FrequencyFeature::SesF,
            FrequencyArg::Dayf => FrequencyFeature::DayF,
        }
    }
}

#[derive(Args)]
pub struct FeaturesArgs {
    /// Event log, `.csv` or `.jsonl`.
    #[arg(long, value_name = "PATH")]
    events: PathBuf,

    /// Inclusive range of base dates, `YYYY-MM-DD..YYYY-MM-DD`.
    #[arg(long, value_name = "START..END")]
    base_dates: String,

    #[arg(long, value_enum)]
    recency: Option<RecencyArg>,

    #[arg(long, value_enum)]
    frequency: Option<FrequencyArg>,

    /// Recency level count |I|; defaults to the feature's standard threshold.
    #[arg(long, value_name = "N")]
    recency_levels: Option<usize>,

    /// Frequency level count |J|; defaults to the feature's standard threshold.
    #[arg(long, value_name = "N")]
    frequency_levels: Option<usize>,

    #[arg(long, value_name = "DAYS")]
    lookback_days: Option<i64>,

    #[arg(long, value_name = "DAYS")]
    label_horizon_days: Option<i64>,

    #[arg(long, value_name = "MINUTES")]
    session_gap_min: Option<i64>,

    /// Fraction of customers (top purchasers) excluded as outliers.
    #[arg(long, value_name = "FRAC")]
    outlier_frac: Option<f64>,

    /// Keep each sample independently with this probability.
    #[arg(long, value_name = "RATE")]
    sample_rate: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,

    /// Output directory; writes samples.jsonl, tensor.json and summary.json.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Serialize)]
struct ResolvedFeaturesConfig {
    events: String,
    base_dates: String,
    recency: String,
    frequency: String,
    recency_levels: usize,
    frequency_levels: usize,
    lookback_days: i64,
    label_horizon_days: i64,
    session_gap_min: i64,
    outlier_frac: f64,
    sample_rate: f64,
    seed: u64,
}

#[derive(Serialize)]
struct FeaturesSummary<'a> {
    schema_version: u32,
    ingest: clickchoice_core::features::IngestSummary,
    customers_after_outlier_exclusion: usize,
    samples: usize,
    purchase_samples: usize,
    categories: usize,
    config: &'a ResolvedFeaturesConfig,
}

fn parse_feature_name<T: Clone>(name: &str, options: &[(&str, T)], what: &str) -> Result<T> {
    options
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, v)| v.clone())
        .ok_or_else(|| {
            Error::InvalidInput(format!(
                "unknown {what} feature {name:?}; expected one of {:?}",
                options.iter().map(|(n, _)| *n).collect::<Vec<_>>()
            ))
        })
}

fn parse_base_dates(spec: &str) -> Result<Vec<NaiveDate>> {
    let parse_one = |s: &str| -> Result<NaiveDate> {
        s.parse()
            .map_err(|_| Error::InvalidInput(format!("invalid date {s:?} in --base-dates")))
    };
    let (start, end) = match spec.split_once("..") {
        Some((start, end)) => (parse_one(start)?, parse_one(end)?),
        None => {
            let d = parse_one(spec)?;
            (d, d)
        }
    };
    if end < start {
        return Err(Error::InvalidInput(format!(
            "--base-dates range {spec:?} ends before it starts"
        )));
    }
    let mut dates = Vec::new();
    let mut d = start;
    while d <= end {
        dates.push(d);
        d = d.succ_opt().unwrap();
    }
    Ok(dates)
}

pub fn run(args: FeaturesArgs, file_config: &FileConfig) -> Result<()> {
    let section = &file_config.features;
    let recency: RecencyFeature = match args.recency {
        Some(r) => r.into(),
        None => match &section.recency {
            Some(name) => parse_feature_name(
                name,
                &[
                    ("viewr", RecencyFeature::ViewR),
                    ("sesr", RecencyFeature::SesR),
                    ("dayr", RecencyFeature::DayR),
                ],
                "recency",
            )?,
            None => RecencyFeature::DayR,
        },
    };
    let frequency: FrequencyFeature = match args.frequency {
        Some(f) => f.into(),
        None => match &section.frequency {
            Some(name) => parse_feature_name(
                name,
                &[
                    ("viewf", FrequencyFeature::ViewF),
                    ("sesf", FrequencyFeature::SesF),
                    ("dayf", FrequencyFeature::DayF),
                ],
                "frequency",
            )?,
            None => FrequencyFeature::ViewF,
        },
    };

    let mut config = FeatureConfig::new(recency, frequency);
    config.recency_levels = resolve(
        args.recency_levels,
        section.recency_levels,
        recency.default_levels(),
    );
    config.frequency_levels = resolve(
        args.frequency_levels,
        section.frequency_levels,
        frequency.default_levels(),
    );
    config.lookback_days = resolve(args.lookback_days, section.lookback_days, 28);
    config.label_horizon_days = resolve(args.label_horizon_days, section.label_horizon_days, 1);
    config.session_gap_minutes = resolve(args.session_gap_min, section.session_gap_min, 30);
    config.outlier_top_fraction = resolve(args.outlier_frac, section.outlier_frac, 0.01);
    config.validate()?;
    let sample_rate = resolve(args.sample_rate, section.sample_rate, 1.0);
    let seed = resolve(args.seed, section.seed, 0);

    let resolved = ResolvedFeaturesConfig {
        events: args.events.display().to_string(),
        base_dates: args.base_dates.clone(),
        recency: recency.name().to_string(),
        frequency: frequency.name().to_string(),
        recency_levels: config.recency_levels,
        frequency_levels: config.frequency_levels,
        lookback_days: config.lookback_days,
        label_horizon_days: config.label_horizon_days,
        session_gap_min: config.session_gap_minutes,
        outlier_frac: config.outlier_top_fraction,
        sample_rate,
        seed,
    };
    log::info!("resolved config: {}", serde_json::to_string(&resolved)?);

    let base_dates = parse_base_dates(&args.base_dates)?;
    let (events, ingest) = read_events(&args.events)?;
    log::info!(
        "read {} events ({} records skipped)",
        ingest.events_parsed,
        ingest.records_skipped
    );

    let events = exclude_outlier_customers(events, config.outlier_top_fraction)?;
    let customers = events
        .iter()
        .map(|e| e.customer_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .len();

    let samples = build_samples(&events, &base_dates, &config)?;
    let samples = subsample(samples, sample_rate, seed)?;
    let purchase_samples = samples.iter().filter(|s| s.purchased).count();
    log::info!(
        "{} samples ({} with a purchase) over {} base dates",
        samples.len(),
        purchase_samples,
        base_dates.len()
    );

    let categories = collect_categories(&samples);
    let tensor = aggregate_counts(&samples, config.grid()?, &categories)?;

    std::fs::create_dir_all(&args.out)?;
    write_samples_jsonl(&args.out.join("samples.jsonl"), &samples)?;

    let mut tensor_doc = TensorDocument::new(tensor);
    tensor_doc.feature_names = Some(FeatureNames {
        recency: recency.name().to_string(),
        frequency: frequency.name().to_string(),
    });
    tensor_doc.config = Some(serde_json::to_value(&resolved)?);
    write_json(&args.out.join("tensor.json"), &tensor_doc)?;

    write_json(
        &args.out.join("summary.json"),
        &FeaturesSummary {
            schema_version: SCHEMA_VERSION,
            ingest,
            customers_after_outlier_exclusion: customers,
            samples: samples.len(),
            purchase_samples,
            categories: categories.len(),
            config: &resolved,
        },
    )?;
    Ok(())
}
