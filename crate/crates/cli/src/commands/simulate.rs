use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use clickchoice_core::io::{write_json, SCHEMA_VERSION};
use clickchoice_core::synth::{generate_synthetic_clickstream, ClickstreamProfile, PlantedTruth};
use clickchoice_core::{Error, Result};
use serde::Serialize;

use crate::config::{resolve, FileConfig};

#[derive(Args)]
pub struct SimulateArgs {
    /// Generation profile (JSON).
    #[arg(long, value_name = "PATH")]
    profile: PathBuf,

    #[arg(long)]
    seed: Option<u64>,

    /// Output event log (JSON lines).
    #[arg(long, value_name = "PATH")]
    out: PathBuf,

    /// Where to write the planted ground truth.
    #[arg(long, value_name = "PATH")]
    truth: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResolvedSimulateConfig {
    profile: String,
    seed: u64,
}

#[derive(Serialize)]
struct TruthDocument<'a> {
    schema_version: u32,
    truth: &'a PlantedTruth,
    config: &'a ResolvedSimulateConfig,
}

pub fn run(args: SimulateArgs, file_config: &FileConfig) -> Result<()> {
    let seed = resolve(args.seed, file_config.simulate.seed, 0);
    let resolved = ResolvedSimulateConfig {
        profile: args.profile.display().to_string(),
        seed,
    };
    log::info!("resolved config: {}", serde_json::to_string(&resolved)?);

    let file = File::open(&args.profile).map_err(|e| {
        Error::InvalidInput(format!(
            "cannot open profile {}: {e}",
            args.profile.display()
        ))
    })?;
    let profile: ClickstreamProfile = serde_json::from_reader(BufReader::new(file))?;

    let events = generate_synthetic_clickstream(&profile, seed)?;
    log::info!("generated {} events", events.len());

    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = BufWriter::new(File::create(&args.out)?);
    for event in &events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;

    if let Some(truth_path) = &args.truth {
        let classes = profile.class_tables.len();
        let mut counts = vec![0usize; classes];
        for &s in &profile.class_of_category {
            counts[s] += 1;
        }
        let truth = PlantedTruth {
            assignment: profile.class_of_category.clone(),
            tables: profile.class_tables.clone(),
            pi: counts
                .into_iter()
                .map(|c| c as f64 / profile.class_of_category.len() as f64)
                .collect(),
        };
        write_json(
            truth_path,
            &TruthDocument {
                schema_version: SCHEMA_VERSION,
                truth: &truth,
                config: &resolved,
            },
        )?;
    }
    Ok(())
}
