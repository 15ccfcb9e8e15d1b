//! Schema-versioned JSON documents exchanged between pipeline stages, plus
//! JSONL sample files. Serialization is deterministic: documents contain only
//! ordered containers, so the same inputs always produce the same bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::em::FitDiagnostics;
use crate::error::{Error, Result};
use crate::eval::{EvalReport, ModelScorer};
use crate::features::Sample;
use crate::lclr::LogisticClassParams;
use crate::types::{CountTensor, GridSpec, LatentClassModel, ProbabilityTable};

/// Version written into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

/// Names of the features a tensor or model was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureNames {
    pub recency: String,
    pub frequency: String,
}

/// A count tensor with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDocument {
    pub schema_version: u32,
    pub feature_names: Option<FeatureNames>,
    pub tensor: CountTensor,
    /// Resolved configuration of the producing run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl TensorDocument {
    pub fn new(tensor: CountTensor) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            feature_names: None,
            tensor,
            config: None,
        }
    }
}

/// Kind of fitted model a document holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mono,
    Mcc,
    Lcmcc,
    Lclr,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mono => "mono",
            ModelKind::Mcc => "mcc",
            ModelKind::Lcmcc => "lcmcc",
            ModelKind::Lclr => "lclr",
        }
    }
}

/// One class of a serialized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDocument {
    pub pi: f64,
    pub table: ProbabilityTable,
    /// Logistic coefficients, present for `lclr` models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_capped: Option<bool>,
}

/// Membership matrix with its category row labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipsDocument {
    pub categories: Vec<String>,
    /// `matrix[k][s]`, rows aligned with `categories`.
    pub matrix: Vec<Vec<f64>>,
}

/// A fitted model of any kind, self-contained for scoring and reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub grid: GridSpec,
    pub epsilon: f64,
    pub feature_names: Option<FeatureNames>,
    pub classes: Vec<ClassDocument>,
    pub memberships: MembershipsDocument,
    pub diagnostics: FitDiagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl ModelDocument {
    /// Wraps a latent-class fit; `params` carries the per-class logistic
    /// coefficients when the model is `lclr`.
    pub fn from_model(
        kind: ModelKind,
        model: &LatentClassModel,
        categories: Vec<String>,
        params: Option<&[LogisticClassParams]>,
        diagnostics: FitDiagnostics,
    ) -> Result<Self> {
        let grid = model
            .tables
            .first()
            .map(|t| t.grid)
            .ok_or_else(|| Error::InvalidInput("model has no tables".into()))?;
        let epsilon = model.tables[0].epsilon;
        let classes = model
            .pi
            .iter()
            .enumerate()
            .map(|(s, &pi)| ClassDocument {
                pi,
                table: model.tables[s].clone(),
                beta: params.map(|p| p[s].beta()),
                beta_capped: params.map(|p| p[s].capped),
            })
            .collect();
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            kind,
            grid,
            epsilon,
            feature_names: None,
            classes,
            memberships: MembershipsDocument {
                categories,
                matrix: model.memberships.clone(),
            },
            diagnostics,
            config: None,
        })
    }

    pub fn to_model(&self) -> LatentClassModel {
        LatentClassModel {
            pi: self.classes.iter().map(|c| c.pi).collect(),
            tables: self.classes.iter().map(|c| c.table.clone()).collect(),
            memberships: self.memberships.matrix.clone(),
            final_log_likelihood: self.diagnostics.final_log_likelihood,
        }
    }

    pub fn scorer(&self) -> Result<ModelScorer> {
        ModelScorer::new(
            self.classes.iter().map(|c| c.pi).collect(),
            self.classes.iter().map(|c| c.table.clone()).collect(),
            &self.memberships.categories,
            &self.memberships.matrix,
        )
    }

    pub fn validate(&self) -> Result<()> {
        check_version(self.schema_version)?;
        if self.classes.is_empty() {
            return Err(Error::InvalidInput("model document has no classes".into()));
        }
        for c in &self.classes {
            if c.table.grid != self.grid {
                return Err(Error::InvalidInput("class table grid mismatch".into()));
            }
        }
        if self.memberships.categories.len() != self.memberships.matrix.len() {
            return Err(Error::InvalidInput(
                "membership rows do not match categories".into(),
            ));
        }
        Ok(())
    }
}

/// An evaluation report with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub model_kind: ModelKind,
    pub report: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

fn check_version(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(())
}

/// Writes a document as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn read_json_value(path: &Path) -> Result<serde_json::Value> {
    let file = File::open(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

/// Reads a schema-versioned document, rejecting unknown versions up front.
pub fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let value = read_json_value(path)?;
    let found = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| {
            Error::InvalidInput(format!("{}: missing schema_version", path.display()))
        })?;
    check_version(found as u32)?;
    Ok(serde_json::from_value(value)?)
}

pub fn read_tensor(path: &Path) -> Result<TensorDocument> {
    let doc: TensorDocument = read_versioned(path)?;
    doc.tensor.validate()?;
    Ok(doc)
}

pub fn read_model(path: &Path) -> Result<ModelDocument> {
    let doc: ModelDocument = read_versioned(path)?;
    doc.validate()?;
    Ok(doc)
}

/// Writes samples as one JSON object per line.
pub fn write_samples_jsonl(path: &Path, samples: &[Sample]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_samples_jsonl(path: &Path) -> Result<Vec<Sample>> {
    let file = File::open(path).map_err(|e| {
        Error::InvalidInput(format!("cannot open samples file {}: {e}", path.display()))
    })?;
    let mut samples = Vec::new();
    for (line0, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| Error::BadRecord {
            path: path.display().to_string(),
            line: line0 + 1,
            message: e.to_string(),
        })?;
        samples.push(sample);
    }
    Ok(samples)
}
