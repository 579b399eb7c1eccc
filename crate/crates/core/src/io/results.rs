//! `results.json` and `results.csv`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::to_sorted_json;
use crate::error::{Error, Result};
use crate::model::EvaluationResult;
use crate::rsa::RsaConfig;
use crate::wrsa::{WrsaConfig, WrsaResult};

pub const TOOL_VERSION: &str = concat!("net2rdm ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "lowercase")]
pub enum AnalysisConfig {
    Rsa(RsaConfig),
    Wrsa(WrsaConfig),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inputs {
    pub model_manifests: Vec<String>,
    pub brain_manifest: String,
}

/// Everything one analysis run produced, plus the parameters that made it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub tool_version: String,
    pub config: AnalysisConfig,
    pub inputs: Inputs,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rsa_results: Vec<EvaluationResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wrsa_results: Vec<WrsaResult>,
    /// Only set on request; left out by default so reruns are byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
}

impl ResultsDocument {
    pub fn to_json(&self) -> Result<String> {
        to_sorted_json(self).map_err(|source| Error::Json { path: "results.json".into(), source })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json { path: "results.json".into(), source })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
    }

    /// Flat table, one row per model / layer / subject. Weighted-RSA rows use
    /// the layer column `weighted` and the mean held-out r as correlation.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Manifest { path: "results.csv".into(), reason: e.to_string() };
        w.write_record(["analysis", "model_id", "layer", "roi", "subject", "correlation", "score"])
            .map_err(csv_err)?;
        for r in &self.rsa_results {
            for (s, subject) in r.subjects.iter().enumerate() {
                w.write_record([
                    "rsa",
                    &r.model_id,
                    &r.layer_name,
                    &r.roi_name,
                    subject,
                    &r.per_subject_rho[s].to_string(),
                    &r.per_subject_score[s].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        for r in &self.wrsa_results {
            for (s, subject) in r.subjects.iter().enumerate() {
                w.write_record([
                    "wrsa",
                    &r.model_id,
                    "weighted",
                    &r.roi_name,
                    subject,
                    &r.per_subject_r[s].to_string(),
                    &r.per_subject_score[s].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Manifest { path: "results.csv".into(), reason: e.to_string() })?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}
