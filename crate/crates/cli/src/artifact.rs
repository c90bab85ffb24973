//! Stage outputs: JSON envelopes that carry the producing config and its hash.

use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::CliError;

pub const SYNTH: &str = "synth.json";
pub const CLEAN: &str = "clean.json";
pub const GRAPH: &str = "graph.json";
pub const LABELS: &str = "labels.json";
pub const TRAIN: &str = "train.json";
pub const ABLATION: &str = "ablation.json";
pub const BASELINES: &str = "baselines.json";
pub const EMBEDDINGS: &str = "embeddings.json";
pub const CLUSTERS: &str = "clusters.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub stage: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub data: T,
}

impl<T> Artifact<T> {
    pub fn new(stage: &str, cfg: &PipelineConfig, data: T) -> Self {
        Artifact {
            stage: stage.to_string(),
            config_hash: cfg.hash(),
            config: serde_json::to_value(cfg).expect("config serializes"),
            data,
        }
    }
}

pub fn write<T: Serialize>(path: &Path, artifact: &Artifact<T>, pretty: bool) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    if pretty {
        serde_json::to_writer_pretty(&mut w, artifact)?;
        w.write_all(b"\n")?;
    } else {
        serde_json::to_writer(&mut w, artifact)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an upstream artifact, failing with `Missing` when the file is absent
/// and `HashMismatch` when a different config produced it.
pub fn read<T: DeserializeOwned>(path: &Path, expected_hash: &str) -> Result<Artifact<T>, CliError> {
    if !path.is_file() {
        return Err(CliError::Missing(path.to_path_buf()));
    }
    let r = BufReader::new(std::fs::File::open(path)?);
    let a: Artifact<T> = serde_json::from_reader(r)?;
    if a.config_hash != expected_hash {
        return Err(CliError::HashMismatch {
            path: path.to_path_buf(),
            found: a.config_hash,
            expected: expected_hash.to_string(),
        });
    }
    Ok(a)
}

/// Like `read`, but an absent file yields `None`.
pub fn read_optional<T: DeserializeOwned>(path: &Path, expected_hash: &str) -> Result<Option<Artifact<T>>, CliError> {
    match read(path, expected_hash) {
        Err(CliError::Missing(_)) => Ok(None),
        other => other.map(Some),
    }
}
