//! Pipeline configuration: one TOML file, unknown keys rejected, every module
//! section optional.

use std::path::{Path, PathBuf};

use gridrisk::baselines::BaselineConfig;
use gridrisk::gnn::{EncoderConfig, TrainConfig};
use gridrisk::graphbuild::GraphConfig;
use gridrisk::ingest::IngestConfig;
use gridrisk::labeling::LabelConfig;
use gridrisk::riskcluster::{EmbedConfig, HdbscanParams};
use gridrisk::synthgen::ScenarioConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SEED_ENV: &str = "GRIDRISK_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldChoice {
    StratifiedCv,
    TemporalSplit,
}

/// Filesystem locations. Excluded from the config hash so that identical
/// settings run in different directories produce identical artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub work_dir: PathBuf,
    /// Directory holding the four input CSVs; defaults to `<work_dir>/scenario`.
    pub input_dir: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            work_dir: PathBuf::from("gridrisk-run"),
            input_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Copied into every module seed.
    pub seed: u64,
    /// Quiet-period windows (days) to label and evaluate.
    pub windows: Vec<i64>,
    pub fold_strategy: FoldChoice,
    pub folds: usize,
    /// Train, validation and test cutoffs for `temporal-split`, as fractions
    /// of the observed time span.
    pub temporal_cutoffs: [f64; 3],
    pub ablation_window: i64,
    /// Candidate cluster counts for the k-means and spectral baselines.
    pub cluster_ks: Vec<usize>,
    pub edge_ratio_permutations: usize,
    #[serde(skip_serializing)]
    pub paths: Paths,
    pub scenario: ScenarioConfig,
    pub ingest: IngestConfig,
    pub graph: GraphConfig,
    /// `window_days` is replaced by each entry of `windows`.
    pub labels: LabelConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub baselines: BaselineConfig,
    pub embed: EmbedConfig,
    pub hdbscan: HdbscanParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            windows: vec![30, 60, 180],
            fold_strategy: FoldChoice::StratifiedCv,
            folds: 5,
            temporal_cutoffs: [0.6, 0.8, 1.0],
            ablation_window: 30,
            cluster_ks: (2..=8).collect(),
            edge_ratio_permutations: 1000,
            paths: Paths::default(),
            scenario: ScenarioConfig::default(),
            ingest: IngestConfig::default(),
            graph: GraphConfig::default(),
            labels: LabelConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            baselines: BaselineConfig::default(),
            embed: EmbedConfig::default(),
            hdbscan: HdbscanParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies the seed override from the environment, if set.
    pub fn with_env(mut self) -> Result<Self, CliError> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        }
        Ok(self)
    }

    /// Propagates the global seed and checks cross-field constraints.
    pub fn finalize(mut self) -> Result<Self, CliError> {
        self.scenario.seed = self.seed;
        self.train.seed = self.seed;
        self.baselines.forest.seed = self.seed;
        self.embed.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.windows.is_empty() || self.windows.iter().any(|w| *w <= 0) {
            return bad("windows must be a nonempty list of positive day counts".into());
        }
        let mut sorted = self.windows.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.windows.len() {
            return bad("windows must not repeat".into());
        }
        if !self.windows.contains(&self.ablation_window) {
            return bad(format!("ablation_window {} is not one of the selected windows", self.ablation_window));
        }
        if self.fold_strategy == FoldChoice::StratifiedCv && self.folds < 2 {
            return bad("stratified-cv needs at least 2 folds".into());
        }
        let [a, b, c] = self.temporal_cutoffs;
        if !(0.0 < a && a < b && b < c && c <= 1.0) {
            return bad("temporal_cutoffs must be increasing fractions in (0, 1]".into());
        }
        if self.cluster_ks.is_empty() || self.cluster_ks.iter().any(|k| *k < 2) {
            return bad("cluster_ks must list values of at least 2".into());
        }
        self.scenario.validate().map_err(CliError::from)?;
        self.train.validate().map_err(CliError::from)?;
        self.embed.validate().map_err(CliError::from)?;
        Ok(())
    }

    /// Canonical JSON of everything except paths.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn input_dir(&self) -> PathBuf {
        self.paths.input_dir.clone().unwrap_or_else(|| self.paths.work_dir.join("scenario"))
    }
}
