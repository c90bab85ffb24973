//! One function per subcommand. Each reads its upstream artifacts from the
//! work directory and writes its own.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{Duration, NaiveDateTime};
use gridrisk::baselines::{run_classifier, run_clustering, spatial_affinity, BaselineReport, ClassifierKind, ClusteringBaseline};
use gridrisk::gnn::{cross_validate, run_ablation, stratified_splits, temporal_split, AblationReport, CvReport, GraphInputs, LayerMode, Split};
use gridrisk::graphbuild::{build_graph, MultilayerGraph};
use gridrisk::ingest::{ingest, read_csv, read_substations, write_csv, CleanDataset, FeederRecord, LineRecord, RawIncident, TIME_FORMAT};
use gridrisk::labeling::{dataset_end, fold_cutoff_labels, positive_rate, write_labels, FoldLabels, LabelConfig, MaintenanceLabel};
use gridrisk::riskcluster::embed::EmbedEpoch;
use gridrisk::riskcluster::profile::recovery_by_cluster;
use gridrisk::riskcluster::{
    anova_f, boxplot_svg, davies_bouldin, hdbscan, intra_cluster_edge_ratio, profile_and_prioritize, reduce_dim, silhouette, train_risk_embedder, Anova, ClusterReport,
    EdgeRatio, RiskTargets, NOISE,
};
use gridrisk::synthgen::{generate, FEEDERS_FILE, INCIDENTS_FILE, LINES_FILE, SUBSTATIONS_FILE, TRUTH_FILE};
use log::info;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::{self, Artifact};
use crate::config::{FoldChoice, PipelineConfig};
use crate::report;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Ingest,
    BuildGraph,
    Label,
    Train,
    Ablate,
    Baselines,
    Embed,
    Cluster,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Synth,
        Stage::Ingest,
        Stage::BuildGraph,
        Stage::Label,
        Stage::Train,
        Stage::Ablate,
        Stage::Baselines,
        Stage::Embed,
        Stage::Cluster,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::BuildGraph => "build-graph",
            Stage::Label => "label",
            Stage::Train => "train",
            Stage::Ablate => "ablate",
            Stage::Baselines => "baselines",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Report => "report",
        }
    }
}

pub fn run(stage: Stage, cfg: &PipelineConfig) -> Result<(), CliError> {
    info!("{} (config {})", stage.name(), &cfg.hash()[..12]);
    match stage {
        Stage::Synth => synth(cfg),
        Stage::Ingest => ingest_stage(cfg),
        Stage::BuildGraph => build_graph_stage(cfg),
        Stage::Label => label(cfg),
        Stage::Train => train(cfg),
        Stage::Ablate => ablate(cfg),
        Stage::Baselines => baselines(cfg),
        Stage::Embed => embed(cfg),
        Stage::Cluster => cluster(cfg),
        Stage::Report => report::build(cfg),
    }
}

fn out(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.paths.work_dir.join(name)
}

fn upstream<T: serde::de::DeserializeOwned>(cfg: &PipelineConfig, name: &str) -> Result<Artifact<T>, CliError> {
    artifact::read(&out(cfg, name), &cfg.hash())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub incidents: usize,
    pub substations: usize,
    pub lines: usize,
    pub feeders: usize,
    pub planted_positive_rate: f64,
    pub planted_causal_pairs: usize,
    pub files: Vec<FileDigest>,
}

fn digest(path: &Path) -> Result<String, CliError> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn synth(cfg: &PipelineConfig) -> Result<(), CliError> {
    let s = generate(&cfg.scenario)?;
    let dir = out(cfg, "scenario");
    std::fs::create_dir_all(&dir)?;
    s.write(&dir)?;
    let files = [INCIDENTS_FILE, SUBSTATIONS_FILE, LINES_FILE, FEEDERS_FILE, TRUTH_FILE]
        .iter()
        .map(|f| {
            Ok(FileDigest {
                file: f.to_string(),
                sha256: digest(&dir.join(f))?,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let summary = SynthSummary {
        incidents: s.incidents.len(),
        substations: s.substations.len(),
        lines: s.lines.len(),
        feeders: s.feeders.len(),
        planted_positive_rate: s.truth.positive_rate(),
        planted_causal_pairs: s.truth.causal_pairs.len(),
        files,
    };
    info!("wrote {} incidents for {} substations to {}", summary.incidents, summary.substations, dir.display());
    artifact::write(&out(cfg, artifact::SYNTH), &Artifact::new("synth", cfg, summary), true)
}

fn input_file(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::Missing(p))
    }
}

fn ingest_stage(cfg: &PipelineConfig) -> Result<(), CliError> {
    let dir = cfg.input_dir();
    let raw: Vec<RawIncident> = read_csv(&input_file(&dir, INCIDENTS_FILE)?)?;
    let subs = read_substations(&input_file(&dir, SUBSTATIONS_FILE)?)?;
    let lines: Vec<LineRecord> = read_csv(&input_file(&dir, LINES_FILE)?)?;
    let feeders: Vec<FeederRecord> = read_csv(&input_file(&dir, FEEDERS_FILE)?)?;
    let clean = ingest(&raw, &subs, &lines, &feeders, &cfg.ingest)?;
    info!(
        "{} clean incidents, {} rejected, {} lines resolved, {} for review",
        clean.incidents.len(),
        clean.rejects.len(),
        clean.resolved_lines.len(),
        clean.line_review.len()
    );
    write_csv(&out(cfg, "rejects.csv"), &clean.rejects)?;
    artifact::write(&out(cfg, artifact::CLEAN), &Artifact::new("ingest", cfg, clean), false)
}

/// Train, validation and test cutoffs as fractions of the observed span.
pub fn temporal_cutoffs(clean: &CleanDataset, fractions: [f64; 3]) -> Result<[NaiveDateTime; 3], CliError> {
    let first = clean.incidents.iter().map(|i| i.t_off).min().ok_or(gridrisk::Error::Empty("no incidents"))?;
    let end = dataset_end(clean)?;
    let span = (end - first).num_seconds() as f64;
    Ok(fractions.map(|f| first + Duration::seconds((span * f).round() as i64)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub cutoff: NaiveDateTime,
    pub graph: MultilayerGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphBundle {
    pub graph: MultilayerGraph,
    /// Graphs over the data visible at each temporal cutoff (temporal-split only).
    pub snapshots: Vec<Snapshot>,
}

fn build_graph_stage(cfg: &PipelineConfig) -> Result<(), CliError> {
    let clean: Artifact<CleanDataset> = upstream(cfg, artifact::CLEAN)?;
    let graph = build_graph(&clean.data, &cfg.graph)?;
    info!(
        "{} nodes; {} spatial, {} temporal, {} causal edges",
        graph.n_nodes(),
        graph.spatial.len(),
        graph.temporal.len(),
        graph.causal.len()
    );
    let snapshots = match cfg.fold_strategy {
        FoldChoice::StratifiedCv => Vec::new(),
        FoldChoice::TemporalSplit => temporal_cutoffs(&clean.data, cfg.temporal_cutoffs)?
            .into_iter()
            .map(|cutoff| {
                Ok(Snapshot {
                    cutoff,
                    graph: build_graph(&clean.data.truncated(cutoff), &cfg.graph)?,
                })
            })
            .collect::<Result<_, CliError>>()?,
    };
    artifact::write(&out(cfg, artifact::GRAPH), &Artifact::new("build-graph", cfg, GraphBundle { graph, snapshots }), false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLabels {
    pub window_days: i64,
    /// One label set per cutoff: the dataset end, or the three temporal cutoffs.
    pub sets: Vec<FoldLabels>,
}

fn label(cfg: &PipelineConfig) -> Result<(), CliError> {
    let clean: Artifact<CleanDataset> = upstream(cfg, artifact::CLEAN)?;
    let cutoffs: Vec<NaiveDateTime> = match cfg.fold_strategy {
        FoldChoice::StratifiedCv => vec![dataset_end(&clean.data)?],
        FoldChoice::TemporalSplit => temporal_cutoffs(&clean.data, cfg.temporal_cutoffs)?.to_vec(),
    };
    let mut windows = Vec::with_capacity(cfg.windows.len());
    for &w in &cfg.windows {
        let lc = LabelConfig { window_days: w, ..cfg.labels };
        let sets = fold_cutoff_labels(&clean.data, &cutoffs, &lc)?;
        let last = sets.last().expect("at least one cutoff");
        info!("{w}-day window: positive rate {:.3} at {}", positive_rate(&last.labels), last.thresholds.cutoff.format(TIME_FORMAT));
        write_labels(&out(cfg, &format!("labels_{w}d.csv")), &last.labels)?;
        windows.push(WindowLabels { window_days: w, sets });
    }
    artifact::write(&out(cfg, artifact::LABELS), &Artifact::new("label", cfg, windows), false)
}

fn label_vector(graph: &MultilayerGraph, labels: &[MaintenanceLabel]) -> Result<Arc<[u8]>, CliError> {
    let by_id: BTreeMap<&str, u8> = labels.iter().map(|l| (l.substation_id.as_str(), l.y)).collect();
    graph
        .node_ids
        .iter()
        .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| CliError::Config(format!("no label for substation {id}; rerun label"))))
        .collect()
}

/// The evaluation splits for one window under the configured fold strategy.
pub fn splits_for(cfg: &PipelineConfig, bundle: &GraphBundle, labels: &WindowLabels) -> Result<Vec<Split>, CliError> {
    match cfg.fold_strategy {
        FoldChoice::StratifiedCv => {
            let set = labels.sets.last().ok_or_else(|| CliError::Config("empty label set".into()))?;
            let input = Arc::new(GraphInputs::from_graph(&bundle.graph));
            Ok(stratified_splits(input, label_vector(&bundle.graph, &set.labels)?, cfg.folds, cfg.seed)?)
        }
        FoldChoice::TemporalSplit => {
            if bundle.snapshots.len() != 3 || labels.sets.len() != 3 {
                return Err(CliError::Config("temporal-split needs three snapshots and label sets; rerun build-graph and label".into()));
            }
            let snap = |i: usize| -> Result<_, CliError> {
                let g = &bundle.snapshots[i].graph;
                Ok((Arc::new(GraphInputs::from_graph(g)), label_vector(g, &labels.sets[i].labels)?))
            };
            Ok(vec![temporal_split([snap(0)?, snap(1)?, snap(2)?])?])
        }
    }
}

fn window_labels(labels: &[WindowLabels], w: i64) -> Result<&WindowLabels, CliError> {
    labels
        .iter()
        .find(|l| l.window_days == w)
        .ok_or_else(|| CliError::Config(format!("labels for the {w}-day window are missing; rerun label")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRun {
    pub window_days: i64,
    pub positives: usize,
    pub nodes: usize,
    pub report: CvReport,
}

fn positives(labels: &WindowLabels) -> (usize, usize) {
    let set = labels.sets.last().map(|s| s.labels.as_slice()).unwrap_or_default();
    (set.iter().filter(|l| l.y == 1).count(), set.len())
}

fn train(cfg: &PipelineConfig) -> Result<(), CliError> {
    let bundle: Artifact<GraphBundle> = upstream(cfg, artifact::GRAPH)?;
    let labels: Artifact<Vec<WindowLabels>> = upstream(cfg, artifact::LABELS)?;
    let mut runs = Vec::new();
    for &w in &cfg.windows {
        let wl = window_labels(&labels.data, w)?;
        let splits = splits_for(cfg, &bundle.data, wl)?;
        let (report, _) = cross_validate(&splits, &cfg.encoder, &cfg.train, LayerMode::Full)?;
        info!("{w}-day window: F1 {:.4} ± {:.4}", report.summary.f1.mean, report.summary.f1.sd);
        let (positives, nodes) = positives(wl);
        runs.push(WindowRun {
            window_days: w,
            positives,
            nodes,
            report,
        });
    }
    artifact::write(&out(cfg, artifact::TRAIN), &Artifact::new("train", cfg, runs), false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub window_days: i64,
    pub report: AblationReport,
}

fn ablate(cfg: &PipelineConfig) -> Result<(), CliError> {
    let bundle: Artifact<GraphBundle> = upstream(cfg, artifact::GRAPH)?;
    let labels: Artifact<Vec<WindowLabels>> = upstream(cfg, artifact::LABELS)?;
    let splits = splits_for(cfg, &bundle.data, window_labels(&labels.data, cfg.ablation_window)?)?;
    let report = run_ablation(&splits, &cfg.encoder, &cfg.train)?;
    for r in &report.runs {
        info!("{}: F1 {:.4} ± {:.4}", r.mode.name(), r.summary.f1.mean, r.summary.f1.sd);
    }
    let run = AblationRun {
        window_days: cfg.ablation_window,
        report,
    };
    artifact::write(&out(cfg, artifact::ABLATION), &Artifact::new("ablate", cfg, run), false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBaselines {
    pub window_days: i64,
    pub reports: Vec<BaselineReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRuns {
    pub classifiers: Vec<WindowBaselines>,
    pub clustering: Vec<ClusteringBaseline>,
}

fn baselines(cfg: &PipelineConfig) -> Result<(), CliError> {
    let bundle: Artifact<GraphBundle> = upstream(cfg, artifact::GRAPH)?;
    let labels: Artifact<Vec<WindowLabels>> = upstream(cfg, artifact::LABELS)?;
    let mut classifiers = Vec::new();
    for &w in &cfg.windows {
        let splits = splits_for(cfg, &bundle.data, window_labels(&labels.data, w)?)?;
        let reports = ClassifierKind::ALL
            .iter()
            .map(|&k| run_classifier(&splits, k, &cfg.baselines))
            .collect::<gridrisk::Result<Vec<_>>>()?;
        for r in &reports {
            info!("{w}-day window, {}: F1 {:.4} ± {:.4}", r.model.name(), r.summary.f1.mean, r.summary.f1.sd);
        }
        classifiers.push(WindowBaselines { window_days: w, reports });
    }
    let g = &bundle.data.graph;
    let input = GraphInputs::from_graph(g);
    let ks: Vec<usize> = cfg.cluster_ks.iter().copied().filter(|&k| k < g.n_nodes()).collect();
    let clustering = run_clustering(&input, &spatial_affinity(g), &ks, cfg.seed)?;
    let runs = BaselineRuns { classifiers, clustering };
    artifact::write(&out(cfg, artifact::BASELINES), &Artifact::new("baselines", cfg, runs), false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embeddings {
    pub node_ids: Vec<String>,
    /// Unit-norm rows.
    pub embeddings: Array2<f64>,
    pub risk_targets: Array2<f64>,
    pub predicted_risk: Array2<f64>,
    pub best_epoch: usize,
    pub history: Vec<EmbedEpoch>,
}

fn embed(cfg: &PipelineConfig) -> Result<(), CliError> {
    let bundle: Artifact<GraphBundle> = upstream(cfg, artifact::GRAPH)?;
    let g = &bundle.data.graph;
    let input = GraphInputs::from_graph(g);
    let targets = RiskTargets::from_graph(g);
    let res = train_risk_embedder(&input, &targets, &cfg.encoder, &cfg.embed, LayerMode::Full)?;
    info!("embedding trained; best epoch {}", res.best_epoch);
    let data = Embeddings {
        node_ids: g.node_ids.clone(),
        embeddings: res.embeddings,
        risk_targets: targets.values,
        predicted_risk: res.predicted_risk,
        best_epoch: res.best_epoch,
        history: res.history,
    };
    artifact::write(&out(cfg, artifact::EMBEDDINGS), &Artifact::new("embed", cfg, data), false)
}

pub const RISK_FACTORS: [&str; 4] = ["vegetation", "lightning", "weather", "equipment"];
pub const LAYERS: [&str; 3] = ["spatial", "temporal", "causal"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorAnova {
    pub factor: String,
    pub anova: Anova,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEdgeRatio {
    pub layer: String,
    pub ratio: EdgeRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub node_ids: Vec<String>,
    pub labels: Vec<i64>,
    pub points: Array2<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub n_clusters: usize,
    pub noise_points: usize,
    /// Over non-noise points; absent with fewer than two clusters.
    pub silhouette: Option<f64>,
    pub davies_bouldin: Option<f64>,
    pub anova: Vec<FactorAnova>,
    pub edge_ratios: Vec<LayerEdgeRatio>,
    pub profile: ClusterReport,
}

/// Risk values of each factor grouped by cluster (noise excluded).
pub fn factor_groups(labels: &[i64], risk: &Array2<f64>, factor: usize) -> Vec<Vec<f64>> {
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE {
            groups.entry(l).or_default().push(risk[[i, factor]]);
        }
    }
    groups.into_values().collect()
}

/// Reduction, HDBSCAN and all validation statistics for a set of embeddings.
pub fn cluster_embeddings(cfg: &PipelineConfig, emb: &Embeddings, graph: &MultilayerGraph, clean: &CleanDataset) -> Result<Clustering, CliError> {
    let red = reduce_dim(&emb.embeddings, 3)?;
    let h = hdbscan(&red.points, &cfg.hdbscan)?;
    let keep: Vec<usize> = (0..h.labels.len()).filter(|&i| h.labels[i] != NOISE).collect();
    let (silhouette_mean, db) = if h.n_clusters >= 2 {
        let pts = red.points.select(Axis(0), &keep);
        let lab: Vec<i64> = keep.iter().map(|&i| h.labels[i]).collect();
        (Some(silhouette(&pts, &lab)?.mean), Some(davies_bouldin(&pts, &lab)?))
    } else {
        log::warn!("{} cluster(s) found; silhouette and Davies-Bouldin need at least two", h.n_clusters);
        (None, None)
    };
    let mut anova = Vec::new();
    for (j, name) in RISK_FACTORS.iter().enumerate() {
        let groups = factor_groups(&h.labels, &emb.risk_targets, j);
        if groups.len() >= 2 && groups.iter().all(|g| g.len() >= 2) {
            anova.push(FactorAnova {
                factor: name.to_string(),
                anova: anova_f(&groups)?,
            });
        }
    }
    let layers: [Vec<(usize, usize)>; 3] = [
        graph.spatial.iter().map(|e| (e.u, e.v)).collect(),
        graph.temporal.iter().map(|e| (e.u, e.v)).collect(),
        graph.causal.iter().map(|e| (e.u, e.v)).collect(),
    ];
    let edge_ratios = LAYERS
        .iter()
        .zip(&layers)
        .map(|(name, edges)| LayerEdgeRatio {
            layer: name.to_string(),
            ratio: intra_cluster_edge_ratio(edges, &h.labels, cfg.edge_ratio_permutations, cfg.seed),
        })
        .collect();
    let years = (graph.metadata.observation_days / 365.25).max(1.0 / 365.25);
    let profile = profile_and_prioritize(&h.labels, &emb.node_ids, &clean.incidents, &emb.risk_targets, years);
    Ok(Clustering {
        node_ids: emb.node_ids.clone(),
        noise_points: h.labels.len() - keep.len(),
        n_clusters: h.n_clusters,
        labels: h.labels,
        points: red.points,
        explained_variance_ratio: red.explained_variance_ratio,
        silhouette: silhouette_mean,
        davies_bouldin: db,
        anova,
        edge_ratios,
        profile,
    })
}

#[derive(Debug, Serialize)]
struct AssignmentRow<'a> {
    substation_id: &'a str,
    lat: f64,
    lon: f64,
    cluster: i64,
    risk_vegetation: f64,
    risk_lightning: f64,
    risk_weather: f64,
    risk_equipment: f64,
}

#[derive(Debug, Serialize)]
struct ProfileRow {
    rank: usize,
    cluster: i64,
    size: usize,
    incidents: usize,
    incidents_per_year: f64,
    mean_recovery_minutes: f64,
    mean_cmi: f64,
    risk_vegetation: f64,
    risk_lightning: f64,
    risk_weather: f64,
    risk_equipment: f64,
    priority: f64,
}

fn cluster(cfg: &PipelineConfig) -> Result<(), CliError> {
    let emb: Artifact<Embeddings> = upstream(cfg, artifact::EMBEDDINGS)?;
    let bundle: Artifact<GraphBundle> = upstream(cfg, artifact::GRAPH)?;
    let clean: Artifact<CleanDataset> = upstream(cfg, artifact::CLEAN)?;
    let c = cluster_embeddings(cfg, &emb.data, &bundle.data.graph, &clean.data)?;
    info!("{} clusters, {} noise points", c.n_clusters, c.noise_points);

    let coords: BTreeMap<&str, (f64, f64)> = clean.data.substations.iter().map(|s| (s.id.as_str(), (s.lat, s.lon))).collect();
    let risk = &emb.data.risk_targets;
    let rows: Vec<AssignmentRow> = c
        .node_ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let (lat, lon) = coords.get(id.as_str()).copied().unwrap_or((f64::NAN, f64::NAN));
            AssignmentRow {
                substation_id: id,
                lat,
                lon,
                cluster: c.labels[i],
                risk_vegetation: risk[[i, 0]],
                risk_lightning: risk[[i, 1]],
                risk_weather: risk[[i, 2]],
                risk_equipment: risk[[i, 3]],
            }
        })
        .collect();
    write_csv(&out(cfg, "cluster_assignments.csv"), &rows)?;
    let by_id: BTreeMap<i64, &gridrisk::riskcluster::ClusterProfile> = c.profile.profiles.iter().map(|p| (p.cluster, p)).collect();
    let profile_rows: Vec<ProfileRow> = c
        .profile
        .ranking
        .iter()
        .enumerate()
        .map(|(rank, id)| {
            let p = by_id[id];
            ProfileRow {
                rank: rank + 1,
                cluster: p.cluster,
                size: p.size,
                incidents: p.incidents,
                incidents_per_year: p.incidents_per_year,
                mean_recovery_minutes: p.mean_recovery_minutes,
                mean_cmi: p.mean_cmi,
                risk_vegetation: p.mean_risk[0],
                risk_lightning: p.mean_risk[1],
                risk_weather: p.mean_risk[2],
                risk_equipment: p.mean_risk[3],
                priority: p.priority,
            }
        })
        .collect();
    write_csv(&out(cfg, "cluster_profiles.csv"), &profile_rows)?;
    let recovery = recovery_by_cluster(&c.labels, &c.node_ids, &clean.data.incidents);
    if !recovery.is_empty() {
        std::fs::write(out(cfg, "recovery_boxplot.svg"), boxplot_svg(&recovery, "Recovery time by cluster", "minutes")?)?;
    }
    artifact::write(&out(cfg, artifact::CLUSTERS), &Artifact::new("cluster", cfg, c), false)
}
