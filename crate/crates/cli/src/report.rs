//! Aggregates stage artifacts into `report.json` and a Markdown rendering.

use std::fmt::Write as _;

use gridrisk::baselines::ClusteringBaseline;
use gridrisk::gnn::{LayerMode, MetricSummary};
use gridrisk::riskcluster::ClusterProfile;
use serde::{Deserialize, Serialize};

use crate::artifact::{self, Artifact};
use crate::config::{FoldChoice, PipelineConfig};
use crate::stages::{AblationRun, BaselineRuns, Clustering, FactorAnova, LayerEdgeRatio, WindowRun};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub window_days: i64,
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTable {
    pub model: String,
    pub rows: Vec<WindowRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub model: String,
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    pub method: String,
    pub clusters: usize,
    pub silhouette: Option<f64>,
    pub davies_bouldin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSection {
    pub quality: Vec<ClusterQuality>,
    pub noise_points: usize,
    pub profiles: Vec<ClusterProfile>,
    pub ranking: Vec<i64>,
    pub anova: Vec<FactorAnova>,
    pub edge_ratios: Vec<LayerEdgeRatio>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub fold_strategy: FoldChoice,
    /// The GNN first, then each baseline classifier.
    pub models: Vec<ModelTable>,
    pub ablation_window_days: Option<i64>,
    pub ablation: Vec<AblationRow>,
    pub clustering: Option<ClusteringSection>,
}

fn gnn_table(runs: &[WindowRun]) -> ModelTable {
    ModelTable {
        model: "multilayer-gnn".into(),
        rows: runs
            .iter()
            .map(|r| WindowRow {
                window_days: r.window_days,
                summary: r.report.summary,
            })
            .collect(),
    }
}

fn baseline_tables(b: &BaselineRuns) -> Vec<ModelTable> {
    let mut tables: Vec<ModelTable> = Vec::new();
    for w in &b.classifiers {
        for r in &w.reports {
            let row = WindowRow {
                window_days: w.window_days,
                summary: r.summary,
            };
            match tables.iter_mut().find(|t| t.model == r.model.name()) {
                Some(t) => t.rows.push(row),
                None => tables.push(ModelTable {
                    model: r.model.name().into(),
                    rows: vec![row],
                }),
            }
        }
    }
    tables
}

fn clustering_section(c: &Clustering, baselines: Option<&[ClusteringBaseline]>) -> ClusteringSection {
    let mut quality = vec![ClusterQuality {
        method: "hdbscan".into(),
        clusters: c.n_clusters,
        silhouette: c.silhouette,
        davies_bouldin: c.davies_bouldin,
    }];
    for b in baselines.unwrap_or_default() {
        quality.push(ClusterQuality {
            method: b.method.clone(),
            clusters: b.k,
            silhouette: Some(b.silhouette),
            davies_bouldin: Some(b.davies_bouldin),
        });
    }
    ClusteringSection {
        quality,
        noise_points: c.noise_points,
        profiles: c.profile.profiles.clone(),
        ranking: c.profile.ranking.clone(),
        anova: c.anova.clone(),
        edge_ratios: c.edge_ratios.clone(),
    }
}

pub fn assemble(
    cfg: &PipelineConfig,
    train: &[WindowRun],
    ablation: Option<&AblationRun>,
    baselines: Option<&BaselineRuns>,
    clusters: Option<&Clustering>,
) -> Report {
    let mut models = vec![gnn_table(train)];
    if let Some(b) = baselines {
        models.extend(baseline_tables(b));
    }
    let ablation_rows = ablation
        .map(|a| {
            LayerMode::ALL
                .iter()
                .filter_map(|m| a.report.get(*m))
                .map(|r| AblationRow {
                    model: r.mode.name().into(),
                    summary: r.summary,
                })
                .collect()
        })
        .unwrap_or_default();
    Report {
        fold_strategy: cfg.fold_strategy,
        models,
        ablation_window_days: ablation.map(|a| a.window_days),
        ablation: ablation_rows,
        clustering: clusters.map(|c| clustering_section(c, baselines.map(|b| b.clustering.as_slice()))),
    }
}

fn pm(m: gridrisk::gnn::MeanSd) -> String {
    format!("{:.4} ± {:.4}", m.mean, m.sd)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}

fn metric_header(out: &mut String, first: &str) {
    let _ = writeln!(out, "| {first} | Accuracy | Precision | Recall | F1 |");
    let _ = writeln!(out, "|---|---|---|---|---|");
}

fn metric_row(out: &mut String, label: &str, s: &MetricSummary) {
    let _ = writeln!(out, "| {label} | {} | {} | {} | {} |", pm(s.accuracy), pm(s.precision), pm(s.recall), pm(s.f1));
}

pub fn render_markdown(r: &Report, hash: &str) -> String {
    let mut out = String::new();
    let strategy = match r.fold_strategy {
        FoldChoice::StratifiedCv => "stratified cross-validation",
        FoldChoice::TemporalSplit => "temporal split",
    };
    let _ = writeln!(out, "# gridrisk report\n\nConfig hash: `{hash}`\n\nEvaluation: {strategy}. Metrics are mean ± sd over folds.\n");
    let _ = writeln!(out, "## Predictive maintenance\n");
    for t in &r.models {
        let _ = writeln!(out, "### {}\n", t.model);
        metric_header(&mut out, "Window");
        for row in &t.rows {
            metric_row(&mut out, &format!("{} days", row.window_days), &row.summary);
        }
        out.push('\n');
    }
    if let Some(w) = r.ablation_window_days {
        let _ = writeln!(out, "## Single-layer ablation ({w}-day window)\n");
        metric_header(&mut out, "Model");
        for row in &r.ablation {
            metric_row(&mut out, &row.model, &row.summary);
        }
        out.push('\n');
    }
    if let Some(c) = &r.clustering {
        let _ = writeln!(out, "## Resilience clustering\n");
        let _ = writeln!(out, "| Method | Clusters | Silhouette | Davies-Bouldin |\n|---|---|---|---|");
        for q in &c.quality {
            let _ = writeln!(out, "| {} | {} | {} | {} |", q.method, q.clusters, opt(q.silhouette), opt(q.davies_bouldin));
        }
        let _ = writeln!(out, "\nNoise points: {}\n", c.noise_points);
        let _ = writeln!(out, "### Cluster profiles (by descending priority)\n");
        let _ = writeln!(
            out,
            "| Cluster | Size | Incidents/yr | Recovery (min) | Mean CMI | Vegetation | Lightning | Weather | Equipment | Priority |\n|---|---|---|---|---|---|---|---|---|---|"
        );
        for id in &c.ranking {
            if let Some(p) = c.profiles.iter().find(|p| p.cluster == *id) {
                let _ = writeln!(
                    out,
                    "| {} | {} | {:.1} | {:.1} | {:.1} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
                    p.cluster, p.size, p.incidents_per_year, p.mean_recovery_minutes, p.mean_cmi, p.mean_risk[0], p.mean_risk[1], p.mean_risk[2], p.mean_risk[3], p.priority
                );
            }
        }
        if !c.anova.is_empty() {
            let _ = writeln!(out, "\n### Risk separation (one-way ANOVA)\n\n| Factor | F | p |\n|---|---|---|");
            for a in &c.anova {
                let f = if a.anova.f_infinite { "inf".to_string() } else { format!("{:.2}", a.anova.f) };
                let _ = writeln!(out, "| {} | {f} | {} |", a.factor, a.anova.p_display());
            }
        }
        let _ = writeln!(out, "\n### Intra-cluster edge ratios\n\n| Layer | Edges | Intra | Ratio | Null mean | Null sd | z |\n|---|---|---|---|---|---|---|");
        for e in &c.edge_ratios {
            let x = &e.ratio;
            let _ = writeln!(out, "| {} | {} | {} | {:.3} | {:.3} | {:.3} | {:.2} |", e.layer, x.edges, x.intra, x.ratio, x.null_mean, x.null_sd, x.z);
        }
    }
    out
}

pub fn build(cfg: &PipelineConfig) -> Result<(), CliError> {
    let hash = cfg.hash();
    let dir = &cfg.paths.work_dir;
    let train: Artifact<Vec<WindowRun>> = artifact::read(&dir.join(artifact::TRAIN), &hash)?;
    let ablation: Option<Artifact<AblationRun>> = artifact::read_optional(&dir.join(artifact::ABLATION), &hash)?;
    let baselines: Option<Artifact<BaselineRuns>> = artifact::read_optional(&dir.join(artifact::BASELINES), &hash)?;
    let clusters: Option<Artifact<Clustering>> = artifact::read_optional(&dir.join(artifact::CLUSTERS), &hash)?;
    let report = assemble(
        cfg,
        &train.data,
        ablation.as_ref().map(|a| &a.data),
        baselines.as_ref().map(|a| &a.data),
        clusters.as_ref().map(|a| &a.data),
    );
    std::fs::write(dir.join(artifact::REPORT_MD), render_markdown(&report, &hash))?;
    artifact::write(&dir.join(artifact::REPORT_JSON), &Artifact::new("report", cfg, report), true)
}
