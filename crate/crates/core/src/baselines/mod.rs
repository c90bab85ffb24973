//! Classical baselines evaluated on the same splits and metric code as the GNN.

pub mod clustering;
pub mod ensemble;
pub mod tree;

pub use clustering::{kmeans, kmeans_select, normalized_laplacian, spectral_fit, spectral_select, KMeansFit, Selection};
pub use ensemble::{gbt_fit, gbt_fit_traced, random_forest_fit, EnsembleMode, ForestConfig, GbtConfig, TreeEnsemble};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::gnn::{evaluate_classifier, ClassifierMetrics, GraphInputs, MetricSummary, Split, View};
use crate::graphbuild::MultilayerGraph;
use crate::riskcluster::{davies_bouldin, silhouette};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    RandomForest,
    GradientBoosting,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 2] = [ClassifierKind::RandomForest, ClassifierKind::GradientBoosting];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::RandomForest => "random-forest",
            ClassifierKind::GradientBoosting => "gradient-boosting",
        }
    }
}

/// Same shape as the GNN cross-validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub model: ClassifierKind,
    pub folds: Vec<ClassifierMetrics>,
    pub summary: MetricSummary,
    /// Folds whose training data held a single class.
    pub constant_folds: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub forest: ForestConfig,
    pub gbt: GbtConfig,
}

fn rows(view: &View, x: &Array2<f64>) -> Vec<Vec<f64>> {
    view.nodes.iter().map(|&i| x.row(i).to_vec()).collect()
}

/// Fits on the training view (features standardized with training statistics)
/// and scores the test view.
pub fn evaluate_split(split: &Split, kind: ClassifierKind, cfg: &BaselineConfig) -> Result<(ClassifierMetrics, bool)> {
    let scalers = split.train.input.fit_scalers(&split.train.nodes);
    let x_train = rows(&split.train, &split.train.input.standardized(&scalers));
    let x_test = rows(&split.test, &split.test.input.standardized(&scalers));
    let y_train = split.train.targets();
    let model = match kind {
        ClassifierKind::RandomForest => random_forest_fit(&x_train, &y_train, &cfg.forest)?,
        ClassifierKind::GradientBoosting => gbt_fit(&x_train, &y_train, &cfg.gbt)?,
    };
    let pred: Vec<u8> = x_test.iter().map(|r| model.predict(r)).collect();
    Ok((evaluate_classifier(&pred, &split.test.targets())?, model.constant.is_some()))
}

pub fn run_classifier(splits: &[Split], kind: ClassifierKind, cfg: &BaselineConfig) -> Result<BaselineReport> {
    let mut folds = Vec::with_capacity(splits.len());
    let mut constant_folds = Vec::new();
    for (i, s) in splits.iter().enumerate() {
        let (m, constant) = evaluate_split(s, kind, cfg)?;
        if constant {
            log::warn!("{} fold {i}: single-class training data, constant predictor", kind.name());
            constant_folds.push(i);
        }
        folds.push(m);
    }
    Ok(BaselineReport {
        model: kind,
        summary: MetricSummary::of(&folds),
        folds,
        constant_folds,
    })
}

/// Dense symmetric affinity from spatial edge weights.
pub fn spatial_affinity(g: &MultilayerGraph) -> Array2<f64> {
    let n = g.n_nodes();
    let mut a = Array2::zeros((n, n));
    for e in &g.spatial {
        if e.u != e.v {
            a[[e.u, e.v]] += e.weight;
            a[[e.v, e.u]] += e.weight;
        }
    }
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringBaseline {
    pub method: String,
    pub k: usize,
    pub labels: Vec<i64>,
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub candidates: Vec<(usize, f64)>,
}

fn scored(method: &str, sel: Selection, points: &Array2<f64>) -> Result<ClusteringBaseline> {
    Ok(ClusteringBaseline {
        method: method.to_string(),
        k: sel.k,
        silhouette: silhouette(points, &sel.labels)?.mean,
        davies_bouldin: davies_bouldin(points, &sel.labels)?,
        labels: sel.labels,
        candidates: sel.scores,
    })
}

/// K-means and spectral clustering for `k ∈ ks`, both scored on standardized node features.
pub fn run_clustering(input: &GraphInputs, affinity: &Array2<f64>, ks: &[usize], seed: u64) -> Result<Vec<ClusteringBaseline>> {
    let all: Vec<usize> = (0..input.n).collect();
    let points = input.standardized(&input.fit_scalers(&all));
    let km = kmeans_select(&points, ks, seed)?;
    let sp = spectral_select(affinity, &points, ks, seed)?;
    Ok(vec![scored("k-means", km, &points)?, scored("spectral", sp, &points)?])
}
