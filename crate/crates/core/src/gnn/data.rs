//! Model-ready tensors derived from a [`MultilayerGraph`].

use std::sync::Arc;

use ndarray::Array2;

use crate::graphbuild::MultilayerGraph;
use crate::stats::Standardizer;

/// One edge layer in message-passing form: messages flow `src → dst`.
#[derive(Debug, Clone)]
pub struct LayerEdges {
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    /// Standardized edge attributes, one row per edge.
    pub attr: Array2<f64>,
    /// Scalar weight per edge (`E × 1`).
    pub weight: Array2<f64>,
}

impl LayerEdges {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct GraphInputs {
    pub n: usize,
    /// Node features before model-side standardization.
    pub x: Array2<f64>,
    /// Columns that are standardized with training statistics (one-hot columns are not).
    pub continuous: Vec<bool>,
    pub spatial: LayerEdges,
    pub temporal: LayerEdges,
    pub causal: LayerEdges,
}

fn standardize_columns(raw: &Array2<f64>) -> Array2<f64> {
    let mut out = raw.clone();
    for mut col in out.columns_mut() {
        let s = Standardizer::fit(&col.to_vec());
        col.mapv_inplace(|v| s.apply(v));
    }
    out
}

/// Builds a layer from `(src, dst, attrs, weight)` rows; appends one self-loop per
/// node when `self_loops` is set, marked by a trailing indicator column.
pub fn layer_from_rows(n: usize, rows: Vec<(usize, usize, Vec<f64>, f64)>, attr_dim: usize, self_loops: bool) -> LayerEdges {
    let width = attr_dim + usize::from(self_loops);
    let total = rows.len() + if self_loops { n } else { 0 };
    let mut src = Vec::with_capacity(total);
    let mut dst = Vec::with_capacity(total);
    let mut attr = Array2::zeros((total, width));
    let mut weight = Array2::zeros((total, 1));
    for (k, (s, d, a, w)) in rows.into_iter().enumerate() {
        src.push(s);
        dst.push(d);
        for (j, v) in a.into_iter().enumerate() {
            attr[[k, j]] = v;
        }
        weight[[k, 0]] = w;
    }
    if self_loops {
        let base = src.len();
        for i in 0..n {
            src.push(i);
            dst.push(i);
            attr[[base + i, attr_dim]] = 1.0;
            weight[[base + i, 0]] = 1.0;
        }
    }
    LayerEdges {
        src: src.into(),
        dst: dst.into(),
        attr: standardize_columns(&attr),
        weight,
    }
}

impl GraphInputs {
    pub fn from_graph(g: &MultilayerGraph) -> Self {
        let n = g.n_nodes();
        let cols = g.features.n_cols();
        let x = Array2::from_shape_fn((n, cols), |(i, j)| g.features.raw[i][j]);
        let continuous = g.features.columns.iter().map(|c| !c.starts_with("plant_class=")).collect();

        let mut spatial_rows = Vec::with_capacity(2 * g.spatial.len());
        for e in &g.spatial {
            let a = vec![
                e.has_line as f64,
                e.is_nearby as f64,
                e.line_voltage_kv.unwrap_or(0.0),
                e.line_length_km,
                e.distance_km,
                e.shared_cities as f64,
                e.shared_feeders as f64,
                e.weight,
            ];
            spatial_rows.push((e.u, e.v, a.clone(), e.weight));
            spatial_rows.push((e.v, e.u, a, e.weight));
        }
        let temporal_rows = g
            .temporal
            .iter()
            .map(|e| (e.u, e.v, vec![e.weight, e.cooccurrence_count as f64], e.weight))
            .collect();
        let zmax = g.causal.iter().map(|e| e.z_score).fold(0.0, f64::max);
        let mut causal_rows = Vec::with_capacity(2 * g.causal.len());
        for e in &g.causal {
            let w = if zmax > 0.0 { e.z_score.max(0.0) / zmax } else { 1.0 };
            causal_rows.push((e.u, e.v, vec![w], w));
            causal_rows.push((e.v, e.u, vec![w], w));
        }
        GraphInputs {
            n,
            x,
            continuous,
            spatial: layer_from_rows(n, spatial_rows, 8, true),
            temporal: layer_from_rows(n, temporal_rows, 2, true),
            causal: layer_from_rows(n, causal_rows, 1, false),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.x.ncols()
    }

    /// Column scalers fitted on `rows` (identity for one-hot columns).
    pub fn fit_scalers(&self, rows: &[usize]) -> Vec<Standardizer> {
        (0..self.x.ncols())
            .map(|j| {
                if self.continuous[j] && !rows.is_empty() {
                    Standardizer::fit(&rows.iter().map(|&i| self.x[[i, j]]).collect::<Vec<_>>())
                } else {
                    Standardizer { mean: 0.0, sd: 1.0 }
                }
            })
            .collect()
    }

    pub fn standardized(&self, scalers: &[Standardizer]) -> Array2<f64> {
        let mut out = self.x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let s = scalers[j];
            col.mapv_inplace(|v| s.apply(v));
        }
        out
    }
}
