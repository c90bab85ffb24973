//! Risk-aware node embeddings: the shared backbone trained with a risk
//! regression head, a neighbour-similarity term and a soft clustering head.

use std::sync::Arc;

use log::debug;
use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffkernel::{Tape, Var};
use crate::gnn::layers::{Ctx, Linear};
use crate::gnn::params::{clip_grad_norm, collect_grads, AdamW, ParamStore};
use crate::gnn::{Backbone, EncoderConfig, GraphInputs, LayerMode};
use crate::graphbuild::MultilayerGraph;
use crate::stats::Standardizer;
use crate::{Error, Result};

/// Per-node category frequencies `[vegetation, lightning, weather, equipment]`,
/// each column divided by its maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskTargets {
    pub values: Array2<f64>,
}

impl RiskTargets {
    pub fn from_counts(counts: &[[f64; 4]]) -> Self {
        let mut values = Array2::from_shape_fn((counts.len(), 4), |(i, j)| counts[i][j]);
        for mut col in values.columns_mut() {
            let max = col.iter().copied().fold(0.0, f64::max);
            if max > 0.0 {
                col.mapv_inplace(|v| v / max);
            }
        }
        RiskTargets { values }
    }

    pub fn from_graph(g: &MultilayerGraph) -> Self {
        Self::from_counts(&g.features.risk_counts())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub w_risk: f64,
    pub w_topo: f64,
    pub w_cluster: f64,
    /// Width of the soft-assignment head.
    pub soft_clusters: usize,
    pub epochs: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    pub cycle_epochs: usize,
    pub early_stop_patience: usize,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            w_risk: 1.0,
            w_topo: 0.5,
            w_cluster: 0.1,
            soft_clusters: 8,
            epochs: 200,
            lr_min: 1e-4,
            lr_max: 1e-3,
            cycle_epochs: 20,
            early_stop_patience: 40,
            weight_decay: 1e-5,
            clip_norm: 1.0,
            seed: 42,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.cycle_epochs == 0 || self.soft_clusters < 2 {
            return Err(Error::config("epochs, cycle_epochs must be positive and soft_clusters ≥ 2"));
        }
        if !(self.lr_min > 0.0 && self.lr_max >= self.lr_min) {
            return Err(Error::config("need 0 < lr_min ≤ lr_max"));
        }
        if [self.w_risk, self.w_topo, self.w_cluster].iter().any(|w| *w < 0.0) {
            return Err(Error::config("loss weights must be nonnegative"));
        }
        Ok(())
    }

    /// Triangular cycle: `lr_min` at the start of each cycle, `lr_max` halfway.
    pub fn cyclic_lr(&self, epoch: usize) -> f64 {
        let x = (epoch % self.cycle_epochs) as f64 / self.cycle_epochs as f64;
        self.lr_min + (self.lr_max - self.lr_min) * (1.0 - (2.0 * x - 1.0).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub store: ParamStore,
    pub backbone: Backbone,
    pub risk_head: Linear,
    pub cluster_head: Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbedEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub mse: f64,
    pub topo: f64,
    pub cluster: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    /// Unit-norm rows.
    pub embeddings: Array2<f64>,
    /// Risk-head predictions for every node.
    pub predicted_risk: Array2<f64>,
    pub model: RiskModel,
    pub scalers: Vec<Standardizer>,
    pub history: Vec<EmbedEpoch>,
    pub best_epoch: usize,
}

/// Undirected node pairs joined in any active layer (self-loops dropped).
pub fn connected_pairs(input: &GraphInputs, mode: LayerMode) -> Vec<(usize, usize)> {
    let layers = [&input.spatial, &input.temporal, &input.causal];
    let mut pairs = std::collections::BTreeSet::new();
    for (l, edges) in layers.iter().enumerate() {
        if !mode.uses(l) {
            continue;
        }
        for (&s, &d) in edges.src.iter().zip(edges.dst.iter()) {
            if s != d {
                pairs.insert((s.min(d), s.max(d)));
            }
        }
    }
    pairs.into_iter().collect()
}

struct Losses {
    total: Var,
    mse: f64,
    topo: f64,
    cluster: f64,
}

impl RiskModel {
    pub fn new(enc: &EncoderConfig, mode: LayerMode, input: &GraphInputs, soft_clusters: usize, seed: u64) -> Result<Self> {
        let mut store = ParamStore::default();
        let backbone = Backbone::new(&mut store, enc, mode, input, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(30);
        let risk_head = Linear::new(&mut store, "risk_head", enc.hidden_dim, 4, &mut rng);
        let cluster_head = Linear::new(&mut store, "cluster_head", enc.hidden_dim, soft_clusters, &mut rng);
        Ok(RiskModel {
            store,
            backbone,
            risk_head,
            cluster_head,
        })
    }

    /// Returns `(fused embedding, risk prediction, cluster log-assignments)`.
    pub fn forward(&self, tape: &mut Tape, ctx: &mut Ctx, x: Var, input: &GraphInputs) -> Result<(Var, Var, Var)> {
        let b = self.backbone.forward(tape, ctx, x, input)?;
        let risk = self.risk_head.forward(tape, ctx, b.fused)?;
        let logits = self.cluster_head.forward(tape, ctx, b.fused)?;
        let log_q = tape.log_softmax(logits)?;
        Ok((b.fused, risk, log_q))
    }
}

/// Sharpened self-training target `p_ik ∝ q_ik² / Σ_i q_ik`.
pub fn sharpened_targets(q: &Array2<f64>) -> Array2<f64> {
    let f = q.sum_axis(Axis(0));
    let mut p = Array2::from_shape_fn(q.raw_dim(), |(i, k)| q[[i, k]] * q[[i, k]] / f[k].max(1e-12));
    for mut row in p.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

#[allow(clippy::too_many_arguments)]
fn losses(
    tape: &mut Tape,
    cfg: &EmbedConfig,
    fused: Var,
    risk: Var,
    log_q: Var,
    targets: Var,
    pair_u: &Arc<[usize]>,
    pair_v: &Arc<[usize]>,
) -> Result<Losses> {
    let diff = tape.sub(risk, targets)?;
    let sq = tape.mul(diff, diff)?;
    let mse = tape.mean(sq)?;
    let mut total = tape.scale(mse, cfg.w_risk)?;

    let topo_value = if pair_u.is_empty() {
        0.0
    } else {
        let zn = tape.row_l2_normalize(fused, 1e-12)?;
        let a = tape.gather_rows(zn, pair_u)?;
        let b = tape.gather_rows(zn, pair_v)?;
        let ab = tape.mul(a, b)?;
        let cos = tape.sum_axis(ab, 1)?;
        let mean_cos = tape.mean(cos)?;
        let topo = tape.scale(mean_cos, -1.0)?;
        let topo = tape.add_scalar(topo, 1.0)?;
        let value = tape.scalar(topo)?;
        let weighted = tape.scale(topo, cfg.w_topo)?;
        total = tape.add(total, weighted)?;
        value
    };

    // Self-training KL(P ‖ Q) with P held fixed, plus a balance penalty
    // `log K − H(mean q)` that keeps the soft clusters in use.
    let q = tape.value(log_q).mapv(f64::exp);
    let p = sharpened_targets(&q);
    let p_log_p: f64 = p.iter().filter(|v| **v > 0.0).map(|v| v * v.ln()).sum::<f64>() / p.nrows() as f64;
    let p_var = tape.constant(p)?;
    let cross = tape.mul(p_var, log_q)?;
    let cross = tape.sum(cross)?;
    let kl = tape.scale(cross, -1.0 / q.nrows() as f64)?;
    let kl = tape.add_scalar(kl, p_log_p)?;
    let q_var = tape.exp(log_q)?;
    let q_bar = tape.mean_axis(q_var, 0)?;
    let log_q_bar = tape.log(q_bar)?;
    let neg_h = tape.mul(q_bar, log_q_bar)?;
    let neg_h = tape.sum(neg_h)?;
    let balance = tape.add_scalar(neg_h, (q.ncols() as f64).ln())?;
    let cluster = tape.add(kl, balance)?;
    let cluster_value = tape.scalar(cluster)?;
    let weighted = tape.scale(cluster, cfg.w_cluster)?;
    total = tape.add(total, weighted)?;

    Ok(Losses {
        total,
        mse: tape.scalar(mse)?,
        topo: topo_value,
        cluster: cluster_value,
    })
}

pub fn train_risk_embedder(input: &GraphInputs, targets: &RiskTargets, enc: &EncoderConfig, cfg: &EmbedConfig, mode: LayerMode) -> Result<EmbeddingResult> {
    cfg.validate()?;
    if targets.values.nrows() != input.n {
        return Err(Error::invalid(format!("{} risk targets for {} nodes", targets.values.nrows(), input.n)));
    }
    let all: Vec<usize> = (0..input.n).collect();
    let scalers = input.fit_scalers(&all);
    let x = input.standardized(&scalers);
    let pairs = connected_pairs(input, mode);
    let pair_u: Arc<[usize]> = pairs.iter().map(|p| p.0).collect();
    let pair_v: Arc<[usize]> = pairs.iter().map(|p| p.1).collect();

    let mut model = RiskModel::new(enc, mode, input, cfg.soft_clusters, cfg.seed)?;
    let mut opt = AdamW::new(&model.store, cfg.lr_min, cfg.weight_decay);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xe4be_dd00);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, model.store.clone());

    for epoch in 0..cfg.epochs {
        opt.lr = cfg.cyclic_lr(epoch);
        let mut tape = Tape::new();
        let vars = model.store.bind(&mut tape, true)?;
        let mut ctx = Ctx {
            vars: &vars,
            dropout: Some((enc.dropout_rate, &mut dropout_rng)),
        };
        let step = (|| -> Result<(Losses, f64, Vec<Array2<f64>>)> {
            let xv = tape.constant(x.clone())?;
            let t = tape.constant(targets.values.clone())?;
            let (fused, risk, log_q) = model.forward(&mut tape, &mut ctx, xv, input)?;
            let l = losses(&mut tape, cfg, fused, risk, log_q, t, &pair_u, &pair_v)?;
            let value = tape.scalar(l.total)?;
            let grads = tape.backward(l.total)?;
            Ok((l, value, collect_grads(&model.store, &vars, &grads)))
        })();
        let (l, loss, mut grads) = step.map_err(|e| match e {
            Error::NonFinite(op) => Error::Numeric(format!("non-finite {op} in embedding epoch {epoch}")),
            other => other,
        })?;
        let improved = loss < best.0 * (1.0 - 1e-4);
        if improved {
            best = (loss, epoch, model.store.clone());
        }
        clip_grad_norm(&mut grads, cfg.clip_norm);
        opt.update(&mut model.store, &grads);
        if !model.store.all_finite() {
            return Err(Error::Numeric(format!("non-finite parameters after embedding epoch {epoch}")));
        }
        debug!("embed epoch {epoch} loss {loss:.5} mse {:.5} topo {:.4} cluster {:.4}", l.mse, l.topo, l.cluster);
        history.push(EmbedEpoch {
            epoch,
            loss,
            mse: l.mse,
            topo: l.topo,
            cluster: l.cluster,
            lr: opt.lr,
        });
        if !improved && epoch - best.1 >= cfg.early_stop_patience {
            break;
        }
    }
    model.store = best.2;

    let mut tape = Tape::new();
    let vars = model.store.bind(&mut tape, false)?;
    let mut ctx = Ctx { vars: &vars, dropout: None };
    let xv = tape.constant(x)?;
    let (fused, risk, _) = model.forward(&mut tape, &mut ctx, xv, input)?;
    let embeddings = unit_rows(tape.value(fused));
    Ok(EmbeddingResult {
        embeddings,
        predicted_risk: tape.value(risk).clone(),
        model,
        scalers,
        history,
        best_epoch: best.1,
    })
}

/// Rows scaled to unit L2 norm (zero rows become `e_0`).
pub fn unit_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        } else if !row.is_empty() {
            row[0] = 1.0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn targets_are_max_scaled() {
        let t = RiskTargets::from_counts(&[[2.0, 0.0, 1.0, 4.0], [4.0, 0.0, 3.0, 1.0]]);
        assert_eq!(t.values, array![[0.5, 0.0, 1.0 / 3.0, 1.0], [1.0, 0.0, 1.0, 0.25]]);
    }

    #[test]
    fn triangular_schedule() {
        let cfg = EmbedConfig::default();
        assert_abs_diff_eq!(cfg.cyclic_lr(0), 1e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(cfg.cyclic_lr(10), 1e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(cfg.cyclic_lr(5), 5.5e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(cfg.cyclic_lr(20), 1e-4, epsilon = 1e-15);
    }

    #[test]
    fn sharpened_rows_are_distributions_and_sharper() {
        let q = array![[0.6, 0.4], [0.3, 0.7], [0.5, 0.5]];
        let p = sharpened_targets(&q);
        for row in p.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-12);
        }
        assert!(p[[0, 0]] > 0.6 && p[[1, 1]] > 0.7);
    }

    #[test]
    fn unit_rows_have_unit_norm() {
        let u = unit_rows(&array![[3.0, 4.0], [0.0, 0.0], [-1e-8, 2e-8]]);
        for row in u.rows() {
            assert_abs_diff_eq!(row.dot(&row), 1.0, epsilon = 1e-12);
        }
    }
}
