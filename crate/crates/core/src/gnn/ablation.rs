//! Cross-validated training and the single-layer ablation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::Split;
use super::metrics::{ClassifierMetrics, MetricSummary};
use super::model::{EncoderConfig, LayerMode};
use super::train::{evaluate, train, EpochRecord, ModelState};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub metrics: ClassifierMetrics,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochRecord>,
    /// Mean modality weights `(α_s, α_t, α_c)` over test nodes in full mode.
    pub modality_weights: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub mode: LayerMode,
    pub folds: Vec<FoldResult>,
    pub summary: MetricSummary,
}

fn mean_modality_weights(state: &ModelState, split: &Split) -> Result<Option<[f64; 3]>> {
    if state.model.backbone.mode != LayerMode::Full || split.test.nodes.is_empty() {
        return Ok(None);
    }
    let mut tape = crate::diffkernel::Tape::new();
    let vars = state.model.store.bind(&mut tape, false)?;
    let mut ctx = super::layers::Ctx { vars: &vars, dropout: None };
    let input = &split.test.input;
    let x = tape.constant(input.standardized(&state.scalers))?;
    let out = state.model.forward(&mut tape, &mut ctx, x, input)?;
    let Some(alpha) = out.alpha else { return Ok(None) };
    let a = tape.value(alpha);
    let mut m = [0.0; 3];
    for &i in &split.test.nodes {
        for (j, v) in m.iter_mut().enumerate() {
            *v += a[[i, j]];
        }
    }
    Ok(Some(m.map(|v| v / split.test.nodes.len() as f64)))
}

/// Trains one model per split (in parallel) and evaluates on each test view.
pub fn cross_validate(splits: &[Split], enc: &EncoderConfig, cfg: &super::train::TrainConfig, mode: LayerMode) -> Result<(CvReport, Vec<ModelState>)> {
    let results: Vec<(FoldResult, ModelState)> = splits
        .par_iter()
        .enumerate()
        .map(|(fold, split)| {
            let state = train(split, enc, cfg, mode)?;
            let eval = evaluate(&state, &split.test)?;
            let modality_weights = mean_modality_weights(&state, split)?;
            Ok((
                FoldResult {
                    fold,
                    metrics: eval.metrics,
                    best_epoch: state.best_epoch,
                    best_val_loss: state.best_val_loss,
                    history: state.history.clone(),
                    modality_weights,
                },
                state,
            ))
        })
        .collect::<Result<_>>()?;
    let (folds, states): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let summary = MetricSummary::of(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>());
    Ok((CvReport { mode, folds, summary }, states))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<CvReport>,
}

impl AblationReport {
    pub fn get(&self, mode: LayerMode) -> Option<&CvReport> {
        self.runs.iter().find(|r| r.mode == mode)
    }

    pub fn f1(&self, mode: LayerMode) -> Option<f64> {
        self.get(mode).map(|r| r.summary.f1.mean)
    }
}

/// The full model and each single-layer variant on identical folds and seeds.
pub fn run_ablation(splits: &[Split], enc: &EncoderConfig, cfg: &super::train::TrainConfig) -> Result<AblationReport> {
    let runs = LayerMode::ALL
        .iter()
        .map(|&mode| cross_validate(splits, enc, cfg, mode).map(|(r, _)| r))
        .collect::<Result<_>>()?;
    Ok(AblationReport { runs })
}
