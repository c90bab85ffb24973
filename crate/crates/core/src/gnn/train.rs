//! Full-graph training with AdamW, clipping, plateau decay and early stopping.

use std::sync::Arc;

use log::debug;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::GraphInputs;
use super::folds::{Split, View};
use super::layers::Ctx;
use super::loss::focal_loss;
use super::metrics::{evaluate_classifier, ClassifierMetrics};
use super::model::{EncoderConfig, LayerMode, PdmModel};
use super::params::{clip_grad_norm, collect_grads, AdamW};
use crate::diffkernel::Tape;
use crate::stats::Standardizer;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before the learning rate is cut.
    pub patience: usize,
    pub plateau_factor: f64,
    pub plateau_threshold: f64,
    pub min_lr: f64,
    /// Epochs without a new best validation loss before training stops.
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            weight_decay: 1e-5,
            clip_norm: 1.0,
            focal_alpha: 0.75,
            focal_gamma: 2.0,
            max_epochs: 100,
            patience: 10,
            plateau_factor: 0.5,
            plateau_threshold: 1e-4,
            min_lr: 1e-6,
            early_stop_patience: 30,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr, self.clip_norm, self.focal_alpha, self.plateau_factor];
        if positive.iter().any(|v| !(*v > 0.0)) || self.weight_decay < 0.0 || self.focal_gamma < 0.0 {
            return Err(Error::config("training hyperparameters must be positive"));
        }
        if self.max_epochs == 0 || self.plateau_factor >= 1.0 {
            return Err(Error::config("max_epochs must be positive and plateau_factor below 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
}

/// Trained parameters plus everything needed to resume or reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub model: PdmModel,
    pub optimizer: AdamW,
    pub scalers: Vec<Standardizer>,
    pub epoch: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub history: Vec<EpochRecord>,
}

/// Multiplies the learning rate by `factor` after `patience` epochs without a
/// relative improvement of `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReduceOnPlateau {
    pub factor: f64,
    pub patience: usize,
    pub threshold: f64,
    pub min_lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl ReduceOnPlateau {
    pub fn new(factor: f64, patience: usize, threshold: f64, min_lr: f64) -> Self {
        ReduceOnPlateau {
            factor,
            patience,
            threshold,
            min_lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Returns the learning rate to use next.
    pub fn step(&mut self, metric: f64, lr: f64) -> f64 {
        if metric < self.best * (1.0 - self.threshold) {
            self.best = metric;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.patience {
            self.bad_epochs = 0;
            return (lr * self.factor).max(self.min_lr);
        }
        lr
    }
}

fn numeric(stage: &str, epoch: usize, last: Option<&EpochRecord>, e: Error) -> Error {
    match e {
        Error::NonFinite(op) => Error::Numeric(format!(
            "non-finite value in {op} during {stage} at epoch {epoch}; last finite step: {}",
            last.map(|r| format!("epoch {} train_loss {} val_loss {} lr {} grad_norm {}", r.epoch, r.train_loss, r.val_loss, r.lr, r.grad_norm))
                .unwrap_or_else(|| "none".into())
        )),
        other => other,
    }
}

fn arc_targets(view: &View) -> (Arc<[usize]>, Arc<[usize]>) {
    let rows: Arc<[usize]> = view.nodes.iter().copied().collect();
    let t: Arc<[usize]> = view.nodes.iter().map(|&i| usize::from(view.labels[i])).collect();
    (rows, t)
}

/// Evaluation-mode forward pass returning log-probabilities for every node.
pub fn predict_log_probs(model: &PdmModel, scalers: &[Standardizer], input: &GraphInputs) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let vars = model.store.bind(&mut tape, false)?;
    let mut ctx = Ctx { vars: &vars, dropout: None };
    let x = tape.constant(input.standardized(scalers))?;
    let out = model.forward(&mut tape, &mut ctx, x, input)?;
    Ok(tape.value(out.log_probs).clone())
}

fn view_loss(model: &PdmModel, scalers: &[Standardizer], view: &View, cfg: &TrainConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = model.store.bind(&mut tape, false)?;
    let mut ctx = Ctx { vars: &vars, dropout: None };
    let x = tape.constant(view.input.standardized(scalers))?;
    let out = model.forward(&mut tape, &mut ctx, x, &view.input)?;
    let (rows, t) = arc_targets(view);
    let loss = focal_loss(&mut tape, out.log_probs, &rows, &t, cfg.focal_alpha, cfg.focal_gamma)?;
    tape.scalar(loss)
}

pub fn train(split: &Split, enc: &EncoderConfig, cfg: &TrainConfig, mode: LayerMode) -> Result<ModelState> {
    cfg.validate()?;
    if split.train.nodes.is_empty() {
        return Err(Error::Empty("training nodes"));
    }
    let train = &split.train;
    let scalers = train.input.fit_scalers(&train.nodes);
    let x_train = train.input.standardized(&scalers);
    let (rows, targets) = arc_targets(train);
    let mut model = PdmModel::new(enc, mode, &train.input, cfg.seed)?;
    let mut opt = AdamW::new(&model.store, cfg.lr, cfg.weight_decay);
    let mut plateau = ReduceOnPlateau::new(cfg.plateau_factor, cfg.patience, cfg.plateau_threshold, cfg.min_lr);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d40f);
    let mut history: Vec<EpochRecord> = Vec::with_capacity(cfg.max_epochs);
    let mut best = (f64::INFINITY, 0usize, model.clone());

    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let vars = model.store.bind(&mut tape, true)?;
        let mut ctx = Ctx {
            vars: &vars,
            dropout: Some((enc.dropout_rate, &mut dropout_rng)),
        };
        let step = (|| -> Result<(f64, Vec<Array2<f64>>)> {
            let x = tape.constant(x_train.clone())?;
            let out = model.forward(&mut tape, &mut ctx, x, &train.input)?;
            let loss = focal_loss(&mut tape, out.log_probs, &rows, &targets, cfg.focal_alpha, cfg.focal_gamma)?;
            let value = tape.scalar(loss)?;
            let grads = tape.backward(loss)?;
            Ok((value, collect_grads(&model.store, &vars, &grads)))
        })();
        let (train_loss, mut grads) = step.map_err(|e| numeric("training", epoch, history.last(), e))?;
        if !train_loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(numeric("training", epoch, history.last(), Error::NonFinite("gradient".into())));
        }
        let grad_norm = clip_grad_norm(&mut grads, cfg.clip_norm);
        opt.update(&mut model.store, &grads);
        if !model.store.all_finite() {
            return Err(numeric("update", epoch, history.last(), Error::NonFinite("parameters".into())));
        }

        let val_loss = if split.val.nodes.is_empty() {
            train_loss
        } else {
            view_loss(&model, &scalers, &split.val, cfg).map_err(|e| numeric("validation", epoch, history.last(), e))?
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: opt.lr,
            grad_norm,
        });
        debug!("epoch {epoch} train {train_loss:.5} val {val_loss:.5} lr {:.2e}", opt.lr);
        if val_loss < best.0 {
            best = (val_loss, epoch, model.clone());
        }
        opt.lr = plateau.step(val_loss, opt.lr);
        if epoch - best.1 >= cfg.early_stop_patience {
            break;
        }
    }

    let epoch = history.len();
    Ok(ModelState {
        model: best.2,
        optimizer: opt,
        scalers,
        epoch,
        best_epoch: best.1,
        best_val_loss: best.0,
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: ClassifierMetrics,
    pub nodes: Vec<usize>,
    pub predictions: Vec<u8>,
    pub positive_prob: Vec<f64>,
}

pub fn evaluate(state: &ModelState, view: &View) -> Result<Evaluation> {
    let lp = predict_log_probs(&state.model, &state.scalers, &view.input)?;
    let predictions: Vec<u8> = view.nodes.iter().map(|&i| u8::from(lp[[i, 1]] > lp[[i, 0]])).collect();
    let positive_prob = view.nodes.iter().map(|&i| lp[[i, 1]].exp()).collect();
    let metrics = evaluate_classifier(&predictions, &view.targets())?;
    Ok(Evaluation {
        metrics,
        nodes: view.nodes.clone(),
        predictions,
        positive_prob,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_halves_after_patience() {
        let mut p = ReduceOnPlateau::new(0.5, 2, 1e-4, 1e-6);
        let mut lr = 1.0;
        lr = p.step(1.0, lr);
        for _ in 0..2 {
            lr = p.step(1.0, lr);
            assert_eq!(lr, 1.0);
        }
        lr = p.step(1.0, lr);
        assert_eq!(lr, 0.5);
    }

    #[test]
    fn plateau_respects_floor() {
        let mut p = ReduceOnPlateau::new(0.1, 0, 0.0, 0.05);
        let mut lr = 0.1;
        p.step(1.0, lr);
        lr = p.step(2.0, lr);
        assert_eq!(lr, 0.05);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
