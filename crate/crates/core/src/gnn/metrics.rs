use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Binary classification scores. Undefined ratios are reported as 0 and flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn evaluate_classifier(pred: &[u8], target: &[u8]) -> Result<ClassifierMetrics> {
    if pred.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    if pred.len() != target.len() {
        return Err(Error::invalid(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &t) in pred.iter().zip(target) {
        match (p != 0, t != 0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let (precision, precision_undefined) = ratio(tp, tp + fp);
    let (recall, recall_undefined) = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassifierMetrics {
        accuracy: (tp + tn) as f64 / pred.len() as f64,
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
        tn,
        precision_undefined,
        recall_undefined,
    })
}

/// Mean and sample standard deviation of a metric across folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        MeanSd {
            mean: crate::stats::mean(values),
            sd: crate::stats::std_sample(values),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: MeanSd,
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub f1: MeanSd,
}

impl MetricSummary {
    pub fn of(folds: &[ClassifierMetrics]) -> Self {
        let pick = |f: fn(&ClassifierMetrics) -> f64| MeanSd::of(&folds.iter().map(f).collect::<Vec<_>>());
        MetricSummary {
            accuracy: pick(|m| m.accuracy),
            precision: pick(|m| m.precision),
            recall: pick(|m| m.recall),
            f1: pick(|m| m.f1),
        }
    }
}
