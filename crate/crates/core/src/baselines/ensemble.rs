//! Bagged random forest and gradient-boosted trees for binary labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, Gini, GrowParams, Newton, Tree};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleMode {
    BaggedForest,
    Boosted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub mode: EnsembleMode,
    pub trees: Vec<Tree>,
    /// Class weights `[w0, w1]` (forest) or `[1, scale_pos]` (boosting).
    pub class_weights: [f64; 2],
    pub base_score: f64,
    pub learning_rate: f64,
    /// Set when training saw a single class; every prediction is that class.
    pub constant: Option<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub class_balanced: bool,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            class_balanced: true,
            max_depth: None,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    /// `None` uses negatives / positives.
    pub scale_pos_weight: Option<f64>,
}

impl Default for GbtConfig {
    fn default() -> Self {
        GbtConfig {
            rounds: 200,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            scale_pos_weight: None,
        }
    }
}

fn check(x: &[Vec<f64>], y: &[u8]) -> Result<Option<u8>> {
    if x.is_empty() {
        return Err(Error::Empty("training rows"));
    }
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} rows for {} labels", x.len(), y.len())));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("feature rows must be finite and of equal width"));
    }
    let pos = y.iter().filter(|&&v| v != 0).count();
    Ok(match pos {
        0 => Some(0),
        p if p == y.len() => Some(1),
        _ => None,
    })
}

fn constant_ensemble(mode: EnsembleMode, class: u8) -> TreeEnsemble {
    TreeEnsemble {
        mode,
        trees: vec![Tree {
            nodes: vec![super::tree::Node::Leaf { value: f64::from(class) }],
        }],
        class_weights: [1.0, 1.0],
        base_score: 0.0,
        learning_rate: 0.0,
        constant: Some(class),
    }
}

pub fn random_forest_fit(x: &[Vec<f64>], y: &[u8], cfg: &ForestConfig) -> Result<TreeEnsemble> {
    if cfg.n_trees == 0 {
        return Err(Error::config("n_trees must be positive"));
    }
    if let Some(c) = check(x, y)? {
        return Ok(constant_ensemble(EnsembleMode::BaggedForest, c));
    }
    let n = y.len();
    let pos = y.iter().filter(|&&v| v != 0).count() as f64;
    let neg = n as f64 - pos;
    let class_weights = if cfg.class_balanced {
        [n as f64 / (2.0 * neg), n as f64 / (2.0 * pos)]
    } else {
        [1.0, 1.0]
    };
    let p = x[0].len();
    let mtry = ((p as f64).sqrt().floor() as usize).max(1);
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let mut counts = vec![0.0; n];
            for _ in 0..n {
                counts[rng.random_range(0..n)] += 1.0;
            }
            let stats: Vec<[f64; 2]> = (0..n)
                .map(|i| {
                    let w = counts[i] * class_weights[usize::from(y[i] != 0)];
                    if y[i] != 0 {
                        [0.0, w]
                    } else {
                        [w, 0.0]
                    }
                })
                .collect();
            let rows: Vec<usize> = (0..n).filter(|&i| counts[i] > 0.0).collect();
            grow(
                x,
                &stats,
                rows,
                &Gini,
                GrowParams {
                    max_depth: cfg.max_depth,
                    max_features: Some(mtry),
                    rng: Some(&mut rng),
                },
            )
        })
        .collect();
    Ok(TreeEnsemble {
        mode: EnsembleMode::BaggedForest,
        trees,
        class_weights,
        base_score: 0.0,
        learning_rate: 0.0,
        constant: None,
    })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Weighted mean logistic loss of raw scores `f`.
pub fn weighted_log_loss(f: &[f64], y: &[u8], w: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut wsum = 0.0;
    for ((&fi, &yi), &wi) in f.iter().zip(y).zip(w) {
        // log(1 + e^{−f}) for positives, log(1 + e^{f}) for negatives, computed stably.
        let z = if yi != 0 { -fi } else { fi };
        total += wi * (z.max(0.0) + (-z.abs()).exp().ln_1p());
        wsum += wi;
    }
    total / wsum
}

/// Stagewise Newton boosting on the logistic loss. Also returns the training
/// loss before the first round and after each round.
pub fn gbt_fit_traced(x: &[Vec<f64>], y: &[u8], cfg: &GbtConfig) -> Result<(TreeEnsemble, Vec<f64>)> {
    if cfg.rounds == 0 || cfg.max_depth == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::config("rounds, max_depth and learning_rate must be positive"));
    }
    if let Some(c) = check(x, y)? {
        return Ok((constant_ensemble(EnsembleMode::Boosted, c), Vec::new()));
    }
    let n = y.len();
    let pos = y.iter().filter(|&&v| v != 0).count() as f64;
    let neg = n as f64 - pos;
    let scale = cfg.scale_pos_weight.unwrap_or(neg / pos);
    let w: Vec<f64> = y.iter().map(|&v| if v != 0 { scale } else { 1.0 }).collect();
    let base_score = (scale * pos / neg).ln();
    let mut f = vec![base_score; n];
    let crit = Newton {
        lambda: cfg.lambda,
        min_child_hessian: 1e-3,
    };
    let mut trees = Vec::with_capacity(cfg.rounds);
    let mut trace = vec![weighted_log_loss(&f, y, &w)];
    for _ in 0..cfg.rounds {
        let stats: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let p = sigmoid(f[i]);
                [w[i] * (p - f64::from(y[i])), w[i] * p * (1.0 - p)]
            })
            .collect();
        let tree = grow(
            x,
            &stats,
            (0..n).collect(),
            &crit,
            GrowParams {
                max_depth: Some(cfg.max_depth),
                max_features: None,
                rng: None,
            },
        );
        for (fi, row) in f.iter_mut().zip(x) {
            *fi += cfg.learning_rate * tree.predict(row);
        }
        trees.push(tree);
        trace.push(weighted_log_loss(&f, y, &w));
    }
    Ok((
        TreeEnsemble {
            mode: EnsembleMode::Boosted,
            trees,
            class_weights: [1.0, scale],
            base_score,
            learning_rate: cfg.learning_rate,
            constant: None,
        },
        trace,
    ))
}

pub fn gbt_fit(x: &[Vec<f64>], y: &[u8], cfg: &GbtConfig) -> Result<TreeEnsemble> {
    gbt_fit_traced(x, y, cfg).map(|(e, _)| e)
}

impl TreeEnsemble {
    /// Probability-like score for class 1: vote share (forest) or sigmoid of the boosted sum.
    pub fn score(&self, row: &[f64]) -> f64 {
        if let Some(c) = self.constant {
            return f64::from(c);
        }
        match self.mode {
            EnsembleMode::BaggedForest => {
                let votes = self.trees.iter().filter(|t| t.predict(row) > 0.5).count();
                votes as f64 / self.trees.len() as f64
            }
            EnsembleMode::Boosted => sigmoid(self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()),
        }
    }

    pub fn predict(&self, row: &[f64]) -> u8 {
        u8::from(self.score(row) > 0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::tree::Node;

    fn xor(n_per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for q in 0..4 {
            let (a, b) = (q & 1, q >> 1);
            for _ in 0..n_per {
                x.push(vec![a as f64 + rng.random_range(-0.3..0.3), b as f64 + rng.random_range(-0.3..0.3)]);
                y.push((a ^ b) as u8);
            }
        }
        (x, y)
    }

    #[test]
    fn single_class_gives_constant_leaves() {
        let x = vec![vec![0.0], vec![1.0]];
        let f = random_forest_fit(&x, &[1, 1], &ForestConfig::default()).unwrap();
        assert_eq!(f.constant, Some(1));
        assert!(f.trees.iter().all(|t| t.nodes.len() == 1));
        assert_eq!(f.predict(&[5.0]), 1);
    }

    #[test]
    fn forest_fits_xor() {
        let (x, y) = xor(25, 1);
        let f = random_forest_fit(&x, &y, &ForestConfig::default()).unwrap();
        assert_eq!(f.trees.len(), 100);
        let acc = x.iter().zip(&y).filter(|(r, t)| f.predict(r) == **t).count() as f64 / y.len() as f64;
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn forest_is_deterministic() {
        let (x, y) = xor(10, 2);
        let cfg = ForestConfig { n_trees: 10, ..ForestConfig::default() };
        assert_eq!(random_forest_fit(&x, &y, &cfg).unwrap(), random_forest_fit(&x, &y, &cfg).unwrap());
    }

    #[test]
    fn boosting_first_stump_sits_on_the_boundary() {
        let xs = [0.1, 0.4, 0.9, 1.3, 2.0, 3.1, 3.6, 4.4];
        let x: Vec<Vec<f64>> = xs.iter().map(|v| vec![*v]).collect();
        let y = [0, 0, 0, 0, 1, 1, 1, 1];
        let cfg = GbtConfig { rounds: 1, ..GbtConfig::default() };
        let e = gbt_fit(&x, &y, &cfg).unwrap();
        // Exhaustive oracle: the only threshold with a pure split lies in (1.3, 2.0).
        match &e.trees[0].nodes[0] {
            Node::Split { threshold, .. } => assert!(*threshold > 1.3 && *threshold < 2.0, "{threshold}"),
            n => panic!("{n:?}"),
        }
    }

    #[test]
    fn boosting_depth_and_monotone_loss() {
        let (x, y) = xor(15, 3);
        let y: Vec<u8> = y.iter().enumerate().map(|(i, v)| if i % 7 == 0 { 1 } else { *v }).collect();
        let (e, trace) = gbt_fit_traced(&x, &y, &GbtConfig { rounds: 60, ..GbtConfig::default() }).unwrap();
        assert!(e.trees.iter().all(|t| t.depth() <= 3));
        for w in trace.windows(2) {
            assert!(w[1] < w[0], "loss rose from {} to {}", w[0], w[1]);
        }
    }
}
