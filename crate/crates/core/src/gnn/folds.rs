//! Fold construction: stratified k-fold over substations, or a temporal split.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::GraphInputs;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldStrategy {
    Stratified,
    Temporal,
}

/// Nodes evaluated against one graph snapshot and its labels.
#[derive(Debug, Clone)]
pub struct View {
    pub input: Arc<GraphInputs>,
    pub labels: Arc<[u8]>,
    pub nodes: Vec<usize>,
}

impl View {
    pub fn targets(&self) -> Vec<u8> {
        self.nodes.iter().map(|&i| self.labels[i]).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: View,
    pub val: View,
    pub test: View,
}

fn by_class(labels: &[u8], nodes: &[usize], rng: &mut ChaCha8Rng) -> [Vec<usize>; 2] {
    let mut classes = [Vec::new(), Vec::new()];
    for &i in nodes {
        classes[usize::from(labels[i] != 0)].push(i);
    }
    for c in classes.iter_mut() {
        c.shuffle(rng);
    }
    classes
}

/// Partitions `0..labels.len()` into `k` folds with per-class round-robin dealing,
/// so each fold's positive count is within one of its share.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || labels.len() < k {
        return Err(Error::config(format!("cannot form {k} folds from {} nodes", labels.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..labels.len()).collect();
    let [neg, pos] = by_class(labels, &all, &mut rng);
    let mut folds = vec![Vec::new(); k];
    for (slot, i) in pos.into_iter().chain(neg).enumerate() {
        folds[slot % k].push(i);
    }
    for f in folds.iter_mut() {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Stratified division of `nodes` into `(train, val)` with about `val_frac` in val.
pub fn stratified_holdout(labels: &[u8], nodes: &[usize], val_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in by_class(labels, nodes, &mut rng) {
        let n_val = ((class.len() as f64) * val_frac).round() as usize;
        let n_val = n_val.min(class.len().saturating_sub(1));
        val.extend_from_slice(&class[..n_val]);
        train.extend_from_slice(&class[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// `k` stratified cross-validation splits on a single graph snapshot. Each
/// non-test remainder is divided 80/20 into train and validation.
pub fn stratified_splits(input: Arc<GraphInputs>, labels: Arc<[u8]>, k: usize, seed: u64) -> Result<Vec<Split>> {
    if labels.len() != input.n {
        return Err(Error::invalid(format!("{} labels for {} nodes", labels.len(), input.n)));
    }
    let folds = stratified_folds(&labels, k, seed)?;
    let mut out = Vec::with_capacity(k);
    for (f, test) in folds.iter().enumerate() {
        let rest: Vec<usize> = folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
        let (train, val) = stratified_holdout(&labels, &rest, 0.2, seed.wrapping_add(1 + f as u64));
        let view = |nodes: Vec<usize>| View {
            input: input.clone(),
            labels: labels.clone(),
            nodes,
        };
        out.push(Split {
            train: view(train),
            val: view(val),
            test: view(test.clone()),
        });
    }
    Ok(out)
}

/// One split whose train, validation and test views come from successive
/// snapshots, each labelled at its own cutoff. Every node is used in every view.
pub fn temporal_split(snapshots: [(Arc<GraphInputs>, Arc<[u8]>); 3]) -> Result<Split> {
    let n = snapshots[0].0.n;
    for (g, l) in &snapshots {
        if g.n != n || l.len() != n {
            return Err(Error::invalid("temporal snapshots must share the node set"));
        }
    }
    let [train, val, test] = snapshots.map(|(input, labels)| View {
        input,
        labels,
        nodes: (0..n).collect(),
    });
    Ok(Split { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn folds_partition_and_balance(labels in prop::collection::vec(0u8..2, 6..80), seed in 0u64..1000) {
            let folds = stratified_folds(&labels, 3, seed).unwrap();
            let mut seen: Vec<usize> = folds.iter().flatten().copied().collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..labels.len()).collect::<Vec<_>>());
            let rate = labels.iter().filter(|&&y| y == 1).count() as f64 / labels.len() as f64;
            for f in &folds {
                let pos = f.iter().filter(|&&i| labels[i] == 1).count() as f64;
                prop_assert!((pos - rate * f.len() as f64).abs() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn holdout_keeps_both_classes_in_train() {
        let labels = [1, 0, 0, 0, 0, 1, 0, 0, 0, 0];
        let nodes: Vec<usize> = (0..10).collect();
        let (train, val) = stratified_holdout(&labels, &nodes, 0.2, 4);
        assert_eq!(train.len() + val.len(), 10);
        assert!(train.iter().any(|&i| labels[i] == 1));
        assert_eq!(val.iter().filter(|&&i| labels[i] == 1).count(), 0);
        assert_eq!(val.len(), 2);
    }

    #[test]
    fn too_few_nodes_rejected() {
        assert!(stratified_folds(&[1, 0], 3, 0).is_err());
    }
}
