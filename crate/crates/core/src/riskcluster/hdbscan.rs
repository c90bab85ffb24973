//! Density-based hierarchical clustering: mutual-reachability MST, condensed
//! tree, excess-of-mass selection and an epsilon merge threshold.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const NOISE: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    /// Neighbourhood size for core distances, counting the point itself.
    pub min_samples: usize,
    pub epsilon: f64,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams {
            min_cluster_size: 15,
            min_samples: 5,
            epsilon: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdbscanResult {
    /// Cluster per point, `NOISE` for outliers. Clusters are numbered from 0.
    pub labels: Vec<i64>,
    pub n_clusters: usize,
    /// Excess-of-mass stability of each output cluster.
    pub stability: Vec<f64>,
}

/// One condensed-tree edge: `child` (point or cluster) leaves `parent` at `lambda = 1/distance`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct CondensedEdge {
    parent: usize,
    child: usize,
    lambda: f64,
    size: usize,
}

fn euclidean(points: &Array2<f64>, i: usize, j: usize) -> f64 {
    points.row(i).iter().zip(points.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub fn core_distances(points: &Array2<f64>, min_samples: usize) -> Vec<f64> {
    let n = points.nrows();
    let k = min_samples.clamp(1, n) - 1;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n).map(|j| euclidean(points, i, j)).collect();
            d.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
            d[k]
        })
        .collect()
}

/// Prim's algorithm on the dense mutual-reachability graph. Returns edges
/// sorted by weight, ties broken by endpoint indices.
fn mutual_reachability_mst(points: &Array2<f64>, core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = points.nrows();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let c = current;
        let updates: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .filter(|&j| !in_tree[j])
            .map(|j| (j, euclidean(points, c, j).max(core[c]).max(core[j])))
            .collect();
        for (j, d) in updates {
            if d < best[j] {
                best[j] = d;
                from[j] = c;
            }
        }
        let mut next = usize::MAX;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < best[next]) {
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push((from[next].min(next), from[next].max(next), best[next]));
        current = next;
    }
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    edges
}

/// Single-linkage merges `(left, right, distance, size)`; merge `k` creates node `n + k`.
fn single_linkage(n: usize, mst: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64, usize)> {
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut out = Vec::with_capacity(mst.len());
    for (k, &(a, b, d)) in mst.iter().enumerate() {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let node = n + k;
        parent[ra] = node;
        parent[rb] = node;
        size[node] = size[ra] + size[rb];
        out.push((ra, rb, d, size[node]));
    }
    out
}

fn leaves_under(node: usize, n: usize, linkage: &[(usize, usize, f64, usize)], out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            let (l, r, _, _) = linkage[x - n];
            stack.push(r);
            stack.push(l);
        }
    }
}

/// Condensed tree; the root cluster is labelled `n`, new clusters `n + 1, …`.
fn condense(n: usize, linkage: &[(usize, usize, f64, usize)], min_cluster_size: usize) -> Vec<CondensedEdge> {
    let size_of = |x: usize| if x < n { 1 } else { linkage[x - n].3 };
    let root = n + linkage.len() - 1;
    let mut relabel = BTreeMap::new();
    relabel.insert(root, n);
    let mut next_label = n + 1;
    let mut out = Vec::new();
    let mut queue = std::collections::VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        if node < n {
            continue;
        }
        let (left, right, dist, _) = linkage[node - n];
        let lambda = 1.0 / dist.max(1e-12);
        let me = relabel[&node];
        let (lc, rc) = (size_of(left), size_of(right));
        let fall_out = |child: usize, out: &mut Vec<CondensedEdge>| {
            let mut pts = Vec::new();
            leaves_under(child, n, linkage, &mut pts);
            for p in pts {
                out.push(CondensedEdge {
                    parent: me,
                    child: p,
                    lambda,
                    size: 1,
                });
            }
        };
        if lc >= min_cluster_size && rc >= min_cluster_size {
            for (child, count) in [(left, lc), (right, rc)] {
                relabel.insert(child, next_label);
                out.push(CondensedEdge {
                    parent: me,
                    child: next_label,
                    lambda,
                    size: count,
                });
                next_label += 1;
                queue.push_back(child);
            }
        } else if lc < min_cluster_size && rc < min_cluster_size {
            fall_out(left, &mut out);
            fall_out(right, &mut out);
        } else if lc < min_cluster_size {
            relabel.insert(right, me);
            fall_out(left, &mut out);
            queue.push_back(right);
        } else {
            relabel.insert(left, me);
            fall_out(right, &mut out);
            queue.push_back(left);
        }
    }
    out
}

pub fn hdbscan(points: &Array2<f64>, params: &HdbscanParams) -> Result<HdbscanResult> {
    if params.min_cluster_size < 2 || params.min_samples == 0 {
        return Err(Error::config("min_cluster_size must be ≥ 2 and min_samples ≥ 1"));
    }
    if params.epsilon < 0.0 {
        return Err(Error::config("epsilon must be nonnegative"));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hdbscan input".into()));
    }
    let n = points.nrows();
    let noise = HdbscanResult {
        labels: vec![NOISE; n],
        n_clusters: 0,
        stability: Vec::new(),
    };
    if n < params.min_cluster_size || n < 2 {
        return Ok(noise);
    }

    let core = core_distances(points, params.min_samples);
    let mst = mutual_reachability_mst(points, &core);
    let linkage = single_linkage(n, &mst);
    let tree = condense(n, &linkage, params.min_cluster_size);

    let root = n;
    let mut parent_of = BTreeMap::new();
    let mut birth = BTreeMap::from([(root, 0.0)]);
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in &tree {
        parent_of.insert(e.child, e.parent);
        if e.child >= n {
            birth.insert(e.child, e.lambda);
            children.entry(e.parent).or_default().push(e.child);
        }
    }
    let mut stability: BTreeMap<usize, f64> = birth.keys().map(|&c| (c, 0.0)).collect();
    for e in &tree {
        *stability.get_mut(&e.parent).expect("parent is a cluster") += (e.lambda - birth[&e.parent]) * e.size as f64;
    }

    // Excess of mass, leaves first (children always carry larger labels).
    let mut selected: BTreeMap<usize, bool> = stability.keys().map(|&c| (c, c != root)).collect();
    let mut subtree = stability.clone();
    for &c in stability.keys().rev().filter(|&&c| c != root) {
        let child_sum: f64 = children.get(&c).map(|v| v.iter().map(|k| subtree[k]).sum()).unwrap_or(0.0);
        if child_sum > stability[&c] {
            selected.insert(c, false);
            subtree.insert(c, child_sum);
        } else {
            let mut stack = children.get(&c).cloned().unwrap_or_default();
            while let Some(d) = stack.pop() {
                selected.insert(d, false);
                stack.extend(children.get(&d).into_iter().flatten().copied());
            }
        }
    }
    let mut chosen: Vec<usize> = selected.iter().filter(|(_, s)| **s).map(|(c, _)| *c).collect();

    if params.epsilon > 0.0 {
        chosen = epsilon_merge(&chosen, &parent_of, &birth, &children, root, params.epsilon);
    }
    if chosen.is_empty() {
        return Ok(noise);
    }
    let index: BTreeMap<usize, i64> = chosen.iter().enumerate().map(|(i, &c)| (c, i as i64)).collect();
    let labels = (0..n)
        .map(|p| {
            let mut c = parent_of[&p];
            loop {
                if let Some(&l) = index.get(&c) {
                    return l;
                }
                if c == root {
                    return NOISE;
                }
                c = parent_of[&c];
            }
        })
        .collect();
    Ok(HdbscanResult {
        labels,
        n_clusters: chosen.len(),
        stability: chosen.iter().map(|c| stability[c]).collect(),
    })
}

/// Replaces each selected cluster born below distance `epsilon` by its nearest
/// ancestor born above it, never climbing to the root.
fn epsilon_merge(
    chosen: &[usize],
    parent_of: &BTreeMap<usize, usize>,
    birth: &BTreeMap<usize, f64>,
    children: &BTreeMap<usize, Vec<usize>>,
    root: usize,
    epsilon: f64,
) -> Vec<usize> {
    let mut out = std::collections::BTreeSet::new();
    let mut processed = std::collections::BTreeSet::new();
    for &leaf in chosen {
        let eps = 1.0 / birth[&leaf];
        if eps >= epsilon {
            out.insert(leaf);
            continue;
        }
        if processed.contains(&leaf) {
            continue;
        }
        let mut node = leaf;
        let target = loop {
            let parent = parent_of[&node];
            if parent == root {
                break node;
            }
            if 1.0 / birth[&parent] > epsilon {
                break parent;
            }
            node = parent;
        };
        out.insert(target);
        let mut stack = children.get(&target).cloned().unwrap_or_default();
        while let Some(d) = stack.pop() {
            processed.insert(d);
            stack.extend(children.get(&d).into_iter().flatten().copied());
        }
    }
    // A cluster already inside a chosen ancestor is absorbed by it.
    let all: Vec<usize> = out.iter().copied().collect();
    all.iter()
        .copied()
        .filter(|&c| {
            let mut x = c;
            while x != root {
                x = parent_of[&x];
                if x != root && out.contains(&x) {
                    return false;
                }
            }
            true
        })
        .collect()
}
