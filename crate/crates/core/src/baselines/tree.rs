//! Axis-aligned binary trees grown on two-component sufficient statistics.
//!
//! Classification trees carry per-class weights `[w0, w1]`; boosting trees
//! carry gradient sums `[G, H]`. The split search is shared.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }
}

/// What a tree optimizes.
pub trait Criterion {
    /// Improvement from splitting `parent` into `left` and `right`.
    fn gain(&self, left: [f64; 2], right: [f64; 2], parent: [f64; 2]) -> f64;
    fn leaf(&self, stats: [f64; 2]) -> f64;
    /// Whether a node with these statistics may be split at all.
    fn splittable(&self, stats: [f64; 2]) -> bool;
    /// Whether a child with these statistics is large enough to exist.
    fn admissible(&self, stats: [f64; 2]) -> bool;
    /// Accept splits whose gain equals zero (needed to grow through XOR-like structure).
    fn allow_zero_gain(&self) -> bool;
}

pub struct GrowParams<'a> {
    pub max_depth: Option<usize>,
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

fn sum(stats: &[[f64; 2]], idx: &[usize]) -> [f64; 2] {
    idx.iter().fold([0.0, 0.0], |a, &i| [a[0] + stats[i][0], a[1] + stats[i][1]])
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn best_split<C: Criterion>(x: &[Vec<f64>], stats: &[[f64; 2]], idx: &[usize], features: &[usize], crit: &C, parent: [f64; 2]) -> Option<Best> {
    let mut best: Option<Best> = None;
    for &f in features {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left = [0.0, 0.0];
        for k in 0..order.len() - 1 {
            let i = order[k];
            left[0] += stats[i][0];
            left[1] += stats[i][1];
            let (lo, hi) = (x[i][f], x[order[k + 1]][f]);
            if lo == hi {
                continue;
            }
            let right = [parent[0] - left[0], parent[1] - left[1]];
            if !crit.admissible(left) || !crit.admissible(right) {
                continue;
            }
            let g = crit.gain(left, right, parent);
            let ok = if crit.allow_zero_gain() { g >= -1e-12 } else { g > 1e-12 };
            if ok && best.as_ref().is_none_or(|b| g > b.gain + 1e-12) {
                best = Some(Best {
                    feature: f,
                    threshold: 0.5 * (lo + hi),
                    gain: g,
                });
            }
        }
    }
    best
}

/// Grows a tree on rows `idx` of `x` (row-major) with per-row statistics.
pub fn grow<C: Criterion>(x: &[Vec<f64>], stats: &[[f64; 2]], idx: Vec<usize>, crit: &C, mut params: GrowParams) -> Tree {
    let p = x.first().map_or(0, Vec::len);
    let mut tree = Tree { nodes: Vec::new() };
    // (node slot, rows, depth)
    let mut stack = vec![(0usize, idx, 0usize)];
    tree.nodes.push(Node::Leaf { value: 0.0 });
    while let Some((slot, rows, depth)) = stack.pop() {
        let total = sum(stats, &rows);
        tree.nodes[slot] = Node::Leaf { value: crit.leaf(total) };
        let depth_ok = params.max_depth.is_none_or(|d| depth < d);
        if rows.len() < 2 || !depth_ok || !crit.splittable(total) {
            continue;
        }
        let mut features: Vec<usize> = (0..p).collect();
        if let Some(rng) = params.rng.as_deref_mut() {
            features.shuffle(rng);
        }
        let m = params.max_features.unwrap_or(p).clamp(1, p.max(1));
        // Like common CART implementations, keep drawing features past `m`
        // while none of the drawn ones admits a split.
        let mut found = best_split(x, stats, &rows, &features[..m.min(p)], crit, total);
        let mut next = m;
        while found.is_none() && next < p {
            found = best_split(x, stats, &rows, &features[next..next + 1], crit, total);
            next += 1;
        }
        let Some(b) = found else { continue };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i][b.feature] <= b.threshold);
        let left = tree.nodes.len();
        tree.nodes.push(Node::Leaf { value: 0.0 });
        tree.nodes.push(Node::Leaf { value: 0.0 });
        tree.nodes[slot] = Node::Split {
            feature: b.feature,
            threshold: b.threshold,
            left,
            right: left + 1,
            gain: b.gain,
        };
        stack.push((left + 1, r, depth + 1));
        stack.push((left, l, depth + 1));
    }
    tree
}

/// Weighted Gini impurity decrease on `[w0, w1]` statistics.
pub struct Gini;

fn gini(s: [f64; 2]) -> f64 {
    let t = s[0] + s[1];
    if t <= 0.0 {
        return 0.0;
    }
    let (a, b) = (s[0] / t, s[1] / t);
    1.0 - a * a - b * b
}

impl Criterion for Gini {
    fn gain(&self, l: [f64; 2], r: [f64; 2], p: [f64; 2]) -> f64 {
        let (wl, wr, wp) = (l[0] + l[1], r[0] + r[1], p[0] + p[1]);
        gini(p) - (wl / wp) * gini(l) - (wr / wp) * gini(r)
    }

    /// Weighted fraction of class 1.
    fn leaf(&self, s: [f64; 2]) -> f64 {
        let t = s[0] + s[1];
        if t > 0.0 {
            s[1] / t
        } else {
            0.5
        }
    }

    fn splittable(&self, s: [f64; 2]) -> bool {
        s[0] > 0.0 && s[1] > 0.0
    }

    fn admissible(&self, s: [f64; 2]) -> bool {
        s[0] + s[1] > 0.0
    }

    fn allow_zero_gain(&self) -> bool {
        true
    }
}

/// Second-order boosting gain on `[G, H]` with L2 leaf penalty `lambda`.
pub struct Newton {
    pub lambda: f64,
    pub min_child_hessian: f64,
}

impl Criterion for Newton {
    fn gain(&self, l: [f64; 2], r: [f64; 2], p: [f64; 2]) -> f64 {
        let score = |s: [f64; 2]| s[0] * s[0] / (s[1] + self.lambda);
        0.5 * (score(l) + score(r) - score(p))
    }

    fn leaf(&self, s: [f64; 2]) -> f64 {
        -s[0] / (s[1] + self.lambda)
    }

    fn splittable(&self, s: [f64; 2]) -> bool {
        s[1] >= 2.0 * self.min_child_hessian
    }

    fn admissible(&self, s: [f64; 2]) -> bool {
        s[1] >= self.min_child_hessian
    }

    fn allow_zero_gain(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_node_is_a_single_leaf() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let stats = vec![[0.0, 1.0]; 3];
        let t = grow(&x, &stats, vec![0, 1, 2], &Gini, GrowParams { max_depth: None, max_features: None, rng: None });
        assert_eq!(t.nodes, vec![Node::Leaf { value: 1.0 }]);
    }

    #[test]
    fn gini_picks_the_separating_threshold() {
        let x: Vec<Vec<f64>> = [0.0, 1.0, 2.0, 5.0, 6.0].iter().map(|v| vec![*v]).collect();
        let stats = vec![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let t = grow(&x, &stats, (0..5).collect(), &Gini, GrowParams { max_depth: Some(1), max_features: None, rng: None });
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 3.5),
            n => panic!("expected split, got {n:?}"),
        }
        assert_eq!(t.predict(&[4.0]), 1.0);
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn depth_limit_is_respected() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64, (i * 7 % 13) as f64]).collect();
        let stats: Vec<[f64; 2]> = (0..64).map(|i| [(i % 3) as f64 - 1.0, 1.0]).collect();
        let crit = Newton { lambda: 1.0, min_child_hessian: 1e-3 };
        let t = grow(&x, &stats, (0..64).collect(), &crit, GrowParams { max_depth: Some(3), max_features: None, rng: None });
        assert!(t.depth() <= 3);
    }
}
