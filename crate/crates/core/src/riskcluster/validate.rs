//! Cluster quality and significance statistics.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hdbscan::NOISE;
use crate::stats::{f_survival, mean, std_sample};
use crate::{Error, Result};

fn dist(points: &Array2<f64>, i: usize, j: usize) -> f64 {
    points.row(i).iter().zip(points.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Non-noise points grouped by label.
fn groups(labels: &[i64]) -> BTreeMap<i64, Vec<usize>> {
    let mut g: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE {
            g.entry(l).or_default().push(i);
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Silhouette {
    pub mean: f64,
    pub per_cluster: BTreeMap<i64, f64>,
}

/// Mean silhouette over non-noise points; singletons score 0.
pub fn silhouette(points: &Array2<f64>, labels: &[i64]) -> Result<Silhouette> {
    if labels.len() != points.nrows() {
        return Err(Error::invalid("one label per point required"));
    }
    let g = groups(labels);
    if g.len() < 2 {
        return Err(Error::invalid(format!("silhouette needs at least 2 clusters, got {}", g.len())));
    }
    let members: Vec<usize> = g.values().flatten().copied().collect();
    let scores: Vec<(i64, f64)> = members
        .par_iter()
        .map(|&i| {
            let own = labels[i];
            if g[&own].len() == 1 {
                return (own, 0.0);
            }
            let mut a = 0.0;
            let mut b = f64::INFINITY;
            for (&l, pts) in &g {
                let d: f64 = pts.iter().map(|&j| dist(points, i, j)).sum();
                if l == own {
                    a = d / (pts.len() - 1) as f64;
                } else {
                    b = b.min(d / pts.len() as f64);
                }
            }
            let s = if a.max(b) > 0.0 { (b - a) / a.max(b) } else { 0.0 };
            (own, s)
        })
        .collect();
    let mut per: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (l, s) in &scores {
        per.entry(*l).or_default().push(*s);
    }
    Ok(Silhouette {
        mean: scores.iter().map(|s| s.1).sum::<f64>() / scores.len() as f64,
        per_cluster: per.into_iter().map(|(l, v)| (l, mean(&v))).collect(),
    })
}

/// Mean over clusters of the worst `(s_i + s_j) / d(c_i, c_j)` ratio, where `s`
/// is the mean distance to the centroid.
pub fn davies_bouldin(points: &Array2<f64>, labels: &[i64]) -> Result<f64> {
    let g = groups(labels);
    if g.len() < 2 {
        return Err(Error::invalid("Davies-Bouldin needs at least 2 clusters"));
    }
    let d = points.ncols();
    let mut centroids = Vec::new();
    let mut scatter = Vec::new();
    for pts in g.values() {
        if pts.is_empty() {
            return Err(Error::Empty("cluster"));
        }
        let mut c = vec![0.0; d];
        for &i in pts {
            for (k, v) in c.iter_mut().enumerate() {
                *v += points[[i, k]];
            }
        }
        c.iter_mut().for_each(|v| *v /= pts.len() as f64);
        let s = pts
            .iter()
            .map(|&i| (0..d).map(|k| (points[[i, k]] - c[k]).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / pts.len() as f64;
        centroids.push(c);
        scatter.push(s);
    }
    let k = centroids.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst: f64 = 0.0;
        for j in 0..k {
            if i != j {
                let sep = centroids[i].iter().zip(&centroids[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let r = if sep > 0.0 { (scatter[i] + scatter[j]) / sep } else { f64::INFINITY };
                worst = worst.max(r);
            }
        }
        total += worst;
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    /// `f64::MAX` stands in for an infinite statistic (see `f_infinite`).
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub f_infinite: bool,
}

impl Anova {
    /// p-value text with the `<0.0001` floor.
    pub fn p_display(&self) -> String {
        if self.p < 1e-4 {
            "<0.0001".to_string()
        } else {
            format!("{:.4}", self.p)
        }
    }
}

/// One-way ANOVA.
pub fn anova_f(groups: &[Vec<f64>]) -> Result<Anova> {
    if groups.len() < 2 || groups.iter().any(|g| g.len() < 2) {
        return Err(Error::invalid("ANOVA needs at least 2 groups of at least 2 values"));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let ssb: f64 = groups.iter().map(|g| g.len() as f64 * (mean(g) - grand).powi(2)).sum();
    let ssw: f64 = groups.iter().map(|g| {
        let m = mean(g);
        g.iter().map(|v| (v - m).powi(2)).sum::<f64>()
    }).sum();
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let msb = ssb / df_between as f64;
    let msw = ssw / df_within as f64;
    let scale = groups.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if msw <= 1e-24 * scale * scale {
        if msb <= 1e-24 * scale * scale {
            return Ok(Anova { f: 0.0, p: 1.0, df_between, df_within, f_infinite: false });
        }
        return Ok(Anova { f: f64::MAX, p: 0.0, df_between, df_within, f_infinite: true });
    }
    let f = msb / msw;
    Ok(Anova {
        f,
        p: f_survival(f, df_between as f64, df_within as f64),
        df_between,
        df_within,
        f_infinite: false,
    })
}

/// Product-limit survival curve: `(time, S(time))` at each distinct event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub steps: Vec<(f64, f64)>,
}

impl SurvivalCurve {
    pub fn at(&self, t: f64) -> f64 {
        self.steps.iter().take_while(|(s, _)| *s <= t).last().map_or(1.0, |(_, v)| *v)
    }
}

/// Kaplan–Meier estimate; `censored[i]` marks observations without an event.
pub fn kaplan_meier(times: &[f64], censored: &[bool]) -> Result<SurvivalCurve> {
    if times.is_empty() {
        return Err(Error::Empty("survival times"));
    }
    if times.len() != censored.len() {
        return Err(Error::invalid("one censoring flag per time required"));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::invalid("survival times must be finite and nonnegative"));
    }
    let mut obs: Vec<(f64, bool)> = times.iter().copied().zip(censored.iter().copied()).collect();
    obs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut at_risk = obs.len();
    let mut s = 1.0;
    let mut steps = Vec::new();
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut events = 0;
        let mut leaving = 0;
        while i < obs.len() && obs[i].0 == t {
            if !obs[i].1 {
                events += 1;
            }
            leaving += 1;
            i += 1;
        }
        if events > 0 {
            s *= 1.0 - events as f64 / at_risk as f64;
            steps.push((t, s));
        }
        at_risk -= leaving;
    }
    Ok(SurvivalCurve { steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRatio {
    pub edges: usize,
    pub intra: usize,
    pub ratio: f64,
    pub null_mean: f64,
    pub null_sd: f64,
    /// `(ratio − null_mean) / null_sd`, 0 when the null has no spread.
    pub z: f64,
}

fn intra_count(edges: &[(usize, usize)], labels: &[i64]) -> usize {
    edges.iter().filter(|(u, v)| labels[*u] != NOISE && labels[*u] == labels[*v]).count()
}

/// Share of `edges` whose endpoints share a (non-noise) cluster, against the
/// same share under `permutations` random relabellings.
pub fn intra_cluster_edge_ratio(edges: &[(usize, usize)], labels: &[i64], permutations: usize, seed: u64) -> EdgeRatio {
    let m = edges.len();
    let ratio_of = |c: usize| if m == 0 { 0.0 } else { c as f64 / m as f64 };
    let intra = intra_count(edges, labels);
    let null: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut shuffled = labels.to_vec();
            shuffled.shuffle(&mut rng);
            ratio_of(intra_count(edges, &shuffled))
        })
        .collect();
    let null_mean = if null.is_empty() { 0.0 } else { mean(&null) };
    let null_sd = std_sample(&null);
    let ratio = ratio_of(intra);
    EdgeRatio {
        edges: m,
        intra,
        ratio,
        null_mean,
        null_sd,
        z: if null_sd > 0.0 { (ratio - null_mean) / null_sd } else { 0.0 },
    }
}
