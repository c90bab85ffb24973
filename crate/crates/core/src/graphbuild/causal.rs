//! Cause-conditioned co-failure enrichment between spatially adjacent substations.
//!
//! For each cause `c` and spatial pair `(u, v)` the observed count of cause-`c`
//! co-occurrences is compared with its independence expectation
//! `E = λ_u · λ_v · θ_c · T` through a Poisson z-score.
//!
//! A co-occurrence is a pair of cause-`c` incidents, one at each endpoint,
//! whose start times differ by at most `θ_c / 2`. The total window width is
//! then `θ_c`, which is exactly the window `E` assumes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEdge {
    pub u: usize,
    pub v: usize,
    pub cause: String,
    pub z_score: f64,
    pub cooccur_ratio: f64,
    pub window_hrs: f64,
    pub cooccur_count: u32,
}

/// Enrichment statistics for one `(pair, cause)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enrichment {
    pub u: usize,
    pub v: usize,
    pub cause: String,
    pub observed: u32,
    pub expected: f64,
    pub z_score: f64,
    pub window_hrs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalLayer {
    pub edges: Vec<CausalEdge>,
    pub window_hrs: BTreeMap<String, f64>,
    /// Z threshold actually applied (`None` when no cell was computable).
    pub z_threshold: Option<f64>,
    pub tested_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausalParams {
    pub window_percentile: f64,
    pub theta_max_hrs: f64,
    pub z_percentile: f64,
    pub min_count: u32,
}

/// `λ_u · λ_v · θ · T` with rates per day, `θ` in hours and `T` in days.
pub fn expected_cooccurrences(rate_u: f64, rate_v: f64, window_hrs: f64, observation_days: f64) -> f64 {
    rate_u * rate_v * (window_hrs / 24.0) * observation_days
}

/// Poisson z-score `(obs − E) / √E`; `None` when `E = 0`.
pub fn enrichment_z(observed: f64, expected: f64) -> Option<f64> {
    (expected > 0.0).then(|| (observed - expected) / expected.sqrt())
}

/// `min(percentile(gaps), θ_max)` for one cause stream, all in hours.
pub fn cause_window(times_hrs_sorted: &[f64], percentile: f64, theta_max_hrs: f64) -> Option<f64> {
    if times_hrs_sorted.len() < 2 {
        return None;
    }
    let gaps: Vec<f64> = times_hrs_sorted.windows(2).map(|w| w[1] - w[0]).collect();
    stats::percentile(&gaps, percentile).ok().map(|p| p.min(theta_max_hrs))
}

/// Number of pairs `(a, b)` with `|a − b| ≤ half_width`, both inputs sorted.
pub fn count_within(a: &[f64], b: &[f64], half_width: f64) -> u32 {
    let mut lo = 0;
    let mut hi = 0;
    let mut total = 0u32;
    for &t in a {
        while lo < b.len() && b[lo] < t - half_width {
            lo += 1;
        }
        if hi < lo {
            hi = lo;
        }
        while hi < b.len() && b[hi] <= t + half_width {
            hi += 1;
        }
        total += (hi - lo) as u32;
    }
    total
}

/// Per-cause incident times (hours since a common epoch) grouped by node.
#[derive(Debug, Clone, Default)]
pub struct CauseStreams {
    /// cause → node → sorted times
    pub by_cause: BTreeMap<String, BTreeMap<usize, Vec<f64>>>,
}

impl CauseStreams {
    pub fn push(&mut self, cause: &str, node: usize, t_hrs: f64) {
        self.by_cause
            .entry(cause.to_string())
            .or_default()
            .entry(node)
            .or_default()
            .push(t_hrs);
    }

    fn finish(&mut self) {
        for nodes in self.by_cause.values_mut() {
            for times in nodes.values_mut() {
                times.sort_by(|a, b| a.total_cmp(b));
            }
        }
    }
}

/// All enrichment cells over spatial pairs and causes, before pruning.
pub fn enrichment_cells(
    streams: &mut CauseStreams,
    spatial_pairs: &[(usize, usize)],
    observation_days: f64,
    params: &CausalParams,
) -> (Vec<Enrichment>, BTreeMap<String, f64>) {
    streams.finish();
    let mut windows = BTreeMap::new();
    let mut cells = Vec::new();
    if observation_days <= 0.0 {
        return (cells, windows);
    }
    for (cause, nodes) in &streams.by_cause {
        let mut all: Vec<f64> = nodes.values().flatten().copied().collect();
        all.sort_by(|a, b| a.total_cmp(b));
        let Some(window) = cause_window(&all, params.window_percentile, params.theta_max_hrs) else {
            continue;
        };
        windows.insert(cause.clone(), window);
        let empty: Vec<f64> = Vec::new();
        let per_cause: Vec<Enrichment> = spatial_pairs
            .par_iter()
            .filter_map(|&(u, v)| {
                let tu = nodes.get(&u).unwrap_or(&empty);
                let tv = nodes.get(&v).unwrap_or(&empty);
                let rate_u = tu.len() as f64 / observation_days;
                let rate_v = tv.len() as f64 / observation_days;
                let expected = expected_cooccurrences(rate_u, rate_v, window, observation_days);
                let observed = count_within(tu, tv, window / 2.0);
                let z = enrichment_z(observed as f64, expected)?;
                Some(Enrichment {
                    u,
                    v,
                    cause: cause.clone(),
                    observed,
                    expected,
                    z_score: z,
                    window_hrs: window,
                })
            })
            .collect();
        cells.extend(per_cause);
    }
    (cells, windows)
}

/// Keeps cells with `Z ≥ percentile(Z)` and `obs ≥ min_count`.
pub fn prune_cells(cells: &[Enrichment], z_percentile: f64, min_count: u32) -> (Vec<CausalEdge>, Option<f64>) {
    let zs: Vec<f64> = cells.iter().map(|c| c.z_score).collect();
    let Ok(threshold) = stats::percentile(&zs, z_percentile) else {
        return (Vec::new(), None);
    };
    let mut edges: Vec<CausalEdge> = cells
        .iter()
        .filter(|c| c.z_score >= threshold && c.observed >= min_count)
        .map(|c| CausalEdge {
            u: c.u,
            v: c.v,
            cause: c.cause.clone(),
            z_score: c.z_score,
            cooccur_ratio: c.observed as f64 / c.expected,
            window_hrs: c.window_hrs,
            cooccur_count: c.observed,
        })
        .collect();
    edges.sort_by(|a, b| (a.u, a.v, &a.cause).cmp(&(b.u, b.v, &b.cause)));
    (edges, Some(threshold))
}

pub fn build_causal_layer(
    streams: &mut CauseStreams,
    spatial_pairs: &[(usize, usize)],
    observation_days: f64,
    params: &CausalParams,
) -> CausalLayer {
    let (cells, window_hrs) = enrichment_cells(streams, spatial_pairs, observation_days, params);
    let (edges, z_threshold) = prune_cells(&cells, params.z_percentile, params.min_count);
    CausalLayer {
        edges,
        window_hrs,
        z_threshold,
        tested_cells: cells.len(),
    }
}
