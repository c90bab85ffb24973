//! Temporal co-occurrence layer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::IncidentRecord;
use crate::stats;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalEdge {
    /// Node whose incident came first.
    pub u: usize,
    pub v: usize,
    pub weight: f64,
    pub cooccurrence_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalLayer {
    pub edges: Vec<TemporalEdge>,
    /// Co-occurrence window in minutes; `None` with fewer than two incidents.
    pub theta_minutes: Option<f64>,
    /// Minimum retained pair count `max(3, median)`.
    pub k: f64,
}

/// `exp(−|Δt| / decay)` with both arguments in minutes.
pub fn pair_weight(delta_minutes: f64, decay_minutes: f64) -> f64 {
    (-delta_minutes.abs() / decay_minutes).exp()
}

/// `max(floor, median(counts))`.
pub fn min_cooccurrence(counts: &[f64], floor: f64) -> f64 {
    stats::median(counts).map(|m| m.max(floor)).unwrap_or(floor)
}

/// Percentile of consecutive inter-arrival gaps (minutes) of a time-sorted stream.
pub fn inter_arrival_window(times_minutes: &[f64], q: f64) -> Option<f64> {
    if times_minutes.len() < 2 {
        return None;
    }
    let gaps: Vec<f64> = times_minutes.windows(2).map(|w| w[1] - w[0]).collect();
    stats::percentile(&gaps, q).ok()
}

pub(crate) fn minutes_since(epoch: chrono::NaiveDateTime, t: chrono::NaiveDateTime) -> f64 {
    (t - epoch).num_seconds() as f64 / 60.0
}

/// Builds the temporal layer from time-sorted incidents.
///
/// `node_of` maps each incident (by position) to its node index.
pub fn build_temporal_layer(
    incidents: &[IncidentRecord],
    node_of: &[usize],
    percentile: f64,
    decay_minutes: f64,
    floor: f64,
) -> Result<TemporalLayer> {
    if incidents.len() < 2 {
        return Ok(TemporalLayer {
            edges: Vec::new(),
            theta_minutes: None,
            k: floor,
        });
    }
    let epoch = incidents[0].t_off;
    let times: Vec<f64> = incidents.iter().map(|i| minutes_since(epoch, i.t_off)).collect();
    let theta = inter_arrival_window(&times, percentile).expect("at least two incidents");

    let mut pairs: BTreeMap<(usize, usize), (u32, f64)> = BTreeMap::new();
    for a in 0..times.len() {
        for b in (a + 1)..times.len() {
            let dt = times[b] - times[a];
            if dt > theta {
                break;
            }
            let (u, v) = (node_of[a], node_of[b]);
            if u == v {
                continue;
            }
            let e = pairs.entry((u, v)).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += pair_weight(dt, decay_minutes);
        }
    }
    let counts: Vec<f64> = pairs.values().map(|(c, _)| *c as f64).collect();
    let k = min_cooccurrence(&counts, floor);
    let edges = pairs
        .into_iter()
        .filter(|(_, (c, _))| *c as f64 >= k)
        .map(|((u, v), (c, w))| TemporalEdge {
            u,
            v,
            weight: w / c as f64,
            cooccurrence_count: c,
        })
        .collect();
    Ok(TemporalLayer {
        edges,
        theta_minutes: Some(theta),
        k,
    })
}
