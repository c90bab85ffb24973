//! Spatial layer: physical transmission lines plus weather-driven proximity links.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::geo::haversine_km;
use crate::stats;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialEdge {
    /// Canonical order: `u < v`.
    pub u: usize,
    pub v: usize,
    pub has_line: u8,
    pub is_nearby: u8,
    pub line_voltage_kv: Option<f64>,
    pub line_length_km: f64,
    pub distance_km: f64,
    pub shared_cities: u32,
    pub shared_feeders: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialLayer {
    pub edges: Vec<SpatialEdge>,
    /// Distance cut for proximity edges; `None` when no weather co-occurrence exists.
    pub proximity_threshold_km: Option<f64>,
    pub coaffected_pairs: usize,
}

/// `1 / (1 + d)`.
pub fn proximity_weight(distance_km: f64) -> f64 {
    1.0 / (1.0 + distance_km)
}

/// A line between two node indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeLine {
    pub u: usize,
    pub v: usize,
    pub voltage_kv: f64,
    pub length_km: f64,
}

/// Everything the spatial layer needs to know about one node.
#[derive(Debug, Clone, Default)]
pub struct NodeContext {
    pub lat: f64,
    pub lon: f64,
    pub voltage_kv: Option<f64>,
    pub cities: BTreeSet<String>,
    pub feeders: BTreeSet<String>,
}

fn same_voltage_class(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a * 1e3).round() == (b * 1e3).round(),
        _ => false,
    }
}

fn canonical(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Unordered node pairs with weather incidents no more than `window_minutes` apart.
///
/// `weather` holds `(minutes since epoch, node)` sorted by time.
pub fn weather_coaffected_pairs(weather: &[(f64, usize)], window_minutes: f64) -> BTreeSet<(usize, usize)> {
    let mut pairs = BTreeSet::new();
    for a in 0..weather.len() {
        for b in (a + 1)..weather.len() {
            if weather[b].0 - weather[a].0 > window_minutes {
                break;
            }
            if weather[a].1 != weather[b].1 {
                pairs.insert(canonical(weather[a].1, weather[b].1));
            }
        }
    }
    pairs
}

fn shared_context(nodes: &[NodeContext], u: usize, v: usize) -> (u32, u32) {
    let cities = nodes[u].cities.intersection(&nodes[v].cities).count() as u32;
    let feeders = nodes[u].feeders.intersection(&nodes[v].feeders).count() as u32;
    (cities, feeders)
}

/// Builds the spatial layer.
///
/// Parallel lines between the same pair collapse into one edge carrying the
/// highest voltage and the shortest length. A pair with a line never also
/// gets a proximity edge.
pub fn build_spatial_layer(
    nodes: &[NodeContext],
    lines: &[NodeLine],
    weather: &[(f64, usize)],
    window_minutes: Option<f64>,
    proximity_percentile: f64,
) -> Result<SpatialLayer> {
    let mut by_pair: BTreeMap<(usize, usize), SpatialEdge> = BTreeMap::new();
    for line in lines {
        if line.u == line.v {
            continue;
        }
        let (u, v) = canonical(line.u, line.v);
        let distance_km = haversine_km((nodes[u].lat, nodes[u].lon), (nodes[v].lat, nodes[v].lon))?;
        let (shared_cities, shared_feeders) = shared_context(nodes, u, v);
        by_pair
            .entry((u, v))
            .and_modify(|e| {
                e.line_voltage_kv = e.line_voltage_kv.map(|kv| kv.max(line.voltage_kv));
                e.line_length_km = e.line_length_km.min(line.length_km);
            })
            .or_insert(SpatialEdge {
                u,
                v,
                has_line: 1,
                is_nearby: 0,
                line_voltage_kv: Some(line.voltage_kv),
                line_length_km: line.length_km,
                distance_km,
                shared_cities,
                shared_feeders,
                weight: 1.0,
            });
    }

    let coaffected = match window_minutes {
        Some(w) => weather_coaffected_pairs(weather, w),
        None => BTreeSet::new(),
    };
    let mut distances = Vec::with_capacity(coaffected.len());
    for &(u, v) in &coaffected {
        distances.push(((u, v), haversine_km((nodes[u].lat, nodes[u].lon), (nodes[v].lat, nodes[v].lon))?));
    }
    let raw: Vec<f64> = distances.iter().map(|(_, d)| *d).collect();
    let threshold = if raw.is_empty() {
        log::warn!("no weather co-occurrences; proximity sub-layer is empty");
        None
    } else {
        Some(stats::percentile(&raw, proximity_percentile)?)
    };
    if let Some(cut) = threshold {
        for ((u, v), d) in distances {
            if d > cut || by_pair.contains_key(&(u, v)) {
                continue;
            }
            if !same_voltage_class(nodes[u].voltage_kv, nodes[v].voltage_kv) {
                continue;
            }
            let (shared_cities, shared_feeders) = shared_context(nodes, u, v);
            by_pair.insert(
                (u, v),
                SpatialEdge {
                    u,
                    v,
                    has_line: 0,
                    is_nearby: 1,
                    line_voltage_kv: None,
                    line_length_km: 0.0,
                    distance_km: d,
                    shared_cities,
                    shared_feeders,
                    weight: proximity_weight(d),
                },
            );
        }
    }
    Ok(SpatialLayer {
        edges: by_pair.into_values().collect(),
        proximity_threshold_km: threshold,
        coaffected_pairs: coaffected.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(lat: f64, lon: f64, kv: f64) -> NodeContext {
        NodeContext {
            lat,
            lon,
            voltage_kv: Some(kv),
            ..Default::default()
        }
    }

    #[test]
    fn proximity_weight_at_4km() {
        assert_eq!(proximity_weight(4.0), 0.2);
    }

    #[test]
    fn line_edge_fields() {
        let nodes = vec![node(35.0, -97.0, 69.0), node(35.1, -97.0, 69.0)];
        let lines = [NodeLine {
            u: 1,
            v: 0,
            voltage_kv: 69.0,
            length_km: 12.4,
        }];
        let layer = build_spatial_layer(&nodes, &lines, &[], None, 75.0).unwrap();
        assert_eq!(layer.edges.len(), 1);
        let e = &layer.edges[0];
        assert_eq!((e.u, e.v, e.has_line, e.is_nearby), (0, 1, 1, 0));
        assert_eq!(e.weight, 1.0);
        assert_eq!(e.line_length_km, 12.4);
        assert!(layer.proximity_threshold_km.is_none());
    }

    #[test]
    fn proximity_requires_voltage_class_and_distance() {
        // 0–1 close and same class, 0–2 close but different class, 0–3 far.
        let nodes = vec![
            node(35.0, -97.0, 69.0),
            node(35.01, -97.0, 69.0),
            node(35.0, -97.01, 138.0),
            node(36.0, -97.0, 69.0),
        ];
        let weather = vec![(0.0, 0), (1.0, 1), (2.0, 2), (3.0, 3)];
        let layer = build_spatial_layer(&nodes, &[], &weather, Some(10.0), 50.0).unwrap();
        assert_eq!(layer.coaffected_pairs, 6);
        let pairs: Vec<(usize, usize)> = layer.edges.iter().map(|e| (e.u, e.v)).collect();
        assert!(pairs.contains(&(0, 1)));
        assert!(!pairs.contains(&(0, 2)));
        assert!(!pairs.iter().any(|p| p.1 == 3));
        for e in &layer.edges {
            assert_eq!(e.is_nearby, 1);
            assert_eq!(e.line_length_km, 0.0);
            assert!(e.line_voltage_kv.is_none());
            assert!((e.weight - 1.0 / (1.0 + e.distance_km)).abs() < 1e-15);
        }
    }

    #[test]
    fn parallel_lines_collapse() {
        let nodes = vec![node(35.0, -97.0, 69.0), node(35.1, -97.0, 69.0)];
        let lines = [
            NodeLine {
                u: 0,
                v: 1,
                voltage_kv: 69.0,
                length_km: 12.0,
            },
            NodeLine {
                u: 1,
                v: 0,
                voltage_kv: 138.0,
                length_km: 14.0,
            },
        ];
        let layer = build_spatial_layer(&nodes, &lines, &[], None, 75.0).unwrap();
        assert_eq!(layer.edges.len(), 1);
        assert_eq!(layer.edges[0].line_voltage_kv, Some(138.0));
        assert_eq!(layer.edges[0].line_length_km, 12.0);
    }
}
