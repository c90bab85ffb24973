//! Planted-community multilayer graphs with complementary per-layer signal.
//!
//! Every node carries three hidden bits, one per layer. Each layer links
//! nodes that mostly share that layer's bit, and the node features hold a
//! noisy copy of all three bits. The label is the majority of the bits, so a
//! model must denoise every bit (by aggregating over the matching layer) to
//! classify well.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::graphbuild::{CausalEdge, GraphConfig, GraphMetadata, MultilayerGraph, NodeFeatures, SpatialEdge, TemporalEdge};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommunityConfig {
    pub n_nodes: usize,
    /// Edges drawn per node and layer.
    pub degree: usize,
    /// Probability that a drawn edge stays inside the node's community.
    pub homophily: f64,
    /// Standard deviation of the noise on each `±1` feature signal.
    pub noise_sd: f64,
    /// Pure-noise feature columns appended after the three signal columns.
    pub noise_features: usize,
    pub seed: u64,
}

impl Default for CommunityConfig {
    fn default() -> Self {
        CommunityConfig {
            n_nodes: 300,
            degree: 5,
            homophily: 0.95,
            noise_sd: 1.5,
            noise_features: 2,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityGraph {
    pub graph: MultilayerGraph,
    /// Hidden bits `[spatial, temporal, causal]` per node.
    pub bits: Vec<[u8; 3]>,
    pub labels: Vec<u8>,
}

pub fn community_graph(cfg: &CommunityConfig) -> Result<CommunityGraph> {
    let n = cfg.n_nodes;
    if n < 8 || cfg.degree == 0 || !(0.0..=1.0).contains(&cfg.homophily) || !(cfg.noise_sd >= 0.0) {
        return Err(Error::config("community graph needs ≥ 8 nodes, positive degree, homophily in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bits: Vec<[u8; 3]> = (0..n)
        .map(|_| [rng.random_range(0..2u8), rng.random_range(0..2u8), rng.random_range(0..2u8)])
        .collect();
    let labels: Vec<u8> = bits.iter().map(|b| u8::from(b.iter().sum::<u8>() >= 2)).collect();
    let noise = Normal::new(0.0, cfg.noise_sd.max(1e-12)).expect("valid");

    let mut columns: Vec<String> = ["signal_spatial", "signal_temporal", "signal_causal"].map(String::from).to_vec();
    columns.extend((0..cfg.noise_features).map(|j| format!("noise_{j}")));
    let raw: Vec<Vec<f64>> = bits
        .iter()
        .map(|b| {
            let mut row: Vec<f64> = b.iter().map(|&x| 2.0 * f64::from(x) - 1.0 + noise.sample(&mut rng)).collect();
            row.extend((0..cfg.noise_features).map(|_| noise.sample(&mut rng)));
            row
        })
        .collect();

    // Partners for layer `l`: same bit with probability `homophily`.
    let groups: Vec<[Vec<usize>; 2]> = (0..3)
        .map(|l| [0u8, 1].map(|v| (0..n).filter(|&i| bits[i][l] == v).collect()))
        .collect();
    let draw = |rng: &mut ChaCha8Rng, l: usize, i: usize| -> Option<usize> {
        let same = rng.random_bool(cfg.homophily);
        let g = usize::from(bits[i][l] == 1) ^ usize::from(!same);
        let j = *groups[l][g].choose(rng)?;
        (j != i).then_some(j)
    };

    let mut spatial_pairs = BTreeSet::new();
    let mut temporal_pairs = BTreeSet::new();
    let mut causal_pairs = BTreeSet::new();
    for i in 0..n {
        for _ in 0..cfg.degree {
            if let Some(j) = draw(&mut rng, 0, i) {
                spatial_pairs.insert((i.min(j), i.max(j)));
            }
            if let Some(j) = draw(&mut rng, 1, i) {
                temporal_pairs.insert((i, j));
            }
            if let Some(j) = draw(&mut rng, 2, i) {
                causal_pairs.insert((i.min(j), i.max(j)));
            }
        }
    }
    let spatial = spatial_pairs
        .into_iter()
        .map(|(u, v)| SpatialEdge {
            u,
            v,
            has_line: 1,
            is_nearby: 0,
            line_voltage_kv: Some(138.0),
            line_length_km: rng.random_range(2.0..30.0),
            distance_km: rng.random_range(2.0..25.0),
            shared_cities: 0,
            shared_feeders: 0,
            weight: 1.0,
        })
        .collect();
    let temporal = temporal_pairs
        .into_iter()
        .map(|(u, v)| TemporalEdge {
            u,
            v,
            weight: rng.random_range(0.3..1.0),
            cooccurrence_count: rng.random_range(3..8),
        })
        .collect();
    let causal = causal_pairs
        .into_iter()
        .map(|(u, v)| {
            let count = rng.random_range(3..10);
            CausalEdge {
                u,
                v,
                cause: "PLANTED".to_string(),
                z_score: rng.random_range(2.0..8.0),
                cooccur_ratio: rng.random_range(3.0..10.0),
                window_hrs: 24.0,
                cooccur_count: count,
            }
        })
        .collect();

    let dims = columns.len();
    let graph = MultilayerGraph {
        node_ids: (0..n).map(|i| format!("N{i:04}")).collect(),
        features: NodeFeatures {
            columns,
            values: raw.clone(),
            raw,
            scalers: Vec::new(),
            plant_classes: Vec::new(),
        },
        spatial,
        temporal,
        causal,
        metadata: GraphMetadata {
            config: GraphConfig::default(),
            theta_minutes: None,
            temporal_k: 3.0,
            theta_c_hrs: Default::default(),
            proximity_threshold_km: None,
            weather_coaffected_pairs: 0,
            z_threshold: None,
            causal_tested_cells: 0,
            observation_days: 0.0,
            base_feature_dims: dims,
            numeric_feature_dims: dims,
            total_feature_dims: dims,
        },
    };
    graph.validate()?;
    Ok(CommunityGraph { graph, bits, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_bit_majorities_and_layers_are_homophilous() {
        let c = community_graph(&CommunityConfig::default()).unwrap();
        for (b, y) in c.bits.iter().zip(&c.labels) {
            assert_eq!(*y, u8::from(b.iter().sum::<u8>() >= 2));
        }
        let same = |l: usize, e: &[(usize, usize)]| e.iter().filter(|(u, v)| c.bits[*u][l] == c.bits[*v][l]).count() as f64 / e.len() as f64;
        let s: Vec<_> = c.graph.spatial.iter().map(|e| (e.u, e.v)).collect();
        let t: Vec<_> = c.graph.temporal.iter().map(|e| (e.u, e.v)).collect();
        let k: Vec<_> = c.graph.causal.iter().map(|e| (e.u, e.v)).collect();
        assert!(same(0, &s) > 0.9 && same(1, &t) > 0.9 && same(2, &k) > 0.9);
        // Across layers the bits are independent, so homophily is near chance.
        assert!((same(1, &s) - 0.5).abs() < 0.1);
    }

    #[test]
    fn deterministic() {
        let a = community_graph(&CommunityConfig::default()).unwrap();
        let b = community_graph(&CommunityConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
