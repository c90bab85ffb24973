//! Weighted multilayer graph: one node per substation and three typed edge layers.

pub mod causal;
pub mod features;
pub mod geo;
pub mod spatial;
pub mod temporal;

use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::CleanDataset;
use crate::{Error, Result};

pub use causal::{CausalEdge, CausalLayer, CausalParams};
pub use features::{assemble_features, NodeFeatures, RiskCategory};
pub use geo::haversine_km;
pub use spatial::{SpatialEdge, SpatialLayer};
pub use temporal::{TemporalEdge, TemporalLayer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    pub temporal_percentile: f64,
    pub decay_minutes: f64,
    pub min_cooccurrence_floor: f64,
    pub proximity_percentile: f64,
    pub causal_window_percentile: f64,
    pub theta_max_hrs: f64,
    pub z_percentile: f64,
    pub causal_min_count: u32,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            temporal_percentile: 80.0,
            decay_minutes: 60.0,
            min_cooccurrence_floor: 3.0,
            proximity_percentile: 75.0,
            causal_window_percentile: 75.0,
            theta_max_hrs: 168.0,
            z_percentile: 85.0,
            causal_min_count: 3,
        }
    }
}

/// Every threshold actually used while building a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMetadata {
    pub config: GraphConfig,
    pub theta_minutes: Option<f64>,
    pub temporal_k: f64,
    pub theta_c_hrs: BTreeMap<String, f64>,
    pub proximity_threshold_km: Option<f64>,
    pub weather_coaffected_pairs: usize,
    pub z_threshold: Option<f64>,
    pub causal_tested_cells: usize,
    pub observation_days: f64,
    /// Width of the base vector (coordinates, topology, incidents, voltage).
    pub base_feature_dims: usize,
    /// Base vector plus the four risk counts.
    pub numeric_feature_dims: usize,
    pub total_feature_dims: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilayerGraph {
    pub node_ids: Vec<String>,
    pub features: NodeFeatures,
    pub spatial: Vec<SpatialEdge>,
    pub temporal: Vec<TemporalEdge>,
    pub causal: Vec<CausalEdge>,
    pub metadata: GraphMetadata,
}

impl MultilayerGraph {
    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let r = BufReader::new(std::fs::File::open(path)?);
        let g: MultilayerGraph = serde_json::from_reader(r)?;
        g.validate()?;
        Ok(g)
    }

    /// Checks edge endpoints and feature row counts.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        if self.features.n_rows() != n {
            return Err(Error::invalid(format!(
                "feature rows {} != node count {n}",
                self.features.n_rows()
            )));
        }
        let ends = self
            .spatial
            .iter()
            .map(|e| (e.u, e.v))
            .chain(self.temporal.iter().map(|e| (e.u, e.v)))
            .chain(self.causal.iter().map(|e| (e.u, e.v)));
        for (u, v) in ends {
            if u >= n || v >= n {
                return Err(Error::invalid(format!("edge ({u}, {v}) outside node range {n}")));
            }
        }
        Ok(())
    }
}

/// Builds all three layers and the node features from a clean dataset.
pub fn build_graph(clean: &CleanDataset, cfg: &GraphConfig) -> Result<MultilayerGraph> {
    if clean.substations.is_empty() {
        return Err(Error::config("no substations"));
    }
    let index = clean.substation_index();
    let node_of: Vec<usize> = clean
        .incidents
        .iter()
        .map(|i| {
            index
                .get(i.substation.as_str())
                .copied()
                .ok_or_else(|| Error::invalid(format!("incident {} has unknown substation {}", i.id, i.substation)))
        })
        .collect::<Result<_>>()?;

    let mut incidents = clean.incidents.clone();
    let mut order: Vec<usize> = (0..incidents.len()).collect();
    order.sort_by(|&a, &b| {
        incidents[a]
            .t_off
            .cmp(&incidents[b].t_off)
            .then_with(|| incidents[a].id.cmp(&incidents[b].id))
    });
    let node_of: Vec<usize> = order.iter().map(|&i| node_of[i]).collect();
    incidents = order.iter().map(|&i| incidents[i].clone()).collect();

    let temporal = temporal::build_temporal_layer(
        &incidents,
        &node_of,
        cfg.temporal_percentile,
        cfg.decay_minutes,
        cfg.min_cooccurrence_floor,
    )?;

    let mut contexts: Vec<spatial::NodeContext> = clean
        .substations
        .iter()
        .map(|s| spatial::NodeContext {
            lat: s.lat,
            lon: s.lon,
            voltage_kv: s.voltage_kv,
            ..Default::default()
        })
        .collect();
    for (inc, &u) in incidents.iter().zip(&node_of) {
        if !inc.city.is_empty() {
            contexts[u].cities.insert(inc.city.clone());
        }
        if !inc.feeder.is_empty() {
            contexts[u].feeders.insert(inc.feeder.clone());
        }
    }
    for f in &clean.feeders {
        if let Some(&u) = index.get(f.substation.as_str()) {
            contexts[u].feeders.insert(f.feeder.clone());
        }
    }
    let lines: Vec<spatial::NodeLine> = clean
        .resolved_lines
        .iter()
        .filter_map(|l| {
            Some(spatial::NodeLine {
                u: *index.get(l.u.as_str())?,
                v: *index.get(l.v.as_str())?,
                voltage_kv: l.const_volt,
                length_km: l.shape_length_km,
            })
        })
        .collect();
    let epoch = incidents.first().map(|i| i.t_off);
    let weather: Vec<(f64, usize)> = incidents
        .iter()
        .zip(&node_of)
        .filter(|(i, _)| RiskCategory::of_cause(&i.cause) == Some(RiskCategory::Weather))
        .map(|(i, &u)| (temporal::minutes_since(epoch.expect("non-empty"), i.t_off), u))
        .collect();
    let spatial_layer = spatial::build_spatial_layer(
        &contexts,
        &lines,
        &weather,
        temporal.theta_minutes,
        cfg.proximity_percentile,
    )?;

    let observation_days = match (incidents.first(), incidents.last()) {
        (Some(a), Some(b)) => (b.t_off - a.t_off).num_seconds() as f64 / 86_400.0,
        _ => 0.0,
    };
    let mut streams = causal::CauseStreams::default();
    for (inc, &u) in incidents.iter().zip(&node_of) {
        let t = temporal::minutes_since(epoch.expect("non-empty"), inc.t_off) / 60.0;
        streams.push(&inc.cause, u, t);
    }
    let pairs: Vec<(usize, usize)> = spatial_layer.edges.iter().map(|e| (e.u, e.v)).collect();
    let params = CausalParams {
        window_percentile: cfg.causal_window_percentile,
        theta_max_hrs: cfg.theta_max_hrs,
        z_percentile: cfg.z_percentile,
        min_count: cfg.causal_min_count,
    };
    let causal_layer = causal::build_causal_layer(&mut streams, &pairs, observation_days, &params);

    let features = assemble_features(clean, &spatial_layer.edges);
    let metadata = GraphMetadata {
        config: *cfg,
        theta_minutes: temporal.theta_minutes,
        temporal_k: temporal.k,
        theta_c_hrs: causal_layer.window_hrs,
        proximity_threshold_km: spatial_layer.proximity_threshold_km,
        weather_coaffected_pairs: spatial_layer.coaffected_pairs,
        z_threshold: causal_layer.z_threshold,
        causal_tested_cells: causal_layer.tested_cells,
        observation_days,
        base_feature_dims: features::BASE_COLUMNS.len(),
        numeric_feature_dims: features::BASE_COLUMNS.len() + features::RISK_COLUMNS.len(),
        total_feature_dims: features.n_cols(),
    };
    Ok(MultilayerGraph {
        node_ids: clean.substations.iter().map(|s| s.id.clone()).collect(),
        features,
        spatial: spatial_layer.edges,
        temporal: temporal.edges,
        causal: causal_layer.edges,
        metadata,
    })
}
