//! Node feature assembly.
//!
//! Column layout: `lat, lon` raw, then the numeric block (six base columns and
//! four risk counts) z-standardized, then the plant-class one-hot.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::spatial::SpatialEdge;
use crate::ingest::CleanDataset;
use crate::stats::{self, Standardizer};

/// Coarse cause grouping used for risk counts and weather co-occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskCategory {
    Vegetation,
    Lightning,
    Weather,
    Equipment,
}

impl RiskCategory {
    pub const ALL: [RiskCategory; 4] = [
        RiskCategory::Vegetation,
        RiskCategory::Lightning,
        RiskCategory::Weather,
        RiskCategory::Equipment,
    ];

    /// Keyword classification of a free-text cause.
    pub fn of_cause(cause: &str) -> Option<RiskCategory> {
        let c = cause.to_ascii_uppercase();
        let has = |keys: &[&str]| keys.iter().any(|k| c.contains(k));
        if has(&["VEGETATION", "TREE", "LIMB"]) {
            Some(RiskCategory::Vegetation)
        } else if has(&["LIGHTNING"]) {
            Some(RiskCategory::Lightning)
        } else if has(&["WEATHER", "WIND", "STORM", "ICE", "SNOW", "HAIL"]) {
            Some(RiskCategory::Weather)
        } else if has(&["EQUIP", "FAIL", "DETERIORAT"]) {
            Some(RiskCategory::Equipment)
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

pub const BASE_COLUMNS: [&str; 8] = [
    "lat",
    "lon",
    "n_connections",
    "avg_line_voltage_kv",
    "total_line_length_km",
    "incident_count",
    "mean_saifi",
    "nominal_voltage_kv",
];
pub const RISK_COLUMNS: [&str; 4] = ["risk_vegetation", "risk_lightning", "risk_weather", "risk_equipment"];
/// Index of the first risk-count column.
pub const RISK_OFFSET: usize = 8;
/// Columns `[2, 12)` are standardized.
pub const NUMERIC_RANGE: std::ops::Range<usize> = 2..12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeFeatures {
    pub columns: Vec<String>,
    /// Row per node, standardized as described in the module docs.
    pub values: Vec<Vec<f64>>,
    /// Same layout before standardization.
    pub raw: Vec<Vec<f64>>,
    /// One scaler per column in `NUMERIC_RANGE`.
    pub scalers: Vec<Standardizer>,
    pub plant_classes: Vec<String>,
}

impl NodeFeatures {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    /// Raw risk counts `[vegetation, lightning, weather, equipment]` per node.
    pub fn risk_counts(&self) -> Vec<[f64; 4]> {
        self.raw
            .iter()
            .map(|r| [r[RISK_OFFSET], r[RISK_OFFSET + 1], r[RISK_OFFSET + 2], r[RISK_OFFSET + 3]])
            .collect()
    }
}

/// Column-wise population z-scores with the zero-sd guard.
pub fn standardize_column(values: &[f64]) -> (Vec<f64>, Standardizer) {
    let s = Standardizer::fit(values);
    (values.iter().map(|v| s.apply(*v)).collect(), s)
}

fn fill_median(col: &mut [Option<f64>]) -> Vec<f64> {
    let known: Vec<f64> = col.iter().flatten().copied().collect();
    let fill = stats::median(&known).unwrap_or(0.0);
    col.iter_mut().map(|v| v.unwrap_or(fill)).collect()
}

/// Builds node features for the substations of `clean` (in table order).
pub fn assemble_features(clean: &CleanDataset, spatial: &[SpatialEdge]) -> NodeFeatures {
    let n = clean.substations.len();
    let index = clean.substation_index();

    let mut degree = vec![0.0; n];
    let mut line_volts: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut line_len = vec![0.0; n];
    for e in spatial {
        degree[e.u] += 1.0;
        degree[e.v] += 1.0;
        if e.has_line == 1 {
            for w in [e.u, e.v] {
                if let Some(kv) = e.line_voltage_kv {
                    line_volts[w].push(kv);
                }
                line_len[w] += e.line_length_km;
            }
        }
    }

    let mut count = vec![0.0; n];
    let mut customers: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut risk = vec![[0.0; 4]; n];
    for inc in &clean.incidents {
        let Some(&i) = index.get(inc.substation.as_str()) else {
            continue;
        };
        count[i] += 1.0;
        customers[i].push(inc.customers_affected as f64);
        if let Some(cat) = RiskCategory::of_cause(&inc.cause) {
            risk[i][cat.index()] += 1.0;
        }
    }
    // Customers served is approximated by the largest interruption seen at the substation.
    let saifi: Vec<f64> = customers
        .iter()
        .map(|cs| {
            let served = cs.iter().copied().fold(0.0, f64::max);
            if served > 0.0 {
                stats::mean(&cs.iter().map(|c| c / served).collect::<Vec<_>>())
            } else {
                0.0
            }
        })
        .collect();
    let mut avg_kv: Vec<Option<f64>> = line_volts
        .iter()
        .map(|v| (!v.is_empty()).then(|| stats::mean(v)))
        .collect();
    let avg_kv = fill_median(&mut avg_kv);
    let mut nominal: Vec<Option<f64>> = clean.substations.iter().map(|s| s.voltage_kv).collect();
    let nominal = fill_median(&mut nominal);

    let classes: Vec<String> = clean
        .substations
        .iter()
        .map(|s| s.plant_class.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let class_pos: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();

    let raw: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let s = &clean.substations[i];
            let mut row = vec![
                s.lat,
                s.lon,
                degree[i],
                avg_kv[i],
                line_len[i],
                count[i],
                saifi[i],
                nominal[i],
            ];
            row.extend_from_slice(&risk[i]);
            let mut onehot = vec![0.0; classes.len()];
            onehot[class_pos[s.plant_class.as_str()]] = 1.0;
            row.extend(onehot);
            row
        })
        .collect();

    let mut values = raw.clone();
    let mut scalers = Vec::new();
    for c in NUMERIC_RANGE {
        let col: Vec<f64> = raw.iter().map(|r| r[c]).collect();
        let (z, s) = standardize_column(&col);
        for (row, v) in values.iter_mut().zip(z) {
            row[c] = v;
        }
        scalers.push(s);
    }

    let mut columns: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    columns.extend(RISK_COLUMNS.iter().map(|s| s.to_string()));
    columns.extend(classes.iter().map(|c| format!("plant_class={c}")));
    NodeFeatures {
        columns,
        values,
        raw,
        scalers,
        plant_classes: classes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_column_is_zeroed() {
        let (z, _) = standardize_column(&[5.0, 5.0, 5.0]);
        assert_eq!(z, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn hand_z_scores() {
        let (z, s) = standardize_column(&[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(s.mean, 2.0);
        assert_abs_diff_eq!(s.sd, (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(z[0], -1.224_744_871_391_589, epsilon = 1e-12);
        assert_eq!(z[1], 0.0);
        assert_abs_diff_eq!(z[2], 1.224_744_871_391_589, epsilon = 1e-12);
    }

    #[test]
    fn cause_categories() {
        assert_eq!(RiskCategory::of_cause("Tree contact"), Some(RiskCategory::Vegetation));
        assert_eq!(RiskCategory::of_cause("LIGHTNING"), Some(RiskCategory::Lightning));
        assert_eq!(RiskCategory::of_cause("high wind"), Some(RiskCategory::Weather));
        assert_eq!(RiskCategory::of_cause("EQUIPMENT"), Some(RiskCategory::Equipment));
        assert_eq!(RiskCategory::of_cause("ANIMAL"), None);
    }
}
