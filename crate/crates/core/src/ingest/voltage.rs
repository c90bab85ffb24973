//! Missing-voltage imputation.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VoltageProvenance {
    #[default]
    Original,
    LineDescription,
    FeederMode,
    RegionalDefault,
    /// Every strategy failed; the substation is flagged.
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Imputation {
    pub voltage_kv: Option<f64>,
    pub provenance: VoltageProvenance,
}

fn kv_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(\d+(?:\.\d+)?)\s*kv\b").expect("static regex"))
}

/// All `<number>kV` tags in a free-text description.
pub fn extract_kv_tags(description: &str) -> Vec<f64> {
    kv_pattern()
        .captures_iter(description)
        .filter_map(|c| c[1].parse::<f64>().ok())
        .filter(|v| *v > 0.0)
        .collect()
}

/// First applicable of: line-description tags, feeder mode, regional mode.
///
/// `existing` short-circuits: a known voltage is never overwritten.
pub fn impute_voltage(
    existing: Option<f64>,
    line_descriptions: &[&str],
    feeder_voltages: &[f64],
    regional_voltages: &[f64],
) -> Imputation {
    if let Some(v) = existing {
        return Imputation {
            voltage_kv: Some(v),
            provenance: VoltageProvenance::Original,
        };
    }
    let tags: Vec<f64> = line_descriptions.iter().flat_map(|d| extract_kv_tags(d)).collect();
    if let Some(v) = stats::mode(&tags) {
        return Imputation {
            voltage_kv: Some(v),
            provenance: VoltageProvenance::LineDescription,
        };
    }
    if let Some(v) = stats::mode(feeder_voltages) {
        return Imputation {
            voltage_kv: Some(v),
            provenance: VoltageProvenance::FeederMode,
        };
    }
    if let Some(v) = stats::mode(regional_voltages) {
        return Imputation {
            voltage_kv: Some(v),
            provenance: VoltageProvenance::RegionalDefault,
        };
    }
    Imputation {
        voltage_kv: None,
        provenance: VoltageProvenance::Missing,
    }
}
