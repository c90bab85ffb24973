//! Predictive-maintenance targets with cutoff-aware thresholds.
//!
//! A substation is positive when all of the following hold, using only
//! incidents with `t_off ≤ cutoff`:
//!
//! - it had an outage whose cause is severe and whose equipment is critical;
//! - its accumulated SAIDI exceeds the 90th percentile threshold;
//! - no major incident followed that outage within `window_days`.
//!
//! SAIDI is built from per-incident contributions
//! `s_k = duration_hours · customers / served`, where `served` is the
//! largest interruption ever recorded at the substation. The substation
//! index is `Σ s_k` and `saidi_p90` is the 90th percentile of the `s_k`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{CleanDataset, IncidentRecord, TIME_FORMAT};
use crate::stats;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelConfig {
    /// Quiet period after the triggering outage.
    pub window_days: i64,
    pub severity_percentile: f64,
    /// Failure-count percentile above which equipment is "high frequency".
    pub equipment_count_percentile: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            window_days: 180,
            severity_percentile: 90.0,
            equipment_count_percentile: 75.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityThresholds {
    pub cutoff: NaiveDateTime,
    pub duration_p90: f64,
    pub customers_p90: f64,
    pub saidi_p90: f64,
    pub equipment_count_threshold: f64,
    pub severe_causes: BTreeSet<String>,
    pub critical_equipment: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaintenanceLabel {
    pub substation_id: String,
    pub y: u8,
    #[serde(with = "naive_fmt")]
    pub cutoff: NaiveDateTime,
    pub evidence_id: Option<String>,
    /// The quiet window of the evidence incident extends past the cutoff.
    pub right_truncated: bool,
}

mod naive_fmt {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::ingest::TIME_FORMAT;

    pub fn serialize<S: Serializer>(t: &NaiveDateTime, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.format(TIME_FORMAT).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDateTime, D::Error> {
        let raw = String::deserialize(d)?;
        NaiveDateTime::parse_from_str(&raw, TIME_FORMAT).map_err(serde::de::Error::custom)
    }
}

/// Largest interruption seen per substation.
fn served_customers<'a>(incidents: &[&'a IncidentRecord]) -> BTreeMap<&'a str, f64> {
    let mut served: BTreeMap<&str, f64> = BTreeMap::new();
    for i in incidents {
        let e = served.entry(i.substation.as_str()).or_insert(0.0);
        *e = e.max(i.customers_affected as f64);
    }
    served
}

/// Per-incident SAIDI contribution in hours.
pub fn incident_saidi(inc: &IncidentRecord, served: f64) -> f64 {
    if served <= 0.0 {
        0.0
    } else {
        inc.duration_minutes() / 60.0 * inc.customers_affected as f64 / served
    }
}

fn visible(incidents: &[IncidentRecord], cutoff: NaiveDateTime) -> Vec<&IncidentRecord> {
    incidents.iter().filter(|i| i.t_off <= cutoff).collect()
}

/// Severity thresholds from incidents with `t_off ≤ cutoff`.
pub fn compute_thresholds(
    incidents: &[IncidentRecord],
    cutoff: NaiveDateTime,
    cfg: &LabelConfig,
) -> Result<SeverityThresholds> {
    let seen = visible(incidents, cutoff);
    if seen.is_empty() {
        return Err(Error::Empty("no incidents at or before the cutoff"));
    }
    let q = cfg.severity_percentile;
    let durations: Vec<f64> = seen.iter().map(|i| i.duration_minutes()).collect();
    let customers: Vec<f64> = seen.iter().map(|i| i.customers_affected as f64).collect();
    let duration_p90 = stats::percentile(&durations, q)?;
    let customers_p90 = stats::percentile(&customers, q)?;

    let served = served_customers(&seen);
    let contributions: Vec<f64> = seen.iter().map(|i| incident_saidi(i, served[i.substation.as_str()])).collect();
    let saidi_p90 = stats::percentile(&contributions, q)?;

    let mut by_cause: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut by_equipment: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (inc, s) in seen.iter().zip(&contributions) {
        let e = by_cause.entry(inc.cause.as_str()).or_default();
        e.0.push(inc.duration_minutes());
        e.1.push(inc.customers_affected as f64);
        by_equipment.entry(inc.equipment.as_str()).or_default().push(*s);
    }
    let severe_causes = by_cause
        .iter()
        .filter(|(_, (d, c))| stats::mean(d) > duration_p90 && stats::mean(c) > customers_p90)
        .map(|(k, _)| k.to_string())
        .collect();
    let counts: Vec<f64> = by_equipment.values().map(|v| v.len() as f64).collect();
    let equipment_count_threshold = stats::percentile(&counts, cfg.equipment_count_percentile)?;
    let critical_equipment = by_equipment
        .iter()
        .filter(|(_, s)| s.len() as f64 > equipment_count_threshold && stats::mean(s) > saidi_p90)
        .map(|(k, _)| k.to_string())
        .collect();
    Ok(SeverityThresholds {
        cutoff,
        duration_p90,
        customers_p90,
        saidi_p90,
        equipment_count_threshold,
        severe_causes,
        critical_equipment,
    })
}

/// Severe cause or duration above the p90.
pub fn is_major(inc: &IncidentRecord, th: &SeverityThresholds) -> bool {
    th.severe_causes.contains(&inc.cause) || inc.duration_minutes() > th.duration_p90
}

/// Labels every substation in `substation_ids` at `cutoff`.
pub fn label_substations(
    substation_ids: &[String],
    incidents: &[IncidentRecord],
    th: &SeverityThresholds,
    cutoff: NaiveDateTime,
    cfg: &LabelConfig,
) -> Vec<MaintenanceLabel> {
    let seen = visible(incidents, cutoff);
    let served = served_customers(&seen);
    let mut per_sub: BTreeMap<&str, Vec<&IncidentRecord>> = BTreeMap::new();
    for inc in &seen {
        per_sub.entry(inc.substation.as_str()).or_default().push(inc);
    }
    for list in per_sub.values_mut() {
        list.sort_by(|a, b| a.t_off.cmp(&b.t_off).then_with(|| a.id.cmp(&b.id)));
    }
    let window = Duration::days(cfg.window_days);

    substation_ids
        .par_iter()
        .map(|id| {
            let negative = MaintenanceLabel {
                substation_id: id.clone(),
                y: 0,
                cutoff,
                evidence_id: None,
                right_truncated: false,
            };
            let Some(list) = per_sub.get(id.as_str()) else {
                return negative;
            };
            let served_here = served.get(id.as_str()).copied().unwrap_or(0.0);
            let saidi: f64 = list.iter().map(|i| incident_saidi(i, served_here)).sum();
            if saidi <= th.saidi_p90 {
                return negative;
            }
            let evidence = list.iter().enumerate().rev().find(|(k, inc)| {
                let qualifies = th.severe_causes.contains(&inc.cause) && th.critical_equipment.contains(&inc.equipment);
                qualifies
                    && !list[k + 1..]
                        .iter()
                        .any(|next| next.t_off > inc.t_off && next.t_off <= inc.t_off + window && is_major(next, th))
            });
            match evidence {
                Some((_, inc)) => MaintenanceLabel {
                    substation_id: id.clone(),
                    y: 1,
                    cutoff,
                    evidence_id: Some(inc.id.clone()),
                    right_truncated: inc.t_off + window > cutoff,
                },
                None => negative,
            }
        })
        .collect()
}

/// Thresholds and labels for one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldLabels {
    pub thresholds: SeverityThresholds,
    pub labels: Vec<MaintenanceLabel>,
}

/// Thresholds plus labels at `cutoff` for every substation of `clean`.
pub fn labels_at(clean: &CleanDataset, cutoff: NaiveDateTime, cfg: &LabelConfig) -> Result<FoldLabels> {
    let first = clean
        .incidents
        .iter()
        .map(|i| i.t_off)
        .min()
        .ok_or(Error::Empty("no incidents"))?;
    if cutoff < first {
        return Err(Error::invalid(format!(
            "cutoff {} precedes the first incident {}",
            cutoff.format(TIME_FORMAT),
            first.format(TIME_FORMAT)
        )));
    }
    let thresholds = compute_thresholds(&clean.incidents, cutoff, cfg)?;
    let ids: Vec<String> = clean.substations.iter().map(|s| s.id.clone()).collect();
    let labels = label_substations(&ids, &clean.incidents, &thresholds, cutoff, cfg);
    Ok(FoldLabels { thresholds, labels })
}

/// Labels for each cutoff; the matching feature view is `clean.truncated(cutoff)`.
pub fn fold_cutoff_labels(clean: &CleanDataset, cutoffs: &[NaiveDateTime], cfg: &LabelConfig) -> Result<Vec<FoldLabels>> {
    cutoffs.iter().map(|&c| labels_at(clean, c, cfg)).collect()
}

/// Latest `t_off` in the dataset.
pub fn dataset_end(clean: &CleanDataset) -> Result<NaiveDateTime> {
    clean.incidents.iter().map(|i| i.t_off).max().ok_or(Error::Empty("no incidents"))
}

pub fn positive_rate(labels: &[MaintenanceLabel]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|l| l.y == 1).count() as f64 / labels.len() as f64
}

pub fn write_labels(path: &Path, labels: &[MaintenanceLabel]) -> Result<()> {
    crate::ingest::write_csv(path, labels)
}

pub fn read_labels(path: &Path) -> Result<Vec<MaintenanceLabel>> {
    crate::ingest::read_csv(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(day: i64) -> NaiveDateTime {
        NaiveDateTime::parse_from_str("2018-01-01 00:00:00", TIME_FORMAT).unwrap() + Duration::days(day)
    }

    fn inc(id: &str, sub: &str, day: i64, minutes: i64, cause: &str, equip: &str, cust: u64) -> IncidentRecord {
        IncidentRecord {
            id: id.into(),
            substation_raw: sub.into(),
            substation: sub.into(),
            t_off: t(day),
            t_on: t(day) + Duration::minutes(minutes),
            cause: cause.into(),
            equipment: equip.into(),
            customers_affected: cust,
            feeder: String::new(),
            city: String::new(),
        }
    }

    /// Twenty routine incidents spread over substations B..E plus `extra`.
    fn population(extra: Vec<IncidentRecord>) -> Vec<IncidentRecord> {
        let mut v: Vec<IncidentRecord> = (0..20)
            .map(|k| {
                let sub = ["B", "C", "D", "E"][k % 4];
                let equip = ["SWITCH", "FUSE", "BREAKER", "CABLE"][k % 4];
                inc(&format!("r{k}"), sub, k as i64 * 20, 60, "ANIMAL", equip, 100)
            })
            .collect();
        // Transformers fail often and long enough to be critical.
        for k in 0..6 {
            let sub = ["B", "C", "D"][k % 3];
            v.push(inc(&format!("x{k}"), sub, 5 + k as i64 * 50, 900, "ANIMAL", "TRANSFORMER", 100));
        }
        v.extend(extra);
        v.sort_by(|a, b| a.t_off.cmp(&b.t_off));
        v
    }

    fn ids() -> Vec<String> {
        ["A", "B", "C", "D", "E", "Z"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn uniform_durations_have_no_severe_cause() {
        let incs: Vec<IncidentRecord> = (0..10)
            .map(|k| inc(&format!("u{k}"), "A", k, 60, ["X", "Y"][k as usize % 2], "E", 10))
            .collect();
        let th = compute_thresholds(&incs, t(100), &LabelConfig::default()).unwrap();
        assert!(th.severe_causes.is_empty());
    }

    #[test]
    fn planted_heavy_cause_is_the_only_severe_one() {
        let incs = population(vec![inc("f", "A", 30, 6000, "FIRE", "TRANSFORMER", 1000)]);
        let th = compute_thresholds(&incs, t(2000), &LabelConfig::default()).unwrap();
        assert_eq!(th.severe_causes, BTreeSet::from(["FIRE".to_string()]));
        assert!(th.critical_equipment.contains("TRANSFORMER"));
        assert!(!th.critical_equipment.contains("SWITCH"));
    }

    #[test]
    fn saidi_p90_on_planted_values() {
        let vals: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_abs_diff_eq!(stats::percentile(&vals, 90.0).unwrap(), 9.1, epsilon = 1e-12);
        // Same through the incident path: one substation, served = 10, durations 1..10 h at 10 customers.
        let incs: Vec<IncidentRecord> = (1..=10)
            .map(|h| inc(&format!("s{h}"), "A", h, h * 60, "X", "E", 10))
            .collect();
        let th = compute_thresholds(&incs, t(100), &LabelConfig::default()).unwrap();
        assert_abs_diff_eq!(th.saidi_p90, 9.1, epsilon = 1e-12);
    }

    #[test]
    fn quiet_window_decides_the_label() {
        let cfg = LabelConfig::default();
        let quiet = population(vec![inc("f", "A", 30, 6000, "FIRE", "TRANSFORMER", 1000)]);
        let th = compute_thresholds(&quiet, t(2000), &cfg).unwrap();
        let labels = label_substations(&ids(), &quiet, &th, t(2000), &cfg);
        let a = &labels[0];
        assert_eq!((a.y, a.evidence_id.as_deref(), a.right_truncated), (1, Some("f"), false));
        assert!(labels[1..].iter().all(|l| l.y == 0));

        let noisy = population(vec![
            inc("f", "A", 30, 6000, "FIRE", "TRANSFORMER", 1000),
            inc("g", "A", 120, 5000, "ANIMAL", "SWITCH", 10),
        ]);
        let th = compute_thresholds(&noisy, t(2000), &cfg).unwrap();
        assert!(is_major(&noisy.iter().find(|i| i.id == "g").unwrap().clone(), &th));
        let labels = label_substations(&ids(), &noisy, &th, t(2000), &cfg);
        assert_eq!(labels[0].y, 0);
    }

    #[test]
    fn substation_without_incidents_is_negative() {
        let incs = population(vec![]);
        let cfg = LabelConfig::default();
        let th = compute_thresholds(&incs, t(2000), &cfg).unwrap();
        let labels = label_substations(&ids(), &incs, &th, t(2000), &cfg);
        assert_eq!(labels[5].y, 0);
        assert!(labels[5].evidence_id.is_none());
    }

    #[test]
    fn cutoff_excluding_the_evidence_gives_negative() {
        let cfg = LabelConfig::default();
        let incs = population(vec![inc("f", "A", 300, 6000, "FIRE", "TRANSFORMER", 1000)]);
        let th = compute_thresholds(&incs, t(299), &cfg).unwrap();
        let labels = label_substations(&ids(), &incs, &th, t(299), &cfg);
        assert_eq!(labels[0].y, 0);
    }

    #[test]
    fn right_truncation_is_flagged() {
        let cfg = LabelConfig::default();
        let incs = population(vec![inc("f", "A", 300, 6000, "FIRE", "TRANSFORMER", 1000)]);
        let th = compute_thresholds(&incs, t(350), &cfg).unwrap();
        let labels = label_substations(&ids(), &incs, &th, t(350), &cfg);
        assert_eq!(labels[0].y, 1);
        assert!(labels[0].right_truncated);
    }
}
