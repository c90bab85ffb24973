//! Cleaning and reconciliation of raw incident, substation, line and feeder tables.
//!
//! A raw incident is retained only if both timestamps parse, are ordered, and
//! its substation name resolves to exactly one canonical substation. Every
//! other record ends up in [`CleanDataset::rejects`] with a reason code, so
//! `retained + rejects == raw` always holds.

pub mod fuzzy;
pub mod voltage;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::graphbuild::geo::haversine_km;
use crate::{Error, Result};

pub use fuzzy::{fuzzy_match, match_line_endpoint, normalize_name, similarity, MatchResult};
pub use voltage::{impute_voltage, Imputation, VoltageProvenance};

/// Canonical timestamp layout used in every CSV this crate reads or writes.
pub const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";
const TIME_FORMAT_T: &str = "%Y-%m-%dT%H:%M:%S";

/// One incident row exactly as it appears in the source CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawIncident {
    pub id: String,
    pub substation: String,
    #[serde(default)]
    pub t_off: String,
    #[serde(default)]
    pub t_on: String,
    pub cause: String,
    pub equipment: String,
    #[serde(default)]
    pub customers_affected: String,
    #[serde(default)]
    pub feeder: String,
    #[serde(default)]
    pub city: String,
}

/// A retained outage event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncidentRecord {
    pub id: String,
    pub substation_raw: String,
    /// Canonical substation id resolved during cleaning.
    pub substation: String,
    pub t_off: NaiveDateTime,
    pub t_on: NaiveDateTime,
    pub cause: String,
    pub equipment: String,
    pub customers_affected: u64,
    pub feeder: String,
    pub city: String,
}

impl IncidentRecord {
    pub fn duration_minutes(&self) -> f64 {
        (self.t_on - self.t_off).num_seconds() as f64 / 60.0
    }

    /// Customer minutes interrupted.
    pub fn cmi(&self) -> f64 {
        self.duration_minutes() * self.customers_affected as f64
    }

    pub fn to_raw(&self) -> RawIncident {
        RawIncident {
            id: self.id.clone(),
            substation: self.substation_raw.clone(),
            t_off: self.t_off.format(TIME_FORMAT).to_string(),
            t_on: self.t_on.format(TIME_FORMAT).to_string(),
            cause: self.cause.clone(),
            equipment: self.equipment.clone(),
            customers_affected: self.customers_affected.to_string(),
            feeder: self.feeder.clone(),
            city: self.city.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstationRecord {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub voltage_kv: Option<f64>,
    #[serde(default)]
    pub plant_class: String,
    #[serde(default)]
    pub voltage_provenance: VoltageProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub name: String,
    pub endpoint_a: String,
    pub endpoint_b: String,
    pub const_volt: f64,
    pub shape_length_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederRecord {
    pub feeder: String,
    pub substation: String,
    pub voltage_kv: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    MissingTime,
    InvertedTime,
    NoSubstation,
    BadTimeFormat,
    BadCustomers,
}

impl RejectReason {
    pub fn code(&self) -> &'static str {
        match self {
            RejectReason::MissingTime => "MISSING_TIME",
            RejectReason::InvertedTime => "INVERTED_TIME",
            RejectReason::NoSubstation => "NO_SUBSTATION",
            RejectReason::BadTimeFormat => "BAD_TIME_FORMAT",
            RejectReason::BadCustomers => "BAD_CUSTOMERS",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub record_id: String,
    pub reason: RejectReason,
}

/// A transmission line whose endpoints both resolved to canonical substations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedLine {
    pub name: String,
    pub u: String,
    pub v: String,
    pub const_volt: f64,
    pub shape_length_km: f64,
}

/// A line with an endpoint in the manual-review score band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineReview {
    pub name: String,
    pub endpoint_a: String,
    pub match_a: Option<String>,
    pub score_a: u32,
    pub endpoint_b: String,
    pub match_b: Option<String>,
    pub score_b: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanDataset {
    pub incidents: Vec<IncidentRecord>,
    pub substations: Vec<SubstationRecord>,
    pub lines: Vec<LineRecord>,
    pub feeders: Vec<FeederRecord>,
    pub resolved_lines: Vec<ResolvedLine>,
    pub line_review: Vec<LineReview>,
    pub rejects: Vec<Reject>,
}

impl CleanDataset {
    /// Incidents with `t_off ≤ cutoff`; everything else is cloned unchanged.
    pub fn truncated(&self, cutoff: NaiveDateTime) -> CleanDataset {
        CleanDataset {
            incidents: self.incidents.iter().filter(|i| i.t_off <= cutoff).cloned().collect(),
            ..self.clone()
        }
    }

    pub fn substation_index(&self) -> BTreeMap<&str, usize> {
        self.substations.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    pub tau: f64,
    pub line_accept_score: u32,
    pub line_review_score: u32,
    pub region_radius_km: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            tau: fuzzy::INCIDENT_TAU,
            line_accept_score: fuzzy::LINE_ACCEPT_SCORE,
            line_review_score: fuzzy::LINE_REVIEW_SCORE,
            region_radius_km: 50.0,
        }
    }
}

pub fn parse_timestamp(raw: &str) -> Result<Option<NaiveDateTime>, RejectReason> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    NaiveDateTime::parse_from_str(s, TIME_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, TIME_FORMAT_T))
        .map(Some)
        .map_err(|_| RejectReason::BadTimeFormat)
}

/// Resolves raw substation names to canonical ids: exact normalized match
/// first, Levenshtein similarity ≥ `tau` otherwise.
pub struct SubstationResolver {
    ids: Vec<String>,
    by_normalized: BTreeMap<String, String>,
    tau: f64,
}

impl SubstationResolver {
    pub fn new(substations: &[SubstationRecord], tau: f64) -> Self {
        let ids: Vec<String> = substations.iter().map(|s| s.id.clone()).collect();
        let by_normalized = ids.iter().map(|id| (normalize_name(id), id.clone())).collect();
        SubstationResolver { ids, by_normalized, tau }
    }

    pub fn resolve(&self, raw: &str) -> Option<String> {
        if let Some(id) = self.by_normalized.get(&normalize_name(raw)) {
            return Some(id.clone());
        }
        fuzzy_match(raw, &self.ids, self.tau).matched_id().map(str::to_owned)
    }
}

fn clean_one(raw: &RawIncident, resolved: Option<&String>) -> Result<IncidentRecord, RejectReason> {
    let t_off = parse_timestamp(&raw.t_off)?;
    let t_on = parse_timestamp(&raw.t_on)?;
    let (Some(t_off), Some(t_on)) = (t_off, t_on) else {
        return Err(RejectReason::MissingTime);
    };
    if t_off > t_on {
        return Err(RejectReason::InvertedTime);
    }
    let substation = resolved.ok_or(RejectReason::NoSubstation)?.clone();
    let customers_affected = match raw.customers_affected.trim() {
        "" => 0,
        s => s.parse::<u64>().map_err(|_| RejectReason::BadCustomers)?,
    };
    Ok(IncidentRecord {
        id: raw.id.clone(),
        substation_raw: raw.substation.clone(),
        substation,
        t_off,
        t_on,
        cause: raw.cause.trim().to_string(),
        equipment: raw.equipment.trim().to_string(),
        customers_affected,
        feeder: raw.feeder.trim().to_string(),
        city: raw.city.trim().to_string(),
    })
}

/// Splits raw incidents into retained records and coded rejects.
///
/// Retained incidents are sorted by `(t_off, id)`.
pub fn clean_incidents(
    raw: &[RawIncident],
    substations: &[SubstationRecord],
    tau: f64,
) -> Result<(Vec<IncidentRecord>, Vec<Reject>)> {
    if substations.is_empty() {
        return Err(Error::config("substation table is empty"));
    }
    let resolver = SubstationResolver::new(substations, tau);
    let mut names: Vec<&str> = raw.iter().map(|r| r.substation.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let resolved: BTreeMap<&str, Option<String>> =
        names.par_iter().map(|n| (*n, resolver.resolve(n))).collect();

    let outcomes: Vec<Result<IncidentRecord, RejectReason>> = raw
        .par_iter()
        .map(|r| clean_one(r, resolved[r.substation.as_str()].as_ref()))
        .collect();
    let mut incidents = Vec::new();
    let mut rejects = Vec::new();
    for (r, outcome) in raw.iter().zip(outcomes) {
        match outcome {
            Ok(rec) => incidents.push(rec),
            Err(reason) => rejects.push(Reject {
                record_id: r.id.clone(),
                reason,
            }),
        }
    }
    incidents.sort_by(|a, b| a.t_off.cmp(&b.t_off).then_with(|| a.id.cmp(&b.id)));
    Ok((incidents, rejects))
}

/// Cleans raw incidents against a substation table.
pub fn clean_dataset(raw: &[RawIncident], substations: &[SubstationRecord], tau: f64) -> Result<CleanDataset> {
    let (incidents, rejects) = clean_incidents(raw, substations, tau)?;
    Ok(CleanDataset {
        incidents,
        substations: substations.to_vec(),
        lines: Vec::new(),
        feeders: Vec::new(),
        resolved_lines: Vec::new(),
        line_review: Vec::new(),
        rejects,
    })
}

/// Resolves line endpoints on the 0–100 score scale.
///
/// Returns accepted lines (both endpoints ≥ accept, distinct substations) and
/// lines with at least one endpoint in the review band and none below it.
pub fn match_lines(
    lines: &[LineRecord],
    substations: &[SubstationRecord],
    cfg: &IngestConfig,
) -> (Vec<ResolvedLine>, Vec<LineReview>) {
    let ids: Vec<String> = substations.iter().map(|s| s.id.clone()).collect();
    let results: Vec<(MatchResult, MatchResult)> = lines
        .par_iter()
        .map(|l| {
            (
                match_line_endpoint(&l.endpoint_a, &ids, cfg.line_accept_score, cfg.line_review_score),
                match_line_endpoint(&l.endpoint_b, &ids, cfg.line_accept_score, cfg.line_review_score),
            )
        })
        .collect();
    let mut resolved = Vec::new();
    let mut review = Vec::new();
    for (line, (a, b)) in lines.iter().zip(results) {
        match (&a, &b) {
            (MatchResult::Matched { id: u, .. }, MatchResult::Matched { id: v, .. }) => {
                if u != v {
                    resolved.push(ResolvedLine {
                        name: line.name.clone(),
                        u: u.clone(),
                        v: v.clone(),
                        const_volt: line.const_volt,
                        shape_length_km: line.shape_length_km.max(0.0),
                    });
                }
            }
            (MatchResult::None, _) | (_, MatchResult::None) => {}
            _ => {
                let parts = |m: &MatchResult| match m {
                    MatchResult::Matched { id, similarity } | MatchResult::Review { id, similarity } => {
                        (Some(id.clone()), fuzzy::line_score(*similarity))
                    }
                    MatchResult::None => (None, 0),
                };
                let (match_a, score_a) = parts(&a);
                let (match_b, score_b) = parts(&b);
                review.push(LineReview {
                    name: line.name.clone(),
                    endpoint_a: line.endpoint_a.clone(),
                    match_a,
                    score_a,
                    endpoint_b: line.endpoint_b.clone(),
                    match_b,
                    score_b,
                });
            }
        }
    }
    (resolved, review)
}

/// Fills missing substation voltages; known voltages are never touched.
pub fn impute_voltages(
    substations: &[SubstationRecord],
    resolved_lines: &[ResolvedLine],
    feeders: &[FeederRecord],
    cfg: &IngestConfig,
) -> Vec<SubstationRecord> {
    let resolver = SubstationResolver::new(substations, cfg.tau);
    let mut line_names: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for l in resolved_lines {
        line_names.entry(l.u.as_str()).or_default().push(l.name.as_str());
        line_names.entry(l.v.as_str()).or_default().push(l.name.as_str());
    }
    let mut feeder_volts: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for f in feeders {
        if let (Some(id), Some(v)) = (resolver.resolve(&f.substation), f.voltage_kv) {
            feeder_volts.entry(id).or_default().push(v);
        }
    }
    substations
        .par_iter()
        .map(|s| {
            if s.voltage_kv.is_some() {
                return s.clone();
            }
            let regional: Vec<f64> = substations
                .iter()
                .filter(|o| o.id != s.id && o.voltage_provenance == VoltageProvenance::Original)
                .filter_map(|o| {
                    let v = o.voltage_kv?;
                    let d = haversine_km((s.lat, s.lon), (o.lat, o.lon)).ok()?;
                    (d <= cfg.region_radius_km).then_some(v)
                })
                .collect();
            let descs = line_names.get(s.id.as_str()).cloned().unwrap_or_default();
            let feeders = feeder_volts.get(&s.id).cloned().unwrap_or_default();
            let imp = impute_voltage(None, &descs, &feeders, &regional);
            if imp.provenance == VoltageProvenance::Missing {
                log::warn!("substation {} has no voltage after imputation", s.id);
            }
            SubstationRecord {
                voltage_kv: imp.voltage_kv,
                voltage_provenance: imp.provenance,
                ..s.clone()
            }
        })
        .collect()
}

/// Full ingest: clean incidents, resolve lines, impute voltages.
pub fn ingest(
    raw: &[RawIncident],
    substations: &[SubstationRecord],
    lines: &[LineRecord],
    feeders: &[FeederRecord],
    cfg: &IngestConfig,
) -> Result<CleanDataset> {
    if substations.is_empty() {
        return Err(Error::config("substation table is empty"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in substations {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::invalid(format!("duplicate substation id {}", s.id)));
        }
        if !s.lat.is_finite() || !s.lon.is_finite() || s.lat.abs() > 90.0 || s.lon.abs() > 180.0 {
            return Err(Error::invalid(format!("substation {} has invalid coordinates", s.id)));
        }
    }
    // Records read from CSV carry the default provenance; a missing voltage there is not "original".
    let substations: Vec<SubstationRecord> = substations
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if s.voltage_kv.is_none() {
                s.voltage_provenance = VoltageProvenance::Missing;
            }
            s
        })
        .collect();
    let (incidents, rejects) = clean_incidents(raw, &substations, cfg.tau)?;
    let (resolved_lines, line_review) = match_lines(lines, &substations, cfg);
    let substations = impute_voltages(&substations, &resolved_lines, feeders, cfg);
    Ok(CleanDataset {
        incidents,
        substations,
        lines: lines.to_vec(),
        feeders: feeders.to_vec(),
        resolved_lines,
        line_review,
        rejects,
    })
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SubstationRow {
    id: String,
    lat: f64,
    lon: f64,
    voltage_kv: Option<f64>,
    plant_class: String,
}

pub fn read_substations(path: &Path) -> Result<Vec<SubstationRecord>> {
    Ok(read_csv::<SubstationRow>(path)?
        .into_iter()
        .map(|r| SubstationRecord {
            id: r.id,
            lat: r.lat,
            lon: r.lon,
            voltage_kv: r.voltage_kv,
            plant_class: r.plant_class,
            voltage_provenance: VoltageProvenance::Original,
        })
        .collect())
}

pub fn write_substations(path: &Path, subs: &[SubstationRecord]) -> Result<()> {
    let rows: Vec<SubstationRow> = subs
        .iter()
        .map(|s| SubstationRow {
            id: s.id.clone(),
            lat: s.lat,
            lon: s.lon,
            voltage_kv: s.voltage_kv,
            plant_class: s.plant_class.clone(),
        })
        .collect();
    write_csv(path, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subs() -> Vec<SubstationRecord> {
        ["ALPHA SUB", "BRAVO SUB", "CHARLIE"]
            .iter()
            .enumerate()
            .map(|(i, id)| SubstationRecord {
                id: id.to_string(),
                lat: 35.0 + i as f64 * 0.1,
                lon: -97.0,
                voltage_kv: Some(69.0),
                plant_class: "DIST".into(),
                voltage_provenance: VoltageProvenance::Original,
            })
            .collect()
    }

    fn raw(id: &str, sub: &str, off: &str, on: &str) -> RawIncident {
        RawIncident {
            id: id.into(),
            substation: sub.into(),
            t_off: off.into(),
            t_on: on.into(),
            cause: "WEATHER".into(),
            equipment: "LINE".into(),
            customers_affected: "10".into(),
            feeder: "F1".into(),
            city: "NORMAN".into(),
        }
    }

    #[test]
    fn inverted_and_valid_records() {
        let rows = vec![
            raw("a", "alpha sub", "2020-01-01 10:00:00", "2020-01-01 09:00:00"),
            raw("b", "alpha sub", "2020-01-01 09:00:00", "2020-01-01 10:00:00"),
            raw("c", "ZULU", "2020-01-01 09:00:00", "2020-01-01 10:00:00"),
            raw("d", "BRAVO SUB", "", "2020-01-01 10:00:00"),
            raw("e", "BRAVO SUB", "01/02/2020 09:00", "2020-01-01 10:00:00"),
        ];
        let clean = clean_dataset(&rows, &subs(), 0.85).unwrap();
        assert_eq!(clean.incidents.len(), 1);
        assert_eq!(clean.incidents[0].id, "b");
        assert_eq!(clean.incidents[0].substation, "ALPHA SUB");
        let reasons: Vec<_> = clean.rejects.iter().map(|r| (r.record_id.as_str(), r.reason)).collect();
        assert_eq!(
            reasons,
            vec![
                ("a", RejectReason::InvertedTime),
                ("c", RejectReason::NoSubstation),
                ("d", RejectReason::MissingTime),
                ("e", RejectReason::BadTimeFormat),
            ]
        );
    }

    #[test]
    fn empty_substation_table_is_config_error() {
        let err = clean_dataset(&[], &[], 0.85).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn cleaning_is_idempotent() {
        let rows = vec![
            raw("b", "ALPHA-SUB", "2020-01-01 09:00:00", "2020-01-01 10:00:00"),
            raw("x", "BRAVO SUBB", "2020-01-02 09:00:00", "2020-01-02 10:00:00"),
            raw("a", "alpha sub", "2020-01-01 10:00:00", "2020-01-01 09:00:00"),
        ];
        let once = clean_dataset(&rows, &subs(), 0.85).unwrap();
        let again_raw: Vec<RawIncident> = once.incidents.iter().map(IncidentRecord::to_raw).collect();
        let twice = clean_dataset(&again_raw, &subs(), 0.85).unwrap();
        assert_eq!(once.incidents, twice.incidents);
        assert!(twice.rejects.is_empty());
    }

    #[test]
    fn line_matching_review_band() {
        let s = subs();
        let lines = vec![
            LineRecord {
                name: "A-B 69kV".into(),
                endpoint_a: "Alpha Sub".into(),
                endpoint_b: "bravo sub".into(),
                const_volt: 69.0,
                shape_length_km: 12.4,
            },
            LineRecord {
                // "CHARLXX" vs "CHARLIE": 2 edits over 7 → 71 accepted; "ALPHXXXXB" vs "ALPHA SUB": 56
                name: "review".into(),
                endpoint_a: "CHARLXX".into(),
                endpoint_b: "ALPHXXXXB".into(),
                const_volt: 69.0,
                shape_length_km: 3.0,
            },
        ];
        let (resolved, review) = match_lines(&lines, &s, &IngestConfig::default());
        assert_eq!(resolved.len(), 1);
        assert_eq!((resolved[0].u.as_str(), resolved[0].v.as_str()), ("ALPHA SUB", "BRAVO SUB"));
        assert_eq!(review.len(), 1);
        assert_eq!(review[0].name, "review");
    }
}
