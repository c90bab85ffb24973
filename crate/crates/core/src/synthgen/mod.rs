//! Seeded synthetic scenarios with planted ground truth.
//!
//! [`generate`] produces the four CSV tables read by ingest and a ground-truth
//! record of every planted fact: the cluster of each substation, enriched
//! causal pairs, maintenance positives with their trigger incidents, and
//! deliberately invalid incident rows. [`community`] builds graphs directly
//! for experiments that need per-layer signal.

pub mod community;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::graphbuild::haversine_km;
use crate::ingest::{
    normalize_name, write_csv, FeederRecord, LineRecord, RawIncident, RejectReason, SubstationRecord, SubstationResolver,
    VoltageProvenance, TIME_FORMAT,
};
use crate::{Error, Result};

pub use community::{community_graph, CommunityConfig, CommunityGraph};

/// Cause used only by planted maintenance triggers.
pub const TRIGGER_CAUSE: &str = "MAJOR EVENT";
pub const TRIGGER_EQUIPMENT: &str = "POWER TRANSFORMER";

/// `(cause, share of incidents, risk column it feeds)`.
pub const CAUSE_MIX: [(&str, f64, Option<usize>); 7] = [
    ("WEATHER", 0.25, Some(2)),
    ("EQUIPMENT FAILURE", 0.19, Some(3)),
    ("VEGETATION", 0.14, Some(0)),
    ("LIGHTNING", 0.14, Some(1)),
    ("ANIMAL CONTACT", 0.12, None),
    ("PUBLIC DAMAGE", 0.09, None),
    ("UNKNOWN", 0.07, None),
];

const EQUIPMENT_MIX: [(&str, f64); 8] = [
    ("OVERHEAD CONDUCTOR", 0.30),
    (TRIGGER_EQUIPMENT, 0.15),
    ("CIRCUIT BREAKER", 0.10),
    ("INSULATOR", 0.10),
    ("UNDERGROUND CABLE", 0.10),
    ("FUSE", 0.10),
    ("RECLOSER", 0.08),
    ("SWITCH", 0.07),
];

const NAME_A: [&str; 30] = [
    "ALDER", "BIRCH", "CEDAR", "DOGWOOD", "ELM", "FIR", "GINKGO", "HAZEL", "IRONWOOD", "JUNIPER", "KATSURA", "LARCH",
    "MAPLE", "NUTMEG", "OAK", "PECAN", "QUINCE", "REDBUD", "SPRUCE", "TAMARACK", "UMBRA", "VIBURNUM", "WILLOW", "YEW",
    "ZELKOVA", "ASPEN", "BUCKEYE", "CYPRESS", "DEODAR", "EBONY",
];
const NAME_B: [&str; 20] = [
    "CREEK", "HOLLOW", "RIDGE", "FLATS", "SPRINGS", "MESA", "BLUFF", "CROSSING", "PRAIRIE", "GROVE", "JUNCTION",
    "VALLEY", "POINT", "HEIGHTS", "BEND", "LAKE", "FORK", "KNOLL", "GAP", "PLAINS",
];

/// A causal pair requested by index into the substation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub u: usize,
    pub v: usize,
    pub cause: String,
    pub boost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_substations: usize,
    /// Transmission lines before any extra line added for an explicit causal pair.
    pub n_lines: usize,
    /// Expected number of background incidents over the whole horizon.
    pub n_incidents: usize,
    pub days: u32,
    pub start: NaiveDateTime,
    /// Rate multipliers `[vegetation, lightning, weather, equipment]` per planted cluster.
    pub clusters: Vec<[f64; 4]>,
    pub cluster_spread_km: f64,
    pub cluster_separation_km: f64,
    pub causal_pairs: Vec<PairSpec>,
    /// Additional pairs drawn from intra-cluster lines; their endpoints are pairwise non-adjacent.
    pub random_causal_pairs: usize,
    pub causal_boost: f64,
    /// Coupled events a pair would see at boost 1; a pair receives
    /// Poisson(boost · base) joint events, floored at 3.
    pub causal_base_events: f64,
    /// Maximum lag between the two incidents of a joint causal event.
    pub causal_lag_hrs: f64,
    pub positive_rate: f64,
    pub quiet_days: u32,
    /// Share of weather incidents generated as multi-substation storms.
    pub storm_fraction: f64,
    pub invalid_records: usize,
    pub missing_voltage_rate: f64,
    /// Share of incident rows whose substation name is a spelling variant.
    pub name_variant_rate: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_substations: 200,
            n_lines: 300,
            n_incidents: 4600,
            days: 1095,
            start: NaiveDateTime::parse_from_str("2021-01-01 00:00:00", TIME_FORMAT).expect("valid literal"),
            clusters: vec![
                [4.0, 1.0, 1.0, 1.0],
                [1.0, 4.0, 1.0, 1.0],
                [1.0, 1.0, 4.0, 1.0],
                [1.0, 1.0, 1.0, 4.0],
                [0.4, 0.4, 0.4, 0.4],
            ],
            cluster_spread_km: 8.0,
            cluster_separation_km: 120.0,
            causal_pairs: Vec::new(),
            random_causal_pairs: 10,
            causal_boost: 10.0,
            causal_base_events: 2.0,
            causal_lag_hrs: 2.0,
            positive_rate: 0.19,
            quiet_days: 180,
            storm_fraction: 0.7,
            invalid_records: 20,
            missing_voltage_rate: 0.1,
            name_variant_rate: 0.1,
            seed: 42,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.n_substations;
        let k = self.clusters.len();
        if n < 2 || k == 0 || self.n_incidents == 0 || self.days == 0 {
            return Err(Error::config("substations (≥ 2), clusters, incidents and days must be positive"));
        }
        if k > n {
            return Err(Error::config(format!("{k} clusters for {n} substations")));
        }
        if n > NAME_A.len() * NAME_B.len() {
            return Err(Error::config(format!("at most {} substations supported", NAME_A.len() * NAME_B.len())));
        }
        if self.n_lines < n - 1 {
            return Err(Error::config(format!("{} lines cannot connect {n} substations", self.n_lines)));
        }
        if self.n_lines > n * (n - 1) / 2 {
            return Err(Error::config("more lines than substation pairs"));
        }
        if self.clusters.iter().flatten().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::config("cluster multipliers must be finite and nonnegative"));
        }
        let rates = [self.positive_rate, self.storm_fraction, self.missing_voltage_rate, self.name_variant_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::config("rates must lie in [0, 1]"));
        }
        if self.quiet_days as f64 + 60.0 > self.days as f64 && self.positive_rate > 0.0 {
            return Err(Error::config("horizon too short for the quiet window of planted positives"));
        }
        if !(self.causal_boost > 0.0) || !(self.causal_base_events > 0.0) || !(self.causal_lag_hrs >= 0.0) || !(self.cluster_spread_km > 0.0) {
            return Err(Error::config("causal boost, lag and cluster spread must be positive"));
        }
        for p in &self.causal_pairs {
            if p.u >= n || p.v >= n || p.u == p.v || !(p.boost > 0.0) {
                return Err(Error::config(format!("invalid causal pair ({}, {})", p.u, p.v)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSubstation {
    pub index: usize,
    pub id: String,
    pub cluster: usize,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPair {
    /// Substation-table indices with `u < v`.
    pub u: usize,
    pub v: usize,
    pub u_id: String,
    pub v_id: String,
    pub cause: String,
    pub boost: f64,
    pub joint_events: usize,
    pub max_lag_hrs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPositive {
    pub id: String,
    pub trigger_id: String,
    pub trigger_time: String,
    /// No incident occurs at the substation after the trigger up to this time.
    pub quiet_until: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedInvalid {
    pub record_id: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: ScenarioConfig,
    pub start: String,
    pub end: String,
    pub trigger_cause: String,
    pub trigger_equipment: String,
    pub substations: Vec<PlantedSubstation>,
    pub causal_pairs: Vec<PlantedPair>,
    pub positives: Vec<PlantedPositive>,
    pub invalid_records: Vec<PlantedInvalid>,
    pub valid_incidents: usize,
}

impl GroundTruth {
    pub fn cluster_labels(&self) -> Vec<i64> {
        self.substations.iter().map(|s| s.cluster as i64).collect()
    }

    pub fn positive_rate(&self) -> f64 {
        self.positives.len() as f64 / self.substations.len() as f64
    }

    /// Planted `(u, v, cause)` cells keyed by table index.
    pub fn causal_cells(&self) -> BTreeSet<(usize, usize, String)> {
        self.causal_pairs.iter().map(|p| (p.u, p.v, p.cause.clone())).collect()
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub incidents: Vec<RawIncident>,
    pub substations: Vec<SubstationRecord>,
    pub lines: Vec<LineRecord>,
    pub feeders: Vec<FeederRecord>,
    pub truth: GroundTruth,
}

pub const INCIDENTS_FILE: &str = "incidents.csv";
pub const SUBSTATIONS_FILE: &str = "substations.csv";
pub const LINES_FILE: &str = "lines.csv";
pub const FEEDERS_FILE: &str = "feeders.csv";
pub const TRUTH_FILE: &str = "ground_truth.json";

impl Scenario {
    /// Writes the five files into `dir`, which must exist.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_csv(&dir.join(INCIDENTS_FILE), &self.incidents)?;
        crate::ingest::write_substations(&dir.join(SUBSTATIONS_FILE), &self.substations)?;
        write_csv(&dir.join(LINES_FILE), &self.lines)?;
        write_csv(&dir.join(FEEDERS_FILE), &self.feeders)?;
        let mut json = serde_json::to_string_pretty(&self.truth)?;
        json.push('\n');
        std::fs::write(dir.join(TRUTH_FILE), json)?;
        Ok(())
    }
}

/// One valid incident before ids are assigned.
struct Event {
    node: usize,
    t_off: NaiveDateTime,
    minutes: f64,
    cause: String,
    equipment: String,
    customers: u64,
    trigger: bool,
}

fn pick_weighted<'a>(rng: &mut ChaCha8Rng, items: &'a [(&'a str, f64)]) -> &'a str {
    let total: f64 = items.iter().map(|(_, w)| w).sum();
    let mut r = rng.random_range(0.0..total);
    for (name, w) in items {
        if r < *w {
            return name;
        }
        r -= w;
    }
    items[items.len() - 1].0
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

fn km_to_deg(km: f64) -> f64 {
    km / 111.0
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// A spelling variant that still resolves to `id`: changed case and
/// punctuation, or a single-letter substitution when that stays unambiguous.
fn name_variant(rng: &mut ChaCha8Rng, id: &str, resolver: &SubstationResolver) -> String {
    if rng.random_bool(0.5) {
        return id.to_lowercase().replace(' ', "-");
    }
    let chars: Vec<char> = id.chars().collect();
    let letters: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_ascii_alphabetic()).collect();
    let pos = *letters.choose(rng).expect("names contain letters");
    let mut typo = chars.clone();
    typo[pos] = if chars[pos] == 'X' { 'Q' } else { 'X' };
    let typo: String = typo.into_iter().collect();
    if resolver.resolve(&typo).as_deref() == Some(id) {
        typo
    } else {
        id.to_string()
    }
}

fn background_event(rng: &mut ChaCha8Rng, node: usize, t_off: NaiveDateTime, cause: &str) -> Event {
    let minutes = LogNormal::new(90f64.ln(), 0.6).expect("valid").sample(rng).clamp(5.0, 24.0 * 60.0);
    let customers = LogNormal::new(150f64.ln(), 0.8).expect("valid").sample(rng).round().clamp(1.0, 2500.0) as u64;
    Event {
        node,
        t_off,
        minutes,
        cause: cause.to_string(),
        equipment: pick_weighted(rng, &EQUIPMENT_MIX).to_string(),
        customers,
        trigger: false,
    }
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_substations;
    let k = cfg.clusters.len();
    let horizon_minutes = cfg.days as f64 * 1440.0;
    let at = |minutes: f64| cfg.start + Duration::seconds((minutes * 60.0).round() as i64);
    let end = at(horizon_minutes);

    // Substations: round-robin cluster membership, clusters on a ring.
    let mut names: Vec<String> = NAME_A.iter().flat_map(|a| NAME_B.iter().map(move |b| format!("{a} {b}"))).collect();
    names.shuffle(&mut rng);
    names.truncate(n);
    let cluster_of: Vec<usize> = (0..n).map(|i| i % k).collect();
    let ring = if k > 1 { cfg.cluster_separation_km / (2.0 * (std::f64::consts::PI / k as f64).sin()) } else { 0.0 };
    let centers: Vec<(f64, f64)> = (0..k)
        .map(|c| {
            let a = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
            (35.5 + km_to_deg(ring * a.sin()), -97.5 + km_to_deg(ring * a.cos()) / 35.5f64.to_radians().cos())
        })
        .collect();
    let spread = rand_distr::Normal::new(0.0, km_to_deg(cfg.cluster_spread_km)).expect("valid");
    let classes = ["DISTRIBUTION", "TRANSMISSION", "SWITCHING"];
    let mut substations = Vec::with_capacity(n);
    for i in 0..n {
        let (clat, clon) = centers[cluster_of[i]];
        let lat = round6(clat + spread.sample(&mut rng));
        let lon = round6(clon + spread.sample(&mut rng) / clat.to_radians().cos());
        let kv = if rng.random_bool(0.7) { 69.0 } else { 138.0 };
        let missing = rng.random_bool(cfg.missing_voltage_rate);
        substations.push(SubstationRecord {
            id: names[i].clone(),
            lat,
            lon,
            voltage_kv: (!missing).then_some(kv),
            plant_class: classes.choose(&mut rng).expect("non-empty").to_string(),
            voltage_provenance: VoltageProvenance::Original,
        });
    }
    let true_kv: Vec<f64> = substations.iter().map(|s| s.voltage_kv.unwrap_or(69.0)).collect();
    let dist = |a: usize, b: usize| -> f64 {
        haversine_km((substations[a].lat, substations[a].lon), (substations[b].lat, substations[b].lon)).expect("valid coordinates")
    };

    // Lines: a spanning tree per cluster, a chain between clusters, then
    // nearest-neighbour extras until the budget is used.
    let members: Vec<Vec<usize>> = (0..k).map(|c| (0..n).filter(|&i| cluster_of[i] == c).collect()).collect();
    let mut line_pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    let canon = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    for m in &members {
        let mut in_tree = vec![m[0]];
        let mut rest: Vec<usize> = m[1..].to_vec();
        while !rest.is_empty() {
            let (ri, ti) = rest
                .iter()
                .enumerate()
                .flat_map(|(ri, &r)| in_tree.iter().map(move |&t| (ri, t, r)))
                .min_by(|a, b| dist(a.2, a.1).total_cmp(&dist(b.2, b.1)))
                .map(|(ri, t, _)| (ri, t))
                .expect("non-empty");
            let r = rest.swap_remove(ri);
            line_pairs.insert(canon(r, ti));
            in_tree.push(r);
        }
    }
    for c in 1..k {
        let best = members[c - 1]
            .iter()
            .flat_map(|&a| members[c].iter().map(move |&b| (a, b)))
            .min_by(|x, y| dist(x.0, x.1).total_cmp(&dist(y.0, y.1)))
            .expect("non-empty clusters");
        line_pairs.insert(canon(best.0, best.1));
    }
    let mut nearest: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut cand: Vec<usize> = members[cluster_of[i]].iter().copied().filter(|&j| j != i).collect();
            cand.sort_by(|&a, &b| dist(i, a).total_cmp(&dist(i, b)).then(a.cmp(&b)));
            cand
        })
        .collect();
    let mut cursor = 0usize;
    let mut stalled = 0usize;
    while line_pairs.len() < cfg.n_lines && stalled < n {
        let i = cursor % n;
        cursor += 1;
        match nearest[i].iter().position(|&j| !line_pairs.contains(&canon(i, j))) {
            Some(p) => {
                let j = nearest[i].remove(p);
                line_pairs.insert(canon(i, j));
                stalled = 0;
            }
            None => stalled += 1,
        }
    }
    while line_pairs.len() < cfg.n_lines {
        // Intra-cluster pairs exhausted: connect random cross-cluster pairs.
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            line_pairs.insert(canon(a, b));
        }
    }

    // Causal pairs: explicit ones first, then random intra-cluster lines with fresh endpoints.
    let mut pair_specs: Vec<PairSpec> = cfg.causal_pairs.clone();
    for p in &pair_specs {
        line_pairs.insert(canon(p.u, p.v));
    }
    let mut used: BTreeSet<usize> = pair_specs.iter().flat_map(|p| [p.u, p.v]).collect();
    let mut neighbours: Vec<BTreeSet<usize>> = (0..n).map(|i| BTreeSet::from([i])).collect();
    for &(a, b) in &line_pairs {
        neighbours[a].insert(b);
        neighbours[b].insert(a);
    }
    let mut blocked: BTreeSet<usize> = used.iter().flat_map(|&x| neighbours[x].iter().copied()).collect();
    let mut candidates: Vec<(usize, usize)> =
        line_pairs.iter().copied().filter(|&(a, b)| cluster_of[a] == cluster_of[b]).collect();
    candidates.shuffle(&mut rng);
    let pair_causes: Vec<&str> = CAUSE_MIX.iter().take(5).map(|c| c.0).collect();
    for (a, b) in candidates {
        if pair_specs.len() >= cfg.causal_pairs.len() + cfg.random_causal_pairs {
            break;
        }
        // Endpoints of different pairs are neither shared nor line neighbours, so
        // boosted rates never meet on an unplanted line.
        if blocked.contains(&a) || blocked.contains(&b) {
            continue;
        }
        for x in [a, b] {
            used.insert(x);
            blocked.extend(neighbours[x].iter().copied());
        }
        pair_specs.push(PairSpec {
            u: a,
            v: b,
            cause: pair_causes.choose(&mut rng).expect("non-empty").to_string(),
            boost: cfg.causal_boost,
        });
    }
    if pair_specs.len() < cfg.causal_pairs.len() + cfg.random_causal_pairs {
        return Err(Error::config(format!(
            "only {} non-adjacent intra-cluster lines available for {} random causal pairs",
            pair_specs.len() - cfg.causal_pairs.len(),
            cfg.random_causal_pairs
        )));
    }

    let mut lines = Vec::with_capacity(line_pairs.len());
    for (li, &(a, b)) in line_pairs.iter().enumerate() {
        let kv = true_kv[a].max(true_kv[b]);
        let d = dist(a, b);
        lines.push(LineRecord {
            name: format!("L{:04} {} TO {} {}kV TIE", li + 1, substations[a].id, substations[b].id, kv),
            endpoint_a: substations[a].id.clone(),
            endpoint_b: substations[b].id.clone(),
            const_volt: kv,
            shape_length_km: round6(d * rng.random_range(1.05..1.3)),
        });
    }

    let mut feeders = Vec::with_capacity(2 * n);
    for (i, s) in substations.iter().enumerate() {
        for f in 0..2 {
            feeders.push(FeederRecord {
                feeder: format!("FDR-{:03}-{}", i, f + 1),
                substation: s.id.clone(),
                voltage_kv: Some(if rng.random_bool(0.8) { 13.8 } else { 12.47 }),
            });
        }
    }

    // Background incidents.
    let activity: Vec<f64> = (0..n).map(|_| LogNormal::new(0.0, 0.25).expect("valid").sample(&mut rng)).collect();
    let mult = |i: usize, cat: Option<usize>| cat.map_or(1.0, |c| cfg.clusters[cluster_of[i]][c]);
    let norm: f64 = (0..n)
        .map(|i| CAUSE_MIX.iter().map(|(_, s, cat)| s * mult(i, *cat)).sum::<f64>() * activity[i])
        .sum::<f64>();
    let scale = cfg.n_incidents as f64 / norm;
    let mut events: Vec<Event> = Vec::new();
    for i in 0..n {
        for (cause, share, cat) in CAUSE_MIX {
            let mut mean = scale * share * mult(i, cat) * activity[i];
            if cat == Some(2) {
                mean *= 1.0 - cfg.storm_fraction;
            }
            for _ in 0..poisson(&mut rng, mean) {
                let t = rng.random_range(0.0..horizon_minutes);
                events.push(background_event(&mut rng, i, at(t), cause));
            }
        }
    }
    if cfg.storm_fraction > 0.0 {
        let weights: Vec<f64> = (0..k).map(|c| members[c].iter().map(|&i| cfg.clusters[c][2] * activity[i]).sum()).collect();
        let total_storm = scale * CAUSE_MIX[0].1 * cfg.storm_fraction * weights.iter().sum::<f64>();
        let storms = poisson(&mut rng, total_storm / 4.5);
        let wtotal: f64 = weights.iter().sum();
        for _ in 0..storms {
            let mut r = rng.random_range(0.0..wtotal);
            let c = weights.iter().position(|w| {
                let hit = r < *w;
                r -= w;
                hit
            });
            let c = c.unwrap_or(k - 1);
            let t0 = rng.random_range(0.0..horizon_minutes);
            let size = rng.random_range(3..=6).min(members[c].len());
            for &i in members[c].choose_multiple(&mut rng, size) {
                let t = (t0 + rng.random_range(0.0..180.0)).min(horizon_minutes - 1.0);
                events.push(background_event(&mut rng, i, at(t), CAUSE_MIX[0].0));
            }
        }
    }

    // Joint events for causal pairs.
    let mut planted_pairs = Vec::with_capacity(pair_specs.len());
    let lag_minutes = cfg.causal_lag_hrs * 60.0;
    for p in &pair_specs {
        let joint = poisson(&mut rng, p.boost * cfg.causal_base_events).max(3);
        for _ in 0..joint {
            let t = rng.random_range(0.0..(horizon_minutes - lag_minutes - 1.0).max(1.0));
            let lag = if lag_minutes > 0.0 { rng.random_range(0.0..lag_minutes) } else { 0.0 };
            events.push(background_event(&mut rng, p.u, at(t), &p.cause));
            events.push(background_event(&mut rng, p.v, at(t + lag), &p.cause));
        }
        let (u, v) = canon(p.u, p.v);
        planted_pairs.push(PlantedPair {
            u,
            v,
            u_id: substations[u].id.clone(),
            v_id: substations[v].id.clone(),
            cause: p.cause.clone(),
            boost: p.boost,
            joint_events: joint,
            max_lag_hrs: cfg.causal_lag_hrs,
        });
    }

    // Maintenance positives among substations outside causal pairs.
    let n_pos = (cfg.positive_rate * n as f64).round() as usize;
    let mut eligible: Vec<usize> = (0..n).filter(|i| !used.contains(i)).collect();
    if n_pos > eligible.len() {
        return Err(Error::config(format!(
            "positive rate needs {n_pos} substations but only {} are outside causal pairs",
            eligible.len()
        )));
    }
    eligible.shuffle(&mut rng);
    let mut positives: Vec<usize> = eligible[..n_pos].to_vec();
    positives.sort_unstable();
    let quiet = cfg.quiet_days as f64 * 1440.0;
    let mut quiet_windows: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    for &i in &positives {
        let t = rng.random_range(30.0 * 1440.0..(horizon_minutes - quiet - 1440.0));
        quiet_windows.insert(i, (t, t + quiet));
        events.push(Event {
            node: i,
            t_off: at(t),
            minutes: rng.random_range(48.0 * 60.0..96.0 * 60.0),
            cause: TRIGGER_CAUSE.to_string(),
            equipment: TRIGGER_EQUIPMENT.to_string(),
            customers: rng.random_range(3000..6000),
            trigger: true,
        });
    }
    events.retain(|e| match quiet_windows.get(&e.node) {
        Some(&(t0, t1)) if !e.trigger => {
            let m = (e.t_off - cfg.start).num_seconds() as f64 / 60.0;
            !(m > t0 && m <= t1)
        }
        _ => true,
    });

    events.sort_by(|a, b| {
        a.t_off
            .cmp(&b.t_off)
            .then(a.node.cmp(&b.node))
            .then_with(|| a.cause.cmp(&b.cause))
            .then(a.customers.cmp(&b.customers))
    });

    let resolver = SubstationResolver::new(&substations, crate::ingest::fuzzy::INCIDENT_TAU);
    let mut incidents = Vec::with_capacity(events.len() + cfg.invalid_records);
    let mut planted_positives = Vec::with_capacity(n_pos);
    let cities: Vec<String> = (0..k).map(|c| format!("CITY {}", c + 1)).collect();
    for (j, e) in events.iter().enumerate() {
        let id = format!("INC{:06}", j + 1);
        let canonical = &substations[e.node].id;
        let raw_name = if !e.trigger && rng.random_bool(cfg.name_variant_rate) {
            name_variant(&mut rng, canonical, &resolver)
        } else {
            canonical.clone()
        };
        let t_on = e.t_off + Duration::seconds((e.minutes * 60.0).round() as i64);
        if e.trigger {
            let (_, t1) = quiet_windows[&e.node];
            planted_positives.push(PlantedPositive {
                id: canonical.clone(),
                trigger_id: id.clone(),
                trigger_time: e.t_off.format(TIME_FORMAT).to_string(),
                quiet_until: at(t1).format(TIME_FORMAT).to_string(),
            });
        }
        incidents.push(RawIncident {
            id,
            substation: raw_name,
            t_off: e.t_off.format(TIME_FORMAT).to_string(),
            t_on: t_on.format(TIME_FORMAT).to_string(),
            cause: e.cause.clone(),
            equipment: e.equipment.clone(),
            customers_affected: e.customers.to_string(),
            feeder: format!("FDR-{:03}-{}", e.node, 1 + (j % 2)),
            city: cities[cluster_of[e.node]].clone(),
        });
    }
    planted_positives.sort_by(|a, b| a.id.cmp(&b.id));
    let valid_incidents = incidents.len();

    // Invalid rows, inserted at random positions.
    let reasons = [RejectReason::MissingTime, RejectReason::InvertedTime, RejectReason::NoSubstation];
    let mut invalid = Vec::with_capacity(cfg.invalid_records);
    for r in 0..cfg.invalid_records {
        let reason = reasons[r % reasons.len()];
        let id = format!("BAD{:05}", r + 1);
        let node = rng.random_range(0..n);
        let t = at(rng.random_range(0.0..horizon_minutes - 1440.0));
        let later = t + Duration::minutes(rng.random_range(10..600));
        let mut row = RawIncident {
            id: id.clone(),
            substation: substations[node].id.clone(),
            t_off: t.format(TIME_FORMAT).to_string(),
            t_on: later.format(TIME_FORMAT).to_string(),
            cause: CAUSE_MIX[r % CAUSE_MIX.len()].0.to_string(),
            equipment: EQUIPMENT_MIX[r % EQUIPMENT_MIX.len()].0.to_string(),
            customers_affected: "100".to_string(),
            feeder: String::new(),
            city: String::new(),
        };
        match reason {
            RejectReason::MissingTime => {
                if r % 2 == 0 {
                    row.t_on.clear();
                } else {
                    row.t_off.clear();
                }
            }
            RejectReason::InvertedTime => std::mem::swap(&mut row.t_off, &mut row.t_on),
            _ => row.substation = format!("ZZ UNMAPPED YARD {}", r + 1),
        }
        debug_assert!(reason != RejectReason::NoSubstation || resolver.resolve(&row.substation).is_none());
        let pos = rng.random_range(0..=incidents.len());
        incidents.insert(pos, row);
        invalid.push(PlantedInvalid { record_id: id, reason });
    }

    let positive_set: BTreeSet<usize> = positives.iter().copied().collect();
    let truth = GroundTruth {
        config: cfg.clone(),
        start: cfg.start.format(TIME_FORMAT).to_string(),
        end: end.format(TIME_FORMAT).to_string(),
        trigger_cause: TRIGGER_CAUSE.to_string(),
        trigger_equipment: TRIGGER_EQUIPMENT.to_string(),
        substations: (0..n)
            .map(|i| PlantedSubstation {
                index: i,
                id: substations[i].id.clone(),
                cluster: cluster_of[i],
                positive: positive_set.contains(&i),
            })
            .collect(),
        causal_pairs: planted_pairs,
        positives: planted_positives,
        invalid_records: invalid,
        valid_incidents,
    };
    debug_assert!(truth.substations.iter().all(|s| normalize_name(&s.id) == s.id));
    Ok(Scenario {
        incidents,
        substations,
        lines,
        feeders,
        truth,
    })
}

/// Brute-force count of cause-`cause` incident pairs at `u` and `v` whose
/// start times differ by at most `half_width_hrs`.
pub fn count_cooccurrences(incidents: &[RawIncident], u: &str, v: &str, cause: &str, half_width_hrs: f64) -> usize {
    let times = |id: &str| -> Vec<NaiveDateTime> {
        incidents
            .iter()
            .filter(|r| r.substation == id && r.cause == cause)
            .filter_map(|r| NaiveDateTime::parse_from_str(&r.t_off, TIME_FORMAT).ok())
            .collect()
    };
    let (a, b) = (times(u), times(v));
    a.iter()
        .flat_map(|x| b.iter().map(move |y| (*x - *y).num_seconds().abs() as f64 / 3600.0))
        .filter(|d| *d <= half_width_hrs)
        .count()
}
