//! Per-cluster risk profiles, priority ranking and report outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::hdbscan::NOISE;
use crate::ingest::IncidentRecord;
use crate::stats::{mean, percentile};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub cluster: i64,
    pub size: usize,
    pub incidents: usize,
    pub incidents_per_year: f64,
    pub mean_recovery_minutes: f64,
    pub mean_cmi: f64,
    /// Mean `[vegetation, lightning, weather, equipment]` risk of the members.
    pub mean_risk: [f64; 4],
    pub priority: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub profiles: Vec<ClusterProfile>,
    /// Cluster ids by descending priority (ties by id).
    pub ranking: Vec<i64>,
    pub noise_points: usize,
    pub warnings: Vec<String>,
}

/// `R_weather × R_equipment × I`.
pub fn priority_score(r_weather: f64, r_equipment: f64, incidents_per_year: f64) -> f64 {
    r_weather * r_equipment * incidents_per_year
}

/// Cluster ids ordered by descending score, ties broken by id.
pub fn rank_by_priority(scores: &[(i64, f64)]) -> Vec<i64> {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    s.into_iter().map(|(c, _)| c).collect()
}

/// Recovery durations (minutes) of the incidents at each cluster's members.
pub fn recovery_by_cluster(labels: &[i64], node_ids: &[String], incidents: &[IncidentRecord]) -> BTreeMap<i64, Vec<f64>> {
    let index: BTreeMap<&str, usize> = node_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut out: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for inc in incidents {
        if let Some(&i) = index.get(inc.substation.as_str()) {
            if labels[i] != NOISE {
                out.entry(labels[i]).or_default().push(inc.duration_minutes());
            }
        }
    }
    out
}

pub fn profile_and_prioritize(labels: &[i64], node_ids: &[String], incidents: &[IncidentRecord], risk: &Array2<f64>, years: f64) -> ClusterReport {
    let index: BTreeMap<&str, usize> = node_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut members: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE {
            members.entry(l).or_default().push(i);
        }
    }
    let mut durations: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    let mut cmi: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for inc in incidents {
        if let Some(&i) = index.get(inc.substation.as_str()) {
            if labels[i] != NOISE {
                durations.entry(labels[i]).or_default().push(inc.duration_minutes());
                cmi.entry(labels[i]).or_default().push(inc.cmi());
            }
        }
    }
    let mut profiles = Vec::new();
    let mut warnings = Vec::new();
    for (&c, m) in &members {
        let Some(d) = durations.get(&c) else {
            let msg = format!("cluster {c} has no incidents and is excluded from the ranking");
            warn!("{msg}");
            warnings.push(msg);
            continue;
        };
        let mut mean_risk = [0.0; 4];
        for (k, r) in mean_risk.iter_mut().enumerate() {
            *r = m.iter().map(|&i| risk[[i, k]]).sum::<f64>() / m.len() as f64;
        }
        let per_year = d.len() as f64 / years.max(1e-9);
        profiles.push(ClusterProfile {
            cluster: c,
            size: m.len(),
            incidents: d.len(),
            incidents_per_year: per_year,
            mean_recovery_minutes: mean(d),
            mean_cmi: mean(&cmi[&c]),
            mean_risk,
            priority: priority_score(mean_risk[2], mean_risk[3], per_year),
        });
    }
    let ranking = rank_by_priority(&profiles.iter().map(|p| (p.cluster, p.priority)).collect::<Vec<_>>());
    ClusterReport {
        profiles,
        ranking,
        noise_points: labels.iter().filter(|&&l| l == NOISE).count(),
        warnings,
    }
}

/// Box-and-whisker SVG (quartiles, whiskers at min/max) of values per group.
pub fn boxplot_svg(groups: &BTreeMap<i64, Vec<f64>>, title: &str, y_label: &str) -> Result<String> {
    let (w, h, pad) = (120.0 * groups.len().max(1) as f64 + 80.0, 360.0, 50.0);
    let all: Vec<f64> = groups.values().flatten().copied().collect();
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(lo + 1.0);
    let y = |v: f64| h - pad - (v - lo) / (hi - lo) * (h - 2.0 * pad);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#).ok();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, w / 2.0).ok();
    writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{y_label}</text>"#, h / 2.0, h / 2.0).ok();
    writeln!(s, r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - pad, w - 10.0, h - pad).ok();
    for (k, (c, vals)) in groups.iter().enumerate() {
        if vals.is_empty() {
            continue;
        }
        let [mn, q1, med, q3, mx] = [0.0, 25.0, 50.0, 75.0, 100.0].map(|q| percentile(vals, q).unwrap_or(0.0));
        let cx = pad + 60.0 + 120.0 * k as f64;
        writeln!(s, r#"<line x1="{cx}" y1="{}" x2="{cx}" y2="{}" stroke="black"/>"#, y(mn), y(mx)).ok();
        writeln!(s, r##"<rect x="{}" y="{}" width="60" height="{}" fill="#9ecae1" stroke="black"/>"##, cx - 30.0, y(q3), (y(q1) - y(q3)).max(0.5)).ok();
        writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-width="2"/>"#, cx - 30.0, y(med), cx + 30.0, y(med)).ok();
        writeln!(s, r#"<text x="{cx}" y="{}" text-anchor="middle">cluster {c}</text>"#, h - pad + 18.0).ok();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn priority_hand_value() {
        assert_abs_diff_eq!(priority_score(0.8, 0.5, 100.0), 40.0, epsilon = 1e-12);
        assert_eq!(priority_score(0.9, 0.0, 1e6), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn ranking_ignores_common_rescaling(
            rows in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.1f64..500.0), 1..8),
            k in 0.01f64..100.0,
        ) {
            let a: Vec<(i64, f64)> = rows.iter().enumerate().map(|(c, r)| (c as i64, priority_score(r.0, r.1, r.2))).collect();
            let b: Vec<(i64, f64)> = rows.iter().enumerate().map(|(c, r)| (c as i64, priority_score(r.0, r.1, r.2 * k))).collect();
            // Rescaling can only reorder exact ties, which rank_by_priority breaks by id.
            let ra = rank_by_priority(&a);
            let rb = rank_by_priority(&b);
            for w in ra.windows(2) {
                let (x, y) = (a[w[0] as usize].1, a[w[1] as usize].1);
                proptest::prop_assert!(x >= y);
            }
            let pos = |r: &Vec<i64>, c: i64| r.iter().position(|&x| x == c).unwrap();
            for i in 0..a.len() {
                for j in 0..a.len() {
                    if a[i].1 > a[j].1 * (1.0 + 1e-9) {
                        proptest::prop_assert!(pos(&rb, i as i64) < pos(&rb, j as i64));
                    }
                }
            }
        }
    }

    #[test]
    fn svg_has_one_box_per_group() {
        let g = BTreeMap::from([(0, vec![1.0, 2.0, 3.0]), (1, vec![5.0, 9.0])]);
        let svg = boxplot_svg(&g, "Recovery", "minutes").unwrap();
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.starts_with("<svg"));
    }
}
