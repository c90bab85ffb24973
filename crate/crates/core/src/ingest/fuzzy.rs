//! Identifier normalization and Levenshtein-based matching.

use serde::{Deserialize, Serialize};

/// Default similarity threshold for incident → substation reconciliation.
pub const INCIDENT_TAU: f64 = 0.85;
/// Line endpoint scores (0–100) at or above this are accepted automatically.
pub const LINE_ACCEPT_SCORE: u32 = 64;
/// Line endpoint scores in `[LINE_REVIEW_SCORE, LINE_ACCEPT_SCORE)` go to manual review.
pub const LINE_REVIEW_SCORE: u32 = 55;

/// Uppercase, punctuation replaced by spaces, whitespace collapsed.
pub fn normalize_name(raw: &str) -> String {
    let mapped: String = raw
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_uppercase() } else { ' ' })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `1 − levenshtein(a, b) / max(|a|, |b|)` on already-normalized strings.
pub fn similarity(a: &str, b: &str) -> f64 {
    let la = a.chars().count();
    let lb = b.chars().count();
    let longest = la.max(lb);
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / longest as f64
}

/// Integer 0–100 score used for line endpoints.
pub fn line_score(similarity: f64) -> u32 {
    (100.0 * similarity).round() as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MatchResult {
    Matched { id: String, similarity: f64 },
    Review { id: String, similarity: f64 },
    None,
}

impl MatchResult {
    pub fn matched_id(&self) -> Option<&str> {
        match self {
            MatchResult::Matched { id, .. } => Some(id),
            _ => None,
        }
    }
}

/// Best candidate by similarity (ties go to the lexicographically smaller id).
fn best_candidate<'a>(name: &str, candidates: &'a [String]) -> Option<(&'a String, f64)> {
    let query = normalize_name(name);
    let mut best: Option<(&String, f64)> = None;
    for cand in candidates {
        let sim = similarity(&query, &normalize_name(cand));
        let better = match best {
            None => true,
            Some((id, s)) => sim > s || (sim == s && cand < id),
        };
        if better {
            best = Some((cand, sim));
        }
    }
    best
}

/// Incident-side matching: accept the best candidate when `similarity ≥ tau`.
pub fn fuzzy_match(name: &str, candidates: &[String], tau: f64) -> MatchResult {
    match best_candidate(name, candidates) {
        Some((id, sim)) if sim >= tau => MatchResult::Matched {
            id: id.clone(),
            similarity: sim,
        },
        _ => MatchResult::None,
    }
}

/// Line-endpoint matching on the 0–100 scale with a manual-review band.
pub fn match_line_endpoint(name: &str, candidates: &[String], accept: u32, review: u32) -> MatchResult {
    match best_candidate(name, candidates) {
        Some((id, sim)) => {
            let score = line_score(sim);
            if score >= accept {
                MatchResult::Matched {
                    id: id.clone(),
                    similarity: sim,
                }
            } else if score >= review {
                MatchResult::Review {
                    id: id.clone(),
                    similarity: sim,
                }
            } else {
                MatchResult::None
            }
        }
        None => MatchResult::None,
    }
}
