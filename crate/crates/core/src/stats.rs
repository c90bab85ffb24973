//! Shared statistics helpers.
//!
//! Every percentile in the crate goes through [`percentile`], which uses
//! linear interpolation between order statistics (rank `q/100 · (n − 1)`).

use std::collections::BTreeMap;

use crate::{Error, Result};

/// Percentile `q ∈ [0, 100]` with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile of empty sample"));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::invalid(format!("percentile rank {q} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(percentile_sorted(&sorted, q))
}

/// Same as [`percentile`] for an already ascending-sorted, non-empty slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median(values: &[f64]) -> Result<f64> {
    percentile(values, 50.0)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_pop(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Sample standard deviation (ddof = 1); zero for fewer than two values.
pub fn std_sample(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// Most frequent value; ties go to the larger value. Values are compared
/// after rounding to 1e-6 so that `13.8` parsed twice is one bucket.
pub fn mode(values: &[f64]) -> Option<f64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for v in values.iter().filter(|v| v.is_finite()) {
        *counts.entry((v * 1e6).round() as i64).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(k, _)| k as f64 / 1e6)
}

/// Column scaler: `(x − mean) / sd`, with `sd = 0` columns mapped to zero.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
}

impl Standardizer {
    /// Population statistics of `values`.
    pub fn fit(values: &[f64]) -> Self {
        Standardizer {
            mean: mean(values),
            sd: std_pop(values),
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.sd <= 1e-12 {
            0.0
        } else {
            (v - self.mean) / self.sd
        }
    }
}

/// Adjusted Rand index between two labelings of the same items.
///
/// Labels are arbitrary integers; callers that want noise treated as its own
/// group should map it to a distinct value first.
pub fn adjusted_rand_index(a: &[i64], b: &[i64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "label vectors differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut table: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    let mut rows: BTreeMap<i64, u64> = BTreeMap::new();
    let mut cols: BTreeMap<i64, u64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let comb2 = |k: u64| (k * k.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|&k| comb2(k)).sum();
    let sum_rows: f64 = rows.values().map(|&k| comb2(k)).sum();
    let sum_cols: f64 = cols.values().map(|&k| comb2(k)).sum();
    let total = comb2(n as u64);
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index - expected).abs() < 1e-12 {
        // Both labelings trivial (one group each, or all singletons).
        return Ok(if (index - expected).abs() < 1e-12 { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max_index - expected))
}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` via the Lentz continued fraction.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // The fraction converges fast for x < (a + 1) / (a + b + 2); use symmetry otherwise.
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Survival function `P(F > f)` of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f.is_nan() {
        return f64::NAN;
    }
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    reg_inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn percentile_interpolates_between_order_statistics() {
        let gaps = [10.0, 20.0, 30.0, 40.0, 50.0];
        assert_abs_diff_eq!(percentile(&gaps, 80.0).unwrap(), 42.0, epsilon = 1e-12);
        let planted: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_abs_diff_eq!(percentile(&planted, 90.0).unwrap(), 9.1, epsilon = 1e-12);
        assert_abs_diff_eq!(median(&[1.0, 1.0, 2.0, 3.0, 5.0, 8.0]).unwrap(), 2.5, epsilon = 1e-12);
        assert!(percentile(&[], 50.0).is_err());
    }

    #[test]
    fn mode_prefers_larger_on_ties() {
        assert_eq!(mode(&[13.8, 13.8, 69.0]), Some(13.8));
        assert_eq!(mode(&[13.8, 69.0]), Some(69.0));
        assert_eq!(mode(&[]), None);
    }

    #[test]
    fn standardizer_guards_constant_columns() {
        let s = Standardizer::fit(&[5.0, 5.0, 5.0]);
        assert_eq!(s.apply(5.0), 0.0);
        let s = Standardizer::fit(&[1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(s.apply(1.0), -1.224_744_871_391_589, epsilon = 1e-12);
        assert_abs_diff_eq!(s.apply(3.0), 1.224_744_871_391_589, epsilon = 1e-12);
    }

    #[test]
    fn ari_is_one_for_relabelled_partition() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [5, 5, 3, 3, 9, 9];
        assert_abs_diff_eq!(adjusted_rand_index(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
        let c = [0, 1, 0, 1, 0, 1];
        assert!(adjusted_rand_index(&a, &c).unwrap() < 0.1);
    }

    #[test]
    fn f_survival_matches_statrs() {
        use statrs::distribution::{ContinuousCDF, FisherSnedecor};
        for &(f, d1, d2) in &[(13.5, 1.0, 4.0), (0.7, 3.0, 20.0), (131.0, 7.0, 320.0), (2.2, 4.0, 9.0)] {
            let dist = FisherSnedecor::new(d1, d2).unwrap();
            let expected = dist.sf(f);
            let got = f_survival(f, d1, d2);
            assert!(
                (got - expected).abs() <= 1e-10 + 1e-8 * expected,
                "F={f} ({d1},{d2}): {got} vs {expected}"
            );
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(5.0), 24f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-12);
    }
}
