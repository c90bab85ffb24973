//! K-means (k-means++ seeding) and normalized spectral clustering.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::symmetric_eigen;
use crate::riskcluster::silhouette;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub k: usize,
    pub labels: Vec<i64>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Objective after each Lloyd iteration of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(points: &Array2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    centroids.row_mut(0).assign(&points.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(c)));
        }
    }
    centroids
}

fn assign(points: &Array2<f64>, centroids: &Array2<f64>) -> (Vec<i64>, f64) {
    let mut inertia = 0.0;
    let labels = (0..points.nrows())
        .map(|i| {
            let (best, d) = (0..centroids.nrows())
                .map(|c| (c, sq_dist(points.row(i), centroids.row(c))))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            inertia += d;
            best as i64
        })
        .collect();
    (labels, inertia)
}

fn lloyd(points: &Array2<f64>, mut centroids: Array2<f64>, max_iter: usize) -> KMeansFit {
    let k = centroids.nrows();
    let (mut labels, mut inertia) = assign(points, &centroids);
    let mut history = vec![inertia];
    for _ in 0..max_iter {
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            let mut row = sums.row_mut(l as usize);
            row += &points.row(i);
            counts[l as usize] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            }
            // Empty clusters keep their previous centroid.
        }
        let (next, next_inertia) = assign(points, &centroids);
        history.push(next_inertia);
        let changed = next != labels;
        labels = next;
        inertia = next_inertia;
        if !changed {
            break;
        }
    }
    KMeansFit {
        k,
        labels,
        centroids,
        inertia,
        history,
    }
}

/// Best of `restarts` k-means++ initialisations by inertia.
pub fn kmeans(points: &Array2<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansFit> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} with {n} points")));
    }
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let fit = lloyd(points, plus_plus(points, k, &mut rng), 300);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia - 1e-12) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub k: usize,
    pub labels: Vec<i64>,
    /// `(k, silhouette)` for every candidate that could be scored.
    pub scores: Vec<(usize, f64)>,
}

fn select(candidates: Vec<(usize, Vec<i64>)>, eval_points: &Array2<f64>) -> Result<Selection> {
    let mut scores = Vec::new();
    let mut best: Option<(usize, Vec<i64>, f64)> = None;
    for (k, labels) in candidates {
        let Ok(s) = silhouette(eval_points, &labels) else { continue };
        scores.push((k, s.mean));
        if best.as_ref().is_none_or(|b| s.mean > b.2 + 1e-12) {
            best = Some((k, labels, s.mean));
        }
    }
    let (k, labels, _) = best.ok_or_else(|| Error::invalid("no candidate k produced two clusters"))?;
    Ok(Selection { k, labels, scores })
}

/// K-means for each `k` in `ks`, keeping the best silhouette.
pub fn kmeans_select(points: &Array2<f64>, ks: &[usize], seed: u64) -> Result<Selection> {
    let candidates = ks.iter().map(|&k| kmeans(points, k, 10, seed).map(|f| (k, f.labels))).collect::<Result<Vec<_>>>()?;
    select(candidates, points)
}

/// `I − D^{-1/2} A D^{-1/2}`; isolated nodes get a unit diagonal.
pub fn normalized_laplacian(affinity: &Array2<f64>) -> Result<Array2<f64>> {
    let n = affinity.nrows();
    if affinity.ncols() != n {
        return Err(Error::Shape {
            op: "normalized_laplacian",
            lhs: affinity.dim(),
            rhs: (n, n),
        });
    }
    for i in 0..n {
        for j in 0..n {
            let a = affinity[[i, j]];
            if a < 0.0 || !a.is_finite() || (a - affinity[[j, i]]).abs() > 1e-12 {
                return Err(Error::invalid("affinity must be symmetric, finite and nonnegative"));
            }
        }
    }
    let inv_sqrt: Vec<f64> = affinity.rows().into_iter().map(|r| {
        let d = r.sum();
        if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }
    }).collect();
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * affinity[[i, j]] * inv_sqrt[j]
    }))
}

/// Bottom-`k` eigenvectors of the normalized Laplacian, rows unit-normalized,
/// clustered with k-means.
pub fn spectral_fit(affinity: &Array2<f64>, k: usize, seed: u64) -> Result<Vec<i64>> {
    let n = affinity.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} with {n} nodes")));
    }
    let eig = symmetric_eigen(&normalized_laplacian(affinity)?)?;
    let mut emb = Array2::from_shape_fn((n, k), |(i, c)| eig.vectors[[i, c]]);
    for mut row in emb.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    Ok(kmeans(&emb, k, 10, seed)?.labels)
}

/// Spectral clustering for each `k`, scored by silhouette on `eval_points`.
pub fn spectral_select(affinity: &Array2<f64>, eval_points: &Array2<f64>, ks: &[usize], seed: u64) -> Result<Selection> {
    let candidates = ks.iter().map(|&k| spectral_fit(affinity, k, seed).map(|l| (k, l))).collect::<Result<Vec<_>>>()?;
    select(candidates, eval_points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::adjusted_rand_index;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn two_blobs(seed: u64) -> (Array2<f64>, Vec<i64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = Array2::from_shape_fn((60, 2), |(i, _)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * 0.4 + if i < 30 { 0.0 } else { 6.0 }
        });
        (pts, (0..60).map(|i| i64::from(i >= 30)).collect())
    }

    #[test]
    fn single_centroid_is_the_mean() {
        let (pts, _) = two_blobs(1);
        let f = kmeans(&pts, 1, 1, 0).unwrap();
        let mean = pts.mean_axis(ndarray::Axis(0)).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(f.centroids[[0, j]], mean[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn two_blobs_select_k2() {
        let (pts, truth) = two_blobs(2);
        let s = kmeans_select(&pts, &[2, 3, 4], 7).unwrap();
        assert_eq!(s.k, 2);
        assert_eq!(adjusted_rand_index(&s.labels, &truth).unwrap(), 1.0);
    }

    #[test]
    fn lloyd_objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = Array2::from_shape_fn((120, 3), |_| StandardNormal.sample(&mut rng));
        for k in 2..6 {
            let f = kmeans(&pts, k, 1, k as u64).unwrap();
            for w in f.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }

    #[test]
    fn k_larger_than_n_is_rejected() {
        assert!(kmeans(&Array2::zeros((2, 2)), 3, 1, 0).is_err());
    }

    #[test]
    fn spectral_splits_disconnected_components() {
        let n = 20;
        let mut a = Array2::zeros((n, n));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..n {
            for j in (i + 1)..n {
                if (i < 8) == (j < 8) && rng.random::<f64>() < 0.5 || j == i + 1 && (i != 7) {
                    let w = rng.random_range(0.5..1.5);
                    a[[i, j]] = w;
                    a[[j, i]] = w;
                }
            }
        }
        let labels = spectral_fit(&a, 2, 1).unwrap();
        let truth: Vec<i64> = (0..n).map(|i| i64::from(i >= 8)).collect();
        assert_eq!(adjusted_rand_index(&labels, &truth).unwrap(), 1.0);
        // Zero eigenvalue multiplicity equals the component count.
        let eig = symmetric_eigen(&normalized_laplacian(&a).unwrap()).unwrap();
        assert!(eig.values[0].abs() < 1e-9 && eig.values[1].abs() < 1e-9 && eig.values[2] > 1e-6);
    }

    #[test]
    fn eigen_residual_on_random_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Array2::from_shape_fn((50, 50), |_| rng.random_range(-1.0..1.0));
        let s = &m + &m.t();
        let eig = symmetric_eigen(&s).unwrap();
        for k in 0..50 {
            let v = eig.vectors.column(k);
            let r = s.dot(&v) - &v * eig.values[k];
            assert!(r.dot(&r).sqrt() < 1e-8);
        }
    }
}
