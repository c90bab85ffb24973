//! Projection of embeddings into a low-dimensional clustering space.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::linalg::symmetric_eigen;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    /// `n × target_dim` projected points.
    pub points: Array2<f64>,
    /// `d × target_dim` orthonormal directions (zero columns when padded).
    pub components: Array2<f64>,
    pub mean: Array1<f64>,
    /// Fraction of total variance per component.
    pub explained_variance_ratio: Vec<f64>,
    /// Set when the data had fewer than `target_dim` nonzero directions.
    pub rank_deficient: bool,
}

pub trait Reducer {
    fn reduce(&self, x: &Array2<f64>, target_dim: usize) -> Result<Reduction>;
}

/// Principal components via the eigendecomposition of the covariance matrix.
/// Each direction's sign makes its largest-magnitude loading positive.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pca;

impl Reducer for Pca {
    fn reduce(&self, x: &Array2<f64>, target_dim: usize) -> Result<Reduction> {
        let (n, d) = x.dim();
        if n == 0 {
            return Err(Error::Empty("points to reduce"));
        }
        if d < target_dim {
            return Err(Error::invalid(format!("cannot reduce {d} dimensions to {target_dim}")));
        }
        let mean = x.mean_axis(Axis(0)).expect("n > 0");
        let centered = x - &mean.view().insert_axis(Axis(0));
        let cov = centered.t().dot(&centered) / n as f64;
        let eig = symmetric_eigen(&cov)?;
        let total: f64 = eig.values.iter().map(|v| v.max(0.0)).sum();
        let tol = 1e-12 * total.max(1e-300);

        let mut components = Array2::zeros((d, target_dim));
        let mut ratio = vec![0.0; target_dim];
        let mut rank_deficient = false;
        for k in 0..target_dim {
            let idx = d - 1 - k;
            let lambda = eig.values[idx];
            if lambda <= tol {
                rank_deficient = true;
                continue;
            }
            let mut v = eig.vectors.column(idx).to_owned();
            let lead = v.iter().copied().enumerate().fold((0, 0.0f64), |acc, (i, x)| if x.abs() > acc.1.abs() + 1e-12 { (i, x) } else { acc });
            if lead.1 < 0.0 {
                v.mapv_inplace(|x| -x);
            }
            components.column_mut(k).assign(&v);
            ratio[k] = lambda / total;
        }
        Ok(Reduction {
            points: centered.dot(&components),
            components,
            mean,
            explained_variance_ratio: ratio,
            rank_deficient,
        })
    }
}

pub fn reduce_dim(x: &Array2<f64>, target_dim: usize) -> Result<Reduction> {
    Pca.reduce(x, target_dim)
}
