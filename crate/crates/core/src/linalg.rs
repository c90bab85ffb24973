//! Dense symmetric eigensolver (cyclic Jacobi).
//!
//! Sized for the few-hundred-node matrices used here: spectral clustering
//! Laplacians and embedding covariances.

use ndarray::{Array1, Array2};

use crate::{Error, Result};

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn symmetric_eigen(matrix: &Array2<f64>) -> Result<SymmetricEigen> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::Shape {
            op: "symmetric_eigen",
            lhs: matrix.dim(),
            rhs: (n, n),
        });
    }
    if n == 0 {
        return Err(Error::Empty("symmetric_eigen on empty matrix"));
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (matrix[[i, j]], matrix[[j, i]]);
            if !a.is_finite() || (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::invalid(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }

    // Row-major scratch copy; indexing into a flat Vec keeps the inner loops tight.
    let mut a: Vec<f64> = matrix.iter().copied().collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[i * n + i]));
    let mut vectors = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, col]] = v[row * n + src];
        }
    }
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("symmetric_eigen".into()));
    }
    Ok(SymmetricEigen { values, vectors })
}
