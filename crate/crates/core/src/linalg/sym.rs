//! Cyclic Jacobi eigensolver for real symmetric matrices.

use super::{ensure_finite, ensure_square, LinalgError, Matrix};

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Column k is the unit eigenvector for `values[k]`.
    pub vectors: Matrix,
}

impl SymmetricEigen {
    pub fn new(m: &Matrix) -> Result<Self, LinalgError> {
        let n = ensure_square(m)?;
        ensure_finite(m)?;
        let mut a = (m + m.transpose()) * 0.5;
        let mut v = Matrix::identity(n, n);
        let scale = a.norm().max(f64::MIN_POSITIVE);

        let mut converged = n < 2;
        for _ in 0..MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            if off.sqrt() <= f64::EPSILON * scale {
                converged = true;
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        if !converged {
            return Err(LinalgError::ConvergenceFailure {
                iterations: MAX_SWEEPS,
            });
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let vectors = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);
        Ok(SymmetricEigen { values, vectors })
    }
}

pub fn sym_eigenvalues(m: &Matrix) -> Result<Vec<f64>, LinalgError> {
    Ok(SymmetricEigen::new(m)?.values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_graph_laplacian() {
        // Undirected path on three nodes: eigenvalues 0, 1, 3.
        let l = Matrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        let e = SymmetricEigen::new(&l).unwrap();
        for (got, want) in e.values.iter().zip([0.0, 1.0, 3.0]) {
            assert!((got - want).abs() < 1e-13);
        }
        let recon = &e.vectors
            * Matrix::from_diagonal(&nalgebra::DVector::from_vec(e.values.clone()))
            * e.vectors.transpose();
        assert!((recon - l).norm() < 1e-12);
    }
}
