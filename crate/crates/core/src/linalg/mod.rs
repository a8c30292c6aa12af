//! Small dense linear-algebra kernels.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` and is sized for the
//! desk-scale problems this crate solves (stacked closed loops of at most a
//! few dozen states). No sparse paths, no generalized eigenproblems.

mod eig;
mod riccati;
mod sym;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::settings::NumericSettings;

pub use eig::{eig, eig_with};
pub use riccati::{solve_care, solve_care_with, solve_lyapunov, solve_lyapunov_with};
pub use sym::{sym_eigenvalues, SymmetricEigen};

pub type Matrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("iteration did not converge after {iterations} iterations")]
    ConvergenceFailure { iterations: usize },
    #[error("matrix is not Hurwitz (max real part {max_real:e})")]
    UnstableA { max_real: f64 },
    #[error("linear system is singular")]
    SingularSystem,
    #[error("pair (A, B) could not be stabilized")]
    NotStabilizable,
    #[error("matrix is rank deficient")]
    RankDeficient,
}

/// Eigenvalues of a square matrix, with multiplicity.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(values: Vec<Complex64>) -> Self {
        Spectrum { values }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.values.iter()
    }

    pub fn max_real(&self) -> f64 {
        self.values
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> Complex64 {
        self.values.iter().sum()
    }

    /// Values ordered by real part, then imaginary part.
    pub fn sorted(&self) -> Vec<Complex64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }
}

impl FromIterator<Complex64> for Spectrum {
    fn from_iter<I: IntoIterator<Item = Complex64>>(iter: I) -> Self {
        Spectrum::new(iter.into_iter().collect())
    }
}

pub(crate) fn ensure_square(m: &Matrix) -> Result<usize, LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

pub(crate) fn ensure_finite(m: &Matrix) -> Result<(), LinalgError> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// Frobenius norm; used as `norm(m)` throughout the tolerance formulas.
pub fn norm(m: &Matrix) -> f64 {
    m.norm()
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Right pseudo-inverse `Πᵀ(ΠΠᵀ)⁻¹` of a full-row-rank matrix.
pub fn right_pinv(pi: &Matrix) -> Result<Matrix, LinalgError> {
    right_pinv_with(pi, &NumericSettings::default())
}

pub fn right_pinv_with(pi: &Matrix, settings: &NumericSettings) -> Result<Matrix, LinalgError> {
    ensure_finite(pi)?;
    let (p, m) = pi.shape();
    if p == 0 || p > m {
        return Err(LinalgError::RankDeficient);
    }
    let gram = pi * pi.transpose();
    let scale = pi.norm().powi(2);
    let smallest = sym_eigenvalues(&gram)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if !(smallest > settings.pinv_rank_tol * scale) {
        return Err(LinalgError::RankDeficient);
    }
    let inv = gram.cholesky().ok_or(LinalgError::RankDeficient)?.inverse();
    Ok(pi.transpose() * inv)
}
