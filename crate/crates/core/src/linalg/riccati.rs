//! Continuous-time Lyapunov and algebraic Riccati solvers.

use super::{eig_with, ensure_finite, ensure_square, symmetrize, LinalgError, Matrix};
use crate::settings::NumericSettings;

/// Solves `aᵀP + Pa + q = 0` for Hurwitz `a` by Kronecker vectorization.
pub fn solve_lyapunov(a: &Matrix, q: &Matrix) -> Result<Matrix, LinalgError> {
    solve_lyapunov_with(a, q, &NumericSettings::default())
}

pub fn solve_lyapunov_with(
    a: &Matrix,
    q: &Matrix,
    settings: &NumericSettings,
) -> Result<Matrix, LinalgError> {
    let n = ensure_square(a)?;
    ensure_finite(a)?;
    ensure_finite(q)?;
    if q.shape() != (n, n) {
        return Err(LinalgError::DimensionMismatch(format!(
            "q is {}x{}, expected {n}x{n}",
            q.nrows(),
            q.ncols()
        )));
    }
    let max_real = eig_with(a, settings)?.max_real();
    if max_real >= -settings.stability_margin {
        return Err(LinalgError::UnstableA { max_real });
    }
    let p = lyapunov_kernel(a, q)?;
    let residual = (a.transpose() * &p + &p * a + q).norm();
    if residual > settings.lyapunov_residual * q.norm().max(1.0) {
        // One step of iterative refinement recovers the last digits lost
        // by the n²×n² factorization on poorly scaled inputs.
        let correction = lyapunov_kernel(a, &(a.transpose() * &p + &p * a + q))?;
        let refined = symmetrize(&(p + correction));
        let r2 = (a.transpose() * &refined + &refined * a + q).norm();
        if r2 > settings.lyapunov_residual * q.norm().max(1.0) {
            return Err(LinalgError::SingularSystem);
        }
        return Ok(refined);
    }
    Ok(p)
}

/// Unchecked core: `(I⊗aᵀ + aᵀ⊗I) vec(P) = −vec(q)`, column-major vec.
fn lyapunov_kernel(a: &Matrix, q: &Matrix) -> Result<Matrix, LinalgError> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = Matrix::identity(n, n);
    let system = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = nalgebra::DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = system.lu().solve(&rhs).ok_or(LinalgError::SingularSystem)?;
    let p = Matrix::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrize(&p))
}

/// Solves `aᵀP + Pa + q − P b r⁻¹ bᵀ P = 0` for the stabilizing solution by
/// Newton–Kleinman iteration.
pub fn solve_care(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<Matrix, LinalgError> {
    solve_care_with(a, b, q, r, &NumericSettings::default())
}

pub fn solve_care_with(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r: &Matrix,
    settings: &NumericSettings,
) -> Result<Matrix, LinalgError> {
    let n = ensure_square(a)?;
    let m = ensure_square(r)?;
    for x in [a, b, q, r] {
        ensure_finite(x)?;
    }
    if b.shape() != (n, m) || q.shape() != (n, n) {
        return Err(LinalgError::DimensionMismatch(format!(
            "a {n}x{n}, b {}x{}, q {}x{}, r {m}x{m}",
            b.nrows(),
            b.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let r_inv = r
        .clone()
        .cholesky()
        .ok_or(LinalgError::SingularSystem)?
        .inverse();
    let s = b * &r_inv * b.transpose();
    let q = symmetrize(q);
    let tol = settings.care_residual * q.norm().max(1.0);

    let mut gain = initial_stabilizing_gain(a, b, &r_inv, settings)?;
    let mut p = Matrix::zeros(n, n);
    for _ in 0..settings.care_max_iterations {
        let closed = a - b * &gain;
        let rhs = &q + gain.transpose() * r * &gain;
        p = match solve_lyapunov_kernel_checked(&closed, &rhs, settings) {
            Some(p) => p,
            None => return Err(LinalgError::NotStabilizable),
        };
        gain = &r_inv * b.transpose() * &p;
        if care_residual(a, &s, &q, &p) <= tol {
            return Ok(polish(a, b, r, &r_inv, &s, &q, p, settings));
        }
    }
    if care_residual(a, &s, &q, &p) <= tol {
        Ok(p)
    } else {
        Err(LinalgError::ConvergenceFailure {
            iterations: settings.care_max_iterations,
        })
    }
}

/// Newton converges quadratically, so a few extra steps past the tolerance
/// are cheap and take the solution to working precision.
#[allow(clippy::too_many_arguments)]
fn polish(
    a: &Matrix,
    b: &Matrix,
    r: &Matrix,
    r_inv: &Matrix,
    s: &Matrix,
    q: &Matrix,
    mut p: Matrix,
    settings: &NumericSettings,
) -> Matrix {
    let mut res = care_residual(a, s, q, &p);
    for _ in 0..3 {
        let gain = r_inv * b.transpose() * &p;
        let rhs = q + gain.transpose() * r * &gain;
        let Some(next) = solve_lyapunov_kernel_checked(&(a - b * &gain), &rhs, settings) else {
            break;
        };
        let next_res = care_residual(a, s, q, &next);
        if next_res >= res {
            break;
        }
        p = next;
        res = next_res;
    }
    p
}

fn care_residual(a: &Matrix, s: &Matrix, q: &Matrix, p: &Matrix) -> f64 {
    (a.transpose() * p + p * a + q - p * s * p).norm()
}

fn solve_lyapunov_kernel_checked(
    a: &Matrix,
    q: &Matrix,
    settings: &NumericSettings,
) -> Option<Matrix> {
    let max_real = eig_with(a, settings).ok()?.max_real();
    if max_real >= -settings.stability_margin {
        return None;
    }
    let p = lyapunov_kernel(a, q).ok()?;
    // Refine once; Newton only needs a good step, the outer loop checks the
    // Riccati residual itself.
    let res = a.transpose() * &p + &p * a + q;
    let corr = lyapunov_kernel(a, &res).ok()?;
    Some(symmetrize(&(p + corr)))
}

/// Bass-type bootstrap: with `β` large enough that `−(a + βI)` is Hurwitz,
/// the solution `Z ≻ 0` of `(a+βI)Z + Z(a+βI)ᵀ = 2 b r⁻¹ bᵀ` gives
/// `(a − b r⁻¹ bᵀ Z⁻¹)Z + Z(·)ᵀ = −2βZ`, so `K₀ = r⁻¹ bᵀ Z⁻¹` stabilizes.
fn initial_stabilizing_gain(
    a: &Matrix,
    b: &Matrix,
    r_inv: &Matrix,
    settings: &NumericSettings,
) -> Result<Matrix, LinalgError> {
    let n = a.nrows();
    let spectrum = eig_with(a, settings)?;
    if spectrum.max_real() < -settings.stability_margin {
        return Ok(Matrix::zeros(b.ncols(), n));
    }
    let min_real = spectrum.iter().map(|z| z.re).fold(f64::INFINITY, f64::min);
    let beta = (-min_real).max(0.0) + 1.0;
    let shifted = a + Matrix::identity(n, n) * beta;
    let rhs = b * r_inv * b.transpose() * 2.0;
    // (shifted) Z + Z (shifted)ᵀ = rhs  ⇔  (−shiftedᵀ)ᵀ Z + Z(−shiftedᵀ) + rhs = 0
    let z = lyapunov_kernel(&(-shifted.transpose()), &rhs)?;
    let z_inv = z.cholesky().ok_or(LinalgError::NotStabilizable)?.inverse();
    let gain = r_inv * b.transpose() * z_inv;
    let closed = eig_with(&(a - b * &gain), settings)?;
    if closed.max_real() >= -settings.stability_margin {
        return Err(LinalgError::NotStabilizable);
    }
    Ok(gain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn scalar_lyapunov() {
        let p = solve_lyapunov(&m(1, 1, &[-1.0]), &m(1, 1, &[2.0])).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_lyapunov() {
        let a = m(2, 2, &[-1.0, 0.0, 0.0, -2.0]);
        let p = solve_lyapunov(&a, &Matrix::identity(2, 2)).unwrap();
        let expected = m(2, 2, &[0.5, 0.0, 0.0, 0.25]);
        assert!((p - expected).norm() < 1e-14);
    }

    #[test]
    fn lyapunov_output_is_exactly_symmetric() {
        let a = m(3, 3, &[-1.0, 2.0, 0.5, 0.0, -3.0, 1.0, 0.3, 0.0, -2.0]);
        let q = m(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 3.0]);
        let p = solve_lyapunov(&a, &q).unwrap();
        assert_eq!(p, p.transpose());
    }

    #[test]
    fn lyapunov_rejects_marginal_a() {
        let a = m(2, 2, &[0.0, 1.0, 0.0, -1.0]);
        assert!(matches!(
            solve_lyapunov(&a, &Matrix::identity(2, 2)),
            Err(LinalgError::UnstableA { .. })
        ));
    }

    #[test]
    fn scalar_care_roots() {
        let one = m(1, 1, &[1.0]);
        let p = solve_care(&m(1, 1, &[0.0]), &one, &one, &one).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-10);
        let p = solve_care(&one, &one, &m(1, 1, &[2.0]), &one).unwrap();
        assert!((p[(0, 0)] - (1.0 + 3f64.sqrt())).abs() < 1e-10);
    }

    #[test]
    fn care_uncontrollable_unstable_mode_fails() {
        let a = m(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let r = solve_care(&a, &b, &Matrix::identity(2, 2), &m(1, 1, &[1.0]));
        assert_eq!(r, Err(LinalgError::NotStabilizable));
    }
}
