use num_complex::Complex64;

use super::{real_monic_coefficients, CompanionSystem, SynthesisError, POLE_TOL};
use crate::linalg::{eig_with, sym_eigenvalues, Matrix};
use crate::settings::NumericSettings;

/// Luenberger gain for `ξ̌̇ = Aξ̌ + Bv + M(y − Cξ̌)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGain {
    /// 1×r.
    pub c: Matrix,
    /// r×1.
    pub m: Matrix,
}

/// Places the eigenvalues of `A − MC` at `observer_poles`, all of which must
/// be stable.
pub fn observer_gain(
    cs: &CompanionSystem,
    c: &Matrix,
    observer_poles: &[Complex64],
) -> Result<ObserverGain, SynthesisError> {
    observer_gain_with(cs, c, observer_poles, &NumericSettings::default())
}

pub fn observer_gain_with(
    cs: &CompanionSystem,
    c: &Matrix,
    observer_poles: &[Complex64],
    settings: &NumericSettings,
) -> Result<ObserverGain, SynthesisError> {
    if let Some(p) = observer_poles.iter().find(|p| !(p.re < -POLE_TOL)) {
        return Err(SynthesisError::UnstablePole(*p));
    }
    let m = place_observer(&cs.a, c, observer_poles, settings)?;
    Ok(ObserverGain { c: c.clone(), m })
}

/// Ackermann's formula on the dual pair `(aᵀ, cᵀ)`. The requested poles need
/// only be conjugate-closed.
pub fn place_observer(
    a: &Matrix,
    c: &Matrix,
    poles: &[Complex64],
    settings: &NumericSettings,
) -> Result<Matrix, SynthesisError> {
    let r = a.nrows();
    if a.ncols() != r || c.shape() != (1, r) || poles.len() != r {
        return Err(SynthesisError::DimensionMismatch(format!(
            "a is {}x{}, C is {}x{}, {} poles",
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols(),
            poles.len()
        )));
    }
    let coeffs = real_monic_coefficients(poles)?;

    let f = a.transpose();
    let mut w = Matrix::zeros(r, r);
    let mut col = c.transpose();
    for k in 0..r {
        w.set_column(k, &col.column(0));
        col = &f * col;
    }
    let sigma_min = sym_eigenvalues(&(w.transpose() * &w))?
        .first()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt();
    if sigma_min <= settings.observability_tol {
        return Err(SynthesisError::NotObservable);
    }

    // φ(F) by Horner.
    let mut phi = Matrix::identity(r, r);
    for k in (0..r).rev() {
        phi = &f * phi + Matrix::identity(r, r) * coeffs[k];
    }
    let mut e_last = Matrix::zeros(r, 1);
    e_last[(r - 1, 0)] = 1.0;
    // Solve Wᵀ y = e_r, then K = yᵀ φ(F).
    let y = w
        .transpose()
        .lu()
        .solve(&e_last)
        .ok_or(SynthesisError::NotObservable)?;
    let gain = y.transpose() * phi;
    let m = gain.transpose();

    let achieved = eig_with(&(a - &m * c), settings)?.into_values();
    let miss = pole_set_distance(&achieved, poles);
    if !(miss <= 1e-6) {
        return Err(SynthesisError::PlacementFailure(miss));
    }
    Ok(m)
}

/// Largest scaled distance under greedy nearest pairing.
fn pole_set_distance(got: &[Complex64], want: &[Complex64]) -> f64 {
    let mut pool: Vec<Complex64> = got.to_vec();
    let mut worst: f64 = 0.0;
    for w in want {
        let (idx, d) = pool
            .iter()
            .enumerate()
            .map(|(i, g)| (i, (g - w).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap_or((0, f64::INFINITY));
        if !pool.is_empty() {
            pool.swap_remove(idx);
        }
        worst = worst.max(d / w.norm().max(1.0));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::design_companion;

    fn reals(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    #[test]
    fn places_benchmark_observer() {
        let cs = design_companion(&reals(&[-1.0, -2.0])).unwrap();
        let c = Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let obs = observer_gain(&cs, &c, &reals(&[-3.0, -4.0, -5.0])).unwrap();
        let s = crate::linalg::eig(&(&cs.a - &obs.m * &c)).unwrap().sorted();
        for (got, want) in s.iter().zip([-5.0, -4.0, -3.0]) {
            assert!((got - Complex64::new(want, 0.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn nu_output_is_unobservable() {
        let cs = design_companion(&reals(&[-1.0, -2.0])).unwrap();
        assert_eq!(
            observer_gain(&cs, &cs.nu_row(), &reals(&[-3.0, -4.0, -5.0])),
            Err(SynthesisError::NotObservable)
        );
    }

    #[test]
    fn placing_at_current_spectrum_needs_no_correction() {
        let cs = design_companion(&reals(&[-1.0, -2.0])).unwrap();
        let c = Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let m = place_observer(&cs.a, &c, &cs.eigenvalues(), &NumericSettings::default()).unwrap();
        assert!(m.amax() < 1e-12);
    }

    #[test]
    fn rejects_unstable_request() {
        let cs = design_companion(&reals(&[-1.0])).unwrap();
        let c = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(matches!(
            observer_gain(&cs, &c, &reals(&[-1.0, 0.5])),
            Err(SynthesisError::UnstablePole(_))
        ));
    }
}
