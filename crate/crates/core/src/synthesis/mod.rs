//! Controller construction: the shared companion target, cooperative gains,
//! per-agent local controllers, observer gains and the closed-loop spectrum.

mod observer;
mod spectrum;

use num_complex::Complex64;
use thiserror::Error;

pub use observer::{observer_gain, observer_gain_with, place_observer, ObserverGain};
pub use spectrum::{closed_loop_spectrum, closed_loop_spectrum_with, ClosedLoopSpectrum};

use crate::agents::NormalFormAgent;
use crate::linalg::{eig, solve_care_with, LinalgError, Matrix};
use crate::settings::NumericSettings;

const POLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("pole set is not closed under conjugation")]
    NotConjugateClosed,
    #[error("pole {0} is not in the open left half plane")]
    UnstablePole(Complex64),
    #[error("parameter {0} must be positive")]
    NonPositiveParameter(&'static str),
    #[error("agent relative degree {agent_r} exceeds target degree {target_r}")]
    DegreeExceedsTarget { agent_r: usize, target_r: usize },
    #[error("(C, A) is not observable")]
    NotObservable,
    #[error("pole placement missed a requested pole by {0:e}")]
    PlacementFailure(f64),
    #[error("analytic and direct spectra differ by {0:e}")]
    InconsistentSpectra(f64),
    #[error("local controller does not reproduce the target dynamics (error {0:e})")]
    AssemblyMismatch(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `ẋ = Ax + Bu` with `A` in companion form, one eigenvalue at the origin
/// and the rest stable.
#[derive(Debug, Clone, PartialEq)]
pub struct CompanionSystem {
    pub r: usize,
    /// `b₂, …, b_r`.
    pub b: Vec<f64>,
    pub a: Matrix,
    /// `e_r` as an r×1 column.
    pub b_vec: Matrix,
    /// `[b₂, …, b_r, 1]`, so that `νᵀA = 0` and `Bᵀν = 1`.
    pub nu: Vec<f64>,
    /// The nonzero eigenvalues of `A`.
    pub poles: Vec<Complex64>,
}

impl CompanionSystem {
    /// Builds the companion with characteristic polynomial
    /// `s^r + b_r s^{r−1} + … + b₂ s`.
    pub fn from_coefficients(b: &[f64]) -> Result<Self, SynthesisError> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite.into());
        }
        let r = b.len() + 1;
        // Roots of s^{r−1} + b_r s^{r−2} + … + b₂ from its own companion.
        let poles: Vec<Complex64> = if r == 1 {
            Vec::new()
        } else {
            let m = r - 1;
            let mut c = Matrix::zeros(m, m);
            for i in 0..m - 1 {
                c[(i, i + 1)] = 1.0;
            }
            for j in 0..m {
                c[(m - 1, j)] = -b[j];
            }
            eig(&c)?.into_values()
        };
        for p in &poles {
            if p.re >= -POLE_TOL {
                return Err(SynthesisError::UnstablePole(*p));
            }
        }
        Ok(Self::assemble(b.to_vec(), poles))
    }

    fn assemble(b: Vec<f64>, poles: Vec<Complex64>) -> Self {
        let r = b.len() + 1;
        let mut a = Matrix::zeros(r, r);
        for i in 0..r - 1 {
            a[(i, i + 1)] = 1.0;
        }
        for (k, bk) in b.iter().enumerate() {
            a[(r - 1, k + 1)] = -bk;
        }
        let mut b_vec = Matrix::zeros(r, 1);
        b_vec[(r - 1, 0)] = 1.0;
        let nu = b.iter().copied().chain(std::iter::once(1.0)).collect();
        CompanionSystem {
            r,
            b,
            a,
            b_vec,
            nu,
            poles,
        }
    }

    pub fn nu_row(&self) -> Matrix {
        Matrix::from_row_slice(1, self.r, &self.nu)
    }

    pub fn nu_col(&self) -> Matrix {
        Matrix::from_column_slice(self.r, 1, &self.nu)
    }

    /// `λ(A)`: the origin followed by the stable poles.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        std::iter::once(Complex64::new(0.0, 0.0))
            .chain(self.poles.iter().copied())
            .collect()
    }
}

/// Expands `s · Π(s − p_k)` over a conjugate-closed stable pole set.
pub fn design_companion(stable_poles: &[Complex64]) -> Result<CompanionSystem, SynthesisError> {
    for p in stable_poles {
        if !(p.re.is_finite() && p.im.is_finite()) {
            return Err(LinalgError::NonFinite.into());
        }
        if p.re >= -POLE_TOL {
            return Err(SynthesisError::UnstablePole(*p));
        }
    }
    let coeffs = real_monic_coefficients(stable_poles)?;
    // coeffs: s^{m} + c_{m−1}s^{m−1} + … + c_0, with c_0 = b₂ and c_{m−1} = b_r.
    let b = coeffs[..stable_poles.len()].to_vec();
    Ok(CompanionSystem::assemble(b, stable_poles.to_vec()))
}

/// Checks conjugate closure and returns the real coefficients of `Π(s − p_k)`
/// in ascending order, leading 1 included.
pub(crate) fn real_monic_coefficients(poles: &[Complex64]) -> Result<Vec<f64>, SynthesisError> {
    let mut unmatched: Vec<Complex64> = poles.iter().filter(|p| p.im != 0.0).copied().collect();
    while let Some(p) = unmatched.pop() {
        let tol = POLE_TOL * p.norm().max(1.0);
        let partner = unmatched
            .iter()
            .position(|q| (q - p.conj()).norm() <= tol)
            .ok_or(SynthesisError::NotConjugateClosed)?;
        unmatched.swap_remove(partner);
    }
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for p in poles {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (k, ck) in c.iter().enumerate() {
            next[k + 1] += ck;
            next[k] -= ck * p;
        }
        c = next;
    }
    Ok(c.into_iter().map(|z| z.re).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainRank {
    One,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusGain {
    pub mu: f64,
    pub q1: f64,
    pub r_hat: f64,
    /// 1×r.
    pub k: Matrix,
    pub p1: Matrix,
    pub rank: GainRank,
}

fn positive(name: &'static str, v: f64) -> Result<(), SynthesisError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SynthesisError::NonPositiveParameter(name))
    }
}

/// `K = μ√(q₁r̂)·νᵀ`, `P₁ = ν·p₁·νᵀ` with `p₁ = √q₁/(√r̂·Bᵀν)`.
pub fn rank_one_gain(
    cs: &CompanionSystem,
    mu: f64,
    q1: f64,
    r_hat: f64,
) -> Result<ConsensusGain, SynthesisError> {
    positive("mu", mu)?;
    positive("q1", q1)?;
    positive("r_hat", r_hat)?;
    let nu = cs.nu_col();
    let b_nu = cs.nu[cs.r - 1];
    let p1_scalar = q1.sqrt() / (r_hat.sqrt() * b_nu);
    Ok(ConsensusGain {
        mu,
        q1,
        r_hat,
        k: cs.nu_row() * (mu * (q1 * r_hat).sqrt()),
        p1: &nu * nu.transpose() * p1_scalar,
        rank: GainRank::One,
    })
}

/// `P₁` from `P₁A + AᵀP₁ + Q₁ − r̂P₁BBᵀP₁ = 0`, `K = μ·r̂·BᵀP₁`.
pub fn full_gain(
    cs: &CompanionSystem,
    mu: f64,
    q1_matrix: &Matrix,
    r_hat: f64,
) -> Result<ConsensusGain, SynthesisError> {
    full_gain_with(cs, mu, q1_matrix, r_hat, &NumericSettings::default())
}

pub fn full_gain_with(
    cs: &CompanionSystem,
    mu: f64,
    q1_matrix: &Matrix,
    r_hat: f64,
    settings: &NumericSettings,
) -> Result<ConsensusGain, SynthesisError> {
    positive("mu", mu)?;
    positive("r_hat", r_hat)?;
    if q1_matrix.shape() != (cs.r, cs.r) {
        return Err(SynthesisError::DimensionMismatch(format!(
            "Q1 is {}x{}, expected {r}x{r}",
            q1_matrix.nrows(),
            q1_matrix.ncols(),
            r = cs.r
        )));
    }
    let r_inv = Matrix::from_element(1, 1, 1.0 / r_hat);
    let p1 = solve_care_with(&cs.a, &cs.b_vec, q1_matrix, &r_inv, settings)?;
    let k = cs.b_vec.transpose() * &p1 * (mu * r_hat);
    // Weight of Q₁ along ν; equals q₁ when Q₁ = ν·q₁·νᵀ.
    let nu = cs.nu_col();
    let nn = (nu.transpose() * &nu)[(0, 0)];
    let q1 = (nu.transpose() * q1_matrix * &nu)[(0, 0)] / (nn * nn);
    Ok(ConsensusGain {
        mu,
        q1,
        r_hat,
        k,
        p1,
        rank: GainRank::Full,
    })
}

/// Local dynamic controller `φ̇ = Dξ + Eφ + Gv`, `û = φ₁`, which extends an
/// agent of degree `rᵢ` to the common companion of degree `r`. When `rᵢ = r`
/// there is no controller state and `û = [0, −b₂, …, −b_r]·ξ + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalController {
    pub agent_id: usize,
    pub agent_r: usize,
    pub target_r: usize,
    /// (r−rᵢ)×rᵢ.
    pub d: Matrix,
    /// (r−rᵢ)×(r−rᵢ).
    pub e: Matrix,
    /// (r−rᵢ)×1.
    pub g: Matrix,
    /// Row applied to `ξ` in the static case; empty otherwise.
    pub static_row: Vec<f64>,
}

impl LocalController {
    pub fn order(&self) -> usize {
        self.target_r - self.agent_r
    }

    pub fn is_static(&self) -> bool {
        self.order() == 0
    }

    /// The linear map from `(ξ, φ)` and `v` to their rates.
    pub fn assemble(&self) -> (Matrix, Matrix) {
        let (ri, r) = (self.agent_r, self.target_r);
        let mut a = Matrix::zeros(r, r);
        let mut b = Matrix::zeros(r, 1);
        for i in 0..ri.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        if self.is_static() {
            for (j, v) in self.static_row.iter().enumerate() {
                a[(ri - 1, j)] = *v;
            }
            b[(ri - 1, 0)] = 1.0;
        } else {
            a[(ri - 1, ri)] = 1.0;
            a.view_mut((ri, 0), (r - ri, ri)).copy_from(&self.d);
            a.view_mut((ri, ri), (r - ri, r - ri)).copy_from(&self.e);
            b.view_mut((ri, 0), (r - ri, 1)).copy_from(&self.g);
        }
        (a, b)
    }
}

pub fn local_controller(
    cs: &CompanionSystem,
    agent: &NormalFormAgent,
) -> Result<LocalController, SynthesisError> {
    local_controller_for_degree(cs, agent.r(), agent.id)
}

pub fn local_controller_for_degree(
    cs: &CompanionSystem,
    ri: usize,
    agent_id: usize,
) -> Result<LocalController, SynthesisError> {
    let r = cs.r;
    if ri > r || ri == 0 {
        return Err(SynthesisError::DegreeExceedsTarget {
            agent_r: ri,
            target_r: r,
        });
    }
    let n = r - ri;
    let mut d = Matrix::zeros(n, ri);
    let mut e = Matrix::zeros(n, n);
    let mut g = Matrix::zeros(n, 1);
    if n > 0 {
        // Last rows carry −b₂…−b_r split between ξ (after its leading 0) and φ.
        for k in 1..ri {
            d[(n - 1, k)] = -cs.b[k - 1];
        }
        for i in 0..n - 1 {
            e[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            e[(n - 1, j)] = -cs.b[ri + j - 1];
        }
        g[(n - 1, 0)] = 1.0;
    }
    let static_row = if n == 0 {
        std::iter::once(0.0)
            .chain(cs.b.iter().map(|b| -b))
            .collect()
    } else {
        Vec::new()
    };
    let ctrl = LocalController {
        agent_id,
        agent_r: ri,
        target_r: r,
        d,
        e,
        g,
        static_row,
    };
    let (a, b) = ctrl.assemble();
    let err = (a - &cs.a).amax().max((b - &cs.b_vec).amax());
    if err > 1e-12 {
        return Err(SynthesisError::AssemblyMismatch(err));
    }
    Ok(ctrl)
}

/// LQR consensus gain `K = R·bᵀ·P` with `P` the stabilizing solution of
/// `aᵀP + Pa + q − P b R bᵀ P = 0`.
pub fn linear_consensus_gain(
    a: &Matrix,
    b: &Matrix,
    q: &Matrix,
    r_weight: &Matrix,
) -> Result<Matrix, SynthesisError> {
    let r_inv = r_weight
        .clone()
        .try_inverse()
        .ok_or(LinalgError::SingularSystem)?;
    let p = solve_care_with(a, b, q, &r_inv, &NumericSettings::default())?;
    Ok(r_weight * b.transpose() * p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn reals(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| c(x, 0.0)).collect()
    }

    #[test]
    fn benchmark_companion() {
        let cs = design_companion(&reals(&[-1.0, -2.0])).unwrap();
        assert_eq!(cs.b, vec![2.0, 3.0]);
        assert_eq!(cs.nu, vec![2.0, 3.0, 1.0]);
        let want = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -2.0, -3.0]);
        assert_eq!(cs.a, want);
        assert!((cs.nu_row() * &cs.a).amax() < 1e-12);
    }

    #[test]
    fn single_pole_and_complex_pair() {
        let cs = design_companion(&reals(&[-1.0])).unwrap();
        assert_eq!(cs.b, vec![1.0]);
        assert_eq!(cs.a, Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0]));
        assert_eq!(cs.nu, vec![1.0, 1.0]);
        let cs = design_companion(&[c(-1.0, 1.0), c(-1.0, -1.0)]).unwrap();
        assert_eq!(cs.b, vec![2.0, 2.0]);
    }

    #[test]
    fn pole_validation() {
        assert_eq!(
            design_companion(&[c(-1.0, 1.0)]),
            Err(SynthesisError::NotConjugateClosed)
        );
        assert!(matches!(
            design_companion(&reals(&[-1.0, 0.0])),
            Err(SynthesisError::UnstablePole(_))
        ));
        assert!(matches!(
            CompanionSystem::from_coefficients(&[-1.0, 1.0]),
            Err(SynthesisError::UnstablePole(_))
        ));
        let cs = CompanionSystem::from_coefficients(&[2.0, 3.0]).unwrap();
        assert_eq!(cs.a, design_companion(&reals(&[-1.0, -2.0])).unwrap().a);
    }

    #[test]
    fn rank_one_benchmark() {
        let cs = design_companion(&reals(&[-1.0, -2.0])).unwrap();
        let g = rank_one_gain(&cs, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(g.k, Matrix::from_row_slice(1, 3, &[2.0, 3.0, 1.0]));
        let p1 = Matrix::from_row_slice(3, 3, &[4.0, 6.0, 2.0, 6.0, 9.0, 3.0, 2.0, 3.0, 1.0]);
        assert_eq!(g.p1, p1);
        let slow = rank_one_gain(&cs, 0.01, 1.0, 1.0).unwrap();
        assert_eq!(slow.p1, p1);
        assert!((slow.k - &g.k * 0.01).amax() < 1e-15);
        let q4 = rank_one_gain(&cs, 1.0, 4.0, 1.0).unwrap();
        assert_eq!(q4.k, &g.k * 2.0);
        assert_eq!(q4.p1, &p1 * 2.0);
        assert_eq!(
            rank_one_gain(&cs, 0.0, 1.0, 1.0),
            Err(SynthesisError::NonPositiveParameter("mu"))
        );
    }

    #[test]
    fn full_gain_identity_weight() {
        let cs = design_companion(&reals(&[-1.0])).unwrap();
        let g = full_gain(&cs, 1.0, &Matrix::identity(2, 2), 1.0).unwrap();
        assert!(g.p1.clone().cholesky().is_some());
        let closed = &cs.a - &cs.b_vec * cs.b_vec.transpose() * &g.p1;
        assert!(eig(&closed).unwrap().max_real() < 0.0);
        let g2 = full_gain(&cs, 3.0, &Matrix::identity(2, 2), 1.0).unwrap();
        assert!((g2.k - &g.k * 3.0).amax() < 1e-12);
        assert!((g2.p1 - &g.p1).amax() < 1e-12);
    }

    #[test]
    fn controller_for_second_order_agents() {
        let cs = design_companion(&reals(&[-1.0, -2.0])).unwrap();
        let ctrl = local_controller_for_degree(&cs, 2, 1).unwrap();
        assert_eq!(ctrl.d, Matrix::from_row_slice(1, 2, &[0.0, -2.0]));
        assert_eq!(ctrl.e, Matrix::from_row_slice(1, 1, &[-3.0]));
        assert_eq!(ctrl.g, Matrix::from_row_slice(1, 1, &[1.0]));
        let stat = local_controller_for_degree(&cs, 3, 3).unwrap();
        assert!(stat.is_static());
        assert_eq!(stat.d.shape(), (0, 3));
        assert_eq!(stat.e.shape(), (0, 0));
        assert_eq!(stat.static_row, vec![0.0, -2.0, -3.0]);
    }

    #[test]
    fn controller_for_first_order_agent() {
        let cs = design_companion(&reals(&[-1.0, -2.0])).unwrap();
        let ctrl = local_controller_for_degree(&cs, 1, 7).unwrap();
        // the chain state enters only through its (absent) derivative
        assert_eq!(ctrl.d, Matrix::from_row_slice(2, 1, &[0.0, 0.0]));
        assert_eq!(
            ctrl.e,
            Matrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0])
        );
        let (a, b) = ctrl.assemble();
        assert!((a - &cs.a).amax() <= 1e-12);
        assert!((b - &cs.b_vec).amax() <= 1e-12);
        assert_eq!(
            local_controller_for_degree(&cs, 4, 0),
            Err(SynthesisError::DegreeExceedsTarget {
                agent_r: 4,
                target_r: 3
            })
        );
    }

    #[test]
    fn linear_gains() {
        let one = Matrix::from_element(1, 1, 1.0);
        let k = linear_consensus_gain(&Matrix::zeros(1, 1), &one, &one, &one).unwrap();
        assert!((k[(0, 0)] - 1.0).abs() < 1e-10);
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let k = linear_consensus_gain(&a, &b, &Matrix::identity(2, 2), &one).unwrap();
        assert!((k[(0, 0)] - 1.0).abs() < 1e-10);
        assert!((k[(0, 1)] - 3f64.sqrt()).abs() < 1e-10);
        assert!(eig(&(a - b * k)).unwrap().max_real() < 0.0);
    }
}
