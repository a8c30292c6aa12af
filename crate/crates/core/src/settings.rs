//! Numeric tolerances shared across the crate.
//!
//! Every threshold the solvers and predicates use lives in one record so a
//! caller can tighten or relax them in a single place. The plain entry points
//! (`eig`, `solve_care`, ...) use [`NumericSettings::default`]; the `*_with`
//! variants take an explicit record.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericSettings {
    /// QR sweeps allowed per eigenvalue problem, as a multiple of n².
    pub eig_iteration_factor: usize,
    /// A matrix counts as Hurwitz for the Lyapunov solver when every
    /// eigenvalue has real part below `-stability_margin`.
    pub stability_margin: f64,
    /// Relative Frobenius residual accepted from the Lyapunov solver.
    pub lyapunov_residual: f64,
    /// Relative Frobenius residual accepted from the Riccati solver.
    pub care_residual: f64,
    pub care_max_iterations: usize,
    /// Relative singular-value floor for the right pseudo-inverse.
    pub pinv_rank_tol: f64,
    /// Laplacian eigenvalues with modulus below `laplacian_zero * ‖L‖` are zero.
    pub laplacian_zero: f64,
    /// Relative in/out-degree mismatch accepted by the balance check.
    pub balance_tol: f64,
    /// Smallest |β| the feedback-linearizing input may divide by.
    pub beta_floor: f64,
    /// Any agent state norm above this aborts a simulation.
    pub divergence_bound: f64,
    /// Smallest singular value of the observability matrix.
    pub observability_tol: f64,
}

impl Default for NumericSettings {
    fn default() -> Self {
        NumericSettings {
            eig_iteration_factor: 100,
            stability_margin: 1e-12,
            lyapunov_residual: 1e-10,
            care_residual: 1e-8,
            care_max_iterations: 200,
            pinv_rank_tol: 1e-12,
            laplacian_zero: 1e-9,
            balance_tol: 1e-12,
            beta_floor: 1e-9,
            divergence_bound: 1e6,
            observability_tol: 1e-9,
        }
    }
}
