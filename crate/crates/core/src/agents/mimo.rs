use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use super::AgentError;
use crate::linalg::{right_pinv_with, LinalgError, Matrix};
use crate::settings::NumericSettings;

pub type MatrixField = Arc<dyn Fn(&[f64]) -> Matrix + Send + Sync>;
pub type VectorOfState = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Input–output data of a square-or-wide MIMO agent: the decoupling matrix
/// `Π(x)` (p×m) and drift `ǎ(x)` of the top output derivatives.
#[derive(Clone)]
pub struct MimoAgentSlice {
    pub p: usize,
    pub m: usize,
    pub rdeg: Vec<usize>,
    pub pi_fn: MatrixField,
    pub alpha_check_fn: VectorOfState,
}

impl fmt::Debug for MimoAgentSlice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MimoAgentSlice")
            .field("p", &self.p)
            .field("m", &self.m)
            .field("rdeg", &self.rdeg)
            .finish_non_exhaustive()
    }
}

/// `u = Π†(−ǎ + ǔ)`, which makes every output channel an integrator chain
/// driven by its own `ǔ_l`.
pub fn decoupling_input(
    slice: &MimoAgentSlice,
    state: &[f64],
    u_check: &[f64],
) -> Result<Vec<f64>, AgentError> {
    if slice.m < slice.p || slice.rdeg.len() != slice.p || u_check.len() != slice.p {
        return Err(AgentError::InvalidDimension(format!(
            "p = {}, m = {}, {} relative degrees, {} commands",
            slice.p,
            slice.m,
            slice.rdeg.len(),
            u_check.len()
        )));
    }
    let pi = (slice.pi_fn)(state);
    let a_check = (slice.alpha_check_fn)(state);
    if pi.shape() != (slice.p, slice.m) || a_check.len() != slice.p {
        return Err(AgentError::InvalidDimension(format!(
            "pi is {}x{}, alpha_check has {} entries",
            pi.nrows(),
            pi.ncols(),
            a_check.len()
        )));
    }
    let pinv = right_pinv_with(&pi, &NumericSettings::default()).map_err(|e| match e {
        LinalgError::NonFinite => AgentError::NonFinite,
        _ => AgentError::RankDeficient,
    })?;
    let rhs = DVector::from_iterator(slice.p, u_check.iter().zip(&a_check).map(|(u, a)| u - a));
    let u = &pinv * &rhs;
    debug_assert!(
        (&pi * &u - &rhs).amax() <= 1e-9 * rhs.amax().max(1.0),
        "decoupling residual too large"
    );
    Ok(u.iter().copied().collect())
}
