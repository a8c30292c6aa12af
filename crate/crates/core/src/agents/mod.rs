//! Heterogeneous agents in feedback-linearized normal form.
//!
//! An agent is described by its relative degree `r`, the drift `α(ξ, η)` and
//! input gain `β(ξ, η)` of the last chain state, and its internal dynamics
//! `η̇ = ϑ(ξ, η)`. The simulator never sees `α` or `β` directly: it asks the
//! agent for state rates under a linearizing command `û`, and the agent
//! applies the physical input `u = (û − α)/β` itself.
//!
//! Three realizations share this interface:
//! * plain normal form, state `[ξ; η]`;
//! * augmented general agents, state `[ξ̃; η̃; u]`, where the physical input is
//!   an integrator state driven by the commanded rate `w`;
//! * agents carried in their original coordinates `x`, with `ξ, η` exposed
//!   through a coordinate map (see [`PhysicalCoordinates`]).

mod builtin;
mod mimo;
mod poly;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

pub use builtin::{builtin, builtin_names, SecondChainAgent, ThirdOrderAgent};
pub use mimo::{decoupling_input, MimoAgentSlice};
pub use poly::{Polynomial, Term};

use crate::settings::NumericSettings;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("unknown builtin agent {0:?}")]
    UnknownName(String),
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("|beta| = {beta:e} fell below the floor")]
    BetaNearZero { beta: f64 },
    #[error("agent dynamics returned a non-finite value")]
    NonFinite,
    #[error("decoupling matrix is rank deficient at this state")]
    RankDeficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Affine,
    AugmentedGeneral,
}

pub type ScalarField = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// An agent simulated in its own coordinates `x`, with the normal-form
/// coordinates `(ξ, η)` given by a diffeomorphism.
pub trait PhysicalCoordinates: Send + Sync {
    fn dim(&self) -> usize;
    fn to_normal(&self, x: &[f64], xi: &mut [f64], eta: &mut [f64]);
    fn to_physical(&self, xi: &[f64], eta: &[f64], x: &mut [f64]);
    fn alpha(&self, x: &[f64]) -> f64;
    fn beta(&self, x: &[f64]) -> f64;
    /// `ẋ = f(x) + g(x)·u`.
    fn vector_field(&self, x: &[f64], u: f64, dx: &mut [f64]);
}

#[derive(Clone)]
enum Realization {
    Normal,
    Augmented,
    Physical(Arc<dyn PhysicalCoordinates>),
}

#[derive(Clone)]
pub struct NormalFormAgent {
    pub id: usize,
    pub name: String,
    r: usize,
    n_eta: usize,
    kind: AgentKind,
    alpha: ScalarField,
    beta: ScalarField,
    theta: VectorField,
    xi0: Vec<f64>,
    eta0: Vec<f64>,
    u0: f64,
    realization: Realization,
}

impl fmt::Debug for NormalFormAgent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormalFormAgent")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("r", &self.r)
            .field("n_eta", &self.n_eta)
            .field("kind", &self.kind)
            .field("xi0", &self.xi0)
            .field("eta0", &self.eta0)
            .finish_non_exhaustive()
    }
}

/// Rates of the normal-form coordinates and the physical input that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalFormRates {
    pub dxi: Vec<f64>,
    pub deta: Vec<f64>,
    pub u: f64,
}

impl NormalFormAgent {
    pub fn new(
        r: usize,
        n_eta: usize,
        alpha: ScalarField,
        beta: ScalarField,
        theta: VectorField,
        xi0: Vec<f64>,
        eta0: Vec<f64>,
    ) -> Result<Self, AgentError> {
        if r == 0 {
            return Err(AgentError::InvalidDimension(
                "relative degree must be ≥ 1".into(),
            ));
        }
        check_len("xi0", &xi0, r)?;
        check_len("eta0", &eta0, n_eta)?;
        Ok(NormalFormAgent {
            id: 0,
            name: "custom".into(),
            r,
            n_eta,
            kind: AgentKind::Affine,
            alpha,
            beta,
            theta,
            xi0,
            eta0,
            u0: 0.0,
            realization: Realization::Normal,
        })
    }

    /// Agent with polynomial `α`, `β`, `ϑ` over the variables `(ξ₁..ξ_r, η₁..η_k)`.
    pub fn from_polynomials(
        r: usize,
        n_eta: usize,
        alpha: Polynomial,
        beta: Polynomial,
        theta: Vec<Polynomial>,
        xi0: Vec<f64>,
        eta0: Vec<f64>,
    ) -> Result<Self, AgentError> {
        let nvars = r + n_eta;
        if theta.len() != n_eta {
            return Err(AgentError::InvalidDimension(format!(
                "theta has {} components, expected {n_eta}",
                theta.len()
            )));
        }
        for (what, p) in [("alpha", &alpha), ("beta", &beta)]
            .into_iter()
            .chain(theta.iter().map(|p| ("theta", p)))
        {
            p.check_arity(nvars)
                .map_err(|e| AgentError::InvalidDimension(format!("{what}: {e}")))?;
        }
        let alpha = Arc::new(move |xi: &[f64], eta: &[f64]| alpha.eval_split(xi, eta));
        let beta = Arc::new(move |xi: &[f64], eta: &[f64]| beta.eval_split(xi, eta));
        let theta = Arc::new(move |xi: &[f64], eta: &[f64], out: &mut [f64]| {
            for (o, p) in out.iter_mut().zip(&theta) {
                *o = p.eval_split(xi, eta);
            }
        });
        NormalFormAgent::new(r, n_eta, alpha, beta, theta, xi0, eta0)
    }

    /// Wraps an agent carried in its original coordinates. `alpha`/`beta`
    /// over `(ξ, η)` are evaluated through the inverse coordinate map.
    pub fn from_physical(
        r: usize,
        n_eta: usize,
        model: Arc<dyn PhysicalCoordinates>,
        xi0: Vec<f64>,
        eta0: Vec<f64>,
    ) -> Result<Self, AgentError> {
        if model.dim() != r + n_eta {
            return Err(AgentError::InvalidDimension(format!(
                "coordinate map has dimension {}, expected {}",
                model.dim(),
                r + n_eta
            )));
        }
        let to_x = {
            let model = model.clone();
            move |xi: &[f64], eta: &[f64]| {
                let mut x = vec![0.0; model.dim()];
                model.to_physical(xi, eta, &mut x);
                x
            }
        };
        let alpha = {
            let (model, to_x) = (model.clone(), to_x.clone());
            Arc::new(move |xi: &[f64], eta: &[f64]| model.alpha(&to_x(xi, eta)))
        };
        let beta = {
            let (model, to_x) = (model.clone(), to_x.clone());
            Arc::new(move |xi: &[f64], eta: &[f64]| model.beta(&to_x(xi, eta)))
        };
        let theta = {
            let model = model.clone();
            Arc::new(move |xi: &[f64], eta: &[f64], out: &mut [f64]| {
                // η̇ by the chain rule: map, step the field with zero input,
                // map back. Only used outside simulation.
                let x = to_x(xi, eta);
                let n = model.dim();
                let mut dx = vec![0.0; n];
                let beta = model.beta(&x);
                let alpha = model.alpha(&x);
                model.vector_field(&x, -alpha / beta, &mut dx);
                let h = 1e-7;
                let xp: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + h * b).collect();
                let xm: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a - h * b).collect();
                let (mut xi_p, mut eta_p) = (vec![0.0; xi.len()], vec![0.0; out.len()]);
                let (mut xi_m, mut eta_m) = (vec![0.0; xi.len()], vec![0.0; out.len()]);
                model.to_normal(&xp, &mut xi_p, &mut eta_p);
                model.to_normal(&xm, &mut xi_m, &mut eta_m);
                for (k, o) in out.iter_mut().enumerate() {
                    *o = (eta_p[k] - eta_m[k]) / (2.0 * h);
                }
            })
        };
        let mut agent = NormalFormAgent::new(r, n_eta, alpha, beta, theta, xi0, eta0)?;
        agent.realization = Realization::Physical(model);
        Ok(agent)
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_initial(mut self, xi0: Vec<f64>, eta0: Vec<f64>) -> Result<Self, AgentError> {
        check_len("xi0", &xi0, self.r)?;
        check_len("eta0", &eta0, self.n_eta)?;
        self.xi0 = xi0;
        self.eta0 = eta0;
        Ok(self)
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n_eta(&self) -> usize {
        self.n_eta
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn xi0(&self) -> &[f64] {
        &self.xi0
    }

    pub fn eta0(&self) -> &[f64] {
        &self.eta0
    }

    /// Initial physical input of an augmented agent (zero otherwise).
    pub fn u0(&self) -> f64 {
        self.u0
    }

    pub fn alpha(&self, xi: &[f64], eta: &[f64]) -> f64 {
        (self.alpha)(xi, eta)
    }

    pub fn beta(&self, xi: &[f64], eta: &[f64]) -> f64 {
        (self.beta)(xi, eta)
    }

    pub fn theta(&self, xi: &[f64], eta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_eta];
        (self.theta)(xi, eta, &mut out);
        out
    }

    /// Length of the simulated plant state.
    pub fn state_dim(&self) -> usize {
        match &self.realization {
            Realization::Normal => self.r + self.n_eta,
            Realization::Augmented => self.r + self.n_eta + 1,
            Realization::Physical(m) => m.dim(),
        }
    }

    pub fn initial_state(&self) -> Vec<f64> {
        self.state_from_normal(&self.xi0, &self.eta0)
    }

    /// Plant state whose normal-form coordinates are `(xi, eta)`.
    pub fn state_from_normal(&self, xi: &[f64], eta: &[f64]) -> Vec<f64> {
        match &self.realization {
            Realization::Normal => xi.iter().chain(eta).copied().collect(),
            Realization::Augmented => xi
                .iter()
                .chain(eta)
                .copied()
                .chain(std::iter::once(self.u0))
                .collect(),
            Realization::Physical(m) => {
                let mut x = vec![0.0; m.dim()];
                m.to_physical(xi, eta, &mut x);
                x
            }
        }
    }

    pub fn normal_coords(&self, state: &[f64], xi: &mut [f64], eta: &mut [f64]) {
        match &self.realization {
            Realization::Normal | Realization::Augmented => {
                xi.copy_from_slice(&state[..self.r]);
                eta.copy_from_slice(&state[self.r..self.r + self.n_eta]);
            }
            Realization::Physical(m) => m.to_normal(state, xi, eta),
        }
    }

    /// Rates of the plant state under the linearizing command `u_hat`.
    /// Returns the physical input in effect.
    pub fn plant_rates(
        &self,
        state: &[f64],
        u_hat: f64,
        dstate: &mut [f64],
        settings: &NumericSettings,
    ) -> Result<f64, AgentError> {
        let r = self.r;
        match &self.realization {
            Realization::Normal | Realization::Augmented => {
                let (xi, rest) = state.split_at(r);
                let eta = &rest[..self.n_eta];
                let alpha = (self.alpha)(xi, eta);
                let beta = (self.beta)(xi, eta);
                guard_beta(beta, settings)?;
                let commanded = (u_hat - alpha) / beta;
                dstate[..r - 1].copy_from_slice(&xi[1..]);
                dstate[r - 1] = u_hat;
                (self.theta)(xi, eta, &mut dstate[r..r + self.n_eta]);
                let physical = if let Realization::Augmented = self.realization {
                    dstate[r + self.n_eta] = commanded;
                    state[r + self.n_eta]
                } else {
                    commanded
                };
                if !commanded.is_finite() || dstate.iter().any(|v| !v.is_finite()) {
                    return Err(AgentError::NonFinite);
                }
                Ok(physical)
            }
            Realization::Physical(m) => {
                let alpha = m.alpha(state);
                let beta = m.beta(state);
                guard_beta(beta, settings)?;
                let u = (u_hat - alpha) / beta;
                m.vector_field(state, u, dstate);
                if !u.is_finite() || dstate.iter().any(|v| !v.is_finite()) {
                    return Err(AgentError::NonFinite);
                }
                Ok(u)
            }
        }
    }
}

fn guard_beta(beta: f64, settings: &NumericSettings) -> Result<(), AgentError> {
    if beta.abs() < settings.beta_floor || !beta.is_finite() {
        Err(AgentError::BetaNearZero { beta })
    } else {
        Ok(())
    }
}

fn check_len(what: &str, v: &[f64], want: usize) -> Result<(), AgentError> {
    if v.len() != want {
        return Err(AgentError::InvalidDimension(format!(
            "{what} has length {}, expected {want}",
            v.len()
        )));
    }
    Ok(())
}

/// Normal-form rates `(ξ̇, η̇)` under the linearizing input `u = (û − α)/β`.
/// The top of the chain receives `û` exactly.
pub fn eval_dynamics(
    agent: &NormalFormAgent,
    xi: &[f64],
    eta: &[f64],
    u_hat: f64,
) -> Result<NormalFormRates, AgentError> {
    eval_dynamics_with(agent, xi, eta, u_hat, &NumericSettings::default())
}

pub fn eval_dynamics_with(
    agent: &NormalFormAgent,
    xi: &[f64],
    eta: &[f64],
    u_hat: f64,
    settings: &NumericSettings,
) -> Result<NormalFormRates, AgentError> {
    check_len("xi", xi, agent.r)?;
    check_len("eta", eta, agent.n_eta)?;
    let beta = agent.beta(xi, eta);
    guard_beta(beta, settings)?;
    let u = (u_hat - agent.alpha(xi, eta)) / beta;
    let mut dxi = xi[1..].to_vec();
    dxi.push(u_hat);
    let deta = agent.theta(xi, eta);
    Ok(NormalFormRates { dxi, deta, u })
}

/// Initial condition of an augmented agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedInitial {
    /// Length `r + 1`.
    pub xi0: Vec<f64>,
    pub eta0: Vec<f64>,
    /// Physical input at t = 0.
    pub u0: f64,
}

/// Turns a general (non-affine) agent of relative degree `r` into an affine
/// one of degree `r + 1` by treating its input as a state. `alpha_tilde`,
/// `beta_tilde` and `theta_tilde` are the normal form of the augmented model
/// over `(ξ̃ ∈ ℝ^{r+1}, η̃)`; the simulator commands `w = u̇`.
pub fn augment(
    r: usize,
    alpha_tilde: ScalarField,
    beta_tilde: ScalarField,
    theta_tilde: VectorField,
    initial: AugmentedInitial,
) -> Result<NormalFormAgent, AgentError> {
    if r == 0 {
        return Err(AgentError::InvalidDimension(
            "relative degree must be ≥ 1".into(),
        ));
    }
    if !initial.u0.is_finite() {
        return Err(AgentError::NonFinite);
    }
    let n_eta = initial.eta0.len();
    let mut agent = NormalFormAgent::new(
        r + 1,
        n_eta,
        alpha_tilde,
        beta_tilde,
        theta_tilde,
        initial.xi0,
        initial.eta0,
    )?;
    agent.kind = AgentKind::AugmentedGeneral;
    agent.realization = Realization::Augmented;
    agent.u0 = initial.u0;
    agent.name = "augmented".into();
    Ok(agent)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero() -> ScalarField {
        Arc::new(|_: &[f64], _: &[f64]| 0.0)
    }

    fn one() -> ScalarField {
        Arc::new(|_: &[f64], _: &[f64]| 1.0)
    }

    fn no_theta() -> VectorField {
        Arc::new(|_: &[f64], _: &[f64], _: &mut [f64]| {})
    }

    #[test]
    fn agent1_rates() {
        let a1 = builtin("agent1").unwrap();
        let rates = eval_dynamics(&a1, &[0.0, 0.0], &[0.0], 1.0).unwrap();
        assert_eq!(rates.dxi, vec![0.0, 1.0]);
        assert_eq!(rates.deta, vec![0.0]);
        let rates = eval_dynamics(&a1, &[2.0, 0.0], &[1.0], 0.0).unwrap();
        assert_eq!(rates.deta, vec![0.0]);
    }

    #[test]
    fn cancelling_input_is_zero() {
        for name in builtin_names() {
            let a = builtin(name).unwrap();
            let xi: Vec<f64> = (0..a.r()).map(|k| 0.3 * k as f64 - 0.2).collect();
            let eta = vec![0.4; a.n_eta()];
            let alpha = a.alpha(&xi, &eta);
            let rates = eval_dynamics(&a, &xi, &eta, alpha).unwrap();
            assert!(rates.u.abs() < 1e-12, "{name}: {}", rates.u);
        }
    }

    #[test]
    fn beta_floor_is_enforced() {
        let tiny: ScalarField = Arc::new(|_: &[f64], _: &[f64]| 1e-12);
        let a = NormalFormAgent::new(1, 0, zero(), tiny, no_theta(), vec![0.0], vec![]).unwrap();
        assert!(matches!(
            eval_dynamics(&a, &[0.0], &[], 1.0),
            Err(AgentError::BetaNearZero { .. })
        ));
        let mut d = vec![0.0; 1];
        assert!(a
            .plant_rates(&[0.0], 1.0, &mut d, &NumericSettings::default())
            .is_err());
    }

    #[test]
    fn augment_raises_relative_degree() {
        let init = AugmentedInitial {
            xi0: vec![0.1, 0.2],
            eta0: vec![],
            u0: 0.7,
        };
        let a = augment(1, zero(), one(), no_theta(), init).unwrap();
        assert_eq!(a.r(), 2);
        assert_eq!(a.kind(), AgentKind::AugmentedGeneral);
        let s = a.initial_state();
        assert_eq!(s, vec![0.1, 0.2, 0.7]);
        // physical input reported is the integrator state, whatever w is
        let mut d = vec![0.0; 3];
        let u = a
            .plant_rates(&s, 5.0, &mut d, &NumericSettings::default())
            .unwrap();
        assert_eq!(u, 0.7);
        // alpha ≡ 0, beta ≡ 1: pure chain of length r + 1, and u̇ = w = û
        assert_eq!(d, vec![0.2, 5.0, 5.0]);
    }

    #[test]
    fn augment_checks_dimensions() {
        let init = AugmentedInitial {
            xi0: vec![0.1],
            eta0: vec![],
            u0: 0.0,
        };
        assert!(matches!(
            augment(1, zero(), one(), no_theta(), init),
            Err(AgentError::InvalidDimension(_))
        ));
    }

    #[test]
    fn polynomial_agent() {
        // α = ξ₁·η₁, β = 2, ϑ = −η₁ + ξ₂²
        let alpha = Polynomial::new(vec![Term::new(1.0, vec![1, 0, 1])]);
        let beta = Polynomial::constant(2.0, 3);
        let theta = vec![Polynomial::new(vec![
            Term::new(-1.0, vec![0, 0, 1]),
            Term::new(1.0, vec![0, 2, 0]),
        ])];
        let a =
            NormalFormAgent::from_polynomials(2, 1, alpha, beta, theta, vec![0.0; 2], vec![0.0])
                .unwrap();
        let rates = eval_dynamics(&a, &[3.0, 2.0], &[0.5], 4.0).unwrap();
        assert_eq!(rates.u, (4.0 - 1.5) / 2.0);
        assert_eq!(rates.deta, vec![-0.5 + 4.0]);
        let bad = Polynomial::new(vec![Term::new(1.0, vec![1])]);
        assert!(NormalFormAgent::from_polynomials(
            2,
            0,
            bad,
            Polynomial::constant(1.0, 2),
            vec![],
            vec![0.0; 2],
            vec![]
        )
        .is_err());
    }
}
