//! Closed-loop simulation of the heterogeneous network under the
//! synthesized controllers.

mod engine;
mod montecarlo;

use thiserror::Error;

pub use montecarlo::{monte_carlo_ms, MonteCarloResult};

use crate::agents::{AgentError, NormalFormAgent};
use crate::graph::DiGraph;
use crate::settings::NumericSettings;
use crate::switching::{check_a4_with, A4Report, MarkovTopology, ModeInterval, SwitchingError};
use crate::synthesis::{
    local_controller, CompanionSystem, ConsensusGain, LocalController, ObserverGain, SynthesisError,
};

#[derive(Debug, Clone)]
pub enum Topology {
    Fixed(DiGraph),
    Switching(MarkovTopology),
}

impl Topology {
    pub fn n(&self) -> usize {
        match self {
            Topology::Fixed(g) => g.n(),
            Topology::Switching(mt) => mt.n(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    /// Agents' own `ξ₀, η₀`; controller states start at zero.
    Explicit,
    /// Every entry of `ξ̂ᵢ(0)` and `ηᵢ(0)` uniform on `[lo, hi]`, drawn from the
    /// scenario seed.
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObserverInit {
    Zero,
    /// Start on the true `ξ̂(0)`.
    Exact,
}

#[derive(Debug, Clone)]
pub struct ObserverSetup {
    pub gain: ObserverGain,
    pub init: ObserverInit,
}

#[derive(Debug, Clone)]
pub struct SimScenario {
    pub agents: Vec<NormalFormAgent>,
    pub cs: CompanionSystem,
    pub gain: ConsensusGain,
    pub controllers: Vec<LocalController>,
    pub topology: Topology,
    pub observer: Option<ObserverSetup>,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub init: InitialCondition,
    /// Keep every k-th step in the trajectory (the final time is always kept).
    pub record_every: usize,
    /// Run switching simulations even when the union graph fails the
    /// spanning-tree/balance requirement.
    pub allow_a4_violation: bool,
    pub settings: NumericSettings,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("state of agent {agent} exceeded the divergence bound at t = {t}")]
    FiniteEscape {
        t: f64,
        agent: usize,
        trajectory: Box<Trajectory>,
    },
    #[error("agent {agent}: |beta| = {beta:e} below the floor at t = {t}")]
    BetaNearZero {
        t: f64,
        agent: usize,
        beta: f64,
        trajectory: Box<Trajectory>,
    },
    #[error("switching topology violates the union spanning-tree/balance requirement")]
    A4Violated(A4Report),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Switching(#[from] SwitchingError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl SimError {
    /// The partial trajectory of an aborted run.
    pub fn trajectory(&self) -> Option<&Trajectory> {
        match self {
            SimError::FiniteEscape { trajectory, .. }
            | SimError::BetaNearZero { trajectory, .. } => Some(trajectory),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AgentSeries {
    /// `yᵢ = ξᵢ,₁`.
    pub y: Vec<f64>,
    /// `[ξᵢ; φᵢ]` per sample.
    pub xi_hat: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    /// Physical input applied at the sample.
    pub u: Vec<f64>,
    /// `ξ̂ᵢ − ξ̌ᵢ` per sample; empty without an observer.
    pub observer_error: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub agents: Vec<AgentSeries>,
    pub mode_path: Option<Vec<ModeInterval>>,
    /// Active graph per sample (switching runs only).
    pub modes: Vec<usize>,
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn has_observer(&self) -> bool {
        self.agents.iter().any(|a| !a.observer_error.is_empty())
    }
}

impl SimScenario {
    /// Scenario with one local controller per agent, `t_end = 30`,
    /// `dt = 1e-3`, seed 0 and the agents' own initial states.
    pub fn new(
        agents: Vec<NormalFormAgent>,
        cs: CompanionSystem,
        gain: ConsensusGain,
        topology: Topology,
    ) -> Result<Self, SimError> {
        let controllers = agents
            .iter()
            .map(|a| local_controller(&cs, a))
            .collect::<Result<Vec<_>, _>>()?;
        let s = SimScenario {
            agents,
            cs,
            gain,
            controllers,
            topology,
            observer: None,
            t_end: 30.0,
            dt: 1e-3,
            seed: 0,
            init: InitialCondition::Explicit,
            record_every: 1,
            allow_a4_violation: false,
            settings: NumericSettings::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be at least dt", self.t_end));
        }
        if self.agents.is_empty() {
            return bad("no agents".into());
        }
        if self.topology.n() != self.agents.len() {
            return bad(format!(
                "topology has {} nodes for {} agents",
                self.topology.n(),
                self.agents.len()
            ));
        }
        if self.controllers.len() != self.agents.len() {
            return bad("one local controller per agent is required".into());
        }
        for (a, c) in self.agents.iter().zip(&self.controllers) {
            if a.r() > self.cs.r || c.agent_r != a.r() || c.target_r != self.cs.r {
                return bad(format!(
                    "agent {} (r = {}) does not fit the target degree {}",
                    a.id,
                    a.r(),
                    self.cs.r
                ));
            }
        }
        if self.gain.k.shape() != (1, self.cs.r) {
            return bad("gain row does not match the target degree".into());
        }
        if let Some(obs) = &self.observer {
            if obs.gain.c.shape() != (1, self.cs.r) || obs.gain.m.shape() != (self.cs.r, 1) {
                return bad("observer dimensions do not match the target degree".into());
            }
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if let InitialCondition::Uniform { lo, hi } = self.init {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return bad("initial range must satisfy lo ≤ hi".into());
            }
        }
        Ok(())
    }
}

/// Fixed topology, state feedback on `ξ̂`.
pub fn simulate_fixed(s: &SimScenario) -> Result<Trajectory, SimError> {
    s.validate()?;
    let Topology::Fixed(g) = &s.topology else {
        return Err(SimError::InvalidScenario(
            "simulate_fixed needs a fixed graph".into(),
        ));
    };
    engine::run(s, &[g.weights().clone()], None, false)
}

/// Markov-switching topology; the mode path is drawn from the scenario seed.
pub fn simulate_switching(s: &SimScenario) -> Result<Trajectory, SimError> {
    simulate_switching_run(s, 0, false)
}

pub(crate) fn simulate_switching_run(
    s: &SimScenario,
    run: u64,
    with_observer: bool,
) -> Result<Trajectory, SimError> {
    s.validate()?;
    let Topology::Switching(mt) = &s.topology else {
        return Err(SimError::InvalidScenario(
            "simulate_switching needs a Markov topology".into(),
        ));
    };
    let report = check_a4_with(mt, &s.settings);
    if !report.passes() && !s.allow_a4_violation {
        return Err(SimError::A4Violated(report));
    }
    let mut rng = crate::rng::stream_rng(s.seed, crate::rng::PATH_STREAM + run);
    let path = crate::switching::sample_path_with_rng(mt, s.t_end, &mut rng);
    let weights: Vec<_> = mt.graphs().iter().map(|g| g.weights().clone()).collect();
    engine::run(s, &weights, Some(path), with_observer)
}

/// Output feedback through per-agent Luenberger observers; the coupling uses
/// the estimates. Works on fixed and switching topologies.
pub fn simulate_with_observer(s: &SimScenario) -> Result<Trajectory, SimError> {
    if s.observer.is_none() {
        return Err(SimError::InvalidScenario("scenario has no observer".into()));
    }
    match &s.topology {
        Topology::Fixed(g) => {
            s.validate()?;
            engine::run(s, &[g.weights().clone()], None, true)
        }
        Topology::Switching(_) => simulate_switching_run(s, 0, true),
    }
}

/// Dispatches on the scenario: observer if present, then topology kind.
pub fn simulate(s: &SimScenario) -> Result<Trajectory, SimError> {
    match (&s.observer, &s.topology) {
        (Some(_), _) => simulate_with_observer(s),
        (None, Topology::Fixed(_)) => simulate_fixed(s),
        (None, Topology::Switching(_)) => simulate_switching(s),
    }
}
