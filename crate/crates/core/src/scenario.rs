//! JSON scenario files.
//!
//! ```json
//! {
//!   "agents": [{"builtin": "agent1"}, {"custom": {"r": 1, "n_eta": 0, ...}}],
//!   "controller": {"poles": [-1, [-2, 0.5], [-2, -0.5]], "mu": 1, "q1": 1,
//!                  "r_hat": 1, "rank": "one"},
//!   "graph": {"n": 2, "edges": [[0, 1, 1.0], [1, 0, 1.0]]},
//!   "sim": {"t_end": 30, "dt": 0.001, "seed": 42, "init": "random"},
//!   "output": {"csv": "run.csv", "svg": "run.svg", "full_state": false}
//! }
//! ```
//!
//! Node indices are 0-based; an edge `[from, to, w]` lets `to` hear `from`.
//! Exactly one of `graph` and `switching` must be present.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{builtin, NormalFormAgent, Polynomial};
use crate::graph::{DiGraph, GraphSpec};
use crate::linalg::Matrix;
use crate::sim::{InitialCondition, ObserverInit, ObserverSetup, SimScenario, Topology};
use crate::switching::MarkovTopology;
use crate::synthesis::{design_companion, full_gain, observer_gain, rank_one_gain, SynthesisError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {reason}")]
    Validation { path: String, reason: String },
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}

fn invalid(path: impl Into<String>, reason: impl ToString) -> ScenarioError {
    ScenarioError::Validation {
        path: path.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub agents: Vec<AgentEntry>,
    pub controller: ControllerSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching: Option<SwitchingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<ObserverSpec>,
    pub sim: SimSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

/// Either `{"builtin": name}` or `{"custom": {...}}`. Builtins accept
/// optional `xi0`/`eta0` overrides used by explicit initialization.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomAgent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomAgent {
    pub r: usize,
    pub n_eta: usize,
    pub alpha: Polynomial,
    pub beta: Polynomial,
    pub theta: Vec<Polynomial>,
    pub xi0: Vec<f64>,
    pub eta0: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoleSpec {
    Real(f64),
    Complex([f64; 2]),
}

impl PoleSpec {
    pub fn value(self) -> Complex64 {
        match self {
            PoleSpec::Real(re) => Complex64::new(re, 0.0),
            PoleSpec::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankSpec {
    One,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub poles: Vec<PoleSpec>,
    pub mu: f64,
    pub q1: f64,
    pub r_hat: f64,
    pub rank: RankSpec,
    #[serde(rename = "Q1", default, skip_serializing_if = "Option::is_none")]
    pub q1_matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSpec {
    pub graphs: Vec<GraphSpec>,
    pub generator: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObserverInitSpec {
    #[default]
    Zero,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSpec {
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub poles: Vec<PoleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<ObserverInitSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitSpec {
    Explicit,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub init: InitSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<String>,
    #[serde(default)]
    pub full_state: bool,
}

/// A parsed file together with the simulation it describes.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub sim: SimScenario,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let sim = build(&file)?;
    Ok(Scenario { file, sim })
}

pub fn write_scenario(path: impl AsRef<Path>, file: &ScenarioFile) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(file).expect("scenario serializes");
    fs::write(path, text + "\n").map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn matrix(path: &str, rows: &[Vec<f64>]) -> Result<Matrix, ScenarioError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(invalid(
            path,
            "matrix rows must be nonempty and of equal length",
        ));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid(path, "matrix entries must be finite"));
    }
    Ok(Matrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn graph(path: &str, spec: &GraphSpec) -> Result<DiGraph, ScenarioError> {
    DiGraph::from_spec(spec).map_err(|e| invalid(path, e))
}

fn agent(index: usize, entry: &AgentEntry) -> Result<NormalFormAgent, ScenarioError> {
    let path = format!("agents[{index}]");
    let a = match (&entry.builtin, &entry.custom) {
        (Some(name), None) => {
            let a = builtin(name).map_err(|e| invalid(format!("{path}.builtin"), e))?;
            let xi0 = entry.xi0.clone().unwrap_or_else(|| a.xi0().to_vec());
            let eta0 = entry.eta0.clone().unwrap_or_else(|| a.eta0().to_vec());
            a.with_initial(xi0, eta0).map_err(|e| invalid(&path, e))?
        }
        (None, Some(c)) => {
            if entry.xi0.is_some() || entry.eta0.is_some() {
                return Err(invalid(
                    &path,
                    "custom agents carry xi0/eta0 inside \"custom\"",
                ));
            }
            NormalFormAgent::from_polynomials(
                c.r,
                c.n_eta,
                c.alpha.clone(),
                c.beta.clone(),
                c.theta.clone(),
                c.xi0.clone(),
                c.eta0.clone(),
            )
            .map_err(|e| invalid(format!("{path}.custom"), e))?
            .with_name(format!("custom{}", index + 1))
        }
        _ => {
            return Err(invalid(
                &path,
                "exactly one of \"builtin\" and \"custom\" is required",
            ))
        }
    };
    Ok(a.with_id(index + 1))
}

/// Validates the file and runs every synthesis step.
pub fn build(file: &ScenarioFile) -> Result<SimScenario, ScenarioError> {
    if file.agents.is_empty() {
        return Err(invalid("agents", "at least one agent is required"));
    }
    let agents = file
        .agents
        .iter()
        .enumerate()
        .map(|(i, e)| agent(i, e))
        .collect::<Result<Vec<_>, _>>()?;
    let n = agents.len();

    let ctrl = &file.controller;
    let poles: Vec<Complex64> = ctrl.poles.iter().map(|p| p.value()).collect();
    let cs = design_companion(&poles)?;
    let max_r = agents.iter().map(|a| a.r()).max().unwrap_or(1);
    if cs.r < max_r {
        return Err(invalid(
            "controller.poles",
            format!(
                "{} poles give target degree {}, but an agent has relative degree {max_r}",
                poles.len(),
                cs.r
            ),
        ));
    }
    let gain = match ctrl.rank {
        RankSpec::One => {
            if ctrl.q1_matrix.is_some() {
                return Err(invalid(
                    "controller.Q1",
                    "only used with \"rank\": \"full\"",
                ));
            }
            rank_one_gain(&cs, ctrl.mu, ctrl.q1, ctrl.r_hat)?
        }
        RankSpec::Full => {
            let q1 = match &ctrl.q1_matrix {
                Some(rows) => {
                    let m = matrix("controller.Q1", rows)?;
                    if m.shape() != (cs.r, cs.r) {
                        return Err(invalid("controller.Q1", format!("must be {0}x{0}", cs.r)));
                    }
                    m
                }
                None => Matrix::identity(cs.r, cs.r) * ctrl.q1,
            };
            full_gain(&cs, ctrl.mu, &q1, ctrl.r_hat)?
        }
    };

    let topology = match (&file.graph, &file.switching) {
        (Some(g), None) => {
            let g = graph("graph", g)?;
            if g.n() != n {
                return Err(invalid(
                    "graph.n",
                    format!("graph has {} nodes for {n} agents", g.n()),
                ));
            }
            Topology::Fixed(g)
        }
        (None, Some(sw)) => {
            let graphs = sw
                .graphs
                .iter()
                .enumerate()
                .map(|(k, g)| graph(&format!("switching.graphs[{k}]"), g))
                .collect::<Result<Vec<_>, _>>()?;
            if let Some((k, g)) = graphs.iter().enumerate().find(|(_, g)| g.n() != n) {
                return Err(invalid(
                    format!("switching.graphs[{k}].n"),
                    format!("graph has {} nodes for {n} agents", g.n()),
                ));
            }
            let q = matrix("switching.generator", &sw.generator)?;
            Topology::Switching(
                MarkovTopology::new(graphs, q).map_err(|e| invalid("switching", e))?,
            )
        }
        _ => {
            return Err(invalid(
                "graph",
                "exactly one of \"graph\" and \"switching\" is required",
            ))
        }
    };

    let observer = match &file.observer {
        None => None,
        Some(o) => {
            if o.c.len() != cs.r {
                return Err(invalid("observer.C", format!("must have {} entries", cs.r)));
            }
            if o.poles.len() != cs.r {
                return Err(invalid(
                    "observer.poles",
                    format!("must have {} entries", cs.r),
                ));
            }
            let c = Matrix::from_row_slice(1, cs.r, &o.c);
            let op: Vec<Complex64> = o.poles.iter().map(|p| p.value()).collect();
            let gain = observer_gain(&cs, &c, &op)?;
            let init = match o.init.unwrap_or_default() {
                ObserverInitSpec::Zero => ObserverInit::Zero,
                ObserverInitSpec::Exact => ObserverInit::Exact,
            };
            Some(ObserverSetup { gain, init })
        }
    };

    let sim = &file.sim;
    if !(sim.dt > 0.0 && sim.dt.is_finite()) {
        return Err(invalid("sim.dt", "must be positive"));
    }
    if !(sim.t_end >= sim.dt && sim.t_end.is_finite()) {
        return Err(invalid("sim.t_end", "must be at least dt"));
    }
    if sim.record_every == Some(0) {
        return Err(invalid("sim.record_every", "must be at least 1"));
    }

    let mut s = SimScenario::new(agents, cs, gain, topology).map_err(|e| invalid("scenario", e))?;
    s.observer = observer;
    s.t_end = sim.t_end;
    s.dt = sim.dt;
    s.seed = sim.seed;
    s.record_every = sim.record_every.unwrap_or(1);
    s.init = match sim.init {
        InitSpec::Explicit => InitialCondition::Explicit,
        InitSpec::Random => InitialCondition::Uniform { lo: -1.0, hi: 1.0 },
    };
    s.validate().map_err(|e| invalid("sim", e))?;
    Ok(s)
}
