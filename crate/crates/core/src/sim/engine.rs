//! Fixed-step classical Runge–Kutta integration of the stacked network.
//!
//! Per agent the state vector holds the plant state, the local controller
//! state `φᵢ` and, with an observer, the estimate `ξ̌ᵢ`, in that order.

use rand::Rng;

use super::{AgentSeries, InitialCondition, ObserverInit, SimError, SimScenario, Trajectory};
use crate::agents::AgentError;
use crate::linalg::Matrix;
use crate::rng::{stream_rng, INIT_STREAM};
use crate::switching::ModeInterval;

struct Layout {
    plant: usize,
    plant_len: usize,
    phi: usize,
    phi_len: usize,
    obs: Option<usize>,
}

struct Work {
    xi: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
    /// `ξ̂ᵢ`.
    z: Vec<Vec<f64>>,
    s: Vec<f64>,
    v: Vec<f64>,
    u: Vec<f64>,
}

enum Failure {
    Beta { agent: usize, beta: f64 },
    Escape { agent: usize },
    Other(AgentError),
}

struct Network<'a> {
    s: &'a SimScenario,
    layout: Vec<Layout>,
    dim: usize,
}

impl<'a> Network<'a> {
    fn new(s: &'a SimScenario, observer: bool) -> Self {
        let r = s.cs.r;
        let mut offset = 0;
        let layout = s
            .agents
            .iter()
            .map(|a| {
                let plant = offset;
                let plant_len = a.state_dim();
                let phi = plant + plant_len;
                let phi_len = r - a.r();
                offset = phi + phi_len;
                let obs = observer.then(|| {
                    let o = offset;
                    offset += r;
                    o
                });
                Layout {
                    plant,
                    plant_len,
                    phi,
                    phi_len,
                    obs,
                }
            })
            .collect();
        Network {
            s,
            layout,
            dim: offset,
        }
    }

    fn work(&self) -> Work {
        let n = self.s.agents.len();
        Work {
            xi: self.s.agents.iter().map(|a| vec![0.0; a.r()]).collect(),
            eta: self.s.agents.iter().map(|a| vec![0.0; a.n_eta()]).collect(),
            z: vec![vec![0.0; self.s.cs.r]; n],
            s: vec![0.0; n],
            v: vec![0.0; n],
            u: vec![0.0; n],
        }
    }

    fn initial_state(&self) -> Vec<f64> {
        let s = self.s;
        let mut x = vec![0.0; self.dim];
        let mut rng = stream_rng(s.seed, INIT_STREAM);
        for (a, lay) in s.agents.iter().zip(&self.layout) {
            let (xi, phi, eta) = match s.init {
                InitialCondition::Explicit => {
                    (a.xi0().to_vec(), vec![0.0; lay.phi_len], a.eta0().to_vec())
                }
                InitialCondition::Uniform { lo, hi } => {
                    let mut draw = |k: usize| -> Vec<f64> {
                        (0..k)
                            .map(|_| lo + (hi - lo) * rng.random::<f64>())
                            .collect()
                    };
                    let xi = draw(a.r());
                    let phi = draw(lay.phi_len);
                    let eta = draw(a.n_eta());
                    (xi, phi, eta)
                }
            };
            x[lay.plant..lay.plant + lay.plant_len]
                .copy_from_slice(&a.state_from_normal(&xi, &eta));
            x[lay.phi..lay.phi + lay.phi_len].copy_from_slice(&phi);
            if let (Some(o), Some(obs)) = (lay.obs, &s.observer) {
                if obs.init == ObserverInit::Exact {
                    x[o..o + a.r()].copy_from_slice(&xi);
                    x[o + a.r()..o + s.cs.r].copy_from_slice(&phi);
                }
            }
        }
        x
    }

    fn rhs(&self, x: &[f64], w: &Matrix, dx: &mut [f64], work: &mut Work) -> Result<(), Failure> {
        let s = self.s;
        let r = s.cs.r;
        let k = &s.gain.k;
        for (i, (a, lay)) in s.agents.iter().zip(&self.layout).enumerate() {
            a.normal_coords(
                &x[lay.plant..lay.plant + lay.plant_len],
                &mut work.xi[i],
                &mut work.eta[i],
            );
            let z = &mut work.z[i];
            z[..a.r()].copy_from_slice(&work.xi[i]);
            z[a.r()..].copy_from_slice(&x[lay.phi..lay.phi + lay.phi_len]);
            let src: &[f64] = match lay.obs {
                Some(o) => &x[o..o + r],
                None => z,
            };
            work.s[i] = (0..r).map(|c| k[(0, c)] * src[c]).sum();
        }
        let n = s.agents.len();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                let a_ij = w[(i, j)];
                if a_ij != 0.0 {
                    acc += a_ij * (work.s[i] - work.s[j]);
                }
            }
            work.v[i] = -acc;
        }

        for (i, (a, lay)) in s.agents.iter().zip(&self.layout).enumerate() {
            let ctrl = &s.controllers[i];
            let v = work.v[i];
            let xi = &work.xi[i];
            let phi = &x[lay.phi..lay.phi + lay.phi_len];
            let u_hat = if ctrl.is_static() {
                ctrl.static_row
                    .iter()
                    .zip(xi)
                    .map(|(c, x)| c * x)
                    .sum::<f64>()
                    + v
            } else {
                phi[0]
            };
            let plant = &x[lay.plant..lay.plant + lay.plant_len];
            work.u[i] = a
                .plant_rates(
                    plant,
                    u_hat,
                    &mut dx[lay.plant..lay.plant + lay.plant_len],
                    &s.settings,
                )
                .map_err(|e| match e {
                    AgentError::BetaNearZero { beta } => Failure::Beta { agent: i, beta },
                    AgentError::NonFinite => Failure::Escape { agent: i },
                    other => Failure::Other(other),
                })?;
            for row in 0..lay.phi_len {
                let mut acc = ctrl.g[(row, 0)] * v;
                for (c, xc) in xi.iter().enumerate() {
                    acc += ctrl.d[(row, c)] * xc;
                }
                for (c, pc) in phi.iter().enumerate() {
                    acc += ctrl.e[(row, c)] * pc;
                }
                dx[lay.phi + row] = acc;
            }
            if let (Some(o), Some(obs)) = (lay.obs, &s.observer) {
                let est = &x[o..o + r];
                let z = &work.z[i];
                let innovation: f64 = (0..r).map(|c| obs.gain.c[(0, c)] * (z[c] - est[c])).sum();
                for row in 0..r {
                    let mut acc = s.cs.b_vec[(row, 0)] * v + obs.gain.m[(row, 0)] * innovation;
                    for (c, ec) in est.iter().enumerate() {
                        acc += s.cs.a[(row, c)] * ec;
                    }
                    dx[o + row] = acc;
                }
            }
        }
        Ok(())
    }

    fn record(&self, traj: &mut Trajectory, t: f64, x: &[f64], work: &Work, mode: Option<usize>) {
        traj.times.push(t);
        if let Some(m) = mode {
            traj.modes.push(m);
        }
        let r = self.s.cs.r;
        for (i, series) in traj.agents.iter_mut().enumerate() {
            series.y.push(work.z[i][0]);
            series.xi_hat.push(work.z[i].clone());
            series.eta.push(work.eta[i].clone());
            series.u.push(work.u[i]);
            if let Some(o) = self.layout[i].obs {
                series
                    .observer_error
                    .push((0..r).map(|c| work.z[i][c] - x[o + c]).collect());
            }
        }
    }

    fn escaped(&self, x: &[f64]) -> Option<usize> {
        let bound = self.s.settings.divergence_bound;
        self.layout.iter().position(|lay| {
            let end = lay.obs.map_or(lay.phi + lay.phi_len, |o| o + self.s.cs.r);
            let block = &x[lay.plant..end];
            let norm = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            !(norm <= bound)
        })
    }
}

fn abort(failure: Failure, t: f64, mut traj: Trajectory) -> SimError {
    traj.diverged = true;
    match failure {
        Failure::Beta { agent, beta } => SimError::BetaNearZero {
            t,
            agent,
            beta,
            trajectory: Box::new(traj),
        },
        Failure::Escape { agent } => SimError::FiniteEscape {
            t,
            agent,
            trajectory: Box::new(traj),
        },
        Failure::Other(e) => SimError::Agent(e),
    }
}

/// Integrates the scenario. `weights[m]` is the adjacency of mode `m`; with
/// no path, mode 0 is used throughout.
pub(super) fn run(
    s: &SimScenario,
    weights: &[Matrix],
    path: Option<Vec<ModeInterval>>,
    observer: bool,
) -> Result<Trajectory, SimError> {
    let net = Network::new(s, observer);
    let mut work = net.work();
    let mut x = net.initial_state();
    let dim = net.dim;
    let (mut k1, mut k2, mut k3, mut k4) = (
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    );
    let mut stage = vec![0.0; dim];

    let steps = ((s.t_end / s.dt) - 1e-9).ceil().max(1.0) as usize;
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps / s.record_every + 2),
        agents: vec![AgentSeries::default(); s.agents.len()],
        mode_path: path.clone(),
        modes: Vec::new(),
        diverged: false,
    };
    let path = path.unwrap_or_default();
    let switching = !path.is_empty();
    let mut seg = 0;

    if let Some(agent) = net.escaped(&x) {
        return Err(abort(Failure::Escape { agent }, 0.0, traj));
    }

    for n in 0..steps {
        let t = n as f64 * s.dt;
        let h = if n + 1 == steps { s.t_end - t } else { s.dt };
        while seg + 1 < path.len() && path[seg + 1].from <= t {
            seg += 1;
        }
        let mode = if switching { path[seg].mode } else { 0 };
        let w = &weights[mode];

        if let Err(f) = net.rhs(&x, w, &mut k1, &mut work) {
            return Err(abort(f, t, traj));
        }
        if n % s.record_every == 0 {
            net.record(&mut traj, t, &x, &work, switching.then_some(mode));
        }
        for (st, (xv, k)) in stage.iter_mut().zip(x.iter().zip(&k1)) {
            *st = xv + 0.5 * h * k;
        }
        if let Err(f) = net.rhs(&stage, w, &mut k2, &mut work) {
            return Err(abort(f, t, traj));
        }
        for (st, (xv, k)) in stage.iter_mut().zip(x.iter().zip(&k2)) {
            *st = xv + 0.5 * h * k;
        }
        if let Err(f) = net.rhs(&stage, w, &mut k3, &mut work) {
            return Err(abort(f, t, traj));
        }
        for (st, (xv, k)) in stage.iter_mut().zip(x.iter().zip(&k3)) {
            *st = xv + h * k;
        }
        if let Err(f) = net.rhs(&stage, w, &mut k4, &mut work) {
            return Err(abort(f, t, traj));
        }
        for c in 0..dim {
            x[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        if let Some(agent) = net.escaped(&x) {
            return Err(abort(Failure::Escape { agent }, t + h, traj));
        }
    }

    let t = s.t_end;
    while seg + 1 < path.len() && path[seg + 1].from <= t {
        seg += 1;
    }
    let mode = if switching { path[seg].mode } else { 0 };
    if let Err(f) = net.rhs(&x, &weights[mode], &mut k1, &mut work) {
        return Err(abort(f, t, traj));
    }
    net.record(&mut traj, t, &x, &work, switching.then_some(mode));
    Ok(traj)
}
