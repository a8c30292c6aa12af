use rayon::prelude::*;

use super::{simulate_switching_run, SimError, SimScenario, Topology};
use crate::metrics::state_disagreement_sq;

/// Sample times and squared disagreement of one completed run.
type Curve = (Vec<f64>, Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub times: Vec<f64>,
    /// Mean over completed runs of `max_{i,j} ‖ξ̂ᵢ − ξ̂ⱼ‖²`.
    pub mean_sq: Vec<f64>,
    pub completed: usize,
    /// Runs aborted by the divergence or β guards; excluded from the mean.
    pub diverged: usize,
}

/// Mean-square disagreement over `runs` independent switching paths. Run `k`
/// draws its path from stream `k` of the scenario seed; all runs share the
/// initial condition. The result does not depend on thread scheduling.
pub fn monte_carlo_ms(s: &SimScenario, runs: usize) -> Result<MonteCarloResult, SimError> {
    if runs == 0 {
        return Err(SimError::InvalidScenario("runs must be at least 1".into()));
    }
    if !matches!(s.topology, Topology::Switching(_)) {
        return Err(SimError::InvalidScenario(
            "Monte Carlo needs a Markov topology".into(),
        ));
    }
    let observer = s.observer.is_some();
    let outcomes: Vec<Result<Option<Curve>, SimError>> = (0..runs as u64)
        .into_par_iter()
        .map(|k| match simulate_switching_run(s, k, observer) {
            Ok(traj) => {
                let curve = state_disagreement_sq(&traj);
                Ok(Some((traj.times, curve)))
            }
            Err(SimError::FiniteEscape { .. } | SimError::BetaNearZero { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();

    let mut times = Vec::new();
    let mut sum: Vec<f64> = Vec::new();
    let mut completed = 0;
    let mut diverged = 0;
    for outcome in outcomes {
        match outcome? {
            Some((t, curve)) => {
                if sum.is_empty() {
                    times = t;
                    sum = curve;
                } else {
                    for (acc, v) in sum.iter_mut().zip(&curve) {
                        *acc += v;
                    }
                }
                completed += 1;
            }
            None => diverged += 1,
        }
    }
    if completed == 0 {
        return Err(SimError::InvalidScenario(format!(
            "all {runs} runs diverged"
        )));
    }
    let mean_sq = sum.into_iter().map(|v| v / completed as f64).collect();
    Ok(MonteCarloResult {
        times,
        mean_sq,
        completed,
        diverged,
    })
}
