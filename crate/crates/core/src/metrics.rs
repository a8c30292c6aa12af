//! Disagreement measures, fitted convergence rates and the predicted speeds.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{self, lambda_min_nonzero_with, DiGraph, GraphError};
use crate::settings::NumericSettings;
use crate::sim::Trajectory;
use crate::switching::{speed_bound, MarkovTopology, SwitchingError};
use crate::synthesis::{CompanionSystem, ConsensusGain, GainRank};

const LOG_FLOOR: f64 = 1e-15;
const DEFAULT_WINDOW_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("fit window contains fewer than two samples")]
    EmptyWindow,
    #[error("series is negative or non-finite on the fit window")]
    NonPositiveSeries,
    #[error("graph has no spanning tree")]
    NoSpanningTree,
    #[error("speed formula requires a rank-one gain")]
    NotRankOne,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Switching(#[from] SwitchingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
}

/// `d(t) = max_{i<j} |yᵢ(t) − yⱼ(t)|` per sample.
pub fn disagreement(traj: &Trajectory) -> Vec<f64> {
    (0..traj.len())
        .map(|k| {
            let (lo, hi) = traj
                .agents
                .iter()
                .map(|a| a.y[k])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| {
                    (lo.min(y), hi.max(y))
                });
            if traj.agents.is_empty() {
                0.0
            } else {
                hi - lo
            }
        })
        .collect()
}

/// `max_{i,j} ‖ξ̂ᵢ(t) − ξ̂ⱼ(t)‖²` per sample.
pub fn state_disagreement_sq(traj: &Trajectory) -> Vec<f64> {
    let n = traj.agents.len();
    (0..traj.len())
        .map(|k| {
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    let d: f64 = traj.agents[i].xi_hat[k]
                        .iter()
                        .zip(&traj.agents[j].xi_hat[k])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    worst = worst.max(d);
                }
            }
            worst
        })
        .collect()
}

/// Window covering the last 60% of the sample span.
pub fn default_window(times: &[f64]) -> (f64, f64) {
    match (times.first(), times.last()) {
        (Some(&a), Some(&b)) => (a + (1.0 - DEFAULT_WINDOW_FRACTION) * (b - a), b),
        _ => (0.0, 0.0),
    }
}

/// Least-squares line through `ln d(t)` on `window` (inclusive). Values
/// below 1e-15, zero included, are lifted to that floor. `rate` is the negated slope.
pub fn empirical_rate(
    times: &[f64],
    series: &[f64],
    window: Option<(f64, f64)>,
) -> Result<RateFit, MetricsError> {
    let (t0, t1) = window.unwrap_or_else(|| default_window(times));
    let points: Vec<(f64, f64)> = times
        .iter()
        .zip(series)
        .filter(|(t, _)| **t >= t0 && **t <= t1)
        .map(|(&t, &d)| (t, d))
        .collect();
    if points.len() < 2 {
        return Err(MetricsError::EmptyWindow);
    }
    if points.iter().any(|(_, d)| !(*d >= 0.0) || !d.is_finite()) {
        return Err(MetricsError::NonPositiveSeries);
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(t, d)| (t, d.max(LOG_FLOOR).ln()))
        .collect();
    let n = logs.len() as f64;
    let mt = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = logs.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    if stt == 0.0 {
        return Err(MetricsError::EmptyWindow);
    }
    let stl: f64 = logs.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let slope = stl / stt;
    let intercept = ml - slope * mt;
    let sll: f64 = logs.iter().map(|p| (p.1 - ml) * (p.1 - ml)).sum();
    let sse: f64 = logs
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let r_squared = if sll == 0.0 {
        1.0
    } else {
        (1.0 - sse / sll).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        rate: -slope,
        intercept,
        window: (logs[0].0, logs[logs.len() - 1].0),
        r_squared,
    })
}

/// Smallest nonzero real part of `λ(−A)`.
pub fn lambda_min_neg_a(cs: &CompanionSystem) -> f64 {
    cs.poles.iter().map(|p| -p.re).fold(f64::INFINITY, f64::min)
}

/// `min{μ√(q₁r̂)Bᵀν·Re λ_min(L), λ_min(−A)}`.
pub fn theoretical_speed_fixed(
    cs: &CompanionSystem,
    gain: &ConsensusGain,
    graph: &DiGraph,
) -> Result<f64, MetricsError> {
    theoretical_speed_fixed_with(cs, gain, graph, &NumericSettings::default())
}

pub fn theoretical_speed_fixed_with(
    cs: &CompanionSystem,
    gain: &ConsensusGain,
    graph: &DiGraph,
    settings: &NumericSettings,
) -> Result<f64, MetricsError> {
    if gain.rank != GainRank::One {
        return Err(MetricsError::NotRankOne);
    }
    if !graph::has_spanning_tree(graph) {
        return Err(MetricsError::NoSpanningTree);
    }
    let coupling = (&gain.k * &cs.b_vec)[(0, 0)];
    let lam: Complex64 = lambda_min_nonzero_with(&graph::laplacian(graph), settings)?;
    Ok((coupling * lam.re).min(lambda_min_neg_a(cs)))
}

pub fn theoretical_speed_switching(
    mt: &MarkovTopology,
    gain: &ConsensusGain,
    cs: &CompanionSystem,
) -> Result<f64, MetricsError> {
    Ok(speed_bound(mt, gain, cs)?)
}

/// The alternative value of `λ_min(−A)` quoted for the poles {−1, −2}
/// (the largest rather than the smallest nonzero real part), reported next
/// to the definition-consistent value when that pole set is in use.
pub fn benchmark_lambda_note(cs: &CompanionSystem) -> Option<String> {
    let mut re: Vec<f64> = cs.poles.iter().map(|p| p.re).collect();
    re.sort_by(f64::total_cmp);
    if re.len() == 2 && (re[0] + 2.0).abs() < 1e-12 && (re[1] + 1.0).abs() < 1e-12 {
        Some(
            "poles {-1,-2}: lambda_min(-A) = 1 (smallest nonzero real part); \
             the value 2 is sometimes quoted for this example"
                .into(),
        )
    } else {
        None
    }
}
