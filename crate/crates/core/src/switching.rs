//! Markov-modulated topologies: a continuous-time Markov chain selecting one
//! of finitely many graphs.

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{self, laplacian, DiGraph, GraphError};
use crate::linalg::{LinalgError, Matrix, SymmetricEigen};
use crate::rng::{stream_rng, PATH_STREAM};
use crate::settings::NumericSettings;
use crate::synthesis::{CompanionSystem, ConsensusGain, GainRank};

const GENERATOR_TOL: f64 = 1e-12;
const ABSORBING_RATE: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SwitchingError {
    #[error("at least one graph is required")]
    NoGraphs,
    #[error("graphs have different node counts")]
    NodeCountMismatch,
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),
    #[error("Markov chain is reducible")]
    Reducible,
    #[error("stationary distribution system is singular")]
    Singular,
    #[error("union graph must have a spanning tree and be balanced")]
    A4Violated,
    #[error("speed bound requires a rank-one gain")]
    NotRankOne,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovTopology {
    graphs: Vec<DiGraph>,
    generator: Matrix,
    pi: Vec<f64>,
}

/// Mode `mode` is active on `[from, to)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeInterval {
    pub mode: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GraphStatus {
    pub has_spanning_tree: bool,
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct A4Report {
    pub union_has_spanning_tree: bool,
    pub union_balanced: bool,
    pub per_graph: Vec<GraphStatus>,
}

impl A4Report {
    pub fn passes(&self) -> bool {
        self.union_has_spanning_tree && self.union_balanced
    }
}

impl MarkovTopology {
    pub fn new(graphs: Vec<DiGraph>, generator: Matrix) -> Result<Self, SwitchingError> {
        let first = graphs.first().ok_or(SwitchingError::NoGraphs)?;
        if graphs.iter().any(|g| g.n() != first.n()) {
            return Err(SwitchingError::NodeCountMismatch);
        }
        if generator.shape() != (graphs.len(), graphs.len()) {
            return Err(SwitchingError::InvalidGenerator(format!(
                "generator is {}x{} for {} graphs",
                generator.nrows(),
                generator.ncols(),
                graphs.len()
            )));
        }
        let pi = stationary_distribution(&generator)?;
        Ok(MarkovTopology {
            graphs,
            generator,
            pi,
        })
    }

    /// A single graph with a trivial chain.
    pub fn fixed(graph: DiGraph) -> Self {
        MarkovTopology {
            graphs: vec![graph],
            generator: Matrix::zeros(1, 1),
            pi: vec![1.0],
        }
    }

    pub fn graphs(&self) -> &[DiGraph] {
        &self.graphs
    }

    pub fn generator(&self) -> &Matrix {
        &self.generator
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn modes(&self) -> usize {
        self.graphs.len()
    }

    pub fn n(&self) -> usize {
        self.graphs[0].n()
    }
}

fn validate_generator(q: &Matrix) -> Result<usize, SwitchingError> {
    let l = q.nrows();
    if l == 0 || q.ncols() != l {
        return Err(SwitchingError::InvalidGenerator(
            "generator must be square and nonempty".into(),
        ));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(SwitchingError::InvalidGenerator("non-finite entry".into()));
    }
    for i in 0..l {
        let scale = q.row(i).iter().map(|v| v.abs()).fold(1.0, f64::max);
        if q.row(i).sum().abs() > GENERATOR_TOL * scale {
            return Err(SwitchingError::InvalidGenerator(format!(
                "row {i} does not sum to zero"
            )));
        }
        for j in 0..l {
            if i != j && q[(i, j)] < 0.0 {
                return Err(SwitchingError::InvalidGenerator(format!(
                    "negative rate q[{i}][{j}]"
                )));
            }
        }
    }
    Ok(l)
}

/// `π` with `πᵀQ = 0`, `Σπ = 1`, from the least-squares solution of
/// `[Qᵀ; 𝟙ᵀ]π = [0; 1]`.
pub fn stationary_distribution(generator: &Matrix) -> Result<Vec<f64>, SwitchingError> {
    let l = validate_generator(generator)?;
    // Irreducibility: every state reaches every other through positive rates.
    for start in 0..l {
        let mut seen = vec![false; l];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..l {
                if i != j && !seen[j] && generator[(i, j)] > 0.0 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(SwitchingError::Reducible);
        }
    }
    let mut system = Matrix::zeros(l + 1, l);
    system
        .view_mut((0, 0), (l, l))
        .copy_from(&generator.transpose());
    system.row_mut(l).fill(1.0);
    let mut rhs = DVector::zeros(l + 1);
    rhs[l] = 1.0;
    let svd = system.clone().svd(true, true);
    let smallest = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(smallest > 1e-12 * svd.singular_values.max().max(1.0)) {
        return Err(SwitchingError::Singular);
    }
    let pi = svd.solve(&rhs, 0.0).map_err(|_| SwitchingError::Singular)?;
    let residual = (generator.transpose() * &pi).amax();
    if residual > 1e-10 * generator.amax().max(1.0) || pi.iter().any(|&p| !(p > 0.0)) {
        return Err(SwitchingError::Singular);
    }
    let total: f64 = pi.iter().sum();
    Ok(pi.iter().map(|p| p / total).collect())
}

pub fn sample_path(mt: &MarkovTopology, t_end: f64, seed: u64) -> Vec<ModeInterval> {
    sample_path_with_rng(mt, t_end, &mut stream_rng(seed, PATH_STREAM))
}

/// Draws the initial mode from `π`, holds each mode for an exponential time
/// and jumps according to the embedded chain. Intervals tile `[0, t_end]`.
pub fn sample_path_with_rng<R: Rng + ?Sized>(
    mt: &MarkovTopology,
    t_end: f64,
    rng: &mut R,
) -> Vec<ModeInterval> {
    let l = mt.modes();
    let mut mode = if l == 1 {
        0
    } else {
        WeightedIndex::new(&mt.pi)
            .expect("stationary distribution is positive")
            .sample(rng)
    };
    let mut path = Vec::new();
    let mut t = 0.0;
    loop {
        let rate = -mt.generator[(mode, mode)];
        let hold = if rate <= ABSORBING_RATE {
            f64::INFINITY
        } else {
            Exp::new(rate).expect("positive rate").sample(rng)
        };
        let next_t = t + hold;
        if next_t >= t_end {
            path.push(ModeInterval {
                mode,
                from: t,
                to: t_end,
            });
            return path;
        }
        path.push(ModeInterval {
            mode,
            from: t,
            to: next_t,
        });
        let weights: Vec<f64> = (0..l)
            .map(|j| {
                if j == mode {
                    0.0
                } else {
                    mt.generator[(mode, j)]
                }
            })
            .collect();
        mode = WeightedIndex::new(&weights)
            .expect("row with positive exit rate")
            .sample(rng);
        t = next_t;
    }
}

pub fn check_a4(mt: &MarkovTopology) -> A4Report {
    check_a4_with(mt, &NumericSettings::default())
}

pub fn check_a4_with(mt: &MarkovTopology, settings: &NumericSettings) -> A4Report {
    let u = graph::union(&mt.graphs).expect("topology graphs share a node count");
    A4Report {
        union_has_spanning_tree: graph::has_spanning_tree(&u),
        union_balanced: graph::is_balanced_with(&u, settings),
        per_graph: mt
            .graphs
            .iter()
            .map(|g| GraphStatus {
                has_spanning_tree: graph::has_spanning_tree(g),
                balanced: graph::is_balanced_with(g, settings),
            })
            .collect(),
    }
}

/// Smallest eigenvalue of the symmetric part `L + Lᵀ` of a balanced
/// Laplacian on the complement of `𝟙`. The structural zero is moved out of
/// the way by adding `σ𝟙𝟙ᵀ/N` with `σ` above the whole spectrum.
pub fn lambda_min_disagreement(l: &Matrix) -> Result<f64, SwitchingError> {
    let n = l.nrows();
    let s = l + l.transpose();
    if n == 1 {
        return Ok(0.0);
    }
    let sigma = s.trace().abs() + 1.0;
    let shifted = &s + Matrix::from_element(n, n, sigma / n as f64);
    Ok(SymmetricEigen::new(&shifted)?.values[0])
}

/// `π*·μ√(q₁r̂)·Bᵀν·λ_min(L_∪ + L_∪ᵀ)` with `π* = min_k π_k`.
pub fn speed_bound(
    mt: &MarkovTopology,
    gain: &ConsensusGain,
    cs: &CompanionSystem,
) -> Result<f64, SwitchingError> {
    if gain.rank != GainRank::One {
        return Err(SwitchingError::NotRankOne);
    }
    if !check_a4(mt).passes() {
        return Err(SwitchingError::A4Violated);
    }
    let pi_star = mt.pi.iter().copied().fold(f64::INFINITY, f64::min);
    let coupling = (&gain.k * &cs.b_vec)[(0, 0)];
    let u = graph::union(&mt.graphs)?;
    Ok(pi_star * coupling * lambda_min_disagreement(&laplacian(&u))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_slice(rows, cols, v)
    }

    fn default_pair() -> Vec<DiGraph> {
        vec![
            DiGraph::from_edges(5, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap(),
            DiGraph::from_edges(5, &[(2, 3, 1.0), (3, 4, 1.0), (4, 0, 1.0)]).unwrap(),
        ]
    }

    #[test]
    fn stationary_examples() {
        let pi = stationary_distribution(&m(2, 2, &[-1.0, 1.0, 1.0, -1.0])).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12 && (pi[1] - 0.5).abs() < 1e-12);
        let pi = stationary_distribution(&m(2, 2, &[-2.0, 2.0, 1.0, -1.0])).unwrap();
        assert!((pi[0] - 1.0 / 3.0).abs() < 1e-12 && (pi[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            stationary_distribution(&m(1, 1, &[0.0])).unwrap(),
            vec![1.0]
        );
    }

    #[test]
    fn generator_validation() {
        assert!(matches!(
            stationary_distribution(&m(2, 2, &[-1.0, 0.5, 1.0, -1.0])),
            Err(SwitchingError::InvalidGenerator(_))
        ));
        assert!(matches!(
            stationary_distribution(&m(2, 2, &[1.0, -1.0, 1.0, -1.0])),
            Err(SwitchingError::InvalidGenerator(_))
        ));
        assert_eq!(
            stationary_distribution(&m(2, 2, &[-1.0, 1.0, 0.0, 0.0])),
            Err(SwitchingError::Reducible)
        );
    }

    #[test]
    fn single_mode_path() {
        let mt = MarkovTopology::fixed(DiGraph::directed_cycle(3).unwrap());
        assert_eq!(
            sample_path(&mt, 5.0, 1),
            vec![ModeInterval {
                mode: 0,
                from: 0.0,
                to: 5.0
            }]
        );
    }

    #[test]
    fn two_state_path_toggles_and_tiles() {
        let mt = MarkovTopology::new(default_pair(), m(2, 2, &[-1.0, 1.0, 1.0, -1.0])).unwrap();
        let path = sample_path(&mt, 50.0, 3);
        assert_eq!(path[0].from, 0.0);
        assert_eq!(path.last().unwrap().to, 50.0);
        for w in path.windows(2) {
            assert_eq!(w[0].to, w[1].from);
            assert_ne!(w[0].mode, w[1].mode);
        }
        assert_eq!(path, sample_path(&mt, 50.0, 3));
    }

    #[test]
    fn default_pair_a4() {
        let mt = MarkovTopology::new(default_pair(), m(2, 2, &[-1.0, 1.0, 1.0, -1.0])).unwrap();
        let rep = check_a4(&mt);
        assert!(rep.passes());
        for g in &rep.per_graph {
            assert!(!g.has_spanning_tree && !g.balanced);
        }
        let empty = vec![DiGraph::empty(3).unwrap(), DiGraph::empty(3).unwrap()];
        let mt = MarkovTopology::new(empty, m(2, 2, &[-1.0, 1.0, 1.0, -1.0])).unwrap();
        assert!(!check_a4(&mt).union_has_spanning_tree);
    }

    #[test]
    fn five_cycle_disagreement_eigenvalue() {
        let l = laplacian(&DiGraph::directed_cycle(5).unwrap());
        let want = 2.0 - 2.0 * (2.0 * std::f64::consts::PI / 5.0).cos();
        assert!((lambda_min_disagreement(&l).unwrap() - want).abs() < 1e-12);
    }
}
