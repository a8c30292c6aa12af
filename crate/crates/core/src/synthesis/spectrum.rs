use num_complex::Complex64;

use super::{CompanionSystem, ConsensusGain, GainRank, SynthesisError};
use crate::linalg::{eig_with, Matrix, Spectrum};
use crate::settings::NumericSettings;

const AGREEMENT_TOL: f64 = 1e-7;
/// Analytic eigenvalues closer than this (relative) are compared as one
/// cluster through their mean: repeated coupling eigenvalues can sit in
/// Jordan blocks, where individual computed eigenvalues scatter by
/// `ε^{1/m}` but their mean stays accurate to working precision.
const CLUSTER_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopSpectrum {
    /// Eigenvalues of `I⊗A − L⊗BK` computed directly.
    pub direct: Spectrum,
    /// Closed form, rank-one gains only.
    pub analytic: Option<Spectrum>,
    /// Largest analytic/direct disagreement found (0 without a closed form).
    pub mismatch: f64,
}

impl ClosedLoopSpectrum {
    /// The closed form when available, otherwise the direct eigenvalues.
    pub fn spectrum(&self) -> &Spectrum {
        self.analytic.as_ref().unwrap_or(&self.direct)
    }

    pub fn consistent(&self) -> bool {
        self.mismatch <= AGREEMENT_TOL
    }
}

pub fn closed_loop_spectrum(
    cs: &CompanionSystem,
    gain: &ConsensusGain,
    l: &Matrix,
) -> Result<ClosedLoopSpectrum, SynthesisError> {
    closed_loop_spectrum_with(cs, gain, l, &NumericSettings::default())
}

pub fn closed_loop_spectrum_with(
    cs: &CompanionSystem,
    gain: &ConsensusGain,
    l: &Matrix,
    settings: &NumericSettings,
) -> Result<ClosedLoopSpectrum, SynthesisError> {
    let n = l.nrows();
    if l.ncols() != n || gain.k.shape() != (1, cs.r) {
        return Err(SynthesisError::DimensionMismatch(format!(
            "L is {}x{}, K is {}x{}, r = {}",
            l.nrows(),
            l.ncols(),
            gain.k.nrows(),
            gain.k.ncols(),
            cs.r
        )));
    }
    let bk = &cs.b_vec * &gain.k;
    let big = Matrix::identity(n, n).kronecker(&cs.a) - l.kronecker(&bk);
    let direct = eig_with(&big, settings)?;

    if gain.rank != GainRank::One {
        return Ok(ClosedLoopSpectrum {
            direct,
            analytic: None,
            mismatch: 0.0,
        });
    }

    // For K ∝ νᵀ each Laplacian eigenvalue γ contributes eig(A − γBK)
    // = {−γ·KB} ∪ λ(A)∖{0}, and γ = 0 contributes λ(A) itself.
    let kb = (&gain.k * &cs.b_vec)[(0, 0)];
    let zero_tol = settings.laplacian_zero * l.norm().max(1.0);
    let mut analytic = Vec::with_capacity(n * cs.r);
    for gamma in eig_with(l, settings)?.iter() {
        if gamma.norm() <= zero_tol {
            analytic.extend(cs.eigenvalues());
        } else {
            analytic.push(-gamma * kb);
            analytic.extend(cs.poles.iter().copied());
        }
    }
    let mismatch = cluster_mismatch(&analytic, direct.values());
    if !(mismatch <= AGREEMENT_TOL) {
        return Err(SynthesisError::InconsistentSpectra(mismatch));
    }
    Ok(ClosedLoopSpectrum {
        direct,
        analytic: Some(Spectrum::new(analytic)),
        mismatch,
    })
}

/// Groups `reference` into clusters, pairs every cluster of size m with the
/// m nearest unused entries of `computed`, and returns the worst scaled gap
/// between cluster means.
pub(crate) fn cluster_mismatch(reference: &[Complex64], computed: &[Complex64]) -> f64 {
    if reference.len() != computed.len() {
        return f64::INFINITY;
    }
    let n = reference.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut i = i;
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let scale = reference[i].norm().max(reference[j].norm()).max(1.0);
            if (reference[i] - reference[j]).norm() <= CLUSTER_TOL * scale {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut root_index = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if root_index[root] == usize::MAX {
            root_index[root] = clusters.len();
            clusters.push(Vec::new());
        }
        clusters[root_index[root]].push(i);
    }
    // Larger clusters first so their scattered members are claimed before a
    // nearby simple eigenvalue can take one.
    clusters.sort_by_key(|c| std::cmp::Reverse(c.len()));

    let mut pool: Vec<Complex64> = computed.to_vec();
    let mut worst: f64 = 0.0;
    for cluster in clusters {
        let m = cluster.len();
        let mean: Complex64 = cluster.iter().map(|&i| reference[i]).sum::<Complex64>() / m as f64;
        let mut picked = Complex64::new(0.0, 0.0);
        for _ in 0..m {
            let (idx, _) = pool
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - mean).norm().total_cmp(&(b.1 - mean).norm()))
                .expect("pool sized to match");
            picked += pool.swap_remove(idx);
        }
        let gap = (picked / m as f64 - mean).norm() / mean.norm().max(1.0);
        worst = worst.max(gap);
    }
    worst
}
