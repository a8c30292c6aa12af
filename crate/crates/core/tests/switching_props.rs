use nlconsensus::graph::{has_spanning_tree, DiGraph};
use nlconsensus::linalg::Matrix;
use nlconsensus::switching::{
    check_a4, sample_path, speed_bound, stationary_distribution, MarkovTopology, SwitchingError,
};
use nlconsensus::synthesis::{design_companion, rank_one_gain};
use num_complex::Complex64;
use proptest::prelude::*;

fn generator(max_l: usize) -> impl Strategy<Value = Matrix> {
    (2..=max_l).prop_flat_map(|l| {
        prop::collection::vec(0.1..3.0f64, l * l).prop_map(move |v| {
            let mut q = Matrix::from_row_slice(l, l, &v);
            for i in 0..l {
                q[(i, i)] = 0.0;
                let out: f64 = q.row(i).sum();
                q[(i, i)] = -out;
            }
            q
        })
    })
}

fn poles() -> Vec<Complex64> {
    vec![Complex64::new(-1.0, 0.0), Complex64::new(-2.0, 0.0)]
}

/// Two undirected graphs on five nodes whose union is the undirected path.
fn default_pair() -> MarkovTopology {
    let g1 = DiGraph::from_edges(5, &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)]).unwrap();
    let g2 = DiGraph::from_edges(5, &[(1, 2, 1.0), (2, 1, 1.0), (3, 4, 1.0), (4, 3, 1.0)]).unwrap();
    let q = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
    MarkovTopology::new(vec![g1, g2], q).unwrap()
}

/// Symmetric graph from an upper-triangular mask.
fn undirected(n: usize, mask: &[bool]) -> DiGraph {
    let mut edges = Vec::new();
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            if mask[k] {
                edges.push((i, j, 1.0));
                edges.push((j, i, 1.0));
            }
            k += 1;
        }
    }
    DiGraph::from_edges(n, &edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_distribution_is_a_probability_left_null_vector(q in generator(6)) {
        let pi = stationary_distribution(&q).unwrap();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(pi.iter().all(|&p| p > 0.0));
        for j in 0..q.ncols() {
            let s: f64 = (0..q.nrows()).map(|i| pi[i] * q[(i, j)]).sum();
            prop_assert!(s.abs() <= 1e-10);
        }
    }

    #[test]
    fn sample_path_tiles_the_horizon(q in generator(4), t_end in 0.5..50.0f64, seed in any::<u64>()) {
        let l = q.nrows();
        let graphs = vec![DiGraph::directed_cycle(3).unwrap(); l];
        let mt = MarkovTopology::new(graphs, q).unwrap();
        let path = sample_path(&mt, t_end, seed);
        prop_assert_eq!(path[0].from, 0.0);
        prop_assert_eq!(path.last().unwrap().to, t_end);
        for w in path.windows(2) {
            prop_assert_eq!(w[0].to, w[1].from);
            prop_assert!(w[0].mode != w[1].mode);
        }
        prop_assert!(path.iter().all(|iv| iv.to > iv.from && iv.mode < l));
        prop_assert_eq!(path, sample_path(&mt, t_end, seed));
    }

    #[test]
    fn bound_grows_with_the_union(
        base in prop::collection::vec(prop::bool::weighted(0.5), 6),
        extra in prop::collection::vec(prop::bool::weighted(0.5), 6),
    ) {
        let n = 4;
        let mut chain = vec![false; 6];
        // Upper-triangular order (0,1) (0,2) (0,3) (1,2) (1,3) (2,3); a path
        // keeps the union connected.
        chain[0] = true;
        chain[3] = true;
        chain[5] = true;
        let mask: Vec<bool> = base.iter().zip(&chain).map(|(a, b)| *a || *b).collect();
        let bigger: Vec<bool> = mask.iter().zip(&extra).map(|(a, b)| *a || *b).collect();
        let q = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let empty = DiGraph::from_edges(n, &[]).unwrap();
        let small = MarkovTopology::new(vec![undirected(n, &mask), empty.clone()], q.clone()).unwrap();
        let large = MarkovTopology::new(vec![undirected(n, &bigger), empty], q).unwrap();
        let cs = design_companion(&poles()).unwrap();
        let gain = rank_one_gain(&cs, 1.0, 1.0, 1.0).unwrap();
        let a = speed_bound(&small, &gain, &cs).unwrap();
        let b = speed_bound(&large, &gain, &cs).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!(b >= a - 1e-12);
    }
}

#[test]
fn two_state_stationary_distribution() {
    let q = Matrix::from_row_slice(2, 2, &[-2.0, 2.0, 1.0, -1.0]);
    let pi = stationary_distribution(&q).unwrap();
    assert!((pi[0] - 1.0 / 3.0).abs() < 1e-12);
    assert!((pi[1] - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(
        stationary_distribution(&Matrix::zeros(1, 1)).unwrap(),
        vec![1.0]
    );
}

#[test]
fn reducible_chain_is_rejected() {
    let q = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]);
    assert_eq!(stationary_distribution(&q), Err(SwitchingError::Reducible));
}

#[test]
fn mean_holding_time_matches_the_rate() {
    let mt = default_pair();
    let path = sample_path(&mt, 1.2e4, 5);
    let interior = &path[..path.len() - 1];
    assert!(interior.len() >= 10_000);
    let mean = interior.iter().map(|iv| iv.to - iv.from).sum::<f64>() / interior.len() as f64;
    assert!((0.98..=1.02).contains(&mean), "mean holding time {mean}");
}

#[test]
fn default_bound_and_its_scaling() {
    let mt = default_pair();
    let cs = design_companion(&poles()).unwrap();
    let one = speed_bound(&mt, &rank_one_gain(&cs, 1.0, 1.0, 1.0).unwrap(), &cs).unwrap();
    // π* = 1/2, KB = 1, λ_min of twice the path Laplacian = 2(2 − 2cos(π/5)).
    let expected = 0.5 * 2.0 * (2.0 - 2.0 * (std::f64::consts::PI / 5.0).cos());
    assert!((one - expected).abs() < 1e-9, "{one} vs {expected}");
    assert!((one - 0.381_966).abs() < 1e-6);
    let two = speed_bound(&mt, &rank_one_gain(&cs, 2.0, 1.0, 1.0).unwrap(), &cs).unwrap();
    assert!((two - 2.0 * one).abs() < 1e-12);
}

#[test]
fn single_mode_bound_uses_the_fixed_graph() {
    let g = DiGraph::from_edges(3, &[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)]).unwrap();
    let mt = MarkovTopology::fixed(g);
    let cs = design_companion(&poles()).unwrap();
    let bound = speed_bound(&mt, &rank_one_gain(&cs, 1.0, 1.0, 1.0).unwrap(), &cs).unwrap();
    // Path on three nodes: λ₂(L) = 1, so λ_min(L + Lᵀ) = 2.
    assert!((bound - 2.0).abs() < 1e-9);
}

#[test]
fn a4_check() {
    let g = DiGraph::from_edges(3, &[(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)]).unwrap();
    assert!(has_spanning_tree(&g));
    assert!(check_a4(&MarkovTopology::fixed(g)).passes());

    let empty = DiGraph::from_edges(3, &[]).unwrap();
    let q = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
    let mt = MarkovTopology::new(vec![empty.clone(), empty], q).unwrap();
    let report = check_a4(&mt);
    assert!(!report.passes());
    assert!(!report.union_has_spanning_tree);
    assert!(report.union_balanced);
    let cs = design_companion(&poles()).unwrap();
    let gain = rank_one_gain(&cs, 1.0, 1.0, 1.0).unwrap();
    assert_eq!(
        speed_bound(&mt, &gain, &cs),
        Err(SwitchingError::A4Violated)
    );

    let directed = DiGraph::directed_cycle(3).unwrap();
    let report = check_a4(&MarkovTopology::fixed(directed));
    assert!(report.union_has_spanning_tree && report.union_balanced);
    let chain = DiGraph::from_edges(3, &[(1, 0, 1.0), (2, 1, 1.0)]).unwrap();
    let report = check_a4(&MarkovTopology::fixed(chain));
    assert!(report.union_has_spanning_tree && !report.union_balanced);
}
