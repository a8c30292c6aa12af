use nlconsensus::agents::{builtin, NormalFormAgent, Polynomial, Term};
use nlconsensus::graph::DiGraph;
use nlconsensus::linalg::Matrix;
use nlconsensus::metrics::{
    disagreement, empirical_rate, state_disagreement_sq, theoretical_speed_fixed,
};
use nlconsensus::sim::{
    monte_carlo_ms, simulate, simulate_fixed, simulate_switching, simulate_with_observer,
    InitialCondition, ObserverInit, ObserverSetup, SimError, SimScenario, Topology,
};
use nlconsensus::switching::MarkovTopology;
use nlconsensus::synthesis::{design_companion, observer_gain, rank_one_gain};
use num_complex::Complex64;

fn poles() -> Vec<Complex64> {
    vec![Complex64::new(-1.0, 0.0), Complex64::new(-2.0, 0.0)]
}

fn scenario(agents: Vec<NormalFormAgent>, topology: Topology, t_end: f64, dt: f64) -> SimScenario {
    let cs = design_companion(&poles()).unwrap();
    let gain = rank_one_gain(&cs, 1.0, 1.0, 1.0).unwrap();
    let mut s = SimScenario::new(agents, cs, gain, topology).unwrap();
    s.t_end = t_end;
    s.dt = dt;
    s
}

fn chains(n: usize) -> Vec<NormalFormAgent> {
    ["agent1", "agent2", "agent4", "agent5"]
        .iter()
        .cycle()
        .take(n)
        .enumerate()
        .map(|(i, name)| builtin(name).unwrap().with_id(i))
        .collect()
}

fn ring(n: usize) -> DiGraph {
    DiGraph::directed_cycle(n).unwrap()
}

fn pair_switching(n: usize) -> MarkovTopology {
    let even: Vec<_> = (0..n - 1)
        .step_by(2)
        .flat_map(|i| [(i, i + 1, 1.0), (i + 1, i, 1.0)])
        .collect();
    let odd: Vec<_> = (1..n - 1)
        .step_by(2)
        .flat_map(|i| [(i, i + 1, 1.0), (i + 1, i, 1.0)])
        .collect();
    let q = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
    MarkovTopology::new(
        vec![
            DiGraph::from_edges(n, &even).unwrap(),
            DiGraph::from_edges(n, &odd).unwrap(),
        ],
        q,
    )
    .unwrap()
}

fn max_spread(traj: &nlconsensus::sim::Trajectory) -> f64 {
    state_disagreement_sq(traj)
        .iter()
        .copied()
        .fold(0.0, f64::max)
        .sqrt()
}

#[test]
fn lone_agent_settles() {
    let agent = builtin("agent1")
        .unwrap()
        .with_initial(vec![1.0, 0.0], vec![0.0])
        .unwrap();
    let s = scenario(
        vec![agent],
        Topology::Fixed(DiGraph::from_edges(1, &[]).unwrap()),
        40.0,
        0.01,
    );
    let traj = simulate_fixed(&s).unwrap();
    let y = &traj.agents[0].y;
    let half = y[(y.len() - 1) / 2];
    assert!((y[y.len() - 1] - half).abs() < 1e-6);
}

#[test]
fn identical_start_stays_synchronized() {
    let start = |a: NormalFormAgent| a.with_initial(vec![0.7, -0.3], vec![0.2]).unwrap();
    let agents: Vec<_> = (0..4)
        .map(|i| start(builtin("agent2").unwrap().with_id(i)))
        .collect();
    let fixed = scenario(agents.clone(), Topology::Fixed(ring(4)), 5.0, 0.01);
    assert!(max_spread(&simulate(&fixed).unwrap()) < 1e-9);
    let switching = scenario(agents, Topology::Switching(pair_switching(4)), 5.0, 0.01);
    assert!(max_spread(&simulate(&switching).unwrap()) < 1e-9);
}

#[test]
fn single_mode_switching_matches_fixed() {
    let mut fixed = scenario(chains(4), Topology::Fixed(ring(4)), 3.0, 0.01);
    fixed.init = InitialCondition::Uniform { lo: -1.0, hi: 1.0 };
    fixed.seed = 9;
    let mut switching = fixed.clone();
    switching.topology = Topology::Switching(MarkovTopology::fixed(ring(4)));
    let a = simulate_fixed(&fixed).unwrap();
    let b = simulate_switching(&switching).unwrap();
    assert_eq!(a.times, b.times);
    assert_eq!(a.agents, b.agents);
}

#[test]
fn exact_observer_start_tracks_state_feedback() {
    let mut s = scenario(chains(3), Topology::Fixed(ring(3)), 4.0, 0.01);
    s.init = InitialCondition::Uniform { lo: -1.0, hi: 1.0 };
    let plain = simulate_fixed(&s).unwrap();
    let c = Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
    let obs_poles = [-3.0, -4.0, -5.0].map(|p| Complex64::new(p, 0.0));
    s.observer = Some(ObserverSetup {
        gain: observer_gain(&s.cs, &c, &obs_poles).unwrap(),
        init: ObserverInit::Exact,
    });
    let observed = simulate_with_observer(&s).unwrap();
    for (p, o) in plain.agents.iter().zip(&observed.agents) {
        for e in &o.observer_error {
            assert!(e.iter().all(|v| v.abs() < 1e-12));
        }
        for (a, b) in p.y.iter().zip(&o.y) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn disconnected_switching_keeps_agents_apart() {
    let empty = DiGraph::from_edges(3, &[]).unwrap();
    let q = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
    let mt = MarkovTopology::new(vec![empty.clone(), empty], q).unwrap();
    let agents: Vec<_> = (0..3)
        .map(|i| {
            builtin("agent2")
                .unwrap()
                .with_id(i)
                .with_initial(vec![i as f64, 0.0], vec![0.0])
                .unwrap()
        })
        .collect();
    let mut s = scenario(agents, Topology::Switching(mt), 5.0, 0.01);
    assert!(matches!(simulate(&s), Err(SimError::A4Violated(_))));
    s.allow_a4_violation = true;
    let traj = simulate(&s).unwrap();
    for (i, a) in traj.agents.iter().enumerate() {
        assert!(a.y.iter().all(|y| (y - i as f64).abs() < 1e-12));
    }
}

#[test]
fn monte_carlo_single_run_and_identical_start() {
    let mut s = scenario(chains(4), Topology::Switching(pair_switching(4)), 3.0, 0.01);
    s.init = InitialCondition::Uniform { lo: -1.0, hi: 1.0 };
    s.seed = 4;
    let mc = monte_carlo_ms(&s, 1).unwrap();
    let single = simulate_switching(&s).unwrap();
    assert_eq!(mc.times, single.times);
    assert_eq!(mc.mean_sq, state_disagreement_sq(&single));
    assert_eq!(
        monte_carlo_ms(&s, 6).unwrap(),
        monte_carlo_ms(&s, 6).unwrap()
    );

    let same: Vec<_> = (0..4)
        .map(|i| {
            builtin("agent5")
                .unwrap()
                .with_id(i)
                .with_initial(vec![0.3, 0.1], vec![-0.2])
                .unwrap()
        })
        .collect();
    let s = scenario(same, Topology::Switching(pair_switching(4)), 3.0, 0.01);
    let mc = monte_carlo_ms(&s, 5).unwrap();
    assert!(mc.mean_sq.iter().all(|v| *v < 1e-18));
    assert!(matches!(
        monte_carlo_ms(&s, 0),
        Err(SimError::InvalidScenario(_))
    ));
}

#[test]
fn runs_are_deterministic() {
    let mut s = scenario(chains(5), Topology::Fixed(ring(5)), 2.0, 0.01);
    s.init = InitialCondition::Uniform { lo: -1.0, hi: 1.0 };
    s.seed = 17;
    assert_eq!(simulate(&s).unwrap(), simulate(&s).unwrap());
    let mut other = s.clone();
    other.seed = 18;
    assert_ne!(
        simulate(&s).unwrap().agents,
        simulate(&other).unwrap().agents
    );
}

#[test]
fn pure_chains_converge_at_the_slowest_coupling_mode() {
    let agents: Vec<_> = [1.0, -0.5, 0.25, -1.0, 0.5]
        .iter()
        .enumerate()
        .map(|(i, &y0)| {
            NormalFormAgent::from_polynomials(
                2,
                0,
                Polynomial::default(),
                Polynomial::constant(1.0, 2),
                vec![],
                vec![y0, 0.0],
                vec![],
            )
            .unwrap()
            .with_id(i)
        })
        .collect();
    let mut s = scenario(agents, Topology::Fixed(ring(5)), 30.0, 0.01);
    s.record_every = 10;
    let traj = simulate(&s).unwrap();
    let fit = empirical_rate(&traj.times, &disagreement(&traj), Some((8.0, 20.0))).unwrap();
    let theory = theoretical_speed_fixed(&s.cs, &s.gain, &ring(5)).unwrap();
    assert!(
        (fit.rate - theory).abs() <= 0.2 * theory,
        "{} vs {theory}",
        fit.rate
    );
    assert!(fit.rate >= 0.8 * theory);
}

#[test]
fn finite_escape_is_reported_with_the_partial_run() {
    let escaping = NormalFormAgent::from_polynomials(
        2,
        1,
        Polynomial::default(),
        Polynomial::constant(1.0, 3),
        vec![Polynomial::new(vec![Term::new(1.0, vec![0, 0, 2])])],
        vec![0.0, 0.0],
        vec![1.0],
    )
    .unwrap();
    let s = scenario(
        vec![escaping, builtin("agent1").unwrap()],
        Topology::Fixed(ring(2)),
        3.0,
        0.001,
    );
    match simulate(&s) {
        Err(SimError::FiniteEscape {
            t,
            agent,
            trajectory,
        }) => {
            assert_eq!(agent, 0);
            assert!(t > 0.9 && t < 1.1, "escape at {t}");
            assert!(trajectory.diverged);
            assert!(!trajectory.is_empty());
        }
        other => panic!("expected finite escape, got {other:?}"),
    }
}

#[test]
fn invalid_scenarios_are_rejected() {
    let mut s = scenario(chains(3), Topology::Fixed(ring(3)), 1.0, 0.01);
    s.dt = 0.0;
    assert!(matches!(simulate(&s), Err(SimError::InvalidScenario(_))));
    let mut s = scenario(chains(3), Topology::Fixed(ring(3)), 1.0, 0.01);
    s.topology = Topology::Fixed(ring(4));
    assert!(matches!(simulate(&s), Err(SimError::InvalidScenario(_))));
    let mut s = scenario(chains(3), Topology::Fixed(ring(3)), 1.0, 0.01);
    s.record_every = 0;
    assert!(matches!(simulate(&s), Err(SimError::InvalidScenario(_))));
    let s = scenario(chains(3), Topology::Fixed(ring(3)), 1.0, 0.01);
    assert!(matches!(
        simulate_with_observer(&s),
        Err(SimError::InvalidScenario(_))
    ));
    assert!(matches!(
        monte_carlo_ms(&s, 3),
        Err(SimError::InvalidScenario(_))
    ));
}
