use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use nlconsensus::export::{write_montecarlo_csv, write_svg, write_trajectory_csv};
use nlconsensus::graph::laplacian;
use nlconsensus::linalg::{Matrix, Spectrum};
use nlconsensus::metrics::{
    benchmark_lambda_note, disagreement, empirical_rate, lambda_min_neg_a,
    theoretical_speed_fixed_with, theoretical_speed_switching, MetricsError,
};
use nlconsensus::scenario::{load_scenario, Scenario, ScenarioError};
use nlconsensus::sim::{self, monte_carlo_ms, SimError, Topology, Trajectory};
use nlconsensus::switching::{check_a4_with, SwitchingError};
use nlconsensus::synthesis::{closed_loop_spectrum_with, GainRank, SynthesisError};

#[derive(Parser)]
#[command(
    name = "nlconsensus",
    version,
    about = "Consensus of heterogeneous nonlinear agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the target system, gain, local controllers and closed-loop spectrum.
    Synthesize(Common),
    /// Simulate the scenario and write the output trajectories.
    Simulate(SimArgs),
    /// Simulate a Markov-switching scenario.
    SimulateSwitching(SimArgs),
    /// Average the squared state disagreement over independent switching runs.
    Montecarlo(McArgs),
    /// Simulate and report the fitted and predicted convergence rates.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    /// CSV destination; defaults to the scenario output path, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// SVG plot of the outputs.
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Add per-agent state and input columns.
    #[arg(long)]
    full_state: bool,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 200)]
    runs: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    /// Fit window `t0,t1`; defaults to the last 60% of the horizon.
    #[arg(long, value_parser = parse_window)]
    window: Option<(f64, f64)>,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| "expected t0,t1".to_string())?;
    let t0: f64 = a.trim().parse().map_err(|e| format!("t0: {e}"))?;
    let t1: f64 = b.trim().parse().map_err(|e| format!("t1: {e}"))?;
    if !(t0 < t1) {
        return Err("t0 must be below t1".into());
    }
    Ok((t0, t1))
}

struct Failure {
    code: u8,
    body: Value,
}

impl Failure {
    fn validation(kind: &str, message: impl ToString) -> Self {
        Failure {
            code: 1,
            body: json!({ "error": kind, "message": message.to_string() }),
        }
    }

    fn numeric(kind: &str, message: impl ToString) -> Self {
        Failure {
            code: 2,
            body: json!({ "error": kind, "message": message.to_string() }),
        }
    }
}

fn synthesis_numeric(e: &SynthesisError) -> bool {
    matches!(
        e,
        SynthesisError::Linalg(_)
            | SynthesisError::PlacementFailure(_)
            | SynthesisError::InconsistentSpectra(_)
            | SynthesisError::AssemblyMismatch(_)
    )
}

fn from_synthesis(e: SynthesisError) -> Failure {
    if synthesis_numeric(&e) {
        Failure::numeric("synthesis", e)
    } else {
        Failure::validation("synthesis", e)
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { ref path, .. } => Failure {
                code: 1,
                body: json!({ "error": "io", "path": path, "message": e.to_string() }),
            },
            ScenarioError::Parse { line, column, .. } => Failure {
                code: 1,
                body: json!({
                    "error": "parse",
                    "line": line,
                    "column": column,
                    "message": e.to_string(),
                }),
            },
            ScenarioError::Validation { ref path, .. } => Failure {
                code: 1,
                body: json!({ "error": "validation", "path": path, "message": e.to_string() }),
            },
            ScenarioError::Synthesis(s) => from_synthesis(s),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::FiniteEscape { t, agent, .. } => Failure {
                code: 2,
                body: json!({
                    "error": "finite_escape",
                    "t": t,
                    "agent": agent,
                    "message": e.to_string(),
                }),
            },
            SimError::BetaNearZero { t, agent, beta, .. } => Failure {
                code: 2,
                body: json!({
                    "error": "beta_near_zero",
                    "t": t,
                    "agent": agent,
                    "beta": beta,
                    "message": e.to_string(),
                }),
            },
            SimError::A4Violated(ref report) => Failure {
                code: 1,
                body: json!({
                    "error": "union_graph",
                    "report": report,
                    "message": e.to_string(),
                }),
            },
            SimError::Synthesis(s) => from_synthesis(s),
            SimError::Switching(s) => from_switching(s),
            SimError::InvalidScenario(_) | SimError::Agent(_) => {
                Failure::validation("validation", e)
            }
        }
    }
}

fn from_switching(e: SwitchingError) -> Failure {
    match e {
        SwitchingError::Linalg(_) | SwitchingError::Singular => Failure::numeric("switching", e),
        _ => Failure::validation("switching", e),
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::EmptyWindow => Failure::validation("window", e),
            _ => Failure::numeric("metrics", e),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure {
        code: 1,
        body: json!({ "error": "io", "path": path.display().to_string(), "message": e.to_string() }),
    }
}

fn load(common: &Common) -> Result<Scenario, Failure> {
    let mut sc = load_scenario(&common.scenario)?;
    if let Some(seed) = common.seed {
        sc.sim.seed = seed;
    }
    Ok(sc)
}

fn matrix_json(m: &Matrix) -> Value {
    json!((0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>())
        .collect::<Vec<_>>())
}

fn spectrum_json(s: &Spectrum) -> Value {
    json!(s.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
}

fn closed_loop_json(sc: &Scenario) -> Result<Value, Failure> {
    let s = &sc.sim;
    let graphs: Vec<_> = match &s.topology {
        Topology::Fixed(g) => vec![g.clone()],
        Topology::Switching(mt) => mt.graphs().to_vec(),
    };
    graphs
        .iter()
        .map(|g| {
            let cl = closed_loop_spectrum_with(&s.cs, &s.gain, &laplacian(g), &s.settings)
                .map_err(from_synthesis)?;
            Ok(json!({
                "eigenvalues": spectrum_json(cl.spectrum()),
                "max_real": cl.spectrum().max_real(),
                "analytic": cl.analytic.is_some(),
                "mismatch": cl.mismatch,
            }))
        })
        .collect::<Result<Vec<_>, Failure>>()
        .map(Value::Array)
}

fn theoretical_speed(sc: &Scenario) -> Result<Option<f64>, Failure> {
    let s = &sc.sim;
    if s.gain.rank != GainRank::One {
        return Ok(None);
    }
    match &s.topology {
        Topology::Fixed(g) => match theoretical_speed_fixed_with(&s.cs, &s.gain, g, &s.settings) {
            Ok(v) => Ok(Some(v)),
            Err(MetricsError::NoSpanningTree) => Ok(None),
            Err(e) => Err(e.into()),
        },
        Topology::Switching(mt) => {
            if !check_a4_with(mt, &s.settings).passes() {
                return Ok(None);
            }
            Ok(Some(theoretical_speed_switching(mt, &s.gain, &s.cs)?))
        }
    }
}

fn synthesize(args: &Common) -> Result<(), Failure> {
    let sc = load(args)?;
    let s = &sc.sim;
    let controllers: Vec<Value> = s
        .controllers
        .iter()
        .map(|c| {
            json!({
                "agent": c.agent_id,
                "r": c.agent_r,
                "order": c.order(),
                "D": matrix_json(&c.d),
                "E": matrix_json(&c.e),
                "G": matrix_json(&c.g),
                "static_row": c.static_row,
            })
        })
        .collect();
    let observer = s
        .observer
        .as_ref()
        .map(|o| json!({ "C": matrix_json(&o.gain.c), "M": matrix_json(&o.gain.m) }));
    let report = json!({
        "r": s.cs.r,
        "b": s.cs.b,
        "poles": s.cs.poles.iter().map(|p| [p.re, p.im]).collect::<Vec<_>>(),
        "A": matrix_json(&s.cs.a),
        "B": matrix_json(&s.cs.b_vec),
        "nu": matrix_json(&s.cs.nu_row()),
        "gain": {
            "rank": if s.gain.rank == GainRank::One { "one" } else { "full" },
            "mu": s.gain.mu,
            "q1": s.gain.q1,
            "r_hat": s.gain.r_hat,
            "K": matrix_json(&s.gain.k),
            "P1": matrix_json(&s.gain.p1),
        },
        "controllers": controllers,
        "observer": observer,
        "closed_loop": closed_loop_json(&sc)?,
        "lambda_min_neg_a": lambda_min_neg_a(&s.cs),
        "theoretical_speed": theoretical_speed(&sc)?,
        "note": benchmark_lambda_note(&s.cs),
    });
    print_json(&report)
}

fn print_json(v: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::numeric("serialize", e))?;
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
            Err(io_failure(Path::new("<stdout>"), e))
        }
        _ => Ok(()),
    }
}

fn with_writer(
    path: Option<&Path>,
    f: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> Result<(), Failure> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| io_failure(p, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w)
                .and_then(|_| w.flush())
                .map_err(|e| io_failure(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w).map_err(|e| io_failure(Path::new("<stdout>"), e))
        }
    }
}

fn write_outputs(sc: &Scenario, args: &SimArgs, traj: &Trajectory) -> Result<(), Failure> {
    let output = sc.file.output.as_ref();
    let csv = args
        .out
        .clone()
        .or_else(|| output.and_then(|o| o.csv.as_ref()).map(PathBuf::from));
    let svg = args
        .svg
        .clone()
        .or_else(|| output.and_then(|o| o.svg.as_ref()).map(PathBuf::from));
    let full = args.full_state || output.is_some_and(|o| o.full_state);
    with_writer(csv.as_deref(), |w| {
        let mut w = w;
        write_trajectory_csv(traj, &mut w, full)
    })?;
    if let Some(p) = svg {
        let title = args.common.scenario.file_stem().map_or_else(
            || "outputs".to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        with_writer(Some(&p), |w| {
            let mut w = w;
            write_svg(traj, &mut w, &title)
        })?;
    }
    Ok(())
}

fn simulate(args: &SimArgs, switching_only: bool) -> Result<(), Failure> {
    let sc = load(&args.common)?;
    if switching_only && !matches!(sc.sim.topology, Topology::Switching(_)) {
        return Err(Failure::validation(
            "validation",
            "scenario has no switching section",
        ));
    }
    match sim::simulate(&sc.sim) {
        Ok(traj) => write_outputs(&sc, args, &traj),
        Err(e) => {
            if let Some(partial) = e.trajectory() {
                write_outputs(&sc, args, partial)?;
            }
            Err(e.into())
        }
    }
}

fn montecarlo(args: &McArgs) -> Result<(), Failure> {
    let sc = load(&args.common)?;
    if !matches!(sc.sim.topology, Topology::Switching(_)) {
        return Err(Failure::validation(
            "validation",
            "scenario has no switching section",
        ));
    }
    let mc = monte_carlo_ms(&sc.sim, args.runs)?;
    with_writer(args.out.as_deref(), |w| {
        let mut w = w;
        write_montecarlo_csv(&mc, &mut w)
    })?;
    if args.out.is_some() {
        print_json(&json!({
            "runs": args.runs,
            "completed": mc.completed,
            "diverged": mc.diverged,
            "initial": mc.mean_sq.first(),
            "final": mc.mean_sq.last(),
        }))?;
    }
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> Result<(), Failure> {
    let sc = load(&args.common)?;
    let traj = sim::simulate(&sc.sim)?;
    let d = disagreement(&traj);
    let fit = empirical_rate(&traj.times, &d, args.window)?;
    let observer_rate = if traj.has_observer() {
        let err: Vec<f64> = (0..traj.len())
            .map(|k| {
                traj.agents
                    .iter()
                    .map(|a| {
                        a.observer_error[k]
                            .iter()
                            .map(|v| v * v)
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        Some(empirical_rate(&traj.times, &err, args.window)?)
    } else {
        None
    };
    let report = json!({
        "disagreement_initial": d.first(),
        "disagreement_final": d.last(),
        "empirical_rate": fit,
        "observer_error_rate": observer_rate,
        "theoretical_speed": theoretical_speed(&sc)?,
        "lambda_min_neg_a": lambda_min_neg_a(&sc.sim.cs),
        "spectrum": closed_loop_json(&sc)?,
        "note": benchmark_lambda_note(&sc.sim.cs),
    });
    print_json(&report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let body = json!({ "error": "usage", "message": e.to_string() });
            eprintln!("{body}");
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Synthesize(a) => synthesize(a),
        Command::Simulate(a) => simulate(a, false),
        Command::SimulateSwitching(a) => simulate(a, true),
        Command::Montecarlo(a) => montecarlo(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.body);
            ExitCode::from(f.code)
        }
    }
}
