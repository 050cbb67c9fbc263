//! `ibrplace`: placement, comparison, simulation and evaluation runs from
//! the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 input error, 3 numerical failure.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ibr_placement::case_io::{parse_case, parse_dynamics, to_power_graph, CaseFile};
use ibr_placement::control::{ControlWeights, LqrController};
use ibr_placement::dynamics::{simulate, ConstantPower, Coupling, DisturbanceSpec, PowerController, SimConfig};
use ibr_placement::metrics::{
    evaluate_placements, render_table, to_csv, trajectory_norms, ControlMode, EvalConfig, Placement,
};
use ibr_placement::placement::{
    compare_methods, exhaustive_place, exhaustive_ranked, greedy_place, random_placement, Numbering, PlacementResult,
    DEFAULT_BUDGET,
};
use ibr_placement::resistance::{graph_resistance, ResistanceMatrix};
use ibr_placement::{BusId, Error};

#[derive(Parser, Debug)]
#[command(
    name = "ibrplace",
    version,
    about = "Place IBRs by effective resistance and test the frequency response"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select k buses with the greedy or exhaustive search.
    Place(PlaceArgs),
    /// Run both searches over a range of k and report the gap.
    Compare(CompareArgs),
    /// Simulate one disturbance scenario and write the trajectory.
    Simulate(SimulateArgs),
    /// Sweep single-generator disturbances over several placements.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct CaseArgs {
    /// MATPOWER case file.
    #[arg(long)]
    case: PathBuf,
    /// File holding an `mpc.dynamics` table; overrides any inline table.
    #[arg(long)]
    dynamics: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Greedy,
    Exhaustive,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum NumberingArg {
    External,
    Internal,
}

impl From<NumberingArg> for Numbering {
    fn from(n: NumberingArg) -> Self {
        match n {
            NumberingArg::External => Numbering::External,
            NumberingArg::Internal => Numbering::Internal,
        }
    }
}

#[derive(Args, Debug)]
struct PlaceArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Number of IBRs to place.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    k: u32,
    #[arg(long, value_enum, default_value = "greedy")]
    method: MethodArg,
    /// Maximum number of subsets the exhaustive search may evaluate.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
    /// Report case bus ids (external) or 1-based file positions (internal).
    #[arg(long, value_enum, default_value = "external")]
    numbering: NumberingArg,
    /// Write the resistance matrix as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// Ascending k values: `1..4` or `1,2,3`.
    #[arg(long, default_value = "1..4")]
    k_range: String,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
    #[arg(long, value_enum, default_value = "external")]
    numbering: NumberingArg,
    /// Write the comparison as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ControlArg {
    None,
    Lqr,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// Generators whose dispatch moves to the IBRs, in IBR order.
    #[arg(long, value_delimiter = ',')]
    replace: Vec<BusId>,
    /// Generators frozen as constant-impedance injections.
    #[arg(long, value_delimiter = ',')]
    static_gen: Vec<BusId>,
    /// IBR coupling susceptance in p.u.; default is the strongest branch at the bus.
    #[arg(long)]
    coupling: Option<f64>,
    /// Simulation step, s.
    #[arg(long, default_value_t = 0.01)]
    h: f64,
    /// Simulated time, s.
    #[arg(long, default_value_t = 30.0)]
    duration: f64,
    /// Fraction of the disturbed generator's capacity lost.
    #[arg(long, default_value_t = 0.6)]
    loss_fraction: f64,
    /// Disturbance start and end times, s: `start,end`.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 5.0])]
    window: Vec<f64>,
    #[arg(long, value_enum, default_value = "lqr")]
    control: ControlArg,
    /// Weight on generator speed deviation.
    #[arg(long, default_value_t = 1.0)]
    q1: f64,
    /// Weight on speed change per step; default 1/h.
    #[arg(long)]
    q2: Option<f64>,
    /// Per-IBR power weight, one value or one per IBR.
    #[arg(long, value_delimiter = ',', default_value = "0.05")]
    droop_weight: Vec<f64>,
}

impl StudyArgs {
    fn weights(&self) -> ControlWeights {
        ControlWeights {
            q1: self.q1,
            q2: self.q2,
            r: self.droop_weight.clone(),
            ..ControlWeights::default()
        }
    }

    fn eval_config(&self) -> CliResult<EvalConfig> {
        let [start, end] = self.window[..] else {
            return Err(Failure::usage("--window takes exactly two values: start,end"));
        };
        Ok(EvalConfig {
            replaced: self.replace.clone(),
            static_gens: self.static_gen.clone(),
            coupling: match self.coupling {
                Some(b) => Coupling::Susceptance(b),
                None => Coupling::StrongestBranch,
            },
            sim: SimConfig {
                h: self.h,
                duration: self.duration,
                ..SimConfig::default()
            },
            loss_fraction: self.loss_fraction,
            window: (start, end),
            control: match self.control {
                ControlArg::None => ControlMode::None,
                ControlArg::Lqr => ControlMode::Lqr(self.weights()),
            },
            disturbed: None,
        })
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[command(flatten)]
    study: StudyArgs,
    /// Buses hosting the IBRs.
    #[arg(long, value_delimiter = ',', required = true)]
    ibr: Vec<BusId>,
    /// Generator bus to disturb; omit for an undisturbed run.
    #[arg(long)]
    disturb: Option<BusId>,
    /// Trajectory CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the LQR gain as CSV.
    #[arg(long)]
    gain_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[command(flatten)]
    study: StudyArgs,
    /// Explicit placements `label=b1,b2;label=b3,b4`. Without it the best
    /// and second-best k-sets plus a seeded random set are compared.
    #[arg(long)]
    placements: Option<String>,
    /// Placement size when placements are chosen automatically.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..))]
    k: u32,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
    /// Seed for the random baseline placement.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generator buses to disturb; default is every study generator.
    #[arg(long, value_delimiter = ',')]
    disturb: Vec<BusId>,
    /// Report CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    fn input(message: impl Display) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Scenario { source, .. } => exit_code(source),
        Error::InvalidK { .. } | Error::BudgetExceeded { .. } | Error::Config(_) => 1,
        Error::Syntax { .. }
        | Error::Semantic(_)
        | Error::Disconnected { .. }
        | Error::IndexOutOfRange { .. }
        | Error::EmptySet
        | Error::DimensionMismatch { .. } => 2,
        Error::RankDeficient { .. }
        | Error::SingularBlock
        | Error::NumericalBlowUp { .. }
        | Error::NonConvergence { .. }
        | Error::IndefiniteHessian(_)
        | Error::Unstabilizable(_)
        | Error::OperatingPoint(_) => 3,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_case(args: &CaseArgs) -> CliResult<CaseFile> {
    let case = parse_case(&read(&args.case)?)?;
    match &args.dynamics {
        Some(path) => Ok(case.with_dynamics(parse_dynamics(&read(path)?)?)?),
        None => Ok(case),
    }
}

fn resistance(case: &CaseFile) -> CliResult<ResistanceMatrix> {
    Ok(graph_resistance(&to_power_graph(case)?)?)
}

fn join<T: Display>(items: &[T], sep: &str) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
}

fn cmd_place(args: &PlaceArgs) -> CliResult<()> {
    let case = load_case(&args.case)?;
    let rm = resistance(&case)?;
    let k = args.k as usize;
    let result: PlacementResult = match args.method {
        MethodArg::Greedy => greedy_place(&rm, k)?,
        MethodArg::Exhaustive => exhaustive_place(&rm, k, args.budget)?,
    };
    let labels = Numbering::from(args.numbering).labels(&result);
    println!("method: {}", result.method);
    println!("buses: {}", join(&labels, ", "));
    println!("objective: {:.6}", result.objective());
    println!("time: {:.2} s", result.elapsed);
    if let Some(path) = &args.out {
        write(path, &rm.to_csv())?;
    }
    Ok(())
}

/// `a..b` (inclusive) or a comma list.
fn parse_k_range(text: &str) -> CliResult<Vec<usize>> {
    let bad = || Failure::usage(format!("invalid --k-range `{text}`"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo == 0 || lo > hi {
            return Err(Failure::usage(format!(
                "--k-range `{text}` must be ascending and start at 1 or more"
            )));
        }
        Ok((lo..=hi).collect())
    } else {
        text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
    }
}

fn cmd_compare(args: &CompareArgs) -> CliResult<()> {
    let ks = parse_k_range(&args.k_range)?;
    let case = load_case(&args.case)?;
    let rm = resistance(&case)?;
    let report = compare_methods(&rm, &ks, args.budget)?;
    let numbering = Numbering::from(args.numbering);
    print!("{}", report.render_table(numbering));
    if let Some(path) = &args.out {
        write(path, &report.to_csv(numbering))?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let case = load_case(&args.case)?;
    let cfg = args.study.eval_config()?;
    let sys = cfg.study(&case, &args.ibr)?;
    let disturbance = match args.disturb {
        None => None,
        Some(bus) => {
            let generator = sys
                .gen_buses
                .iter()
                .position(|&g| g == bus)
                .ok_or_else(|| Failure::usage(format!("bus {bus} has no study generator")))?;
            Some(DisturbanceSpec {
                generator,
                fraction_lost: cfg.loss_fraction,
                t_start: cfg.window.0,
                t_end: cfg.window.1,
            })
        }
    };
    let mut controller: Box<dyn PowerController> = match &cfg.control {
        ControlMode::None => Box::new(ConstantPower::default()),
        ControlMode::Lqr(w) => {
            let lqr = LqrController::design(&sys, w, cfg.sim.h, cfg.sim.omega_b)?;
            if let Some(path) = &args.gain_out {
                write(path, &lqr.solution().gain_csv(&sys.gen_buses, &sys.ibr_buses))?;
            }
            Box::new(lqr)
        }
    };
    let traj = simulate(&sys, disturbance.as_ref(), controller.as_mut(), &cfg.sim)?;
    let csv = traj.to_csv(&sys.gen_buses, &sys.ibr_buses);
    match &args.out {
        Some(path) => write(path, &csv)?,
        None => print!("{csv}"),
    }
    let norms = trajectory_norms(&traj, cfg.sim.h)?;
    eprintln!(
        "nadir {:.4} Hz, f-norm {:.4} Hz, P_gen-norm {:.4}, P_ibr-norm {:.4}",
        traj.nadir_hz(),
        norms.f,
        norms.p_gen,
        norms.p_ibr
    );
    Ok(())
}

/// `label=b1,b2;label=b3` into placements.
fn parse_placements(text: &str) -> CliResult<Vec<Placement>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (label, buses) = item
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("placement `{item}` must look like label=b1,b2")))?;
            let buses = buses
                .split(',')
                .map(|b| b.trim().parse::<BusId>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| Failure::usage(format!("placement `{item}` has a bad bus id")))?;
            Ok(Placement {
                label: label.trim().to_string(),
                buses,
            })
        })
        .collect()
}

/// Best and second-best k-sets, plus a seeded random set avoiding the
/// greedy choice.
fn automatic_placements(case: &CaseFile, args: &EvaluateArgs) -> CliResult<Vec<Placement>> {
    let rm = resistance(case)?;
    let k = args.k as usize;
    let ranked = exhaustive_ranked(&rm, k, 2, args.budget)?;
    let greedy = greedy_place(&rm, k)?;
    let random = random_placement(rm.n(), k, &greedy.selected, args.seed)?;
    let mut out: Vec<Placement> = ranked
        .iter()
        .zip(["optimal", "next-optimal"])
        .map(|(set, label)| Placement {
            label: label.into(),
            buses: set.buses.clone(),
        })
        .collect();
    out.push(Placement {
        label: "random".into(),
        buses: random.iter().map(|&i| rm.labels()[i]).collect(),
    });
    Ok(out)
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let case = load_case(&args.case)?;
    let placements = match &args.placements {
        Some(text) => parse_placements(text)?,
        None => automatic_placements(&case, args)?,
    };
    if placements.is_empty() {
        return Err(Failure::usage("no placements given"));
    }
    let mut cfg = args.study.eval_config()?;
    if !args.disturb.is_empty() {
        cfg.disturbed = Some(args.disturb.clone());
    }
    let metrics = evaluate_placements(&case, &placements, &cfg)?;
    print!("{}", render_table(&metrics));
    if let Some(path) = &args.out {
        write(path, &to_csv(&metrics))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Place(a) => cmd_place(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
