use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use gridopt::runner::{self, write_output_tree, RunError, StageStatus};
use gridopt::{Application, CouplingMode, RunPlan, RunReport, RunStatus, SolverOptions, Structure};

const EXIT_USAGE: u8 = 2;
const EXIT_DEGRADED: u8 = 3;
const EXIT_FAILURE: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "gridopt", version, about = "AC optimal power flow and its multi-period, security-constrained and stochastic extensions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single-period AC optimal power flow.
    Opflow(CommonArgs),
    /// Multi-period optimal power flow with ramp coupling.
    Tcopflow(CommonArgs),
    /// Security-constrained optimal power flow.
    Scopflow(CommonArgs),
    /// Stochastic optimal power flow over wind scenarios.
    Sopflow(CommonArgs),
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// MATPOWER case file.
    #[arg(long)]
    netfile: PathBuf,
    /// Contingency list.
    #[arg(long)]
    ctgcfile: Option<PathBuf>,
    /// Scenario CSV with wind targets.
    #[arg(long)]
    scenfile: Option<PathBuf>,
    /// Real power load profile CSV.
    #[arg(long)]
    pload: Option<PathBuf>,
    /// Reactive power load profile CSV.
    #[arg(long)]
    qload: Option<PathBuf>,
    /// Use only the first N contingencies.
    #[arg(long)]
    nc: Option<usize>,
    /// Use only the first N scenarios.
    #[arg(long)]
    ns: Option<usize>,
    /// Number of periods.
    #[arg(long)]
    nt: Option<usize>,
    /// Period length in minutes.
    #[arg(long, default_value_t = 5.0)]
    dt: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Corrective)]
    mode: ModeArg,
    /// Pin post-contingency voltages at generator buses in preventive mode.
    #[arg(long)]
    pin_voltages: bool,
    #[arg(long, value_enum, default_value_t = StructureArg::Monolithic)]
    structure: StructureArg,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    maxiter: usize,
    /// Output directory; defaults to `<application>out`.
    #[arg(long)]
    outdir: Option<PathBuf>,
    /// Machine-readable report; defaults to `<outdir>/summary.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// EMPAR worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
    /// EMPAR: bound first-period dispatch around the solved base chain.
    #[arg(long)]
    empar_anchor: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Preventive,
    Corrective,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum StructureArg {
    Monolithic,
    Empar,
    Flat,
    Full,
}

fn build_plan(application: Application, a: &CommonArgs) -> RunPlan {
    let mut plan = RunPlan::new(application, a.netfile.clone());
    plan.structure = match a.structure {
        StructureArg::Monolithic => Structure::Monolithic,
        StructureArg::Empar => Structure::Empar,
        StructureArg::Flat => Structure::Flat,
        StructureArg::Full => Structure::Full,
    };
    plan.mode = match a.mode {
        ModeArg::Corrective => CouplingMode::corrective(),
        ModeArg::Preventive => CouplingMode::preventive(a.pin_voltages),
    };
    plan.nt = a.nt;
    plan.dt_minutes = a.dt;
    plan.ctgcfile = a.ctgcfile.clone();
    plan.scenfile = a.scenfile.clone();
    plan.pload = a.pload.clone();
    plan.qload = a.qload.clone();
    plan.nc = a.nc;
    plan.ns = a.ns;
    if let Some(dir) = &a.outdir {
        plan.outdir = dir.clone();
    }
    plan.solver = SolverOptions { tol: a.tol, max_iter: a.maxiter, ..Default::default() };
    plan.empar_anchor = a.empar_anchor;
    plan
}

fn label(r: &runner::StageReport) -> String {
    let mut parts = Vec::new();
    if let Some(s) = r.scenario {
        parts.push(format!("scen_{s}"));
    }
    parts.push(format!("cont_{}", r.contingency.unwrap_or(0)));
    parts.push(format!("t_{}", r.period));
    parts.join("/")
}

fn status_name(s: StageStatus) -> &'static str {
    match s {
        StageStatus::Optimal => "optimal",
        StageStatus::MaxIter => "max_iter",
        StageStatus::Infeasible => "infeasible",
        StageStatus::NumericFailure => "numeric_failure",
        StageStatus::Error => "error",
    }
}

fn print_summary(report: &RunReport) {
    if report.stages.len() == 1 {
        let s = &report.stages[0];
        println!("objective {:.4} $/h  iterations {}  status {}", s.objective, s.iterations, status_name(s.status));
        return;
    }
    println!("{:<24} {:>16} {:>8} {:>6} {:>16}", "stage", "objective $/h", "weight", "iters", "status");
    for s in &report.stages {
        println!(
            "{:<24} {:>16.4} {:>8.4} {:>6} {:>16}",
            label(s),
            s.objective,
            s.weight,
            s.iterations,
            status_name(s.status)
        );
    }
    println!("total weighted objective {:.4} $/h  ({} subproblems, {:.3} s)", report.total_objective, report.subproblems.len(), report.wall_time_s);
}

fn exit_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Optimal => 0,
        RunStatus::Degraded => EXIT_DEGRADED,
        RunStatus::Failure => EXIT_FAILURE,
    }
}

fn execute(plan: &RunPlan, args: &CommonArgs) -> Result<RunReport, RunError> {
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    runner::run(plan, workers)
}

fn finish(plan: &RunPlan, args: &CommonArgs, report: &RunReport) -> anyhow::Result<()> {
    if report.solutions.iter().all(Option::is_some) {
        write_output_tree(report, plan)?;
    }
    let path = args.report.clone().unwrap_or_else(|| plan.outdir.join("summary.json"));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(&path, report.to_json()).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let (application, args) = match &cli.command {
        Command::Opflow(a) => (Application::Opf, a),
        Command::Tcopflow(a) => (Application::Tcopf, a),
        Command::Scopflow(a) => (Application::Scopf, a),
        Command::Sopflow(a) => (Application::Sopf, a),
    };
    let plan = build_plan(application, args);
    let report = match execute(&plan, args) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if e.is_input_error() { EXIT_USAGE } else { EXIT_FAILURE });
        }
    };
    print_summary(&report);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Err(e) = finish(&plan, args, &report) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_FAILURE);
    }
    ExitCode::from(exit_code(report.status))
}
