//! Application orchestration: monolithic and embarrassingly parallel runs,
//! run reports and the solution directory tree.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::acopf::{extract_solution, AcopfError, SolvedCase};
use crate::composer::{
    compose_multiperiod, compose_with, stage_lattice, ComposeError, ComposeOptions, CouplingMode, ModeKind,
    StageSpec, TreeShape,
};
use crate::grid::{GridError, LoadProfile, NetworkCase};
use crate::ingest::{parse_contingencies, parse_load_profile, parse_scenarios, ContingencySet, IngestError, ScenarioSet};
use crate::ipm::{solve, KktResidual, SolveError, SolveStatus, SolverOptions};
use crate::matpower::{parse_case, write_case, CaseFormatError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Case { path: PathBuf, source: CaseFormatError },
    #[error("{path}: {source}")]
    Network { path: PathBuf, source: GridError },
    #[error("{path}: {source}")]
    Ingest { path: PathBuf, source: IngestError },
    #[error("invalid run plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Acopf(#[from] AcopfError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("no solution stored for stage {0}")]
    MissingSolution(usize),
}

impl RunError {
    /// True for errors in the inputs, as opposed to solver or output failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            RunError::Case { .. }
                | RunError::Network { .. }
                | RunError::Ingest { .. }
                | RunError::InvalidPlan(_)
                | RunError::Compose(_)
                | RunError::Grid(_)
                | RunError::Io { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Application {
    Opf,
    Tcopf,
    Scopf,
    Sopf,
}

impl Application {
    pub fn default_outdir(self) -> &'static str {
        match self {
            Application::Opf => "opflowout",
            Application::Tcopf => "tcopflowout",
            Application::Scopf => "scopflowout",
            Application::Sopf => "sopflowout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    /// One coupled problem; `Sopf` uses the full three-stage tree.
    Monolithic,
    /// Coupling rows dropped, every (scenario, contingency) chain solved alone.
    Empar,
    Flat,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPlan {
    pub application: Application,
    pub structure: Structure,
    pub mode: CouplingMode,
    /// Number of periods; `None` uses the load profile length, or 1.
    pub nt: Option<usize>,
    pub dt_minutes: f64,
    pub netfile: PathBuf,
    pub ctgcfile: Option<PathBuf>,
    pub scenfile: Option<PathBuf>,
    pub pload: Option<PathBuf>,
    pub qload: Option<PathBuf>,
    /// Keep only the first `nc` contingencies / `ns` scenarios.
    pub nc: Option<usize>,
    pub ns: Option<usize>,
    pub outdir: PathBuf,
    pub solver: SolverOptions,
    /// EMPAR only: bound each chain's first-period dispatch around the
    /// solved base chain.
    pub empar_anchor: bool,
}

impl RunPlan {
    pub fn new(application: Application, netfile: impl Into<PathBuf>) -> Self {
        RunPlan {
            application,
            structure: Structure::Monolithic,
            mode: CouplingMode::corrective(),
            nt: None,
            dt_minutes: 5.0,
            netfile: netfile.into(),
            ctgcfile: None,
            scenfile: None,
            pload: None,
            qload: None,
            nc: None,
            ns: None,
            outdir: PathBuf::from(application.default_outdir()),
            solver: SolverOptions::default(),
            empar_anchor: false,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        use Application::*;
        use Structure::*;
        let bad = |m: &str| Err(RunError::InvalidPlan(m.to_string()));
        match (self.application, self.structure) {
            (Opf | Tcopf, Empar) => return bad("empar applies only to scopf and sopf"),
            (Opf | Tcopf | Scopf, Flat | Full) => return bad("flat and full structures apply only to sopf"),
            _ => {}
        }
        if self.application == Scopf && self.ctgcfile.is_none() {
            return bad("scopf requires a contingency file");
        }
        if self.application == Sopf && self.scenfile.is_none() {
            return bad("sopf requires a scenario file");
        }
        if self.pload.is_some() != self.qload.is_some() {
            return bad("load profiles need both a real and a reactive file");
        }
        if self.nt == Some(0) {
            return bad("nt must be at least 1");
        }
        if self.application == Opf && self.nt.is_some_and(|n| n > 1) {
            return bad("opf is single-period");
        }
        if !(self.dt_minutes > 0.0) {
            return bad("dt must be positive");
        }
        self.solver.validate()?;
        Ok(())
    }
}

/// Parsed and truncated inputs of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInputs {
    pub case: NetworkCase,
    pub periods: Vec<NetworkCase>,
    pub contingencies: ContingencySet,
    pub scenarios: Option<ScenarioSet>,
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.to_path_buf(), source })
}

impl RunInputs {
    /// Read every input file of `plan`. All parsing happens here, before any solve.
    pub fn load(plan: &RunPlan) -> Result<Self, RunError> {
        plan.validate()?;
        let raw = parse_case(&read(&plan.netfile)?).map_err(|source| RunError::Case { path: plan.netfile.clone(), source })?;
        let case = NetworkCase::from_raw(&raw).map_err(|source| RunError::Network { path: plan.netfile.clone(), source })?;

        let contingencies = match (&plan.ctgcfile, plan.application) {
            (Some(path), Application::Scopf | Application::Sopf) => {
                let set = parse_contingencies(&read(path)?).map_err(|source| RunError::Ingest { path: path.clone(), source })?;
                plan.nc.map_or(set.clone(), |n| set.truncated(n))
            }
            _ => ContingencySet::default(),
        };
        let scenarios = match (&plan.scenfile, plan.application) {
            (Some(path), Application::Sopf) => {
                let set = parse_scenarios(&read(path)?).map_err(|source| RunError::Ingest { path: path.clone(), source })?;
                Some(plan.ns.map_or(set.clone(), |n| set.truncated(n)))
            }
            _ => None,
        };
        let profile = match (&plan.pload, &plan.qload) {
            (Some(p), Some(q)) if plan.application != Application::Opf => {
                let lp = parse_load_profile(&read(p)?, &read(q)?).map_err(|source| RunError::Ingest { path: p.clone(), source })?;
                Some(lp)
            }
            _ => None,
        };
        let nt = match plan.application {
            Application::Opf => 1,
            _ => plan.nt.unwrap_or_else(|| profile.as_ref().map_or(1, LoadProfile::steps)),
        };
        let periods = match &profile {
            Some(lp) => {
                if nt > lp.steps() {
                    return Err(RunError::InvalidPlan(format!("nt = {nt} exceeds the {} load profile steps", lp.steps())));
                }
                (0..nt).map(|t| case.apply_load_step(lp, t)).collect::<Result<Vec<_>, _>>()?
            }
            None => vec![case.clone(); nt],
        };
        Ok(RunInputs { case, periods, contingencies, scenarios })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Optimal,
    MaxIter,
    Infeasible,
    NumericFailure,
    /// The subproblem could not be built or solved.
    Error,
}

impl From<SolveStatus> for StageStatus {
    fn from(s: SolveStatus) -> Self {
        match s {
            SolveStatus::Optimal => StageStatus::Optimal,
            SolveStatus::MaxIter => StageStatus::MaxIter,
            SolveStatus::Infeasible => StageStatus::Infeasible,
            SolveStatus::NumericFailure => StageStatus::NumericFailure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Optimal,
    /// Some EMPAR subproblems did not reach optimality.
    Degraded,
    Failure,
}

/// One solver call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubproblemReport {
    pub index: usize,
    /// Stage indices covered, in composite order.
    pub stages: Vec<usize>,
    pub status: StageStatus,
    /// Weighted objective of the subproblem in $/h.
    pub objective: f64,
    pub iterations: usize,
    pub kkt: KktResidual,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub index: usize,
    pub scenario: Option<usize>,
    pub contingency: Option<usize>,
    pub period: usize,
    pub subproblem: usize,
    pub status: StageStatus,
    /// Unweighted stage cost in $/h.
    pub objective: f64,
    pub weight: f64,
    pub iterations: usize,
    pub kkt: KktResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub application: Application,
    pub structure: Structure,
    pub mode: CouplingMode,
    pub num_scenarios: usize,
    pub num_contingencies: usize,
    pub num_periods: usize,
    pub status: RunStatus,
    pub subproblems: Vec<SubproblemReport>,
    pub stages: Vec<StageReport>,
    /// Weighted total in $/h.
    pub total_objective: f64,
    pub wall_time_s: f64,
    pub workers: usize,
    pub warnings: Vec<String>,
    /// Solved case per stage, `None` where the subproblem failed to build.
    #[serde(skip)]
    pub solutions: Vec<Option<SolvedCase>>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn shape_of(plan: &RunPlan) -> TreeShape {
    match plan.structure {
        Structure::Flat => TreeShape::Flat,
        _ => TreeShape::Full,
    }
}

/// Solve the plan as one coupled problem.
pub fn run_monolithic(plan: &RunPlan) -> Result<RunReport, RunError> {
    let inputs = RunInputs::load(plan)?;
    run_monolithic_with(plan, &inputs)
}

pub fn run_monolithic_with(plan: &RunPlan, inputs: &RunInputs) -> Result<RunReport, RunError> {
    if plan.structure == Structure::Empar {
        return Err(RunError::InvalidPlan("empar plans run through run_empar".into()));
    }
    let start = Instant::now();
    let opts = ComposeOptions { shape: shape_of(plan), ..Default::default() };
    let (nlp, map) = compose_with(
        &inputs.periods,
        inputs.scenarios.as_ref(),
        &inputs.contingencies,
        plan.mode,
        plan.dt_minutes,
        &opts,
    )?;
    let result = solve(&nlp, &plan.solver)?;
    let status = StageStatus::from(result.status);

    let mut stages = Vec::with_capacity(map.stages.len());
    let mut solutions = Vec::with_capacity(map.stages.len());
    for (k, spec) in map.stages.iter().enumerate() {
        let x = &result.x[map.stage_vars(k)];
        let solved = extract_solution(x, &nlp.stage(k).layout, &spec.case)?;
        stages.push(StageReport {
            index: k,
            scenario: spec.scenario,
            contingency: spec.contingency,
            period: spec.period,
            subproblem: 0,
            status,
            objective: nlp.stage_objective(k, &result.x),
            weight: map.weights[k],
            iterations: result.iterations,
            kkt: result.kkt,
        });
        solutions.push(Some(solved));
    }
    let sub = SubproblemReport {
        index: 0,
        stages: (0..map.stages.len()).collect(),
        status,
        objective: result.objective,
        iterations: result.iterations,
        kkt: result.kkt,
        error: None,
    };
    Ok(RunReport {
        application: plan.application,
        structure: plan.structure,
        mode: plan.mode,
        num_scenarios: inputs.scenarios.as_ref().map_or(1, ScenarioSet::len),
        num_contingencies: inputs.contingencies.len(),
        num_periods: inputs.periods.len(),
        status: if status == StageStatus::Optimal { RunStatus::Optimal } else { RunStatus::Failure },
        subproblems: vec![sub],
        stages,
        total_objective: result.objective,
        wall_time_s: start.elapsed().as_secs_f64(),
        workers: 1,
        warnings: Vec::new(),
        solutions,
    })
}

struct ChainResult {
    report: SubproblemReport,
    stage_objectives: Vec<f64>,
    solutions: Vec<Option<SolvedCase>>,
}

fn failed_chain(index: usize, stages: Vec<usize>, err: impl std::fmt::Display) -> ChainResult {
    let n = stages.len();
    ChainResult {
        report: SubproblemReport {
            index,
            stages,
            status: StageStatus::Error,
            objective: f64::NAN,
            iterations: 0,
            kkt: KktResidual::default(),
            error: Some(err.to_string()),
        },
        stage_objectives: vec![f64::NAN; n],
        solutions: vec![None; n],
    }
}

/// Solve one (scenario, contingency) chain over all periods.
fn solve_chain(index: usize, specs: &[&StageSpec], first: usize, weight: f64, dt: f64, opts: &SolverOptions) -> ChainResult {
    let stages: Vec<usize> = (first..first + specs.len()).collect();
    let cases: Vec<NetworkCase> = specs.iter().map(|s| s.case.clone()).collect();
    let (nlp, map) = match compose_multiperiod(&cases, dt) {
        Ok(v) => v,
        Err(e) => return failed_chain(index, stages, e),
    };
    let result = match solve(&nlp, opts) {
        Ok(r) => r,
        Err(e) => return failed_chain(index, stages, e),
    };
    let mut stage_objectives = Vec::with_capacity(specs.len());
    let mut solutions = Vec::with_capacity(specs.len());
    for k in 0..specs.len() {
        stage_objectives.push(nlp.stage_objective(k, &result.x));
        solutions.push(extract_solution(&result.x[map.stage_vars(k)], &nlp.stage(k).layout, &cases[k]).ok());
    }
    ChainResult {
        report: SubproblemReport {
            index,
            stages,
            status: result.status.into(),
            objective: weight * result.objective,
            iterations: result.iterations,
            kkt: result.kkt,
            error: None,
        },
        stage_objectives,
        solutions,
    }
}

/// Tighten first-period generator limits of `case` around the base dispatch.
fn anchor_case(case: &mut NetworkCase, base: &NetworkCase, mode: CouplingMode) {
    let reference = case.reference_bus().ok().map(|i| case.buses[i].id);
    for (g, gen) in case.gens.iter_mut().enumerate() {
        let Some(b) = base.gens.get(g) else { continue };
        if !gen.in_service || !b.in_service {
            continue;
        }
        let delta = match mode.kind {
            ModeKind::Preventive if Some(gen.bus) == reference => continue,
            ModeKind::Preventive => 0.0,
            ModeKind::Corrective => match gen.ramp_30 {
                Some(r) => r,
                None => continue,
            },
        };
        let lo = gen.pmin.max(b.pg - delta);
        let hi = gen.pmax.min(b.pg + delta);
        if lo <= hi {
            gen.pmin = lo;
            gen.pmax = hi;
        } else {
            let p = b.pg.clamp(gen.pmin, gen.pmax);
            gen.pmin = p;
            gen.pmax = p;
        }
    }
}

/// Solve every (scenario, contingency) chain independently on `workers` threads.
pub fn run_empar(plan: &RunPlan, workers: usize) -> Result<RunReport, RunError> {
    let inputs = RunInputs::load(plan)?;
    run_empar_with(plan, &inputs, workers)
}

pub fn run_empar_with(plan: &RunPlan, inputs: &RunInputs, workers: usize) -> Result<RunReport, RunError> {
    if plan.structure != Structure::Empar {
        return Err(RunError::InvalidPlan("run_empar needs structure = empar".into()));
    }
    if workers == 0 {
        return Err(RunError::InvalidPlan("worker count must be at least 1".into()));
    }
    let start = Instant::now();
    let specs = stage_lattice(&inputs.periods, inputs.scenarios.as_ref(), &inputs.contingencies, plan.dt_minutes)?;
    let nt = inputs.periods.len();
    let (weights_s, base_s) = match &inputs.scenarios {
        Some(set) => (
            set.normalized_weights().ok_or(ComposeError::EmptyScenarioSet)?,
            set.base_index().ok_or(ComposeError::EmptyScenarioSet)?,
        ),
        None => (vec![1.0], 0),
    };
    let nc = inputs.contingencies.len() + 1;
    let chains: Vec<(usize, Vec<&StageSpec>)> = specs.chunks(nt).enumerate().map(|(i, c)| (i, c.iter().collect())).collect();
    let weight_of = |chain: usize| weights_s[chain / nc];

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::InvalidPlan(format!("cannot start worker pool: {e}")))?;

    let mut results: Vec<Option<ChainResult>> = (0..chains.len()).map(|_| None).collect();
    let base_chain = base_s * nc;
    let mut owned: Vec<(usize, Vec<StageSpec>)> = Vec::new();
    if plan.empar_anchor {
        let (i, chain) = &chains[base_chain];
        let base = solve_chain(*i, chain, i * nt, weight_of(*i), plan.dt_minutes, &plan.solver);
        let base_dispatch = base.solutions[0].as_ref().map(|s| s.case.clone());
        results[base_chain] = Some(base);
        if let Some(base_case) = base_dispatch {
            for (i, chain) in &chains {
                if *i == base_chain {
                    continue;
                }
                let mut specs: Vec<StageSpec> = chain.iter().map(|s| (*s).clone()).collect();
                anchor_case(&mut specs[0].case, &base_case, plan.mode);
                owned.push((*i, specs));
            }
        }
    }
    let pending: Vec<(usize, Vec<&StageSpec>)> = if plan.empar_anchor && !owned.is_empty() {
        owned.iter().map(|(i, s)| (*i, s.iter().collect())).collect()
    } else {
        chains.iter().filter(|(i, _)| results[*i].is_none()).cloned().collect()
    };
    let solved: Vec<ChainResult> = pool.install(|| {
        pending
            .par_iter()
            .map(|(i, chain)| solve_chain(*i, chain, i * nt, weight_of(*i), plan.dt_minutes, &plan.solver))
            .collect()
    });
    for r in solved {
        let i = r.report.index;
        results[i] = Some(r);
    }

    let mut subproblems = Vec::with_capacity(chains.len());
    let mut stages = Vec::with_capacity(specs.len());
    let mut solutions = Vec::with_capacity(specs.len());
    let mut total = 0.0;
    for (i, r) in results.into_iter().enumerate() {
        let r = r.expect("every chain solved");
        for (j, &k) in r.report.stages.iter().enumerate() {
            let spec = &specs[k];
            stages.push(StageReport {
                index: k,
                scenario: spec.scenario,
                contingency: spec.contingency,
                period: spec.period,
                subproblem: i,
                status: r.report.status,
                objective: r.stage_objectives[j],
                weight: weight_of(i),
                iterations: r.report.iterations,
                kkt: r.report.kkt,
            });
        }
        total += r.report.objective;
        solutions.extend(r.solutions);
        subproblems.push(r.report);
    }
    let all_ok = subproblems.iter().all(|s| s.status == StageStatus::Optimal);
    let warnings = subproblems
        .iter()
        .filter(|s| s.status != StageStatus::Optimal)
        .map(|s| match &s.error {
            Some(e) => format!("subproblem {} failed: {e}", s.index),
            None => format!("subproblem {} ended with status {:?}", s.index, s.status),
        })
        .collect();
    Ok(RunReport {
        application: plan.application,
        structure: plan.structure,
        mode: plan.mode,
        num_scenarios: weights_s.len(),
        num_contingencies: inputs.contingencies.len(),
        num_periods: nt,
        status: if all_ok { RunStatus::Optimal } else { RunStatus::Degraded },
        subproblems,
        stages,
        total_objective: total,
        wall_time_s: start.elapsed().as_secs_f64(),
        workers,
        warnings,
        solutions,
    })
}

/// Run a plan with the structure it names.
pub fn run(plan: &RunPlan, workers: usize) -> Result<RunReport, RunError> {
    match plan.structure {
        Structure::Empar => run_empar(plan, workers),
        _ => run_monolithic(plan),
    }
}

/// Relative output path of a stage for the given application.
pub fn stage_path(application: Application, stage: &StageReport) -> PathBuf {
    let leaf = format!("t_{}.m", stage.period);
    let cont = format!("cont_{}", stage.contingency.unwrap_or(0));
    let scen = format!("scen_{}", stage.scenario.unwrap_or(0));
    match application {
        Application::Opf => PathBuf::from("solution.m"),
        Application::Tcopf => PathBuf::from(leaf),
        Application::Scopf => [cont, leaf].iter().collect(),
        Application::Sopf => [scen, cont, leaf].iter().collect(),
    }
}

/// Write one MATPOWER file per stage under `plan.outdir`. Returns the paths written.
pub fn write_output_tree(report: &RunReport, plan: &RunPlan) -> Result<Vec<PathBuf>, RunError> {
    let mut written = Vec::with_capacity(report.stages.len());
    for (stage, solved) in report.stages.iter().zip(&report.solutions) {
        let solved = solved.as_ref().ok_or(RunError::MissingSolution(stage.index))?;
        let path = plan.outdir.join(stage_path(report.application, stage));
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| RunError::Output { path: dir.to_path_buf(), source })?;
        }
        std::fs::write(&path, write_case(solved)).map_err(|source| RunError::Output { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}
