//! Grid optimization: AC optimal power flow and its multi-period,
//! security-constrained and stochastic extensions, solved with a built-in
//! primal-dual interior-point method.

pub mod acopf;
pub mod composer;
pub mod grid;
pub mod ingest;
pub mod ipm;
pub mod matpower;
pub mod nlp;
pub mod runner;

pub use acopf::{build_acopf, extract_solution, AcopfError, AcopfLayout, AcopfNlp, SolvedCase};
pub use composer::{CompositeIndexMap, CompositeNlp, ComposeError, CouplingMode, ModeKind, TreeShape};
pub use grid::{Contingency, GridError, LoadProfile, NetworkCase, Outage, OutageKind, Scenario};
pub use ingest::{ContingencySet, IngestError, ScenarioSet};
pub use ipm::{solve, LinearSolver, SolveError, SolveResult, SolveStatus, SolverOptions};
pub use matpower::{parse_case, write_case, CaseFormatError, RawCase};
pub use nlp::NlpProblem;
pub use runner::{Application, RunError, RunPlan, RunReport, RunStatus, Structure};
