//! Composite problems coupling ACOPF stages over time, contingencies and
//! scenarios.
//!
//! Stages are indexed lexicographically by (scenario, contingency, period),
//! with contingency 0 the intact network. Composite rows are all stage
//! equalities followed by equality coupling rows, then all stage
//! inequalities followed by inequality coupling rows. A coupling row
//! evaluates `x[stage_a] − x[stage_b]` where `stage_a` is the later or
//! child stage.

use serde::Serialize;
use thiserror::Error;

use crate::acopf::{AcopfError, AcopfNlp, VarKind};
use crate::grid::{Contingency, GridError, NetworkCase, Scenario};
use crate::ingest::{ContingencySet, ScenarioSet};
use crate::nlp::{NlpProblem, Pattern};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComposeError {
    #[error("period {period} has a different network topology than period 0")]
    TopologyMismatch { period: usize },
    #[error("scenario set is empty or its weights sum to zero")]
    EmptyScenarioSet,
    #[error("contingency {id} splits the network into {islands} islands")]
    IslandingDetected { id: usize, islands: usize },
    #[error("unknown outage: {0}")]
    UnknownOutage(String),
    #[error("at least one period is required")]
    NoPeriods,
    #[error("period length must be positive, got {0} minutes")]
    BadInterval(f64),
    #[error(transparent)]
    Grid(GridError),
    #[error("stage {stage}: {source}")]
    Stage { stage: usize, source: AcopfError },
}

impl From<GridError> for ComposeError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::IslandingDetected { id, islands } => ComposeError::IslandingDetected { id, islands },
            GridError::UnknownElement(what) => ComposeError::UnknownOutage(what),
            other => ComposeError::Grid(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModeKind {
    Preventive,
    Corrective,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CouplingMode {
    pub kind: ModeKind,
    pub pin_voltages: bool,
}

impl CouplingMode {
    pub fn corrective() -> Self {
        CouplingMode { kind: ModeKind::Corrective, pin_voltages: false }
    }

    pub fn preventive(pin_voltages: bool) -> Self {
        CouplingMode { kind: ModeKind::Preventive, pin_voltages }
    }
}

impl Default for CouplingMode {
    fn default() -> Self {
        CouplingMode::corrective()
    }
}

/// How scenario and contingency stages attach to the base stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TreeShape {
    /// Contingencies couple to their own scenario's base, scenario bases
    /// to the global base.
    Full,
    /// Every (scenario, contingency) stage couples to the global base.
    Flat,
}

/// Scale factors applied to the ramp-derived coupling bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComposeOptions {
    pub ramp_scale: f64,
    pub contingency_scale: f64,
    pub scenario_scale: f64,
    pub shape: TreeShape,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        ComposeOptions { ramp_scale: 1.0, contingency_scale: 1.0, scenario_scale: 1.0, shape: TreeShape::Full }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSpec {
    /// Position in the scenario set, `None` for single-scenario problems.
    pub scenario: Option<usize>,
    /// Position in the contingency set plus one; `None` for the intact network.
    pub contingency: Option<usize>,
    pub period: usize,
    pub dt_minutes: f64,
    #[serde(skip)]
    pub case: NetworkCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CouplingKind {
    Ramp,
    ContingencyBox,
    ScenarioBox,
    PreventivePin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingRow {
    pub kind: CouplingKind,
    pub stage_a: usize,
    pub stage_b: usize,
    /// `Pg` rows use a generator position, `Vm` rows a bus position.
    pub var: VarKind,
    pub element: usize,
    /// Two-sided bound in pu; zero for equality rows.
    pub bound: f64,
}

impl CouplingRow {
    pub fn is_equality(&self) -> bool {
        self.kind == CouplingKind::PreventivePin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositeIndexMap {
    pub stages: Vec<StageSpec>,
    pub var_offset: Vec<usize>,
    pub eq_offset: Vec<usize>,
    pub ineq_offset: Vec<usize>,
    pub coupling_rows: Vec<CouplingRow>,
    /// Objective weight of each stage.
    pub weights: Vec<f64>,
    /// Scenario weights after normalization.
    pub scenario_weights: Vec<f64>,
    /// Composite row of each coupling row, counted within its block.
    pub coupling_row_index: Vec<usize>,
    pub n_vars: usize,
    pub n_eq: usize,
    pub n_ineq: usize,
}

impl CompositeIndexMap {
    /// Stage index of (scenario position, contingency position, period).
    pub fn stage_index(&self, s: usize, c: usize, t: usize) -> Option<usize> {
        self.stages.iter().position(|st| {
            st.scenario.unwrap_or(0) == s && st.contingency.unwrap_or(0) == c && st.period == t
        })
    }

    pub fn stage_vars(&self, k: usize) -> std::ops::Range<usize> {
        let end = self.var_offset.get(k + 1).copied().unwrap_or(self.n_vars);
        self.var_offset[k]..end
    }

    /// Composite multiplier of a coupling row.
    pub fn coupling_multiplier(&self, row: usize, lambda_eq: &[f64], lambda_ineq: &[f64]) -> f64 {
        let i = self.coupling_row_index[row];
        if self.coupling_rows[row].is_equality() {
            lambda_eq[i]
        } else {
            lambda_ineq[i]
        }
    }
}

/// Stage problems plus linear coupling rows.
#[derive(Debug, Clone)]
pub struct CompositeNlp {
    stages: Vec<AcopfNlp>,
    weights: Vec<f64>,
    var_offset: Vec<usize>,
    eq_offset: Vec<usize>,
    ineq_offset: Vec<usize>,
    /// (row within block, var a, var b) for equality and inequality coupling.
    eq_links: Vec<(usize, usize)>,
    ineq_links: Vec<(usize, usize, f64)>,
    n_vars: usize,
    n_stage_eq: usize,
    n_stage_ineq: usize,
    jac_offsets: Vec<usize>,
    hess_offsets: Vec<usize>,
}

impl CompositeNlp {
    pub fn stage(&self, k: usize) -> &AcopfNlp {
        &self.stages[k]
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// Unweighted objective of one stage.
    pub fn stage_objective(&self, k: usize, x: &[f64]) -> f64 {
        let r = self.var_offset[k]..self.var_offset[k] + self.stages[k].num_vars();
        self.stages[k].objective(&x[r])
    }

    fn vars(&self, k: usize) -> std::ops::Range<usize> {
        self.var_offset[k]..self.var_offset[k] + self.stages[k].num_vars()
    }
}

impl NlpProblem for CompositeNlp {
    fn num_vars(&self) -> usize {
        self.n_vars
    }

    fn num_eq(&self) -> usize {
        self.n_stage_eq + self.eq_links.len()
    }

    fn num_ineq(&self) -> usize {
        self.n_stage_ineq + self.ineq_links.len()
    }

    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut xl = Vec::with_capacity(self.n_vars);
        let mut xu = Vec::with_capacity(self.n_vars);
        for s in &self.stages {
            let (l, u) = s.var_bounds();
            xl.extend(l);
            xu.extend(u);
        }
        (xl, xu)
    }

    fn ineq_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut gl = Vec::with_capacity(self.num_ineq());
        let mut gu = Vec::with_capacity(self.num_ineq());
        for s in &self.stages {
            let (l, u) = s.ineq_bounds();
            gl.extend(l);
            gu.extend(u);
        }
        for &(_, _, d) in &self.ineq_links {
            gl.push(-d);
            gu.push(d);
        }
        (gl, gu)
    }

    fn initial_point(&self) -> Vec<f64> {
        self.stages.iter().flat_map(|s| s.initial_point()).collect()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        (0..self.stages.len()).map(|k| self.weights[k] * self.stages[k].objective(&x[self.vars(k)])).sum()
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for k in 0..self.stages.len() {
            let r = self.vars(k);
            let g = &mut grad[r.clone()];
            self.stages[k].gradient(&x[r], g);
            g.iter_mut().for_each(|v| *v *= self.weights[k]);
        }
    }

    fn constraints(&self, x: &[f64], c: &mut [f64]) {
        let (ceq, cin) = c.split_at_mut(self.num_eq());
        let mut buf = Vec::new();
        for (k, s) in self.stages.iter().enumerate() {
            let (me, mi) = (s.num_eq(), s.num_ineq());
            buf.resize(me + mi, 0.0);
            s.constraints(&x[self.vars(k)], &mut buf);
            ceq[self.eq_offset[k]..self.eq_offset[k] + me].copy_from_slice(&buf[..me]);
            cin[self.ineq_offset[k]..self.ineq_offset[k] + mi].copy_from_slice(&buf[me..]);
        }
        for (i, &(a, b)) in self.eq_links.iter().enumerate() {
            ceq[self.n_stage_eq + i] = x[a] - x[b];
        }
        for (i, &(a, b, _)) in self.ineq_links.iter().enumerate() {
            cin[self.n_stage_ineq + i] = x[a] - x[b];
        }
    }

    fn jacobian_structure(&self) -> Pattern {
        let neq = self.num_eq();
        let mut out = Vec::new();
        for (k, s) in self.stages.iter().enumerate() {
            let me = s.num_eq();
            for (r, c) in s.jacobian_structure() {
                let row = if r < me { self.eq_offset[k] + r } else { neq + self.ineq_offset[k] + r - me };
                out.push((row, self.var_offset[k] + c));
            }
        }
        for (i, &(a, b)) in self.eq_links.iter().enumerate() {
            out.push((self.n_stage_eq + i, a));
            out.push((self.n_stage_eq + i, b));
        }
        for (i, &(a, b, _)) in self.ineq_links.iter().enumerate() {
            out.push((neq + self.n_stage_ineq + i, a));
            out.push((neq + self.n_stage_ineq + i, b));
        }
        out
    }

    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        for (k, s) in self.stages.iter().enumerate() {
            s.jacobian_values(&x[self.vars(k)], &mut vals[self.jac_offsets[k]..self.jac_offsets[k + 1]]);
        }
        for pair in vals[self.jac_offsets[self.stages.len()]..].chunks_exact_mut(2) {
            pair[0] = 1.0;
            pair[1] = -1.0;
        }
    }

    fn hessian_structure(&self) -> Pattern {
        let mut out = Vec::new();
        for (k, s) in self.stages.iter().enumerate() {
            let o = self.var_offset[k];
            out.extend(s.hessian_structure().into_iter().map(|(r, c)| (o + r, o + c)));
        }
        out
    }

    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]) {
        let (leq, lin) = lambda.split_at(self.num_eq());
        let mut buf = Vec::new();
        for (k, s) in self.stages.iter().enumerate() {
            let (me, mi) = (s.num_eq(), s.num_ineq());
            buf.clear();
            buf.extend_from_slice(&leq[self.eq_offset[k]..self.eq_offset[k] + me]);
            buf.extend_from_slice(&lin[self.ineq_offset[k]..self.ineq_offset[k] + mi]);
            s.hessian_values(
                &x[self.vars(k)],
                obj_factor * self.weights[k],
                &buf,
                &mut vals[self.hess_offsets[k]..self.hess_offsets[k + 1]],
            );
        }
    }
}

/// Coupling edge between two stages before it is expanded into rows.
#[derive(Debug, Clone, Copy)]
enum Edge {
    Ramp { later: usize, earlier: usize },
    Contingency { child: usize, base: usize },
    Scenario { child: usize, base: usize },
}

fn ramp_pu(case: &NetworkCase, g: usize) -> Option<f64> {
    case.gens[g].ramp_30.map(|r| r / case.base_mva)
}

fn same_topology(a: &NetworkCase, b: &NetworkCase) -> bool {
    a.buses.len() == b.buses.len()
        && a.gens.len() == b.gens.len()
        && a.branches.len() == b.branches.len()
        && a.buses.iter().zip(&b.buses).all(|(x, y)| x.id == y.id && x.btype == y.btype)
        && a.gens.iter().zip(&b.gens).all(|(x, y)| x.bus == y.bus && x.in_service == y.in_service)
        && a.branches.iter().zip(&b.branches).all(|(x, y)| (x.fbus, x.tbus, x.in_service) == (y.fbus, y.tbus, y.in_service))
}

fn assemble(
    stages: Vec<StageSpec>,
    edges: &[Edge],
    weights: Vec<f64>,
    scenario_weights: Vec<f64>,
    mode: CouplingMode,
    opts: &ComposeOptions,
) -> Result<(CompositeNlp, CompositeIndexMap), ComposeError> {
    let nlps = stages
        .iter()
        .enumerate()
        .map(|(k, st)| AcopfNlp::new(&st.case).map_err(|source| ComposeError::Stage { stage: k, source }))
        .collect::<Result<Vec<_>, _>>()?;

    let mut var_offset = Vec::with_capacity(nlps.len());
    let mut eq_offset = Vec::with_capacity(nlps.len());
    let mut ineq_offset = Vec::with_capacity(nlps.len());
    let (mut nv, mut ne, mut ni) = (0, 0, 0);
    for p in &nlps {
        var_offset.push(nv);
        eq_offset.push(ne);
        ineq_offset.push(ni);
        nv += p.num_vars();
        ne += p.num_eq();
        ni += p.num_ineq();
    }

    let mut rows = Vec::new();
    for edge in edges {
        let (a, b) = match *edge {
            Edge::Ramp { later, earlier } => (later, earlier),
            Edge::Contingency { child, base } | Edge::Scenario { child, base } => (child, base),
        };
        let (ca, cb) = (&stages[a].case, &stages[b].case);
        let (la, lb) = (&nlps[a].layout, &nlps[b].layout);
        let shared: Vec<usize> = la.gens.iter().copied().filter(|g| lb.gens.contains(g)).collect();
        let push_box = |rows: &mut Vec<CouplingRow>, kind, scale: f64| {
            for &g in &shared {
                if let Some(d) = ramp_pu(cb, g) {
                    let bound = match kind {
                        CouplingKind::Ramp => d * stages[a].dt_minutes / 30.0,
                        _ => d,
                    };
                    rows.push(CouplingRow { kind, stage_a: a, stage_b: b, var: VarKind::Pg, element: g, bound: bound * scale });
                }
            }
        };
        match *edge {
            Edge::Ramp { .. } => push_box(&mut rows, CouplingKind::Ramp, opts.ramp_scale),
            Edge::Scenario { .. } => push_box(&mut rows, CouplingKind::ScenarioBox, opts.scenario_scale),
            Edge::Contingency { .. } => match mode.kind {
                ModeKind::Corrective => push_box(&mut rows, CouplingKind::ContingencyBox, opts.contingency_scale),
                ModeKind::Preventive => {
                    let ref_id = ca.buses[ca.reference_bus()?].id;
                    for &g in &shared {
                        if ca.gens[g].bus != ref_id {
                            rows.push(CouplingRow {
                                kind: CouplingKind::PreventivePin,
                                stage_a: a,
                                stage_b: b,
                                var: VarKind::Pg,
                                element: g,
                                bound: 0.0,
                            });
                        }
                    }
                    if mode.pin_voltages {
                        let index = ca.bus_index();
                        let mut buses: Vec<usize> = shared.iter().map(|&g| index[&ca.gens[g].bus]).collect();
                        buses.sort_unstable();
                        buses.dedup();
                        for bus in buses {
                            if la.var(VarKind::Vm, bus).is_some() && lb.var(VarKind::Vm, bus).is_some() {
                                rows.push(CouplingRow {
                                    kind: CouplingKind::PreventivePin,
                                    stage_a: a,
                                    stage_b: b,
                                    var: VarKind::Vm,
                                    element: bus,
                                    bound: 0.0,
                                });
                            }
                        }
                    }
                }
            },
        }
    }

    let mut eq_links = Vec::new();
    let mut ineq_links = Vec::new();
    let mut coupling_row_index = Vec::with_capacity(rows.len());
    for row in &rows {
        let va = var_offset[row.stage_a] + nlps[row.stage_a].layout.var(row.var, row.element).expect("shared element");
        let vb = var_offset[row.stage_b] + nlps[row.stage_b].layout.var(row.var, row.element).expect("shared element");
        if row.is_equality() {
            coupling_row_index.push(ne + eq_links.len());
            eq_links.push((va, vb));
        } else {
            coupling_row_index.push(ni + ineq_links.len());
            ineq_links.push((va, vb, row.bound));
        }
    }

    let mut jac_offsets = vec![0];
    let mut hess_offsets = vec![0];
    for p in &nlps {
        jac_offsets.push(jac_offsets.last().unwrap() + p.jacobian_structure().len());
        hess_offsets.push(hess_offsets.last().unwrap() + p.hessian_structure().len());
    }

    let map = CompositeIndexMap {
        stages,
        var_offset: var_offset.clone(),
        eq_offset: eq_offset.clone(),
        ineq_offset: ineq_offset.clone(),
        coupling_rows: rows,
        weights: weights.clone(),
        scenario_weights,
        coupling_row_index,
        n_vars: nv,
        n_eq: ne + eq_links.len(),
        n_ineq: ni + ineq_links.len(),
    };
    let nlp = CompositeNlp {
        stages: nlps,
        weights,
        var_offset,
        eq_offset,
        ineq_offset,
        eq_links,
        ineq_links,
        n_vars: nv,
        n_stage_eq: ne,
        n_stage_ineq: ni,
        jac_offsets,
        hess_offsets,
    };
    Ok((nlp, map))
}

fn check_periods(periods: &[NetworkCase], dt_minutes: f64) -> Result<(), ComposeError> {
    if periods.is_empty() {
        return Err(ComposeError::NoPeriods);
    }
    if periods.len() > 1 && !(dt_minutes > 0.0) {
        return Err(ComposeError::BadInterval(dt_minutes));
    }
    if let Some(t) = (1..periods.len()).find(|&t| !same_topology(&periods[0], &periods[t])) {
        return Err(ComposeError::TopologyMismatch { period: t });
    }
    Ok(())
}

/// Stage cases for every (scenario, contingency, period), applying load
/// step, then scenario, then contingency.
fn lattice(
    periods: &[NetworkCase],
    scenarios: Option<&[Scenario]>,
    ctgs: &[Contingency],
    dt_minutes: f64,
) -> Result<Vec<StageSpec>, ComposeError> {
    let ns = scenarios.map_or(1, |s| s.len());
    let mut out = Vec::with_capacity(ns * (ctgs.len() + 1) * periods.len());
    for s in 0..ns {
        for c in 0..=ctgs.len() {
            for (t, period) in periods.iter().enumerate() {
                let mut case = match scenarios {
                    Some(list) => period.apply_scenario(&list[s])?,
                    None => period.clone(),
                };
                if c > 0 {
                    case = case.apply_contingency(&ctgs[c - 1])?;
                }
                out.push(StageSpec {
                    scenario: scenarios.map(|_| s),
                    contingency: (c > 0).then_some(c),
                    period: t,
                    dt_minutes,
                    case,
                });
            }
        }
    }
    Ok(out)
}

/// Stage cases in composite order, without building the coupled problem.
pub fn stage_lattice(
    periods: &[NetworkCase],
    scenarios: Option<&ScenarioSet>,
    ctgs: &ContingencySet,
    dt_minutes: f64,
) -> Result<Vec<StageSpec>, ComposeError> {
    check_periods(periods, dt_minutes)?;
    if scenarios.is_some_and(|s| s.normalized_weights().is_none()) {
        return Err(ComposeError::EmptyScenarioSet);
    }
    lattice(periods, scenarios.map(|s| s.scenarios.as_slice()), &ctgs.contingencies, dt_minutes)
}

/// Composite problem over the full (scenario, contingency, period) lattice.
///
/// `scenarios = None` builds a deterministic problem with unit weights.
pub fn compose_with(
    periods: &[NetworkCase],
    scenarios: Option<&ScenarioSet>,
    ctgs: &ContingencySet,
    mode: CouplingMode,
    dt_minutes: f64,
    opts: &ComposeOptions,
) -> Result<(CompositeNlp, CompositeIndexMap), ComposeError> {
    check_periods(periods, dt_minutes)?;
    let (weights_s, base_s) = match scenarios {
        Some(set) => {
            let w = set.normalized_weights().ok_or(ComposeError::EmptyScenarioSet)?;
            (w, set.base_index().ok_or(ComposeError::EmptyScenarioSet)?)
        }
        None => (vec![1.0], 0),
    };
    let stages = lattice(periods, scenarios.map(|s| s.scenarios.as_slice()), &ctgs.contingencies, dt_minutes)?;
    let (ns, nc, nt) = (weights_s.len(), ctgs.len() + 1, periods.len());
    let idx = |s: usize, c: usize, t: usize| (s * nc + c) * nt + t;

    let mut edges = Vec::new();
    for s in 0..ns {
        for c in 0..nc {
            for t in 1..nt {
                edges.push(Edge::Ramp { later: idx(s, c, t), earlier: idx(s, c, t - 1) });
            }
        }
    }
    for s in 0..ns {
        for c in 0..nc {
            let child = idx(s, c, 0);
            let (kind_contingency, base) = match (c, opts.shape) {
                (0, _) if s == base_s => continue,
                (0, _) => (false, idx(base_s, 0, 0)),
                (_, TreeShape::Full) => (true, idx(s, 0, 0)),
                (_, TreeShape::Flat) => (true, idx(base_s, 0, 0)),
            };
            edges.push(if kind_contingency { Edge::Contingency { child, base } } else { Edge::Scenario { child, base } });
        }
    }
    let weights = (0..stages.len()).map(|k| weights_s[k / (nc * nt)]).collect();
    assemble(stages, &edges, weights, weights_s, mode, opts)
}

/// Periods coupled by ramp limits.
pub fn compose_multiperiod(cases: &[NetworkCase], dt_minutes: f64) -> Result<(CompositeNlp, CompositeIndexMap), ComposeError> {
    compose_with(cases, None, &ContingencySet::default(), CouplingMode::default(), dt_minutes, &ComposeOptions::default())
}

/// Base case plus post-contingency stages.
pub fn compose_scopf(
    base: &NetworkCase,
    ctgs: &ContingencySet,
    mode: CouplingMode,
) -> Result<(CompositeNlp, CompositeIndexMap), ComposeError> {
    compose_with(std::slice::from_ref(base), None, ctgs, mode, 0.0, &ComposeOptions::default())
}

/// Contingency chains over several periods, coupled to the base at the first period.
pub fn compose_multiperiod_scopf(
    base_periods: &[NetworkCase],
    ctgs: &ContingencySet,
    mode: CouplingMode,
    dt_minutes: f64,
) -> Result<(CompositeNlp, CompositeIndexMap), ComposeError> {
    compose_with(base_periods, None, ctgs, mode, dt_minutes, &ComposeOptions::default())
}

/// Two-stage stochastic problem: every stage couples to the base stage of
/// the most probable scenario.
pub fn compose_sopf_flat(
    base: &NetworkCase,
    scenarios: &ScenarioSet,
    ctgs: &ContingencySet,
    mode: CouplingMode,
) -> Result<(CompositeNlp, CompositeIndexMap), ComposeError> {
    let opts = ComposeOptions { shape: TreeShape::Flat, ..Default::default() };
    compose_with(std::slice::from_ref(base), Some(scenarios), ctgs, mode, 0.0, &opts)
}

/// Three-stage stochastic problem.
pub fn compose_sopf_full(
    base: &NetworkCase,
    scenarios: &ScenarioSet,
    ctgs: &ContingencySet,
    mode: CouplingMode,
) -> Result<(CompositeNlp, CompositeIndexMap), ComposeError> {
    compose_with(std::slice::from_ref(base), Some(scenarios), ctgs, mode, 0.0, &ComposeOptions::default())
}

/// Full (scenario, contingency, period) problem.
pub fn compose_general(
    scenarios: &ScenarioSet,
    ctgs: &ContingencySet,
    periods: &[NetworkCase],
    mode: CouplingMode,
    dt_minutes: f64,
) -> Result<(CompositeNlp, CompositeIndexMap), ComposeError> {
    compose_with(periods, Some(scenarios), ctgs, mode, dt_minutes, &ComposeOptions::default())
}
