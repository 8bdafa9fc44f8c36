//! Single-period AC optimal power flow in polar power-balance form.
//!
//! Variables per stage, in order: voltage angles (rad) and magnitudes (pu)
//! of every in-service bus, then real and reactive output (pu) of every
//! in-service generator. Equality rows are the real then reactive balance of
//! each bus; inequality rows bound the squared apparent flow at both ends of
//! every rated branch.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::grid::{branch_admittance, BusType, GridError, NetworkCase};
use crate::matpower::{RawCase, BR_PF, BR_PT, BR_QF, BR_QT};
use crate::nlp::{NlpProblem, Pattern};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcopfError {
    #[error("network is split into {0} islands")]
    Disconnected(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("solution vector has {found} entries, layout expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum VarKind {
    Va,
    Vm,
    Pg,
    Qg,
}

/// Index bookkeeping for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AcopfLayout {
    /// Positions in `NetworkCase::buses` that carry variables.
    pub buses: Vec<usize>,
    /// Positions in `NetworkCase::gens` that carry variables.
    pub gens: Vec<usize>,
    /// Positions in `NetworkCase::branches` that carry flow-limit rows.
    pub rated: Vec<usize>,
    pub n_vars: usize,
    pub n_eq: usize,
    pub n_ineq: usize,
    bus_slot: Vec<Option<usize>>,
    gen_slot: Vec<Option<usize>>,
}

impl AcopfLayout {
    pub fn new(case: &NetworkCase) -> Self {
        let buses: Vec<usize> = (0..case.buses.len())
            .filter(|&i| case.buses[i].btype != BusType::Isolated)
            .collect();
        let mut bus_slot = vec![None; case.buses.len()];
        for (k, &i) in buses.iter().enumerate() {
            bus_slot[i] = Some(k);
        }
        let gens: Vec<usize> = (0..case.gens.len())
            .filter(|&g| case.gens[g].in_service && bus_slot[bus_pos(case, case.gens[g].bus)].is_some())
            .collect();
        let mut gen_slot = vec![None; case.gens.len()];
        for (k, &g) in gens.iter().enumerate() {
            gen_slot[g] = Some(k);
        }
        let rated: Vec<usize> = (0..case.branches.len())
            .filter(|&b| {
                let br = &case.branches[b];
                br.in_service && br.rate_a > 0.0
            })
            .collect();
        let (nb, ng) = (buses.len(), gens.len());
        AcopfLayout {
            n_vars: 2 * nb + 2 * ng,
            n_eq: 2 * nb,
            n_ineq: 2 * rated.len(),
            buses,
            gens,
            rated,
            bus_slot,
            gen_slot,
        }
    }

    /// Variable offset of `kind` for the element at `position` in the case
    /// (bus position for `Va`/`Vm`, generator position for `Pg`/`Qg`).
    pub fn var(&self, kind: VarKind, position: usize) -> Option<usize> {
        let nb = self.buses.len();
        let ng = self.gens.len();
        match kind {
            VarKind::Va => self.bus_slot.get(position).copied().flatten(),
            VarKind::Vm => self.bus_slot.get(position).copied().flatten().map(|k| nb + k),
            VarKind::Pg => self.gen_slot.get(position).copied().flatten().map(|k| 2 * nb + k),
            VarKind::Qg => self.gen_slot.get(position).copied().flatten().map(|k| 2 * nb + ng + k),
        }
    }

    /// Equality rows `(P balance, Q balance)` of the bus at `position`.
    pub fn balance_rows(&self, position: usize) -> Option<(usize, usize)> {
        let k = self.bus_slot.get(position).copied().flatten()?;
        Some((k, self.buses.len() + k))
    }

    /// Inequality rows `(from, to)` of the branch at `position`.
    pub fn flow_rows(&self, position: usize) -> Option<(usize, usize)> {
        let k = self.rated.iter().position(|&b| b == position)?;
        Some((2 * k, 2 * k + 1))
    }
}

fn bus_pos(case: &NetworkCase, id: usize) -> usize {
    case.buses.iter().position(|b| b.id == id).expect("validated bus reference")
}

/// Value, gradient and Hessian of one flow component with respect to the
/// local variables `(θ_own, θ_other, V_own, V_other)`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct SideTerm {
    pub val: f64,
    pub grad: [f64; 4],
    pub hess: [[f64; 4]; 4],
}

/// Real and reactive flow leaving the `own` end of a branch:
/// `S = V_o conj(y_oo V_o + y_ok V_k)`.
pub(crate) fn side_flow(y_oo: Complex64, y_ok: Complex64, vo: f64, vk: f64, d: f64) -> (SideTerm, SideTerm) {
    let (g, b) = (y_oo.re, y_oo.im);
    let (gg, bb) = (y_ok.re, y_ok.im);
    let (s, c) = d.sin_cos();
    let a = gg * c + bb * s;
    let cc = gg * s - bb * c;
    let vv = vo * vk;

    let mut p = SideTerm {
        val: g * vo * vo + vv * a,
        grad: [-vv * cc, vv * cc, 2.0 * g * vo + vk * a, vo * a],
        ..Default::default()
    };
    let hp = &mut p.hess;
    hp[0][0] = -vv * a;
    hp[0][1] = vv * a;
    hp[1][1] = -vv * a;
    hp[0][2] = -vk * cc;
    hp[0][3] = -vo * cc;
    hp[1][2] = vk * cc;
    hp[1][3] = vo * cc;
    hp[2][2] = 2.0 * g;
    hp[2][3] = a;

    let mut q = SideTerm {
        val: -b * vo * vo + vv * cc,
        grad: [vv * a, -vv * a, -2.0 * b * vo + vk * cc, vo * cc],
        ..Default::default()
    };
    let hq = &mut q.hess;
    hq[0][0] = -vv * cc;
    hq[0][1] = vv * cc;
    hq[1][1] = -vv * cc;
    hq[0][2] = vk * a;
    hq[0][3] = vo * a;
    hq[1][2] = -vk * a;
    hq[1][3] = -vo * a;
    hq[2][2] = -2.0 * b;
    hq[2][3] = cc;

    for h in [&mut p.hess, &mut q.hess] {
        for i in 0..4 {
            for j in 0..i {
                h[i][j] = h[j][i];
            }
        }
    }
    (p, q)
}

/// Branch-local variable order is `(θ_f, θ_t, V_f, V_t)`; the to-end sees
/// them as `(θ_t, θ_f, V_t, V_f)`.
const TO_SIDE_PERM: [usize; 4] = [1, 0, 3, 2];

#[derive(Debug, Clone)]
struct BranchModel {
    yff: Complex64,
    yft: Complex64,
    ytf: Complex64,
    ytt: Complex64,
    /// Layout bus slots.
    f: usize,
    t: usize,
    /// Squared limit in pu, with inequality row pair when rated.
    limit: Option<(f64, usize)>,
    /// Jacobian slots for the balance rows `[P_f, Q_f, P_t, Q_t]`, each over
    /// branch-local variables.
    jac_balance: [[usize; 4]; 4],
    /// Jacobian slots of the two flow-limit rows.
    jac_limit: [[usize; 4]; 2],
    /// Hessian slot for each branch-local pair (lower triangle shared).
    hess: [[usize; 4]; 4],
}

/// The single-stage ACOPF as an [`NlpProblem`].
#[derive(Debug, Clone)]
pub struct AcopfNlp {
    pub layout: AcopfLayout,
    base_mva: f64,
    pd: Vec<f64>,
    qd: Vec<f64>,
    gs: Vec<f64>,
    bs: Vec<f64>,
    /// Per layout gen: (c2, c1, c0) on per-unit output, layout bus slot.
    cost: Vec<(f64, f64, f64)>,
    gen_bus: Vec<usize>,
    branches: Vec<BranchModel>,
    xl: Vec<f64>,
    xu: Vec<f64>,
    x0: Vec<f64>,
    gu: Vec<f64>,
    jac_pattern: Pattern,
    /// Jacobian slots of each generator in its bus rows: (P row, Q row).
    jac_gen: Vec<(usize, usize)>,
    /// Jacobian slots of `V_i` in bus `i`'s balance rows, for shunt terms.
    jac_shunt: Vec<(usize, usize)>,
    hess_pattern: Pattern,
    hess_gen: Vec<usize>,
    hess_vm: Vec<usize>,
}

struct PatternBuilder {
    entries: Pattern,
    lookup: HashMap<(usize, usize), usize>,
}

impl PatternBuilder {
    fn new() -> Self {
        PatternBuilder {
            entries: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    fn slot(&mut self, row: usize, col: usize) -> usize {
        let next = self.entries.len();
        *self.lookup.entry((row, col)).or_insert_with(|| {
            self.entries.push((row, col));
            next
        })
    }

    fn lower(&mut self, a: usize, b: usize) -> usize {
        self.slot(a.max(b), a.min(b))
    }
}

/// Assemble the ACOPF for a connected case with one reference bus.
pub fn build_acopf(case: &NetworkCase) -> Result<(AcopfNlp, AcopfLayout), AcopfError> {
    let nlp = AcopfNlp::new(case)?;
    let layout = nlp.layout.clone();
    Ok((nlp, layout))
}

impl AcopfNlp {
    pub fn new(case: &NetworkCase) -> Result<Self, AcopfError> {
        case.validate()?;
        let islands = case.check_connectivity();
        if islands.count > 1 {
            return Err(AcopfError::Disconnected(islands.count));
        }
        let ref_pos = case.reference_bus()?;
        let layout = AcopfLayout::new(case);
        let base = case.base_mva;
        let nb = layout.buses.len();
        let ng = layout.gens.len();
        let index = case.bus_index();

        let bus = |k: usize| &case.buses[layout.buses[k]];
        let pd = (0..nb).map(|k| bus(k).pd / base).collect();
        let qd = (0..nb).map(|k| bus(k).qd / base).collect();
        let gs = (0..nb).map(|k| bus(k).gs / base).collect();
        let bs = (0..nb).map(|k| bus(k).bs / base).collect();

        let slot_of_bus = |id: usize| layout.bus_slot[index[&id]].expect("in-service bus");
        let gen_bus: Vec<usize> = layout.gens.iter().map(|&g| slot_of_bus(case.gens[g].bus)).collect();
        let cost = layout
            .gens
            .iter()
            .map(|&g| {
                let c = case.costs[g];
                (c.c2 * base * base, c.c1 * base, c.c0)
            })
            .collect();

        let n = layout.n_vars;
        let mut xl = vec![0.0; n];
        let mut xu = vec![0.0; n];
        let mut x0 = vec![0.0; n];
        for k in 0..nb {
            let b = bus(k);
            xl[k] = f64::NEG_INFINITY;
            xu[k] = f64::INFINITY;
            x0[k] = b.va.to_radians();
            xl[nb + k] = b.vmin;
            xu[nb + k] = b.vmax;
            x0[nb + k] = b.vm.clamp(b.vmin, b.vmax);
        }
        let ref_slot = layout.bus_slot[ref_pos].expect("reference bus in layout");
        xl[ref_slot] = x0[ref_slot];
        xu[ref_slot] = x0[ref_slot];
        for (k, &g) in layout.gens.iter().enumerate() {
            let gen = &case.gens[g];
            let (pi, qi) = (2 * nb + k, 2 * nb + ng + k);
            xl[pi] = gen.pmin / base;
            xu[pi] = gen.pmax / base;
            xl[qi] = gen.qmin / base;
            xu[qi] = gen.qmax / base;
            x0[pi] = midpoint(xl[pi], xu[pi]);
            x0[qi] = midpoint(xl[qi], xu[qi]);
        }

        let mut jac = PatternBuilder::new();
        let mut hess = PatternBuilder::new();
        // Diagonal entries first so every bus row owns its own voltage columns.
        let jac_shunt = (0..nb)
            .map(|k| (jac.slot(k, nb + k), jac.slot(nb + k, nb + k)))
            .collect();
        let hess_vm = (0..nb).map(|k| hess.lower(nb + k, nb + k)).collect();
        let jac_gen = (0..ng)
            .map(|k| {
                let b = gen_bus[k];
                (jac.slot(b, 2 * nb + k), jac.slot(nb + b, 2 * nb + ng + k))
            })
            .collect();
        let hess_gen = (0..ng).map(|k| hess.lower(2 * nb + k, 2 * nb + k)).collect();

        let mut gu = Vec::with_capacity(layout.n_ineq);
        let mut branches = Vec::new();
        let mut rated_row = 0;
        for br in case.branches.iter().filter(|b| b.in_service) {
            let [yff, yft, ytf, ytt] = branch_admittance(br)?;
            let f = slot_of_bus(br.fbus);
            let t = slot_of_bus(br.tbus);
            let vars = [f, t, nb + f, nb + t];
            let rows = [f, nb + f, t, nb + t];
            let mut jac_balance = [[0; 4]; 4];
            for (r, &row) in rows.iter().enumerate() {
                for (v, &var) in vars.iter().enumerate() {
                    jac_balance[r][v] = jac.slot(row, var);
                }
            }
            let mut h = [[0; 4]; 4];
            for a in 0..4 {
                for b in 0..4 {
                    h[a][b] = hess.lower(vars[a], vars[b]);
                }
            }
            let mut jac_limit = [[0; 4]; 2];
            let limit = if br.rate_a > 0.0 {
                let rows = [layout.n_eq + rated_row, layout.n_eq + rated_row + 1];
                for (r, &row) in rows.iter().enumerate() {
                    for (v, &var) in vars.iter().enumerate() {
                        jac_limit[r][v] = jac.slot(row, var);
                    }
                }
                let lim = (br.rate_a / base).powi(2);
                gu.push(lim);
                gu.push(lim);
                let out = Some((lim, rated_row));
                rated_row += 2;
                out
            } else {
                None
            };
            branches.push(BranchModel {
                yff,
                yft,
                ytf,
                ytt,
                f,
                t,
                limit,
                jac_balance,
                jac_limit,
                hess: h,
            });
        }

        Ok(AcopfNlp {
            layout,
            base_mva: base,
            pd,
            qd,
            gs,
            bs,
            cost,
            gen_bus,
            branches,
            xl,
            xu,
            x0,
            gu,
            jac_pattern: jac.entries,
            jac_gen,
            jac_shunt,
            hess_pattern: hess.entries,
            hess_gen,
            hess_vm,
        })
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    fn nb(&self) -> usize {
        self.layout.buses.len()
    }

    fn ng(&self) -> usize {
        self.layout.gens.len()
    }

    fn local(&self, x: &[f64], br: &BranchModel) -> [f64; 4] {
        let nb = self.nb();
        [x[br.f], x[br.t], x[nb + br.f], x[nb + br.t]]
    }

    /// Flow terms for both ends, with the to-end mapped to branch-local order.
    fn branch_terms(&self, x: &[f64], br: &BranchModel) -> [SideTerm; 4] {
        let [tf, tt, vf, vt] = self.local(x, br);
        let (pf, qf) = side_flow(br.yff, br.yft, vf, vt, tf - tt);
        let (pt, qt) = side_flow(br.ytt, br.ytf, vt, vf, tt - tf);
        [pf, qf, permute(&pt), permute(&qt)]
    }
}

fn permute(s: &SideTerm) -> SideTerm {
    let mut out = SideTerm {
        val: s.val,
        ..Default::default()
    };
    for a in 0..4 {
        out.grad[TO_SIDE_PERM[a]] = s.grad[a];
        for b in 0..4 {
            out.hess[TO_SIDE_PERM[a]][TO_SIDE_PERM[b]] = s.hess[a][b];
        }
    }
    out
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo,
        (false, true) => hi,
        (false, false) => 0.0,
    }
}

impl NlpProblem for AcopfNlp {
    fn num_vars(&self) -> usize {
        self.layout.n_vars
    }

    fn num_eq(&self) -> usize {
        self.layout.n_eq
    }

    fn num_ineq(&self) -> usize {
        self.layout.n_ineq
    }

    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.xl.clone(), self.xu.clone())
    }

    fn ineq_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![f64::NEG_INFINITY; self.gu.len()], self.gu.clone())
    }

    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let off = 2 * self.nb();
        self.cost
            .iter()
            .enumerate()
            .map(|(k, &(c2, c1, c0))| {
                let p = x[off + k];
                (c2 * p + c1) * p + c0
            })
            .sum()
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        let off = 2 * self.nb();
        for (k, &(c2, c1, _)) in self.cost.iter().enumerate() {
            grad[off + k] = 2.0 * c2 * x[off + k] + c1;
        }
    }

    fn constraints(&self, x: &[f64], c: &mut [f64]) {
        c.fill(0.0);
        let (nb, ng) = (self.nb(), self.ng());
        for k in 0..nb {
            let v2 = x[nb + k] * x[nb + k];
            c[k] = -self.pd[k] - self.gs[k] * v2;
            c[nb + k] = -self.qd[k] + self.bs[k] * v2;
        }
        for k in 0..ng {
            c[self.gen_bus[k]] += x[2 * nb + k];
            c[nb + self.gen_bus[k]] += x[2 * nb + ng + k];
        }
        let neq = self.layout.n_eq;
        for br in &self.branches {
            let [pf, qf, pt, qt] = self.branch_terms(x, br);
            c[br.f] -= pf.val;
            c[nb + br.f] -= qf.val;
            c[br.t] -= pt.val;
            c[nb + br.t] -= qt.val;
            if let Some((_, row)) = br.limit {
                c[neq + row] = pf.val * pf.val + qf.val * qf.val;
                c[neq + row + 1] = pt.val * pt.val + qt.val * qt.val;
            }
        }
    }

    fn jacobian_structure(&self) -> Pattern {
        self.jac_pattern.clone()
    }

    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) {
        vals.fill(0.0);
        let nb = self.nb();
        for k in 0..nb {
            let v = x[nb + k];
            let (sp, sq) = self.jac_shunt[k];
            vals[sp] -= 2.0 * self.gs[k] * v;
            vals[sq] += 2.0 * self.bs[k] * v;
        }
        for &(sp, sq) in &self.jac_gen {
            vals[sp] += 1.0;
            vals[sq] += 1.0;
        }
        for br in &self.branches {
            let terms = self.branch_terms(x, br);
            for (r, term) in terms.iter().enumerate() {
                for v in 0..4 {
                    vals[br.jac_balance[r][v]] -= term.grad[v];
                }
            }
            if br.limit.is_some() {
                for side in 0..2 {
                    let (p, q) = (&terms[2 * side], &terms[2 * side + 1]);
                    for v in 0..4 {
                        vals[br.jac_limit[side][v]] += 2.0 * (p.val * p.grad[v] + q.val * q.grad[v]);
                    }
                }
            }
        }
    }

    fn hessian_structure(&self) -> Pattern {
        self.hess_pattern.clone()
    }

    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]) {
        vals.fill(0.0);
        let nb = self.nb();
        for (k, &(c2, _, _)) in self.cost.iter().enumerate() {
            vals[self.hess_gen[k]] += obj_factor * 2.0 * c2;
        }
        for k in 0..nb {
            vals[self.hess_vm[k]] += -2.0 * self.gs[k] * lambda[k] + 2.0 * self.bs[k] * lambda[nb + k];
        }
        let neq = self.layout.n_eq;
        for br in &self.branches {
            let terms = self.branch_terms(x, br);
            let mut w = [
                -lambda[br.f],
                -lambda[nb + br.f],
                -lambda[br.t],
                -lambda[nb + br.t],
            ];
            let mut h = [[0.0; 4]; 4];
            if let Some((_, row)) = br.limit {
                for side in 0..2 {
                    let mu = lambda[neq + row + side];
                    if mu == 0.0 {
                        continue;
                    }
                    let (p, q) = (&terms[2 * side], &terms[2 * side + 1]);
                    w[2 * side] += 2.0 * mu * p.val;
                    w[2 * side + 1] += 2.0 * mu * q.val;
                    for a in 0..4 {
                        for b in 0..4 {
                            h[a][b] += 2.0 * mu * (p.grad[a] * p.grad[b] + q.grad[a] * q.grad[b]);
                        }
                    }
                }
            }
            for (term, &wt) in terms.iter().zip(&w) {
                if wt == 0.0 {
                    continue;
                }
                for a in 0..4 {
                    for b in 0..4 {
                        h[a][b] += wt * term.hess[a][b];
                    }
                }
            }
            for a in 0..4 {
                for b in 0..=a {
                    vals[br.hess[a][b]] += h[a][b];
                }
            }
        }
    }
}

/// Branch flows in MW/MVAr at both ends.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BranchFlow {
    pub pf: f64,
    pub qf: f64,
    pub pt: f64,
    pub qt: f64,
}

/// A case carrying solved voltages, dispatch and flows.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedCase {
    pub case: NetworkCase,
    pub flows: Vec<BranchFlow>,
    /// $/h
    pub objective: f64,
}

impl SolvedCase {
    pub fn to_raw(&self) -> RawCase {
        let mut raw = self.case.to_raw();
        for (row, flow) in raw.branch_rows.iter_mut().zip(&self.flows) {
            if row.len() < BR_QT + 1 {
                row.resize(BR_QT + 1, 0.0);
            }
            row[BR_PF] = flow.pf;
            row[BR_QF] = flow.qf;
            row[BR_PT] = flow.pt;
            row[BR_QT] = flow.qt;
        }
        raw
    }

    /// Rebuild from a parsed solved case file: voltages and dispatch from the
    /// bus/gen columns, flows from branch columns 14-17 when present.
    pub fn from_raw(raw: &RawCase) -> Result<Self, GridError> {
        let case = NetworkCase::from_raw(raw)?;
        let flows = raw
            .branch_rows
            .iter()
            .map(|r| BranchFlow {
                pf: r.get(BR_PF).copied().unwrap_or(0.0),
                qf: r.get(BR_QF).copied().unwrap_or(0.0),
                pt: r.get(BR_PT).copied().unwrap_or(0.0),
                qt: r.get(BR_QT).copied().unwrap_or(0.0),
            })
            .collect();
        let objective = generation_cost(&case);
        Ok(SolvedCase { case, flows, objective })
    }
}

/// Total cost in $/h of the in-service dispatch stored in the case.
pub fn generation_cost(case: &NetworkCase) -> f64 {
    case.gens
        .iter()
        .zip(&case.costs)
        .filter(|(g, _)| g.in_service)
        .map(|(g, c)| c.eval(g.pg))
        .sum()
}

fn phasors(case: &NetworkCase) -> Vec<Complex64> {
    case.buses
        .iter()
        .map(|b| Complex64::from_polar(b.vm, b.va.to_radians()))
        .collect()
}

fn branch_flows(case: &NetworkCase, v: &[Complex64]) -> Result<Vec<BranchFlow>, GridError> {
    let index = case.bus_index();
    case.branches
        .iter()
        .map(|br| {
            if !br.in_service {
                return Ok(BranchFlow::default());
            }
            let [yff, yft, ytf, ytt] = branch_admittance(br)?;
            let (vf, vt) = (v[index[&br.fbus]], v[index[&br.tbus]]);
            let sf = vf * (yff * vf + yft * vt).conj() * case.base_mva;
            let st = vt * (ytf * vf + ytt * vt).conj() * case.base_mva;
            Ok(BranchFlow {
                pf: sf.re,
                qf: sf.im,
                pt: st.re,
                qt: st.im,
            })
        })
        .collect()
}

/// Per-bus power mismatch `(bus id, ΔP MW, ΔQ MVAr)` of `solution`'s
/// voltages and dispatch against the loads and network of `case`.
///
/// Computed from complex nodal injections, independently of the NLP
/// constraint callbacks.
pub fn residuals_at(case: &NetworkCase, solution: &SolvedCase) -> Result<Vec<(usize, f64, f64)>, GridError> {
    let sol = &solution.case;
    let index = case.bus_index();
    let v = phasors(sol);
    let mut mismatch = vec![Complex64::new(0.0, 0.0); case.buses.len()];
    for (i, b) in case.buses.iter().enumerate() {
        let vi = v[index[&b.id]];
        let shunt = Complex64::new(b.gs, -b.bs) * vi.norm_sqr();
        mismatch[i] -= Complex64::new(b.pd, b.qd) + shunt;
    }
    for (g, sg) in case.gens.iter().zip(&sol.gens) {
        if g.in_service {
            mismatch[index[&g.bus]] += Complex64::new(sg.pg, sg.qg);
        }
    }
    let flows = branch_flows(case, &v)?;
    for (br, fl) in case.branches.iter().zip(&flows) {
        if br.in_service {
            mismatch[index[&br.fbus]] -= Complex64::new(fl.pf, fl.qf);
            mismatch[index[&br.tbus]] -= Complex64::new(fl.pt, fl.qt);
        }
    }
    Ok(case
        .buses
        .iter()
        .zip(mismatch)
        .map(|(b, m)| (b.id, m.re, m.im))
        .collect())
}

/// Convert a solver vector into engineering units.
pub fn extract_solution(x: &[f64], layout: &AcopfLayout, case: &NetworkCase) -> Result<SolvedCase, AcopfError> {
    if x.len() != layout.n_vars {
        return Err(AcopfError::DimensionMismatch {
            expected: layout.n_vars,
            found: x.len(),
        });
    }
    let base = case.base_mva;
    let mut out = case.clone();
    for (i, bus) in out.buses.iter_mut().enumerate() {
        if let (Some(va), Some(vm)) = (layout.var(VarKind::Va, i), layout.var(VarKind::Vm, i)) {
            bus.va = x[va].to_degrees();
            bus.vm = x[vm];
        }
    }
    for (g, gen) in out.gens.iter_mut().enumerate() {
        match (layout.var(VarKind::Pg, g), layout.var(VarKind::Qg, g)) {
            (Some(p), Some(q)) => {
                gen.pg = x[p] * base;
                gen.qg = x[q] * base;
            }
            _ => {
                gen.pg = 0.0;
                gen.qg = 0.0;
            }
        }
    }
    let flows = branch_flows(&out, &phasors(&out))?;
    let objective = generation_cost(&out);
    Ok(SolvedCase {
        case: out,
        flows,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matpower::parse_case;
    use crate::nlp::{dense_hessian, dense_jacobian};

    fn case9() -> NetworkCase {
        NetworkCase::from_raw(&parse_case(include_str!("../../../data/case9.m")).unwrap()).unwrap()
    }

    #[test]
    fn dimensions_of_case9() {
        let (nlp, layout) = build_acopf(&case9()).unwrap();
        assert_eq!(layout.n_vars, 24);
        assert_eq!(layout.n_eq, 18);
        assert_eq!(layout.n_ineq, 18);
        assert_eq!(nlp.num_constraints(), 36);
        let (xl, xu) = nlp.var_bounds();
        assert_eq!(xl[0], xu[0]);
        assert_eq!(xl.iter().zip(&xu).filter(|(l, u)| l == u).count(), 1);
    }

    #[test]
    fn objective_matches_polynomial() {
        let (nlp, layout) = build_acopf(&case9()).unwrap();
        let mut x = nlp.initial_point();
        let pg = [68.035443, 124.522661, 75.0];
        for (g, p) in pg.iter().enumerate() {
            x[layout.var(VarKind::Pg, g).unwrap()] = p / 100.0;
        }
        let expect = (0.11 * pg[0] * pg[0] + 5.0 * pg[0] + 150.0)
            + (0.085 * pg[1] * pg[1] + 1.2 * pg[1] + 600.0);
        assert!((nlp.objective(&x) - expect).abs() <= 1e-9 * expect);
        let g1 = 0.11 * pg[0] * pg[0] + 5.0 * pg[0] + 150.0;
        assert!((g1 - 999.35).abs() < 0.01);
    }

    #[test]
    fn side_flow_derivatives_match_differences() {
        let y_oo = Complex64::new(0.8, -9.5);
        let y_ok = Complex64::new(-0.7, 9.3);
        let pt = [0.13, -0.21, 1.03, 0.97];
        let eval = |p: &[f64; 4]| side_flow(y_oo, y_ok, p[2], p[3], p[0] - p[1]);
        let (p0, q0) = eval(&pt);
        let h = 1e-6;
        for v in 0..4 {
            let mut a = pt;
            let mut b = pt;
            a[v] += h;
            b[v] -= h;
            let ((pa, qa), (pb, qb)) = (eval(&a), eval(&b));
            assert!(((pa.val - pb.val) / (2.0 * h) - p0.grad[v]).abs() < 1e-7);
            assert!(((qa.val - qb.val) / (2.0 * h) - q0.grad[v]).abs() < 1e-7);
            for w in 0..4 {
                assert!(((pa.grad[w] - pb.grad[w]) / (2.0 * h) - p0.hess[v][w]).abs() < 1e-6);
                assert!(((qa.grad[w] - qb.grad[w]) / (2.0 * h) - q0.hess[v][w]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn flat_start_mismatch_is_pure_load() {
        let mut case = case9();
        for b in &mut case.buses {
            b.vm = 1.0;
            b.va = 0.0;
        }
        for g in &mut case.gens {
            g.pg = 0.0;
            g.qg = 0.0;
        }
        let sol = SolvedCase {
            case: case.clone(),
            flows: vec![],
            objective: 0.0,
        };
        let res = residuals_at(&case, &sol).unwrap();
        let (id, dp, _) = res[4];
        assert_eq!(id, 5);
        // Series flows vanish at flat start; charging only produces Q.
        assert!((dp + 75.0).abs() < 1e-9, "{dp}");
    }

    #[test]
    fn empty_network_is_balanced() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 345 1 1.1 0.9;\n];\n\
                    mpc.gen = [\n1 0 0 10 -10 1 100 1 50 0;\n];\nmpc.branch = [\n];\n";
        let case = NetworkCase::from_raw(&parse_case(text).unwrap()).unwrap();
        let (nlp, layout) = build_acopf(&case).unwrap();
        assert_eq!(layout.n_vars, 4);
        let x = vec![0.0, 1.0, 0.0, 0.0];
        let mut c = vec![0.0; 2];
        nlp.constraints(&x, &mut c);
        assert_eq!(c, vec![0.0, 0.0]);
        let sol = extract_solution(&x, &layout, &case).unwrap();
        assert!(residuals_at(&case, &sol).unwrap().iter().all(|r| r.1 == 0.0 && r.2 == 0.0));
    }

    #[test]
    fn extract_converts_units() {
        let case = case9();
        let (nlp, layout) = build_acopf(&case).unwrap();
        let mut x = nlp.initial_point();
        x[layout.var(VarKind::Vm, 0).unwrap()] = 1.04;
        x[layout.var(VarKind::Pg, 2).unwrap()] = 0.75;
        let sol = extract_solution(&x, &layout, &case).unwrap();
        assert_eq!(sol.case.buses[0].vm, 1.04);
        assert_eq!(sol.case.buses[0].va, 0.0);
        assert!((sol.case.gens[2].pg - 75.0).abs() < 1e-12);
        assert!(matches!(
            extract_solution(&x[1..], &layout, &case),
            Err(AcopfError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn equal_potentials_carry_no_series_flow() {
        let mut case = case9();
        for b in &mut case.buses {
            b.vm = 1.0;
            b.va = 0.0;
        }
        for br in &mut case.branches {
            br.b = 0.0;
        }
        let (nlp, layout) = build_acopf(&case).unwrap();
        let sol = extract_solution(&nlp.initial_point(), &layout, &case).unwrap();
        for f in &sol.flows {
            assert!(f.pf.abs() < 1e-9 && f.qf.abs() < 1e-9 && f.pt.abs() < 1e-9 && f.qt.abs() < 1e-9);
        }
    }

    #[test]
    fn constraint_callbacks_agree_with_complex_injections() {
        let case = case9();
        let (nlp, layout) = build_acopf(&case).unwrap();
        let mut x = nlp.initial_point();
        for (i, v) in x.iter_mut().enumerate().take(18).skip(1) {
            *v += 0.01 * (i as f64).sin();
        }
        let mut c = vec![0.0; nlp.num_constraints()];
        nlp.constraints(&x, &mut c);
        let sol = extract_solution(&x, &layout, &case).unwrap();
        let res = residuals_at(&case, &sol).unwrap();
        for (k, (_, dp, dq)) in res.iter().enumerate() {
            assert!((c[k] * 100.0 - dp).abs() < 1e-9);
            assert!((c[9 + k] * 100.0 - dq).abs() < 1e-9);
        }
        for (r, &b) in layout.rated.iter().enumerate() {
            let f = sol.flows[b];
            assert!((c[18 + 2 * r] * 1e4 - (f.pf * f.pf + f.qf * f.qf)).abs() < 1e-6);
        }
    }

    #[test]
    fn hessian_is_symmetric_and_lower() {
        let (nlp, _) = build_acopf(&case9()).unwrap();
        assert!(nlp.hessian_structure().iter().all(|&(r, c)| r >= c));
        let lambda: Vec<f64> = (0..36).map(|i| (i as f64 * 0.37).cos()).collect();
        let h = dense_hessian(&nlp, &nlp.initial_point(), 1.0, &lambda);
        for i in 0..24 {
            for j in 0..24 {
                assert_eq!(h[i][j], h[j][i]);
            }
        }
        let j = dense_jacobian(&nlp, &nlp.initial_point());
        assert_eq!(j.len(), 36);
    }
}
