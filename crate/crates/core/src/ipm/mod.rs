//! Primal-dual interior-point solver for [`NlpProblem`]s.
//!
//! Inequality rows get slack variables, finite variable and slack bounds
//! are handled by a logarithmic barrier, and each iteration takes a Newton
//! step on the barrier KKT conditions:
//!
//! ```text
//! [ W + Σ + δw   Aᵀ  ] [Δw]     [ ∇φμ + Aᵀλ ]
//! [ A           -δc  ] [Δλ] = - [ c(w)      ]
//! ```
//!
//! The slack block is eliminated before factorization. Globalization is a
//! backtracking line search on the ℓ1 exact penalty function with a
//! second-order correction on the first rejected trial.
//!
//! Sign convention: `L = σ f + λᵀc − z_lᵀ(x − x_l) − z_uᵀ(x_u − x)`.

mod check;
mod kkt;
pub mod linsolve;

use serde::Serialize;
use thiserror::Error;

pub use check::{check_derivatives, DerivativeReport, EntryError};
use kkt::{KktSystem, LinearSolverKind};
pub use linsolve::Inertia;

use crate::nlp::NlpProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("{what}: expected {expected} entries, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LinearSolver {
    /// Dense for KKT systems up to 300 rows, sparse above.
    Auto,
    Dense,
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub mu0: f64,
    pub kappa_mu: f64,
    pub tau_min: f64,
    pub reg0: f64,
    pub linear_solver: LinearSolver,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-6,
            max_iter: 200,
            mu0: 0.1,
            kappa_mu: 0.2,
            tau_min: 0.99,
            reg0: 1e-8,
            linear_solver: LinearSolver::Auto,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.tol > 0.0) {
            return Err(SolveError::InvalidOptions(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.kappa_mu > 0.0 && self.kappa_mu < 1.0) {
            return Err(SolveError::InvalidOptions(format!("kappa_mu must lie in (0, 1), got {}", self.kappa_mu)));
        }
        if !(self.tau_min > 0.0 && self.tau_min < 1.0) {
            return Err(SolveError::InvalidOptions(format!("tau_min must lie in (0, 1), got {}", self.tau_min)));
        }
        if !(self.mu0 > 0.0) || !(self.reg0 > 0.0) {
            return Err(SolveError::InvalidOptions("mu0 and reg0 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    NumericFailure,
}

/// Stationarity, feasibility and complementarity residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct KktResidual {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub mu: f64,
    pub objective: f64,
    /// ℓ1 penalty merit value at the start of the iteration.
    pub merit: f64,
    pub penalty: f64,
    pub alpha_primal: f64,
    pub alpha_dual: f64,
    pub regularization: f64,
    /// Unperturbed KKT residual at the start of the iteration.
    pub kkt: KktResidual,
    /// Smallest distance of any bounded variable or slack to its bounds.
    pub min_gap: f64,
    pub line_search_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub lambda_eq: Vec<f64>,
    pub lambda_ineq: Vec<f64>,
    pub z_lb: Vec<f64>,
    pub z_ub: Vec<f64>,
    /// Inequality slacks and their bound multipliers.
    pub slack: Vec<f64>,
    pub slack_z_lb: Vec<f64>,
    pub slack_z_ub: Vec<f64>,
    pub objective: f64,
    pub kkt: KktResidual,
    pub iterations: usize,
    pub iter_log: Vec<IterationRecord>,
}

/// A primal-dual point for [`kkt_error`].
///
/// Slack data is optional; when absent the slacks are taken as the
/// inequality values and their multipliers as the positive and negative
/// parts of `lambda_ineq`, which is exact only at `mu = 0`.
#[derive(Debug, Clone, Default)]
pub struct KktPoint<'a> {
    pub x: &'a [f64],
    pub lambda_eq: &'a [f64],
    pub lambda_ineq: &'a [f64],
    pub z_lb: &'a [f64],
    pub z_ub: &'a [f64],
    pub slack: Option<(&'a [f64], &'a [f64], &'a [f64])>,
}

/// Working-space description: free variables followed by slacks, with
/// bounds over that combined vector.
struct Space {
    n: usize,
    m_eq: usize,
    m_ineq: usize,
    /// Indices of non-fixed variables.
    free: Vec<usize>,
    /// Position in `free` of each variable, `None` when fixed.
    free_pos: Vec<Option<usize>>,
    xl: Vec<f64>,
    xu: Vec<f64>,
    /// Bounds over `w = (x_free, s)`.
    lw: Vec<f64>,
    uw: Vec<f64>,
}

impl Space {
    fn new<P: NlpProblem + ?Sized>(p: &P) -> Result<Self, SolveError> {
        let n = p.num_vars();
        let (m_eq, m_ineq) = (p.num_eq(), p.num_ineq());
        let (xl, xu) = p.var_bounds();
        let (gl, gu) = p.ineq_bounds();
        for (what, len, want) in [("xl", xl.len(), n), ("xu", xu.len(), n), ("gl", gl.len(), m_ineq), ("gu", gu.len(), m_ineq)] {
            if len != want {
                return Err(SolveError::DimensionMismatch { what, expected: want, found: len });
            }
        }
        for j in 0..n {
            if xl[j] > xu[j] || xl[j].is_nan() || xu[j].is_nan() {
                return Err(SolveError::InvalidProblem(format!("variable {j} has bounds [{}, {}]", xl[j], xu[j])));
            }
        }
        for i in 0..m_ineq {
            if gl[i] > gu[i] || (!gl[i].is_finite() && !gu[i].is_finite()) {
                return Err(SolveError::InvalidProblem(format!(
                    "inequality {i} needs at least one finite bound with gl <= gu, got [{}, {}]",
                    gl[i], gu[i]
                )));
            }
        }
        let free: Vec<usize> = (0..n).filter(|&j| xl[j] < xu[j]).collect();
        let mut free_pos = vec![None; n];
        for (k, &j) in free.iter().enumerate() {
            free_pos[j] = Some(k);
        }
        let mut lw: Vec<f64> = free.iter().map(|&j| xl[j]).collect();
        let mut uw: Vec<f64> = free.iter().map(|&j| xu[j]).collect();
        lw.extend_from_slice(&gl);
        uw.extend_from_slice(&gu);
        Ok(Space { n, m_eq, m_ineq, free, free_pos, xl, xu, lw, uw })
    }

    fn nf(&self) -> usize {
        self.free.len()
    }

    fn nw(&self) -> usize {
        self.free.len() + self.m_ineq
    }

    fn m(&self) -> usize {
        self.m_eq + self.m_ineq
    }
}

/// Function values at a primal point.
struct Eval {
    f: f64,
    grad: Vec<f64>,
    c: Vec<f64>,
}

fn evaluate<P: NlpProblem + ?Sized>(p: &P, x: &[f64], m: usize) -> Eval {
    let mut grad = vec![0.0; x.len()];
    let mut c = vec![0.0; m];
    p.gradient(x, &mut grad);
    p.constraints(x, &mut c);
    Eval { f: p.objective(x), grad, c }
}

/// Primal residual `[c_E(x); c_I(x) − s]`.
fn primal_residual(sp: &Space, c: &[f64], s: &[f64]) -> Vec<f64> {
    let mut r = c.to_vec();
    for i in 0..sp.m_ineq {
        r[sp.m_eq + i] -= s[i];
    }
    r
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// `Jᵀλ` over all variables.
fn jt_lambda(n: usize, pattern: &[(usize, usize)], jac: &[f64], lambda: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (&(r, c), &v) in pattern.iter().zip(jac) {
        out[c] += v * lambda[r];
    }
    out
}

/// Residuals in w-space. `zl`/`zu` are zero where the bound is infinite.
#[allow(clippy::too_many_arguments)]
fn residuals(
    sp: &Space,
    grad_w_lagr: &[f64],
    rp: &[f64],
    w: &[f64],
    lambda: &[f64],
    zl: &[f64],
    zu: &[f64],
    mu: f64,
) -> KktResidual {
    let mut stat = 0.0f64;
    let mut compl = 0.0f64;
    for j in 0..sp.nw() {
        stat = stat.max((grad_w_lagr[j] - zl[j] + zu[j]).abs());
        if sp.lw[j].is_finite() {
            compl = compl.max((zl[j] * (w[j] - sp.lw[j]) - mu).abs());
        }
        if sp.uw[j].is_finite() {
            compl = compl.max((zu[j] * (sp.uw[j] - w[j]) - mu).abs());
        }
    }
    let mult = inf_norm(lambda).max(inf_norm(zl)).max(inf_norm(zu));
    let scale = (mult / 100.0).max(1.0);
    KktResidual {
        stationarity: stat / scale,
        feasibility: inf_norm(rp),
        complementarity: compl / scale,
    }
}

/// Gradient of the Lagrangian (without bound multipliers) in w-space.
fn lagrangian_grad_w(sp: &Space, grad: &[f64], jtl: &[f64], lambda: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = sp.free.iter().map(|&j| grad[j] + jtl[j]).collect();
    g.extend((0..sp.m_ineq).map(|i| -lambda[sp.m_eq + i]));
    g
}

/// Scaled KKT residuals of a primal-dual point. Fixed variables
/// (`xl == xu`) are treated as eliminated.
pub fn kkt_error<P: NlpProblem + ?Sized>(p: &P, point: &KktPoint<'_>, mu: f64) -> Result<KktResidual, SolveError> {
    let sp = Space::new(p)?;
    let check = |what, v: &[f64], want| {
        if v.len() == want {
            Ok(())
        } else {
            Err(SolveError::DimensionMismatch { what, expected: want, found: v.len() })
        }
    };
    check("x", point.x, sp.n)?;
    check("lambda_eq", point.lambda_eq, sp.m_eq)?;
    check("lambda_ineq", point.lambda_ineq, sp.m_ineq)?;
    check("z_lb", point.z_lb, sp.n)?;
    check("z_ub", point.z_ub, sp.n)?;
    let ev = evaluate(p, point.x, sp.m());
    let mut lambda = point.lambda_eq.to_vec();
    lambda.extend_from_slice(point.lambda_ineq);
    let (s, szl, szu): (Vec<f64>, Vec<f64>, Vec<f64>) = match point.slack {
        Some((s, zl, zu)) => {
            check("slack", s, sp.m_ineq)?;
            check("slack_z_lb", zl, sp.m_ineq)?;
            check("slack_z_ub", zu, sp.m_ineq)?;
            (s.to_vec(), zl.to_vec(), zu.to_vec())
        }
        None => (
            ev.c[sp.m_eq..].to_vec(),
            point.lambda_ineq.iter().map(|l| (-l).max(0.0)).collect(),
            point.lambda_ineq.iter().map(|l| l.max(0.0)).collect(),
        ),
    };
    let pattern = p.jacobian_structure();
    let mut jac = vec![0.0; pattern.len()];
    p.jacobian_values(point.x, &mut jac);
    let jtl = jt_lambda(sp.n, &pattern, &jac, &lambda);
    let g = lagrangian_grad_w(&sp, &ev.grad, &jtl, &lambda);
    let mut w: Vec<f64> = sp.free.iter().map(|&j| point.x[j]).collect();
    w.extend_from_slice(&s);
    let mut zl: Vec<f64> = sp.free.iter().map(|&j| point.z_lb[j]).collect();
    let mut zu: Vec<f64> = sp.free.iter().map(|&j| point.z_ub[j]).collect();
    zl.extend_from_slice(&szl);
    zu.extend_from_slice(&szu);
    for j in 0..sp.nw() {
        if !sp.lw[j].is_finite() {
            zl[j] = 0.0;
        }
        if !sp.uw[j].is_finite() {
            zu[j] = 0.0;
        }
    }
    let mut rp = primal_residual(&sp, &ev.c, &s);
    // Slack bound violations count as infeasibility.
    for i in 0..sp.m_ineq {
        let j = sp.nf() + i;
        let viol = (sp.lw[j] - w[j]).max(w[j] - sp.uw[j]).max(0.0);
        rp[sp.m_eq + i] = rp[sp.m_eq + i].abs().max(viol);
    }
    for (k, &j) in sp.free.iter().enumerate() {
        let viol = (sp.lw[k] - point.x[j]).max(point.x[j] - sp.uw[k]).max(0.0);
        if viol > 0.0 {
            rp.push(viol);
        }
    }
    Ok(residuals(&sp, &g, &rp, &w, &lambda, &zl, &zu, mu))
}

/// Push a value strictly inside `[lo, hi]`.
fn push_inside(v: f64, lo: f64, hi: f64) -> f64 {
    const K1: f64 = 1e-2;
    const K2: f64 = 1e-2;
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let pl = (K1 * lo.abs().max(1.0)).min(K2 * (hi - lo));
            let pu = (K1 * hi.abs().max(1.0)).min(K2 * (hi - lo));
            v.clamp(lo + pl, hi - pu)
        }
        (true, false) => v.max(lo + K1 * lo.abs().max(1.0)),
        (false, true) => v.min(hi - K1 * hi.abs().max(1.0)),
        (false, false) => v,
    }
}

struct State {
    w: Vec<f64>,
    lambda: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

impl State {
    fn x_full(&self, sp: &Space) -> Vec<f64> {
        let mut x = sp.xl.clone();
        for (k, &j) in sp.free.iter().enumerate() {
            x[j] = self.w[k];
        }
        x
    }
}

fn barrier_terms(sp: &Space, w: &[f64], mu: f64) -> Option<f64> {
    let mut b = 0.0;
    for j in 0..sp.nw() {
        if sp.lw[j].is_finite() {
            let gap = w[j] - sp.lw[j];
            if gap <= 0.0 {
                return None;
            }
            b -= mu * gap.ln();
        }
        if sp.uw[j].is_finite() {
            let gap = sp.uw[j] - w[j];
            if gap <= 0.0 {
                return None;
            }
            b -= mu * gap.ln();
        }
    }
    Some(b)
}

fn min_gap(sp: &Space, w: &[f64]) -> f64 {
    let mut g = f64::INFINITY;
    for j in 0..sp.nw() {
        if sp.lw[j].is_finite() {
            g = g.min(w[j] - sp.lw[j]);
        }
        if sp.uw[j].is_finite() {
            g = g.min(sp.uw[j] - w[j]);
        }
    }
    g
}

/// Largest step in (0, 1] keeping `v + α dv` at least a fraction `1 − τ`
/// of the way from its bound.
fn fraction_to_boundary(sp: &Space, w: &[f64], dw: &[f64], tau: f64) -> f64 {
    let mut alpha = 1.0f64;
    for j in 0..sp.nw() {
        if dw[j] < 0.0 && sp.lw[j].is_finite() {
            alpha = alpha.min(-tau * (w[j] - sp.lw[j]) / dw[j]);
        }
        if dw[j] > 0.0 && sp.uw[j].is_finite() {
            alpha = alpha.min(tau * (sp.uw[j] - w[j]) / dw[j]);
        }
    }
    alpha
}

fn fraction_to_boundary_dual(z: &[f64], dz: &[f64], tau: f64) -> f64 {
    let mut alpha = 1.0f64;
    for (zi, dzi) in z.iter().zip(dz) {
        if *dzi < 0.0 && *zi > 0.0 {
            alpha = alpha.min(-tau * zi / dzi);
        }
    }
    alpha
}

const ARMIJO_ETA: f64 = 1e-4;
const MAX_SOC: usize = 4;
const MIN_STEP: f64 = 1e-14;
const KAPPA_SIGMA: f64 = 1e10;
const MAX_REG_RETRIES: usize = 20;
const INFEASIBLE_WINDOW: usize = 30;
const INFEASIBLE_RESIDUAL: f64 = 1e-4;

/// Solve `p` from its initial point.
pub fn solve<P: NlpProblem + ?Sized>(p: &P, opts: &SolverOptions) -> Result<SolveResult, SolveError> {
    opts.validate()?;
    let sp = Space::new(p)?;
    let n = sp.n;
    let m = sp.m();
    let nf = sp.nf();
    let nw = sp.nw();

    let x0 = p.initial_point();
    if x0.len() != n {
        return Err(SolveError::DimensionMismatch { what: "initial point", expected: n, found: x0.len() });
    }

    let jac_pattern = p.jacobian_structure();
    let hess_pattern = p.hessian_structure();
    let mut jac = vec![0.0; jac_pattern.len()];
    let mut hess = vec![0.0; hess_pattern.len()];

    let kind = match opts.linear_solver {
        LinearSolver::Dense => LinearSolverKind::Dense,
        LinearSolver::Sparse => LinearSolverKind::Sparse,
        LinearSolver::Auto if nf + m <= 300 => LinearSolverKind::Dense,
        LinearSolver::Auto => LinearSolverKind::Sparse,
    };
    let mut kkt = KktSystem::new(&sp.free_pos, nf, sp.m_eq, sp.m_ineq, &jac_pattern, &hess_pattern, kind);

    // Initial point: variables and slacks strictly inside their bounds.
    let mut x = x0.clone();
    for j in 0..n {
        x[j] = if sp.xl[j] == sp.xu[j] { sp.xl[j] } else { x[j].clamp(sp.xl[j], sp.xu[j]) };
    }
    let mut w: Vec<f64> = sp.free.iter().enumerate().map(|(k, &j)| push_inside(x[j], sp.lw[k], sp.uw[k])).collect();
    let mut c0 = vec![0.0; m];
    {
        let mut xf = x.clone();
        for (k, &j) in sp.free.iter().enumerate() {
            xf[j] = w[k];
        }
        p.constraints(&xf, &mut c0);
    }
    for i in 0..sp.m_ineq {
        let j = nf + i;
        w.push(push_inside(c0[sp.m_eq + i], sp.lw[j], sp.uw[j]));
    }

    let mut mu = opts.mu0;
    let mu_min = opts.tol / 10.0;
    let mut zl = vec![0.0; nw];
    let mut zu = vec![0.0; nw];
    for j in 0..nw {
        if sp.lw[j].is_finite() {
            zl[j] = (mu / (w[j] - sp.lw[j])).clamp(1e-6, 1e3);
        }
        if sp.uw[j].is_finite() {
            zu[j] = (mu / (sp.uw[j] - w[j])).clamp(1e-6, 1e3);
        }
    }
    let mut st = State { w, lambda: vec![0.0; m], zl, zu };

    let mut penalty = 1.0f64;
    let mut log = Vec::new();
    let mut last_reg = 0.0f64;
    let mut constraint_reg = false;
    let mut stall_count = 0usize;
    let mut prev_merit = f64::INFINITY;
    let mut status = SolveStatus::MaxIter;
    let mut final_kkt = KktResidual::default();
    let mut iterations = 0;

    for iter in 0..=opts.max_iter {
        let xf = st.x_full(&sp);
        let ev = evaluate(p, &xf, m);
        p.jacobian_values(&xf, &mut jac);
        let jtl = jt_lambda(n, &jac_pattern, &jac, &st.lambda);
        let gl = lagrangian_grad_w(&sp, &ev.grad, &jtl, &st.lambda);
        let rp = primal_residual(&sp, &ev.c, &st.w[nf..]);
        let e0 = residuals(&sp, &gl, &rp, &st.w, &st.lambda, &st.zl, &st.zu, 0.0);
        final_kkt = e0;
        iterations = iter;
        if !e0.max().is_finite() {
            status = SolveStatus::NumericFailure;
            break;
        }
        if e0.max() <= opts.tol {
            status = SolveStatus::Optimal;
            break;
        }
        if iter == opts.max_iter {
            status = SolveStatus::MaxIter;
            break;
        }

        // Monotone barrier update.
        loop {
            let emu = residuals(&sp, &gl, &rp, &st.w, &st.lambda, &st.zl, &st.zu, mu);
            if mu > mu_min && emu.max() <= 10.0 * mu {
                mu = (opts.kappa_mu * mu).max(mu_min);
            } else {
                break;
            }
        }
        let tau = opts.tau_min.max(1.0 - mu);

        // Σ and the barrier gradient in w-space.
        let mut sigma = vec![0.0; nw];
        let mut grad_phi = vec![0.0; nw];
        for (k, &j) in sp.free.iter().enumerate() {
            grad_phi[k] = ev.grad[j];
        }
        for j in 0..nw {
            if sp.lw[j].is_finite() {
                let gap = st.w[j] - sp.lw[j];
                sigma[j] += st.zl[j] / gap;
                grad_phi[j] -= mu / gap;
            }
            if sp.uw[j].is_finite() {
                let gap = sp.uw[j] - st.w[j];
                sigma[j] += st.zu[j] / gap;
                grad_phi[j] += mu / gap;
            }
        }
        // r1 = ∇φμ + Aᵀλ
        let mut r1 = grad_phi.clone();
        for (k, &j) in sp.free.iter().enumerate() {
            r1[k] += jtl[j];
        }
        for i in 0..sp.m_ineq {
            r1[nf + i] -= st.lambda[sp.m_eq + i];
        }

        p.hessian_values(&xf, 1.0, &st.lambda, &mut hess);

        // Factorize with inertia correction.
        let mut reg = 0.0f64;
        let mut reg_c = if constraint_reg { 1e-8 * mu.powf(0.25) } else { 0.0 };
        let mut retries = 0;
        let factored = loop {
            let inertia = kkt.factor(&hess, &jac, &sigma, reg, reg_c);
            if inertia.zero == 0 && inertia.positive == nf && inertia.negative == m {
                break true;
            }
            retries += 1;
            if retries > MAX_REG_RETRIES {
                break false;
            }
            if inertia.zero > 0 && reg_c == 0.0 && m > 0 {
                // Rank-deficient constraint block; stays on for later iterations.
                constraint_reg = true;
                reg_c = 1e-8 * mu.powf(0.25);
                continue;
            }
            reg = if reg == 0.0 {
                if last_reg == 0.0 { opts.reg0 } else { opts.reg0.max(last_reg / 3.0) }
            } else {
                opts.reg0.max(10.0 * reg)
            };
        };
        if !factored {
            log::debug!("iteration {iter}: inertia correction failed");
            status = SolveStatus::NumericFailure;
            break;
        }
        if reg > 0.0 {
            last_reg = reg;
        }

        let rhs = kkt.reduced_rhs(&r1, &rp, &sigma, reg);
        let (dw, dlambda) = kkt.solve(&rhs, &r1, &sigma, reg);

        let dual_step = |dw: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut dzl = vec![0.0; nw];
            let mut dzu = vec![0.0; nw];
            for j in 0..nw {
                if sp.lw[j].is_finite() {
                    let gap = st.w[j] - sp.lw[j];
                    dzl[j] = mu / gap - st.zl[j] - st.zl[j] / gap * dw[j];
                }
                if sp.uw[j].is_finite() {
                    let gap = sp.uw[j] - st.w[j];
                    dzu[j] = mu / gap - st.zu[j] + st.zu[j] / gap * dw[j];
                }
            }
            (dzl, dzu)
        };

        // Penalty parameter and merit slope.
        let cnorm = l1_norm(&rp);
        let grad_dot = grad_phi.iter().zip(&dw).map(|(g, d)| g * d).sum::<f64>();
        // ν exceeds the current multipliers and keeps the slope below -0.1 ν ‖c‖₁.
        let mut needed = st.lambda.iter().fold(0.0f64, |a, l| a.max(l.abs()));
        if cnorm > 0.0 {
            needed = needed.max(grad_dot / (0.9 * cnorm));
        }
        if penalty < needed {
            penalty = (1.5 * needed).max(penalty + 1.0);
        }
        let slope = grad_dot - penalty * cnorm;

        let barrier0 = barrier_terms(&sp, &st.w, mu).expect("iterate is interior");
        let merit0 = ev.f + barrier0 + penalty * cnorm;
        let merit_at = |wt: &[f64]| -> Option<(f64, Vec<f64>)> {
            let b = barrier_terms(&sp, wt, mu)?;
            let mut xt = sp.xl.clone();
            for (k, &j) in sp.free.iter().enumerate() {
                xt[j] = wt[k];
            }
            let mut ct = vec![0.0; m];
            p.constraints(&xt, &mut ct);
            let rpt = primal_residual(&sp, &ct, &wt[nf..]);
            let f = p.objective(&xt);
            if !f.is_finite() || rpt.iter().any(|v| !v.is_finite()) {
                return None;
            }
            Some((f + b + penalty * l1_norm(&rpt), rpt))
        };

        let alpha_max = fraction_to_boundary(&sp, &st.w, &dw, tau);
        let mut alpha = alpha_max;
        let mut trials = 0;
        let mut accepted: Option<(Vec<f64>, f64)> = None;
        let flat = slope >= -1e-14 * (1.0 + merit0.abs());
        // Merit differences below this are rounding noise.
        let noise = 10.0 * f64::EPSILON * (ev.f.abs() + barrier0.abs() + penalty * cnorm).max(1.0);
        while alpha >= MIN_STEP {
            trials += 1;
            let wt: Vec<f64> = st.w.iter().zip(&dw).map(|(w, d)| w + alpha * d).collect();
            if let Some((mt, rpt)) = merit_at(&wt) {
                if flat || mt <= merit0 + ARMIJO_ETA * alpha * slope + noise {
                    accepted = Some((wt, alpha));
                    break;
                }
                if trials == 1 && cnorm > 0.0 {
                    // Second-order corrections for the first trial step.
                    let mut c_soc: Vec<f64> = rp.iter().zip(&rpt).map(|(a, b)| alpha * a + b).collect();
                    let mut theta_prev = l1_norm(&rpt);
                    for _ in 0..MAX_SOC {
                        let rhs_soc = kkt.reduced_rhs(&r1, &c_soc, &sigma, reg);
                        let (dw_soc, _) = kkt.solve(&rhs_soc, &r1, &sigma, reg);
                        let a_soc = fraction_to_boundary(&sp, &st.w, &dw_soc, tau);
                        let ws: Vec<f64> = st.w.iter().zip(&dw_soc).map(|(w, d)| w + a_soc * d).collect();
                        let Some((ms, rps)) = merit_at(&ws) else { break };
                        if ms <= merit0 + ARMIJO_ETA * alpha * slope + noise {
                            accepted = Some((ws, alpha));
                            break;
                        }
                        let theta = l1_norm(&rps);
                        if theta > 0.99 * theta_prev {
                            break;
                        }
                        theta_prev = theta;
                        c_soc.iter_mut().zip(&rps).for_each(|(c, r)| *c = a_soc * *c + r);
                    }
                    if accepted.is_some() {
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((w_new, alpha_pr)) = accepted else {
            log::debug!("iteration {iter}: line search failed");
            status = SolveStatus::NumericFailure;
            break;
        };

        let (dzl, dzu) = dual_step(&dw);
        let alpha_du = fraction_to_boundary_dual(&st.zl, &dzl, tau).min(fraction_to_boundary_dual(&st.zu, &dzu, tau));

        log.push(IterationRecord {
            iter,
            mu,
            objective: ev.f,
            merit: merit0,
            penalty,
            alpha_primal: alpha_pr,
            alpha_dual: alpha_du,
            regularization: reg,
            kkt: e0,
            min_gap: min_gap(&sp, &st.w),
            line_search_trials: trials,
        });

        st.w = w_new;
        for i in 0..m {
            st.lambda[i] += alpha_pr * dlambda[i];
        }
        for j in 0..nw {
            if sp.lw[j].is_finite() {
                let gap = st.w[j] - sp.lw[j];
                let z = st.zl[j] + alpha_du * dzl[j];
                st.zl[j] = z.clamp(mu / (KAPPA_SIGMA * gap), KAPPA_SIGMA * mu / gap);
            }
            if sp.uw[j].is_finite() {
                let gap = sp.uw[j] - st.w[j];
                let z = st.zu[j] + alpha_du * dzu[j];
                st.zu[j] = z.clamp(mu / (KAPPA_SIGMA * gap), KAPPA_SIGMA * mu / gap);
            }
        }

        if e0.feasibility > INFEASIBLE_RESIDUAL && (prev_merit - merit0).abs() <= 1e-8 * merit0.abs().max(1.0) {
            stall_count += 1;
        } else {
            stall_count = 0;
        }
        prev_merit = merit0;
        if stall_count >= INFEASIBLE_WINDOW {
            status = SolveStatus::Infeasible;
            iterations = iter + 1;
            break;
        }
    }

    // Assemble full-space output.
    let x = st.x_full(&sp);
    let ev = evaluate(p, &x, m);
    p.jacobian_values(&x, &mut jac);
    let jtl = jt_lambda(n, &jac_pattern, &jac, &st.lambda);
    let mut z_lb = vec![0.0; n];
    let mut z_ub = vec![0.0; n];
    for j in 0..n {
        match sp.free_pos[j] {
            Some(k) => {
                z_lb[j] = st.zl[k];
                z_ub[j] = st.zu[k];
            }
            None => {
                let g = ev.grad[j] + jtl[j];
                z_lb[j] = g.max(0.0);
                z_ub[j] = (-g).max(0.0);
            }
        }
    }
    Ok(SolveResult {
        status,
        lambda_eq: st.lambda[..sp.m_eq].to_vec(),
        lambda_ineq: st.lambda[sp.m_eq..].to_vec(),
        z_lb,
        z_ub,
        slack: st.w[nf..].to_vec(),
        slack_z_lb: st.zl[nf..].to_vec(),
        slack_z_ub: st.zu[nf..].to_vec(),
        objective: ev.f,
        x,
        kkt: final_kkt,
        iterations,
        iter_log: log,
    })
}

#[cfg(test)]
mod tests;
