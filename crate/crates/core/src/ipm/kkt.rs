//! Assembly and solution of the reduced KKT system.
//!
//! Unknowns are ordered `[Δx_free; Δλ_E; Δλ_I]`. The slack step is
//! eliminated and recovered after the solve.

use super::linsolve::{sym_matvec, DenseLdl, Inertia, SparseLdl, SymmetricFactor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LinearSolverKind {
    Dense,
    Sparse,
}

pub(crate) struct KktSystem {
    nf: usize,
    m_eq: usize,
    m_ineq: usize,
    dim: usize,
    pattern: Vec<(usize, usize)>,
    /// KKT entry for each Hessian entry, `None` if it touches a fixed variable.
    hess_slot: Vec<Option<usize>>,
    jac_slot: Vec<Option<usize>>,
    diag_start: usize,
    values: Vec<f64>,
    factor: Box<dyn SymmetricFactor>,
}

impl KktSystem {
    pub(crate) fn new(
        free_pos: &[Option<usize>],
        nf: usize,
        m_eq: usize,
        m_ineq: usize,
        jac_pattern: &[(usize, usize)],
        hess_pattern: &[(usize, usize)],
        kind: LinearSolverKind,
    ) -> Self {
        let dim = nf + m_eq + m_ineq;
        let mut pattern = Vec::with_capacity(hess_pattern.len() + jac_pattern.len() + dim);
        let mut hess_slot = Vec::with_capacity(hess_pattern.len());
        for &(r, c) in hess_pattern {
            match (free_pos[r], free_pos[c]) {
                (Some(a), Some(b)) => {
                    hess_slot.push(Some(pattern.len()));
                    pattern.push((a.max(b), a.min(b)));
                }
                _ => hess_slot.push(None),
            }
        }
        let mut jac_slot = Vec::with_capacity(jac_pattern.len());
        for &(r, c) in jac_pattern {
            match free_pos[c] {
                Some(b) => {
                    jac_slot.push(Some(pattern.len()));
                    pattern.push((nf + r, b));
                }
                None => jac_slot.push(None),
            }
        }
        let diag_start = pattern.len();
        pattern.extend((0..dim).map(|i| (i, i)));
        let factor: Box<dyn SymmetricFactor> = match kind {
            LinearSolverKind::Dense => Box::new(DenseLdl::new(dim, &pattern)),
            LinearSolverKind::Sparse => {
                let signs: Vec<f64> = (0..dim).map(|i| if i < nf { 1.0 } else { -1.0 }).collect();
                Box::new(SparseLdl::new(dim, &pattern, &signs))
            }
        };
        let values = vec![0.0; pattern.len()];
        KktSystem { nf, m_eq, m_ineq, dim, pattern, hess_slot, jac_slot, diag_start, values, factor }
    }

    /// Assemble and factor. `sigma` covers free variables then slacks.
    pub(crate) fn factor(&mut self, hess: &[f64], jac: &[f64], sigma: &[f64], reg: f64, reg_c: f64) -> Inertia {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        for (slot, &v) in self.hess_slot.iter().zip(hess) {
            if let Some(s) = slot {
                self.values[*s] += v;
            }
        }
        for (slot, &v) in self.jac_slot.iter().zip(jac) {
            if let Some(s) = slot {
                self.values[*s] += v;
            }
        }
        let d = self.diag_start;
        for k in 0..self.nf {
            self.values[d + k] = sigma[k] + reg;
        }
        for i in 0..self.m_eq {
            self.values[d + self.nf + i] = -reg_c;
        }
        for i in 0..self.m_ineq {
            let ss = sigma[self.nf + i] + reg;
            self.values[d + self.nf + self.m_eq + i] = -(1.0 / ss + reg_c);
        }
        self.factor.factor(&self.values)
    }

    /// Right-hand side for residuals `r1` (w-space) and `rp` (constraint space).
    pub(crate) fn reduced_rhs(&self, r1: &[f64], rp: &[f64], sigma: &[f64], reg: f64) -> Vec<f64> {
        let mut rhs = vec![0.0; self.dim];
        for k in 0..self.nf {
            rhs[k] = -r1[k];
        }
        for i in 0..self.m_eq {
            rhs[self.nf + i] = -rp[i];
        }
        for i in 0..self.m_ineq {
            let ss = sigma[self.nf + i] + reg;
            rhs[self.nf + self.m_eq + i] = -rp[self.m_eq + i] - r1[self.nf + i] / ss;
        }
        rhs
    }

    /// Solve with iterative refinement and recover the slack step.
    /// Returns `(Δw, Δλ)`.
    pub(crate) fn solve(&self, rhs: &[f64], r1: &[f64], sigma: &[f64], reg: f64) -> (Vec<f64>, Vec<f64>) {
        let mut sol = rhs.to_vec();
        self.factor.solve(&mut sol);
        let rhs_norm = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for _ in 0..3 {
            let ax = sym_matvec(self.dim, &self.pattern, &self.values, &sol);
            let mut res: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let rn = res.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(rn > 1e-14 * rhs_norm.max(1.0)) {
                break;
            }
            self.factor.solve(&mut res);
            for (s, r) in sol.iter_mut().zip(&res) {
                *s += r;
            }
        }
        let mut dw = sol[..self.nf].to_vec();
        for i in 0..self.m_ineq {
            let ss = sigma[self.nf + i] + reg;
            let dl = sol[self.nf + self.m_eq + i];
            dw.push((-r1[self.nf + i] + dl) / ss);
        }
        (dw, sol[self.nf..].to_vec())
    }
}
