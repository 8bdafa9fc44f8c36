//! Central finite-difference check of problem callbacks.

use serde::Serialize;

use crate::nlp::{dense_hessian, dense_jacobian, NlpProblem};

const STEP: f64 = 1e-6;

/// Worst entry of one callback.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EntryError {
    /// `|analytic − fd| / max(1, |fd|)`.
    pub rel_error: f64,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub finite_difference: f64,
}

impl EntryError {
    fn record(&mut self, row: usize, col: usize, analytic: f64, fd: f64) {
        let err = (analytic - fd).abs() / fd.abs().max(1.0);
        if err > self.rel_error || err.is_nan() {
            *self = EntryError { rel_error: err, row, col, analytic, finite_difference: fd };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DerivativeReport {
    pub gradient: EntryError,
    pub jacobian: EntryError,
    /// Lagrangian Hessian against differences of the Lagrangian gradient.
    pub hessian: EntryError,
}

impl DerivativeReport {
    pub fn max_error(&self) -> f64 {
        self.gradient.rel_error.max(self.jacobian.rel_error).max(self.hessian.rel_error)
    }
}

fn lagrangian_gradient<P: NlpProblem + ?Sized>(p: &P, x: &[f64], obj_factor: f64, lambda: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    p.gradient(x, &mut g);
    g.iter_mut().for_each(|v| *v *= obj_factor);
    for (row, jr) in dense_jacobian(p, x).iter().enumerate() {
        for (j, v) in jr.iter().enumerate() {
            g[j] += lambda[row] * v;
        }
    }
    g
}

/// Compare analytic derivatives at `x` against central differences.
/// The Hessian is checked for `obj_factor = 1` and the given multipliers.
pub fn check_derivatives<P: NlpProblem + ?Sized>(p: &P, x: &[f64], lambda: &[f64]) -> DerivativeReport {
    let n = p.num_vars();
    let m = p.num_constraints();
    let mut report = DerivativeReport::default();

    let mut grad = vec![0.0; n];
    p.gradient(x, &mut grad);
    let jac = dense_jacobian(p, x);
    let hess = dense_hessian(p, x, 1.0, lambda);

    let mut xp = x.to_vec();
    let mut cp = vec![0.0; m];
    let mut cm = vec![0.0; m];
    for j in 0..n {
        let h = STEP * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        let fp = p.objective(&xp);
        p.constraints(&xp, &mut cp);
        let gp = lagrangian_gradient(p, &xp, 1.0, lambda);
        xp[j] = x[j] - h;
        let fm = p.objective(&xp);
        p.constraints(&xp, &mut cm);
        let gm = lagrangian_gradient(p, &xp, 1.0, lambda);
        xp[j] = x[j];

        report.gradient.record(0, j, grad[j], (fp - fm) / (2.0 * h));
        for i in 0..m {
            report.jacobian.record(i, j, jac[i][j], (cp[i] - cm[i]) / (2.0 * h));
        }
        for i in 0..n {
            report.hessian.record(i, j, hess[i][j], (gp[i] - gm[i]) / (2.0 * h));
        }
    }
    report
}
