//! Callback interface between optimization models and the solver.
//!
//! Constraint vector layout: the `num_eq` equality rows (target 0) come
//! first, followed by the `num_ineq` rows bounded by `ineq_bounds`.
//! Jacobian and Hessian values are reported in the fixed order of their
//! structure; the Hessian stores only the lower triangle (`row >= col`).

/// Sparse matrix pattern as `(row, col)` pairs. Duplicates are summed.
pub type Pattern = Vec<(usize, usize)>;

pub trait NlpProblem: Sync {
    fn num_vars(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn num_ineq(&self) -> usize;

    /// Variable bounds `(xl, xu)`; infinite entries mean unbounded.
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>);
    /// Inequality bounds `(gl, gu)`.
    fn ineq_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn initial_point(&self) -> Vec<f64>;

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    fn constraints(&self, x: &[f64], c: &mut [f64]);

    fn jacobian_structure(&self) -> Pattern;
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]);

    fn hessian_structure(&self) -> Pattern;
    /// Values of `obj_factor * ∇²f + Σ λ_i ∇²c_i`.
    fn hessian_values(&self, x: &[f64], obj_factor: f64, lambda: &[f64], vals: &mut [f64]);

    fn num_constraints(&self) -> usize {
        self.num_eq() + self.num_ineq()
    }
}

/// Dense helpers used by tests and the derivative checker.
pub fn dense_jacobian<P: NlpProblem + ?Sized>(p: &P, x: &[f64]) -> Vec<Vec<f64>> {
    let pat = p.jacobian_structure();
    let mut vals = vec![0.0; pat.len()];
    p.jacobian_values(x, &mut vals);
    let mut out = vec![vec![0.0; p.num_vars()]; p.num_constraints()];
    for (&(r, c), v) in pat.iter().zip(vals) {
        out[r][c] += v;
    }
    out
}

/// Full symmetric Hessian of the Lagrangian as a dense matrix.
pub fn dense_hessian<P: NlpProblem + ?Sized>(
    p: &P,
    x: &[f64],
    obj_factor: f64,
    lambda: &[f64],
) -> Vec<Vec<f64>> {
    let pat = p.hessian_structure();
    let mut vals = vec![0.0; pat.len()];
    p.hessian_values(x, obj_factor, lambda, &mut vals);
    let n = p.num_vars();
    let mut out = vec![vec![0.0; n]; n];
    for (&(r, c), v) in pat.iter().zip(vals) {
        out[r][c] += v;
        if r != c {
            out[c][r] += v;
        }
    }
    out
}

/// Quadratic program `min ½ xᵀHx + gᵀx + f0` with linear equality rows
/// `A_eq x = b_eq`, inequality rows `gl ≤ A_in x ≤ gu` and variable bounds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseQp {
    pub h: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    pub f0: f64,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_in: Vec<Vec<f64>>,
    pub gl: Vec<f64>,
    pub gu: Vec<f64>,
    pub xl: Vec<f64>,
    pub xu: Vec<f64>,
    pub x0: Vec<f64>,
}

impl DenseQp {
    /// Unconstrained problem in `n` variables with unbounded variables.
    pub fn new(h: Vec<Vec<f64>>, g: Vec<f64>) -> Self {
        let n = g.len();
        DenseQp {
            h,
            g,
            xl: vec![f64::NEG_INFINITY; n],
            xu: vec![f64::INFINITY; n],
            x0: vec![0.0; n],
            ..Default::default()
        }
    }

    fn rows(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.a_eq.iter().chain(self.a_in.iter())
    }
}

impl NlpProblem for DenseQp {
    fn num_vars(&self) -> usize {
        self.g.len()
    }
    fn num_eq(&self) -> usize {
        self.a_eq.len()
    }
    fn num_ineq(&self) -> usize {
        self.a_in.len()
    }
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.xl.clone(), self.xu.clone())
    }
    fn ineq_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.gl.clone(), self.gu.clone())
    }
    fn initial_point(&self) -> Vec<f64> {
        self.x0.clone()
    }
    fn objective(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for (i, hi) in self.h.iter().enumerate() {
            f += 0.5 * x[i] * hi.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        f + self.g.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.f0
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for (i, gi) in grad.iter_mut().enumerate() {
            *gi = self.g[i] + self.h[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    fn constraints(&self, x: &[f64], c: &mut [f64]) {
        for (i, row) in self.rows().enumerate() {
            c[i] = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        for (i, b) in self.b_eq.iter().enumerate() {
            c[i] -= b;
        }
    }
    fn jacobian_structure(&self) -> Pattern {
        let n = self.num_vars();
        (0..self.num_constraints()).flat_map(|i| (0..n).map(move |j| (i, j))).collect()
    }
    fn jacobian_values(&self, _x: &[f64], vals: &mut [f64]) {
        for (v, a) in vals.iter_mut().zip(self.rows().flatten()) {
            *v = *a;
        }
    }
    fn hessian_structure(&self) -> Pattern {
        let n = self.num_vars();
        (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect()
    }
    fn hessian_values(&self, _x: &[f64], obj_factor: f64, _lambda: &[f64], vals: &mut [f64]) {
        let n = self.num_vars();
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                vals[k] = obj_factor * self.h[i][j];
                k += 1;
            }
        }
    }
}
