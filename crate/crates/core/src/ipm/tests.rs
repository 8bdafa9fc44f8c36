use super::*;
use crate::nlp::DenseQp;

fn shifted_square() -> DenseQp {
    let mut qp = DenseQp::new(vec![vec![2.0]], vec![-2.0]);
    qp.f0 = 1.0;
    qp.xl = vec![0.0];
    qp
}

fn symmetric_equality() -> DenseQp {
    let mut qp = DenseQp::new(vec![vec![2.0, 0.0], vec![0.0, 2.0]], vec![0.0, 0.0]);
    qp.a_eq = vec![vec![1.0, 1.0]];
    qp.b_eq = vec![2.0];
    qp
}

fn active_bound() -> DenseQp {
    let mut qp = DenseQp::new(vec![vec![2.0]], vec![0.0]);
    qp.xl = vec![1.0];
    qp.xu = vec![3.0];
    qp.x0 = vec![2.0];
    qp
}

fn solve_default<P: NlpProblem>(p: &P) -> SolveResult {
    solve(p, &SolverOptions::default()).unwrap()
}

/// The barrier floor is tol/10, so bound-adjacent solutions carry an
/// O(tol) offset; the 1e-8 oracle checks need a tighter tolerance.
fn solve_tight<P: NlpProblem>(p: &P) -> SolveResult {
    solve(p, &SolverOptions { tol: 1e-10, ..Default::default() }).unwrap()
}

#[test]
fn interior_optimum() {
    let r = solve_tight(&shifted_square());
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.x[0] - 1.0).abs() <= 1e-8, "{}", r.x[0]);
    assert!(r.objective.abs() < 1e-12);
}

#[test]
fn equality_multiplier_sign() {
    let r = solve_tight(&symmetric_equality());
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.x[0] - 1.0).abs() <= 1e-8 && (r.x[1] - 1.0).abs() <= 1e-8);
    assert!((r.lambda_eq[0] + 2.0).abs() < 1e-8, "{}", r.lambda_eq[0]);
}

#[test]
fn lower_bound_active() {
    let r = solve_tight(&active_bound());
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.x[0] - 1.0).abs() <= 1e-8, "{}", r.x[0]);
    assert!((r.z_lb[0] - 2.0).abs() < 1e-6, "{}", r.z_lb[0]);
    assert!(r.z_ub[0] < 1e-6);
}

#[test]
fn inequality_rows_and_fixed_variable() {
    // min (x-2)² + (y-2)² + z², x + y ≤ 2, z fixed at 0.5
    let mut qp = DenseQp::new(
        vec![vec![2.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 2.0]],
        vec![-4.0, -4.0, 0.0],
    );
    qp.a_in = vec![vec![1.0, 1.0, 0.0]];
    qp.gl = vec![f64::NEG_INFINITY];
    qp.gu = vec![2.0];
    qp.xl[2] = 0.5;
    qp.xu[2] = 0.5;
    for kind in [LinearSolver::Dense, LinearSolver::Sparse] {
        let opts = SolverOptions { linear_solver: kind, ..Default::default() };
        let r = solve(&qp, &opts).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-7 && (r.x[1] - 1.0).abs() < 1e-7);
        assert_eq!(r.x[2], 0.5);
        assert!((r.lambda_ineq[0] - 2.0).abs() < 1e-6, "{}", r.lambda_ineq[0]);
        assert!((r.z_lb[2] - 1.0).abs() < 1e-9);
    }
}

#[test]
fn kkt_error_at_exact_solution() {
    let qp = symmetric_equality();
    let point = KktPoint {
        x: &[1.0, 1.0],
        lambda_eq: &[-2.0],
        lambda_ineq: &[],
        z_lb: &[0.0, 0.0],
        z_ub: &[0.0, 0.0],
        slack: None,
    };
    let e = kkt_error(&qp, &point, 0.0).unwrap();
    assert!(e.max() <= 1e-12);
}

#[test]
fn kkt_error_perturbed_complementarity() {
    let qp = active_bound();
    // z_lb (x − 1) = 0.1 and z_ub (3 − x) = 0.1 exactly
    let x = 2.0;
    let point = KktPoint { x: &[x], lambda_eq: &[], lambda_ineq: &[], z_lb: &[0.1], z_ub: &[0.1], slack: None };
    let e = kkt_error(&qp, &point, 0.1).unwrap();
    assert_eq!(e.complementarity, 0.0);
}

#[test]
fn kkt_error_dimension_mismatch() {
    let qp = symmetric_equality();
    let point = KktPoint { x: &[1.0], lambda_eq: &[0.0], lambda_ineq: &[], z_lb: &[0.0], z_ub: &[0.0], slack: None };
    assert!(matches!(kkt_error(&qp, &point, 0.0), Err(SolveError::DimensionMismatch { .. })));
}

#[test]
fn rejects_bad_options() {
    let opts = SolverOptions { kappa_mu: 1.5, ..Default::default() };
    assert!(solve(&shifted_square(), &opts).is_err());
}

#[test]
fn infeasible_problem_detected() {
    // x + y = 2 and x + y ≥ 3
    let mut qp = symmetric_equality();
    qp.a_in = vec![vec![1.0, 1.0]];
    qp.gl = vec![3.0];
    qp.gu = vec![f64::INFINITY];
    let r = solve_default(&qp);
    assert_ne!(r.status, SolveStatus::Optimal);
}

#[test]
fn log_invariants() {
    let r = solve_default(&active_bound());
    let mut prev = f64::INFINITY;
    for rec in &r.iter_log {
        assert!(rec.mu <= prev && rec.mu >= 1e-7);
        assert!(rec.min_gap > 0.0);
        prev = rec.mu;
    }
}

#[test]
fn deterministic_runs() {
    let a = solve_default(&symmetric_equality());
    let b = solve_default(&symmetric_equality());
    assert_eq!(a, b);
}

#[test]
fn corrupted_gradient_flagged() {
    struct Broken(DenseQp);
    impl NlpProblem for Broken {
        fn num_vars(&self) -> usize { self.0.num_vars() }
        fn num_eq(&self) -> usize { self.0.num_eq() }
        fn num_ineq(&self) -> usize { self.0.num_ineq() }
        fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) { self.0.var_bounds() }
        fn ineq_bounds(&self) -> (Vec<f64>, Vec<f64>) { self.0.ineq_bounds() }
        fn initial_point(&self) -> Vec<f64> { self.0.initial_point() }
        fn objective(&self, x: &[f64]) -> f64 { self.0.objective(x) }
        fn gradient(&self, x: &[f64], g: &mut [f64]) {
            self.0.gradient(x, g);
            g[1] += 1.0;
        }
        fn constraints(&self, x: &[f64], c: &mut [f64]) { self.0.constraints(x, c) }
        fn jacobian_structure(&self) -> crate::nlp::Pattern { self.0.jacobian_structure() }
        fn jacobian_values(&self, x: &[f64], v: &mut [f64]) { self.0.jacobian_values(x, v) }
        fn hessian_structure(&self) -> crate::nlp::Pattern { self.0.hessian_structure() }
        fn hessian_values(&self, x: &[f64], s: f64, l: &[f64], v: &mut [f64]) { self.0.hessian_values(x, s, l, v) }
    }
    let p = Broken(symmetric_equality());
    let rep = check_derivatives(&p, &[0.1, 0.2], &[0.0]);
    assert_eq!(rep.gradient.col, 1);
    assert!((rep.gradient.rel_error - 1.0).abs() < 0.2, "{}", rep.gradient.rel_error);
    assert!(rep.jacobian.rel_error < 1e-8);
}

#[test]
fn linear_objective_has_zero_hessian() {
    let qp = DenseQp::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![3.0, -1.0]);
    let rep = check_derivatives(&qp, &[0.3, 0.7], &[]);
    assert_eq!(rep.hessian.analytic, 0.0);
    assert!(rep.max_error() < 1e-8);
}
