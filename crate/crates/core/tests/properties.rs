use gridopt::composer::{compose_with, ComposeOptions, CouplingMode, TreeShape};
use gridopt::grid::{branch_admittance, Branch};
use gridopt::ingest::{parse_contingencies, parse_scenarios};
use gridopt::ipm::{kkt_error, solve, KktPoint, SolveStatus, SolverOptions};
use gridopt::matpower::{parse_case, write_raw};
use gridopt::nlp::{DenseQp, NlpProblem};
use gridopt::{ContingencySet, NetworkCase, Scenario, ScenarioSet};
use num_complex::Complex64;
use proptest::prelude::*;

const CASE9: &str = include_str!("../../../data/case9.m");
const CONT: &str = include_str!("../../../data/case9.cont");
const SCEN: &str = include_str!("../../../data/case9_scen.csv");

fn case9() -> NetworkCase {
    NetworkCase::from_raw(&parse_case(CASE9).unwrap()).unwrap()
}

fn any_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        Just(0.0),
        -1e4..1e4f64,
        -1.0..1.0f64,
        (-12i32..12, -9.99..9.99f64).prop_map(|(e, m)| m * 10f64.powi(e)),
    ]
}

/// Symmetric positive definite `MᵀM + I`.
fn spd(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(-2.0..2.0f64, n * n).prop_map(move |m| {
        let mut h = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                h[i][j] = (0..n).map(|k| m[k * n + i] * m[k * n + j]).sum::<f64>();
            }
            h[i][i] += 1.0;
        }
        h
    })
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
}

/// Convex QP with a known solution `x*` and one equality row.
fn known_qp() -> impl Strategy<Value = (DenseQp, Vec<f64>)> {
    (2usize..6).prop_flat_map(|n| {
        (
            spd(n),
            prop::collection::vec(-3.0..3.0f64, n),
            prop::collection::vec(-2.0..2.0f64, n),
            -5.0..5.0f64,
        )
            .prop_filter("equality row must be nonzero", |(_, _, a, _)| a.iter().any(|v| v.abs() > 0.1))
            .prop_map(|(h, xs, a, lam)| {
                let hx = matvec(&h, &xs);
                let g: Vec<f64> = hx.iter().zip(&a).map(|(v, ai)| -(v + lam * ai)).collect();
                let mut qp = DenseQp::new(h, g);
                qp.b_eq = vec![a.iter().zip(&xs).map(|(u, v)| u * v).sum()];
                qp.a_eq = vec![a];
                (qp, xs)
            })
    })
}

/// Convex QP with boxes and a general inequality around a feasible point.
fn bounded_qp() -> impl Strategy<Value = DenseQp> {
    (2usize..6).prop_flat_map(|n| {
        (
            spd(n),
            prop::collection::vec(-10.0..10.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(0.1..2.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n),
        )
            .prop_map(|(h, g, feas, width, row)| {
                let mut qp = DenseQp::new(h, g);
                qp.xl = feas.iter().zip(&width).map(|(f, w)| f - w).collect();
                qp.xu = feas.iter().zip(&width).map(|(f, w)| f + w / 2.0).collect();
                qp.x0 = feas.clone();
                let v: f64 = row.iter().zip(&feas).map(|(a, b)| a * b).sum();
                qp.a_in = vec![row];
                qp.gl = vec![v - 0.5];
                qp.gu = vec![v + 0.25];
                qp
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn case_round_trip_preserves_fields(
        edits in prop::collection::vec((0usize..3, 0usize..9, 0usize..13, any_value()), 1..30)
    ) {
        let mut raw = parse_case(CASE9).unwrap();
        for (section, row, col, v) in edits {
            let rows = match section {
                0 => &mut raw.bus_rows,
                1 => &mut raw.gen_rows,
                _ => &mut raw.branch_rows,
            };
            let r = row % rows.len();
            let c = col % rows[r].len();
            rows[r][c] = v;
        }
        let again = parse_case(&write_raw(&raw)).unwrap();
        for (a, b) in [(&raw.bus_rows, &again.bus_rows), (&raw.gen_rows, &again.gen_rows),
                       (&raw.branch_rows, &again.branch_rows), (&raw.gencost_rows, &again.gencost_rows)] {
            prop_assert_eq!(a.len(), b.len());
            for (ra, rb) in a.iter().zip(b) {
                prop_assert_eq!(ra.len(), rb.len());
                for (x, y) in ra.iter().zip(rb) {
                    prop_assert!((x - y).abs() <= 1e-9 * x.abs(), "{} became {}", x, y);
                }
            }
        }
    }

    #[test]
    fn branch_is_passive(
        r in 0.0..0.1f64, x in 0.01..0.5f64, b in 0.0..1.0f64,
        ratio in prop_oneof![Just(0.0), 0.85..1.15f64], angle in -30.0..30.0f64,
        vf in (0.9..1.1f64, -0.5..0.5f64), vt in (0.9..1.1f64, -0.5..0.5f64),
    ) {
        let br = Branch { fbus: 1, tbus: 2, r, x, b, rate_a: 0.0, ratio, angle, in_service: true, row: vec![] };
        let [yff, yft, ytf, ytt] = branch_admittance(&br).unwrap();
        let vf = Complex64::from_polar(vf.0, vf.1);
        let vt = Complex64::from_polar(vt.0, vt.1);
        let sf = vf * (yff * vf + yft * vt).conj();
        let st = vt * (ytf * vf + ytt * vt).conj();
        // Series resistance only dissipates.
        prop_assert!((sf + st).re >= -1e-12);
        if angle == 0.0 {
            prop_assert!((yft - ytf).norm() <= 1e-12 * yft.norm());
        }
    }

    #[test]
    fn nominal_line_conserves_series_current(r in 0.0..0.1f64, x in 0.01..0.5f64) {
        let br = Branch { fbus: 1, tbus: 2, r, x, b: 0.0, rate_a: 0.0, ratio: 0.0, angle: 0.0, in_service: true, row: vec![] };
        let [yff, yft, ytf, ytt] = branch_admittance(&br).unwrap();
        prop_assert!((yff + ytf).norm() <= 1e-12 * yff.norm());
        prop_assert!((ytt + yft).norm() <= 1e-12 * ytt.norm());
    }

    #[test]
    fn weights_normalize_and_ignore_scale(
        weights in prop::collection::vec(1e-3..10.0f64, 1..8), k in 1e-3..1e3f64
    ) {
        let set = |scale: f64| ScenarioSet {
            scenarios: weights.iter().enumerate()
                .map(|(i, w)| Scenario { id: i + 1, weight: w * scale, wind_targets: Default::default() })
                .collect(),
        };
        let a = set(1.0).normalized_weights().unwrap();
        let b = set(k).normalized_weights().unwrap();
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert_eq!(set(1.0).base_index(), set(k).base_index());
    }

    #[test]
    fn composition_leaves_inputs_untouched_and_partitions_vectors(
        nc in 0usize..10, ns in 1usize..3, nt in 1usize..4, flat in any::<bool>(), preventive in any::<bool>()
    ) {
        let case = case9();
        let ctgs = parse_contingencies(CONT).unwrap().truncated(nc);
        let scen = parse_scenarios(SCEN).unwrap().truncated(ns);
        let periods = vec![case.clone(); nt];
        let (case0, ctgs0, scen0): (NetworkCase, ContingencySet, ScenarioSet) = (case.clone(), ctgs.clone(), scen.clone());
        let mode = if preventive { CouplingMode::preventive(false) } else { CouplingMode::corrective() };
        let opts = ComposeOptions { shape: if flat { TreeShape::Flat } else { TreeShape::Full }, ..Default::default() };
        let (nlp, map) = compose_with(&periods, Some(&scen), &ctgs, mode, 5.0, &opts).unwrap();
        prop_assert_eq!(&case, &case0);
        prop_assert_eq!(&ctgs, &ctgs0);
        prop_assert_eq!(&scen, &scen0);

        prop_assert_eq!(map.stages.len(), ns * (nc + 1) * nt);
        let mut next = 0;
        for k in 0..map.stages.len() {
            prop_assert_eq!(map.var_offset[k], next);
            next += nlp.stage(k).num_vars();
        }
        prop_assert_eq!(next, map.n_vars);
        prop_assert_eq!(map.n_vars, nlp.num_vars());
        prop_assert_eq!(map.n_eq, nlp.num_eq());
        prop_assert_eq!(map.n_ineq, nlp.num_ineq());
        for row in &map.coupling_rows {
            prop_assert!(row.stage_a > row.stage_b);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn convex_qp_reaches_known_solution((qp, xs) in known_qp()) {
        let r = solve(&qp, &SolverOptions { tol: 1e-10, ..Default::default() }).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        let err = r.x.iter().zip(&xs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-8, "error {}", err);
    }

    #[test]
    fn iteration_log_invariants(qp in bounded_qp()) {
        let opts = SolverOptions::default();
        let r = solve(&qp, &opts).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        prop_assert!(r.kkt.max() <= opts.tol);
        let point = KktPoint {
            x: &r.x,
            lambda_eq: &r.lambda_eq,
            lambda_ineq: &r.lambda_ineq,
            z_lb: &r.z_lb,
            z_ub: &r.z_ub,
            slack: Some((&r.slack, &r.slack_z_lb, &r.slack_z_ub)),
        };
        prop_assert!(kkt_error(&qp, &point, 0.0).unwrap().max() <= opts.tol);
        for rec in &r.iter_log {
            prop_assert!(rec.mu >= opts.tol / 10.0);
            prop_assert!(rec.min_gap > 0.0);
        }
        for w in r.iter_log.windows(2) {
            prop_assert!(w[1].mu <= w[0].mu);
            if w[1].mu == w[0].mu && w[1].penalty == w[0].penalty {
                let noise = 1e-9 * w[0].merit.abs().max(1.0);
                prop_assert!(w[1].merit <= w[0].merit + noise, "merit rose {} -> {}", w[0].merit, w[1].merit);
            }
        }
        for (x, (l, u)) in r.x.iter().zip(qp.xl.iter().zip(&qp.xu)) {
            prop_assert!(*x >= *l && *x <= *u);
        }
        let again = solve(&qp, &opts).unwrap();
        prop_assert_eq!(r, again);
    }
}
