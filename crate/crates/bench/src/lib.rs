//! Benchmark fixtures.

use gridopt::ingest::{parse_contingencies, parse_load_profile, parse_scenarios};
use gridopt::nlp::NlpProblem;
use gridopt::{ContingencySet, NetworkCase, ScenarioSet};

pub fn case9() -> NetworkCase {
    let raw = gridopt::parse_case(include_str!("../../../data/case9.m")).expect("case9 parses");
    NetworkCase::from_raw(&raw).expect("case9 is valid")
}

pub fn contingencies() -> ContingencySet {
    parse_contingencies(include_str!("../../../data/case9.cont")).expect("contingencies parse")
}

pub fn scenarios() -> ScenarioSet {
    parse_scenarios(include_str!("../../../data/case9_scen.csv")).expect("scenarios parse")
}

/// Three load steps of the 9-bus case.
pub fn periods() -> Vec<NetworkCase> {
    let lp = parse_load_profile(
        include_str!("../../../data/case9_pload.csv"),
        include_str!("../../../data/case9_qload.csv"),
    )
    .expect("profiles parse");
    let case = case9();
    (0..3).map(|t| case.apply_load_step(&lp, t).expect("profile matches case")).collect()
}

/// Lower triangle of `[H + I, Jᵀ; J, -1e-8 I]` at the initial point of `p`,
/// as (dimension, pattern, values).
pub fn kkt_matrix<P: NlpProblem>(p: &P) -> (usize, Vec<(usize, usize)>, Vec<f64>) {
    let n = p.num_vars();
    let m = p.num_constraints();
    let x = p.initial_point();
    let lambda = vec![1.0; m];
    let mut pattern = p.hessian_structure();
    let mut values = vec![0.0; pattern.len()];
    p.hessian_values(&x, 1.0, &lambda, &mut values);
    let jac = p.jacobian_structure();
    let mut jv = vec![0.0; jac.len()];
    p.jacobian_values(&x, &mut jv);
    pattern.extend(jac.iter().map(|&(r, c)| (n + r, c)));
    values.extend(jv);
    pattern.extend((0..n + m).map(|i| (i, i)));
    values.extend((0..n + m).map(|i| if i < n { 1.0 } else { -1e-8 }));
    (n + m, pattern, values)
}
