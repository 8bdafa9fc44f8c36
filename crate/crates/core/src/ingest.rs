//! Readers for contingency lists, wind scenarios and load profiles.
//!
//! Contingencies, one outage per line, `#` starts a comment:
//!
//! ```text
//! ctgc_id,KIND,bus_or_fbus,tbus_or_dash,ordinal
//! 1,GEN,2,-,1
//! 3,BRANCH,8,9,1
//! ```
//!
//! Scenarios: `scenario,weight,wind_<bus>_<ordinal>,...` with MW targets.
//! Load profiles: `time_min,<bus>,<bus>,...` with absolute MW or MVAr.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{Contingency, LoadProfile, Outage, OutageKind, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("line {line}: unknown outage kind '{kind}' (expected GEN or BRANCH)")]
    BadKind { line: usize, kind: String },
    #[error("line {line}: contingency {id} lists the same outage twice")]
    DuplicateOutage { line: usize, id: usize },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: bad header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: scenario {id} has negative weight {weight}")]
    NegativeWeight { line: usize, id: usize, weight: f64 },
    #[error("line {line}, column {column}: '{cell}' is not a number")]
    NonNumericCell { line: usize, column: usize, cell: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount { line: usize, expected: usize, found: usize },
    #[error("load profiles disagree on time steps: {0}")]
    TimeMismatch(String),
    #[error("line {line}: unknown load profile header '{header}'")]
    UnknownHeader { line: usize, header: String },
    #[error("load profile has no data rows")]
    EmptyProfile,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ContingencySet {
    pub contingencies: Vec<Contingency>,
}

impl ContingencySet {
    pub fn len(&self) -> usize {
        self.contingencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contingencies.is_empty()
    }

    /// Keep the first `n` contingencies in file order.
    pub fn truncated(&self, n: usize) -> ContingencySet {
        ContingencySet { contingencies: self.contingencies.iter().take(n).cloned().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    /// One scenario of weight 1 without wind targets.
    pub fn single() -> Self {
        ScenarioSet { scenarios: vec![Scenario { id: 1, weight: 1.0, wind_targets: BTreeMap::new() }] }
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn truncated(&self, n: usize) -> ScenarioSet {
        ScenarioSet { scenarios: self.scenarios.iter().take(n).cloned().collect() }
    }

    /// Weights scaled to sum to 1, or `None` if they sum to zero.
    pub fn normalized_weights(&self) -> Option<Vec<f64>> {
        let total: f64 = self.scenarios.iter().map(|s| s.weight).sum();
        if !(total > 0.0) || !total.is_finite() {
            return None;
        }
        Some(self.scenarios.iter().map(|s| s.weight / total).collect())
    }

    /// Position of the most probable scenario; ties go to the lowest id.
    pub fn base_index(&self) -> Option<usize> {
        (0..self.scenarios.len()).reduce(|best, k| {
            let (a, b) = (&self.scenarios[best], &self.scenarios[k]);
            if b.weight > a.weight || (b.weight == a.weight && b.id < a.id) {
                k
            } else {
                best
            }
        })
    }
}

/// Non-empty, non-comment lines with 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn parse_count(line: usize, what: &str, s: &str) -> Result<usize, IngestError> {
    s.parse::<usize>().map_err(|_| IngestError::MalformedLine { line, reason: format!("{what} '{s}' is not a non-negative integer") })
}

pub fn parse_contingencies(text: &str) -> Result<ContingencySet, IngestError> {
    let mut set: Vec<Contingency> = Vec::new();
    for (n, (line, content)) in data_lines(text).enumerate() {
        let f = fields(content);
        if n == 0 && f[0].parse::<usize>().is_err() {
            continue;
        }
        if f.len() != 5 {
            return Err(IngestError::FieldCount { line, expected: 5, found: f.len() });
        }
        let id = parse_count(line, "contingency id", f[0])?;
        let kind = match f[1].to_ascii_uppercase().as_str() {
            "GEN" => OutageKind::Gen,
            "BRANCH" => OutageKind::Branch,
            _ => return Err(IngestError::BadKind { line, kind: f[1].to_string() }),
        };
        let fbus = parse_count(line, "bus", f[2])?;
        let tbus = match (kind, f[3]) {
            (OutageKind::Gen, "-" | "") => 0,
            (OutageKind::Gen, other) => parse_count(line, "bus", other)?,
            (OutageKind::Branch, other) => parse_count(line, "to-bus", other)?,
        };
        let ordinal = parse_count(line, "ordinal", f[4])?;
        if ordinal == 0 {
            return Err(IngestError::MalformedLine { line, reason: "ordinals start at 1".into() });
        }
        let outage = Outage { kind, fbus, tbus: if kind == OutageKind::Gen { 0 } else { tbus }, ordinal };
        match set.iter_mut().find(|c| c.id == id) {
            Some(c) => {
                let same = |o: &Outage| {
                    o.kind == outage.kind
                        && o.ordinal == outage.ordinal
                        && ((o.fbus, o.tbus) == (outage.fbus, outage.tbus)
                            || (kind == OutageKind::Branch && (o.fbus, o.tbus) == (outage.tbus, outage.fbus)))
                };
                if c.outages.iter().any(same) {
                    return Err(IngestError::DuplicateOutage { line, id });
                }
                c.outages.push(outage);
            }
            None => set.push(Contingency { id, outages: vec![outage] }),
        }
    }
    Ok(ContingencySet { contingencies: set })
}

fn number(line: usize, column: usize, cell: &str) -> Result<f64, IngestError> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IngestError::NonNumericCell { line, column, cell: cell.to_string() }),
    }
}

pub fn parse_scenarios(text: &str) -> Result<ScenarioSet, IngestError> {
    let mut lines = data_lines(text);
    let Some((hline, header)) = lines.next() else {
        return Err(IngestError::MalformedHeader { line: 1, reason: "file is empty".into() });
    };
    let h = fields(header);
    if h.len() < 2 || !h[0].eq_ignore_ascii_case("scenario") || !h[1].eq_ignore_ascii_case("weight") {
        return Err(IngestError::MalformedHeader { line: hline, reason: "must start with 'scenario,weight'".into() });
    }
    let mut keys = Vec::new();
    for col in &h[2..] {
        let parts: Vec<&str> = col.split('_').collect();
        let key = match parts.as_slice() {
            ["wind", bus, ord] => bus.parse::<usize>().ok().zip(ord.parse::<usize>().ok().filter(|&o| o > 0)),
            _ => None,
        };
        match key {
            Some(k) if !keys.contains(&k) => keys.push(k),
            _ => {
                return Err(IngestError::MalformedHeader {
                    line: hline,
                    reason: format!("column '{col}' is not a distinct wind_<bus>_<ordinal>"),
                })
            }
        }
    }
    let mut scenarios: Vec<Scenario> = Vec::new();
    for (line, content) in lines {
        let f = fields(content);
        if f.len() != h.len() {
            return Err(IngestError::FieldCount { line, expected: h.len(), found: f.len() });
        }
        let id = f[0].parse::<usize>().map_err(|_| IngestError::NonNumericCell { line, column: 1, cell: f[0].to_string() })?;
        if scenarios.iter().any(|s| s.id == id) {
            return Err(IngestError::MalformedLine { line, reason: format!("scenario id {id} repeated") });
        }
        let weight = number(line, 2, f[1])?;
        if weight < 0.0 {
            return Err(IngestError::NegativeWeight { line, id, weight });
        }
        let mut wind_targets = BTreeMap::new();
        for (k, key) in keys.iter().enumerate() {
            wind_targets.insert(*key, number(line, k + 3, f[k + 2])?);
        }
        scenarios.push(Scenario { id, weight, wind_targets });
    }
    Ok(ScenarioSet { scenarios })
}

struct Table {
    times: Vec<f64>,
    series: BTreeMap<usize, Vec<f64>>,
}

fn parse_table(text: &str) -> Result<Table, IngestError> {
    let mut lines = data_lines(text);
    let Some((hline, header)) = lines.next() else {
        return Err(IngestError::EmptyProfile);
    };
    let h = fields(header);
    if !h[0].eq_ignore_ascii_case("time_min") {
        return Err(IngestError::UnknownHeader { line: hline, header: h[0].to_string() });
    }
    let mut buses = Vec::new();
    for col in &h[1..] {
        match col.parse::<usize>() {
            Ok(b) if !buses.contains(&b) => buses.push(b),
            _ => return Err(IngestError::UnknownHeader { line: hline, header: col.to_string() }),
        }
    }
    let mut times = Vec::new();
    let mut series: BTreeMap<usize, Vec<f64>> = buses.iter().map(|&b| (b, Vec::new())).collect();
    for (line, content) in lines {
        let f = fields(content);
        if f.len() != h.len() {
            return Err(IngestError::FieldCount { line, expected: h.len(), found: f.len() });
        }
        times.push(number(line, 1, f[0])?);
        for (k, bus) in buses.iter().enumerate() {
            let v = number(line, k + 2, f[k + 1])?;
            series.get_mut(bus).expect("bus column").push(v);
        }
    }
    if times.is_empty() {
        return Err(IngestError::EmptyProfile);
    }
    Ok(Table { times, series })
}

/// Combine the real and reactive load tables, which must share time stamps.
pub fn parse_load_profile(ptext: &str, qtext: &str) -> Result<LoadProfile, IngestError> {
    let p = parse_table(ptext)?;
    let q = parse_table(qtext)?;
    if p.times.len() != q.times.len() {
        return Err(IngestError::TimeMismatch(format!("{} real vs {} reactive steps", p.times.len(), q.times.len())));
    }
    if let Some(k) = (0..p.times.len()).find(|&k| p.times[k] != q.times[k]) {
        return Err(IngestError::TimeMismatch(format!("step {} is at {} vs {} minutes", k + 1, p.times[k], q.times[k])));
    }
    Ok(LoadProfile { times: p.times, pd: p.series, qd: q.series })
}

impl LoadProfile {
    /// Keep the first `n` time steps.
    pub fn truncated(&self, n: usize) -> LoadProfile {
        let cut = |m: &BTreeMap<usize, Vec<f64>>| m.iter().map(|(b, v)| (*b, v.iter().take(n).copied().collect())).collect();
        LoadProfile { times: self.times.iter().take(n).copied().collect(), pd: cut(&self.pd), qd: cut(&self.qd) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_generator_outage() {
        let set = parse_contingencies("1,GEN,2,-,1\n").unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.contingencies[0].outages, vec![Outage { kind: OutageKind::Gen, fbus: 2, tbus: 0, ordinal: 1 }]);
    }

    #[test]
    fn lines_sharing_an_id_merge() {
        let set = parse_contingencies("# header comment\nid,kind,from,to,ordinal\n3,BRANCH,8,9,1\n3,GEN,1,-,1\n4,BRANCH,4,5,1\n").unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.contingencies[0].id, 3);
        assert_eq!(set.contingencies[0].outages.len(), 2);
        assert_eq!(set.contingencies[1].id, 4);
    }

    #[test]
    fn nine_bus_list() {
        let set = parse_contingencies(include_str!("../../../data/case9.cont")).unwrap();
        assert_eq!(set.len(), 9);
        assert!(set.contingencies.iter().all(|c| c.outages.len() == 1));
        assert_eq!(set.contingencies.iter().filter(|c| c.outages[0].kind == OutageKind::Gen).count(), 3);
        assert_eq!(set.truncated(4).len(), 4);
    }

    #[test]
    fn contingency_errors() {
        assert!(matches!(parse_contingencies("1,LOAD,2,-,1"), Err(IngestError::BadKind { line: 1, .. })));
        assert!(matches!(parse_contingencies("1,GEN,2,-"), Err(IngestError::FieldCount { line: 1, .. })));
        assert!(matches!(
            parse_contingencies("2,BRANCH,4,5,1\n2,BRANCH,5,4,1"),
            Err(IngestError::DuplicateOutage { line: 2, id: 2 })
        ));
        assert!(matches!(parse_contingencies("1,GEN,x,-,1"), Err(IngestError::MalformedLine { .. })));
    }

    #[test]
    fn wind_scenarios() {
        let set = parse_scenarios(include_str!("../../../data/case9_scen.csv")).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.scenarios[0].wind_targets[&(3, 1)], 75.0);
        assert_eq!(set.scenarios[1].wind_targets[&(3, 1)], 85.0);
        assert_eq!(set.base_index(), Some(0));
    }

    #[test]
    fn weight_normalization_and_ties() {
        let set = parse_scenarios("scenario,weight\n7,2\n5,2\n").unwrap();
        assert_eq!(set.normalized_weights().unwrap(), vec![0.5, 0.5]);
        assert_eq!(set.base_index(), Some(1));
        let single = parse_scenarios("scenario,weight\n1,1\n").unwrap();
        assert_eq!(single.normalized_weights().unwrap(), vec![1.0]);
        let zero = parse_scenarios("scenario,weight\n1,0\n").unwrap();
        assert!(zero.normalized_weights().is_none());
    }

    #[test]
    fn scenario_errors() {
        assert!(matches!(parse_scenarios("id,weight\n1,1"), Err(IngestError::MalformedHeader { .. })));
        assert!(matches!(parse_scenarios("scenario,weight,solar_3_1\n1,1,2"), Err(IngestError::MalformedHeader { .. })));
        assert!(matches!(parse_scenarios("scenario,weight\n1,-0.5"), Err(IngestError::NegativeWeight { line: 2, .. })));
        assert!(matches!(
            parse_scenarios("scenario,weight,wind_3_1\n1,1,abc"),
            Err(IngestError::NonNumericCell { line: 2, column: 3, .. })
        ));
    }

    #[test]
    fn load_profile_from_files() {
        let lp = parse_load_profile(include_str!("../../../data/case9_pload.csv"), include_str!("../../../data/case9_qload.csv")).unwrap();
        assert_eq!(lp.steps(), 3);
        assert_eq!(lp.pd.len(), 3);
        assert_eq!(lp.pd[&5], vec![75.0, 78.0, 81.0]);
        assert_eq!(lp.qd[&8], vec![35.0, 36.0, 37.0]);
        assert_eq!(lp.truncated(2).steps(), 2);
    }

    #[test]
    fn load_profile_errors() {
        assert!(matches!(parse_load_profile("time_min,5\n", "time_min,5\n"), Err(IngestError::EmptyProfile)));
        assert!(matches!(
            parse_load_profile("time_min,5\n0,1\n5,2\n", "time_min,5\n0,1\n"),
            Err(IngestError::TimeMismatch(_))
        ));
        assert!(matches!(parse_load_profile("t,5\n0,1\n", "time_min,5\n0,1\n"), Err(IngestError::UnknownHeader { .. })));
        assert!(matches!(parse_load_profile("time_min,bus5\n0,1\n", "time_min,5\n0,1\n"), Err(IngestError::UnknownHeader { .. })));
    }
}
