//! Typed network model and the stage transformations applied to it:
//! contingencies, wind scenarios and load profile steps.
//!
//! All quantities are stored in the file units (MW, MVAr, degrees); the
//! per-unit conversion happens when the optimization problem is built.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matpower::RawCase;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("no in-service reference bus (type 3)")]
    NoReferenceBus,
    #[error("{count} reference buses found, exactly one is required")]
    MultipleReferenceBuses { count: usize },
    #[error("{element} references unknown bus {bus}")]
    DanglingReference { element: String, bus: usize },
    #[error("gencost row {row}: unsupported cost model ({reason})")]
    UnsupportedCostModel { row: usize, reason: String },
    #[error("branch {fbus}-{tbus} has zero impedance")]
    ZeroImpedance { fbus: usize, tbus: usize },
    #[error("unknown or out-of-service element: {0}")]
    UnknownElement(String),
    #[error("contingency {id} islands the network into {islands} islands")]
    IslandingDetected { id: usize, islands: usize },
    #[error("scenario {scenario} targets generator at bus {bus} (ordinal {ordinal}) which is not a wind unit")]
    TargetOnNonWind {
        scenario: usize,
        bus: usize,
        ordinal: usize,
    },
    #[error("scenario {scenario}: invalid wind target {value} MW")]
    InvalidTarget { scenario: usize, value: f64 },
    #[error("load profile references unknown bus {0}")]
    UnknownBus(usize),
    #[error("load step {index} out of range ({steps} steps)")]
    IndexOutOfRange { index: usize, steps: usize },
    #[error("invalid bus data for bus {bus}: {reason}")]
    InvalidBus { bus: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusType {
    Pq,
    Pv,
    Ref,
    Isolated,
}

impl BusType {
    pub fn from_code(code: f64) -> Option<Self> {
        match code as i64 {
            1 => Some(BusType::Pq),
            2 => Some(BusType::Pv),
            3 => Some(BusType::Ref),
            4 => Some(BusType::Isolated),
            _ => None,
        }
    }

    pub fn code(self) -> f64 {
        match self {
            BusType::Pq => 1.0,
            BusType::Pv => 2.0,
            BusType::Ref => 3.0,
            BusType::Isolated => 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub btype: BusType,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vm: f64,
    /// Degrees.
    pub va: f64,
    pub base_kv: f64,
    pub vmax: f64,
    pub vmin: f64,
    /// Source row, kept so unknown columns survive a write.
    pub row: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub in_service: bool,
    pub pmax: f64,
    pub pmin: f64,
    /// MW per 30 minutes; `None` when the column is absent or non-positive.
    pub ramp_30: Option<f64>,
    pub is_wind: bool,
    pub row: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub fbus: usize,
    pub tbus: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    /// MVA, 0 means unlimited.
    pub rate_a: f64,
    /// Off-nominal tap, 0 in the file means 1.
    pub ratio: f64,
    /// Degrees.
    pub angle: f64,
    pub in_service: bool,
    pub row: Vec<f64>,
}

/// Quadratic cost `c2 P^2 + c1 P + c0` with `P` in MW, result in $/h.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GenCost {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl GenCost {
    pub fn eval(&self, p_mw: f64) -> f64 {
        (self.c2 * p_mw + self.c1) * p_mw + self.c0
    }

    pub fn is_zero(&self) -> bool {
        self.c2 == 0.0 && self.c1 == 0.0 && self.c0 == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub gens: Vec<Generator>,
    pub branches: Vec<Branch>,
    pub costs: Vec<GenCost>,
    /// Source gencost rows, used on write.
    pub cost_rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutageKind {
    Gen,
    Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Outage {
    pub kind: OutageKind,
    /// Generator bus, or branch from-bus.
    pub fbus: usize,
    /// Branch to-bus; unused for generators.
    pub tbus: usize,
    /// 1-based position among generators at `fbus` (or parallel branches
    /// between `fbus` and `tbus`) in file order.
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contingency {
    pub id: usize,
    pub outages: Vec<Outage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: usize,
    pub weight: f64,
    /// (bus, ordinal) -> MW
    pub wind_targets: BTreeMap<(usize, usize), f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadProfile {
    pub times: Vec<f64>,
    pub pd: BTreeMap<usize, Vec<f64>>,
    pub qd: BTreeMap<usize, Vec<f64>>,
}

impl LoadProfile {
    pub fn steps(&self) -> usize {
        self.times.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Islands {
    pub count: usize,
    /// Island label per bus (same order as `NetworkCase::buses`); `None` for
    /// isolated buses.
    pub labels: Vec<Option<usize>>,
}

impl NetworkCase {
    /// Build the typed model from parsed file data.
    pub fn from_raw(raw: &RawCase) -> Result<Self, GridError> {
        let mut buses = Vec::with_capacity(raw.bus_rows.len());
        for row in &raw.bus_rows {
            let id = row[0] as usize;
            let btype = BusType::from_code(row[1]).ok_or_else(|| GridError::InvalidBus {
                bus: id,
                reason: format!("bus type {}", row[1]),
            })?;
            let bus = Bus {
                id,
                btype,
                pd: row[2],
                qd: row[3],
                gs: row[4],
                bs: row[5],
                vm: row[7],
                va: row[8],
                base_kv: row[9],
                vmax: row[11],
                vmin: row[12],
                row: row.clone(),
            };
            if btype != BusType::Isolated && !(bus.vmin > 0.0 && bus.vmin <= bus.vmax) {
                return Err(GridError::InvalidBus {
                    bus: id,
                    reason: format!("voltage limits [{}, {}]", bus.vmin, bus.vmax),
                });
            }
            buses.push(bus);
        }

        let mut costs = Vec::with_capacity(raw.gen_rows.len());
        for (i, row) in raw.gencost_rows.iter().enumerate() {
            costs.push(parse_cost(i + 1, row)?);
        }
        if costs.is_empty() {
            costs = vec![GenCost::default(); raw.gen_rows.len()];
        }

        let gens = raw
            .gen_rows
            .iter()
            .zip(&costs)
            .map(|(row, cost)| {
                let ramp = row.get(18).copied().filter(|r| *r > 0.0);
                let pmin = row[9];
                Generator {
                    bus: row[0] as usize,
                    pg: row[1],
                    qg: row[2],
                    qmax: row[3],
                    qmin: row[4],
                    vg: row[5],
                    in_service: row[7] > 0.0,
                    pmax: row[8],
                    pmin,
                    ramp_30: ramp,
                    is_wind: cost.is_zero() && pmin == 0.0,
                    row: row.clone(),
                }
            })
            .collect();

        let branches = raw
            .branch_rows
            .iter()
            .map(|row| Branch {
                fbus: row[0] as usize,
                tbus: row[1] as usize,
                r: row[2],
                x: row[3],
                b: row[4],
                rate_a: row[5],
                ratio: row[8],
                angle: row[9],
                in_service: row[10] > 0.0,
                row: row.clone(),
            })
            .collect();

        let case = NetworkCase {
            name: raw.function_name.clone(),
            base_mva: raw.base_mva,
            buses,
            gens,
            branches,
            costs,
            cost_rows: raw.gencost_rows.clone(),
        };
        case.validate()?;
        Ok(case)
    }

    /// Check references and the single-reference-bus rule.
    pub fn validate(&self) -> Result<(), GridError> {
        let index = self.bus_index();
        for g in &self.gens {
            if !index.contains_key(&g.bus) {
                return Err(GridError::DanglingReference {
                    element: "generator".into(),
                    bus: g.bus,
                });
            }
        }
        for br in &self.branches {
            for bus in [br.fbus, br.tbus] {
                if !index.contains_key(&bus) {
                    return Err(GridError::DanglingReference {
                        element: format!("branch {}-{}", br.fbus, br.tbus),
                        bus,
                    });
                }
            }
            if br.in_service && br.r == 0.0 && br.x == 0.0 {
                return Err(GridError::ZeroImpedance {
                    fbus: br.fbus,
                    tbus: br.tbus,
                });
            }
        }
        self.reference_bus().map(|_| ())
    }

    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    /// Position of the unique reference bus.
    pub fn reference_bus(&self) -> Result<usize, GridError> {
        let refs: Vec<usize> = self
            .buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.btype == BusType::Ref)
            .map(|(i, _)| i)
            .collect();
        match refs.len() {
            0 => Err(GridError::NoReferenceBus),
            1 => Ok(refs[0]),
            n => Err(GridError::MultipleReferenceBuses { count: n }),
        }
    }

    pub fn gen_position(&self, bus: usize, ordinal: usize) -> Option<usize> {
        self.gens
            .iter()
            .enumerate()
            .filter(|(_, g)| g.bus == bus)
            .nth(ordinal.checked_sub(1)?)
            .map(|(i, _)| i)
    }

    /// Branch by endpoints; matches either orientation.
    pub fn branch_position(&self, fbus: usize, tbus: usize, ordinal: usize) -> Option<usize> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| (b.fbus == fbus && b.tbus == tbus) || (b.fbus == tbus && b.tbus == fbus))
            .nth(ordinal.checked_sub(1)?)
            .map(|(i, _)| i)
    }

    /// Ordinal of the generator at position `g` among generators at its bus.
    pub fn gen_ordinal(&self, g: usize) -> usize {
        let bus = self.gens[g].bus;
        self.gens[..g].iter().filter(|o| o.bus == bus).count() + 1
    }

    /// Island count over in-service branches, ignoring isolated buses.
    pub fn check_connectivity(&self) -> Islands {
        let index = self.bus_index();
        let n = self.buses.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for br in self.branches.iter().filter(|b| b.in_service) {
            let (f, t) = (index[&br.fbus], index[&br.tbus]);
            if self.buses[f].btype == BusType::Isolated || self.buses[t].btype == BusType::Isolated {
                continue;
            }
            let (rf, rt) = (find(&mut parent, f), find(&mut parent, t));
            if rf != rt {
                parent[rf.max(rt)] = rf.min(rt);
            }
        }
        let mut label_of_root = HashMap::new();
        let mut labels = vec![None; n];
        for i in 0..n {
            if self.buses[i].btype == BusType::Isolated {
                continue;
            }
            let root = find(&mut parent, i);
            let next = label_of_root.len();
            labels[i] = Some(*label_of_root.entry(root).or_insert(next));
        }
        Islands {
            count: label_of_root.len(),
            labels,
        }
    }

    /// Copy of the case with the listed elements switched off.
    ///
    /// When the outages leave the reference bus without an in-service
    /// generator, the bus hosting the in-service generator with the largest
    /// `pmax` becomes the reference.
    pub fn apply_contingency(&self, c: &Contingency) -> Result<NetworkCase, GridError> {
        let mut out = self.clone();
        for o in &c.outages {
            match o.kind {
                OutageKind::Gen => {
                    let g = self
                        .gen_position(o.fbus, o.ordinal)
                        .filter(|&g| out.gens[g].in_service)
                        .ok_or_else(|| {
                            GridError::UnknownElement(format!(
                                "contingency {}: generator {} at bus {}",
                                c.id, o.ordinal, o.fbus
                            ))
                        })?;
                    out.gens[g].in_service = false;
                }
                OutageKind::Branch => {
                    let b = self
                        .branch_position(o.fbus, o.tbus, o.ordinal)
                        .filter(|&b| out.branches[b].in_service)
                        .ok_or_else(|| {
                            GridError::UnknownElement(format!(
                                "contingency {}: branch {}-{} ({})",
                                c.id, o.fbus, o.tbus, o.ordinal
                            ))
                        })?;
                    out.branches[b].in_service = false;
                }
            }
        }
        let islands = out.check_connectivity();
        if islands.count > 1 {
            return Err(GridError::IslandingDetected {
                id: c.id,
                islands: islands.count,
            });
        }
        out.reassign_reference()?;
        Ok(out)
    }

    fn reassign_reference(&mut self) -> Result<(), GridError> {
        let r = self.reference_bus()?;
        let ref_id = self.buses[r].id;
        if self.gens.iter().any(|g| g.in_service && g.bus == ref_id) {
            return Ok(());
        }
        let mut best: Option<&Generator> = None;
        for g in self.gens.iter().filter(|g| g.in_service) {
            if best.map_or(true, |b| g.pmax > b.pmax) {
                best = Some(g);
            }
        }
        let Some(new_ref) = best.map(|g| g.bus) else {
            return Ok(());
        };
        let index = self.bus_index();
        self.buses[r].btype = BusType::Pq;
        self.buses[index[&new_ref]].btype = BusType::Ref;
        Ok(())
    }

    /// Copy of the case with wind generators capped at the scenario targets.
    pub fn apply_scenario(&self, s: &Scenario) -> Result<NetworkCase, GridError> {
        let mut out = self.clone();
        for (&(bus, ordinal), &target) in &s.wind_targets {
            if !(target >= 0.0) || !target.is_finite() {
                return Err(GridError::InvalidTarget {
                    scenario: s.id,
                    value: target,
                });
            }
            let g = self
                .gen_position(bus, ordinal)
                .ok_or_else(|| GridError::UnknownElement(format!("generator {ordinal} at bus {bus}")))?;
            if !self.gens[g].is_wind {
                return Err(GridError::TargetOnNonWind {
                    scenario: s.id,
                    bus,
                    ordinal,
                });
            }
            out.gens[g].pmax = target;
            out.gens[g].pmin = 0.0;
            out.costs[g] = GenCost::default();
        }
        Ok(out)
    }

    /// Copy of the case with profiled bus loads replaced by step `t_index`.
    pub fn apply_load_step(&self, lp: &LoadProfile, t_index: usize) -> Result<NetworkCase, GridError> {
        if lp.pd.is_empty() && lp.qd.is_empty() {
            return Ok(self.clone());
        }
        if t_index >= lp.steps() {
            return Err(GridError::IndexOutOfRange {
                index: t_index,
                steps: lp.steps(),
            });
        }
        let index = self.bus_index();
        let mut out = self.clone();
        for (bus, series) in &lp.pd {
            let i = *index.get(bus).ok_or(GridError::UnknownBus(*bus))?;
            out.buses[i].pd = series[t_index];
        }
        for (bus, series) in &lp.qd {
            let i = *index.get(bus).ok_or(GridError::UnknownBus(*bus))?;
            out.buses[i].qd = series[t_index];
        }
        Ok(out)
    }

    /// Convert back to raw matrices, writing the typed fields over the
    /// source rows.
    pub fn to_raw(&self) -> RawCase {
        let bus_rows = self
            .buses
            .iter()
            .map(|b| {
                let mut row = b.row.clone();
                row.resize(row.len().max(13), 0.0);
                row[0] = b.id as f64;
                row[1] = b.btype.code();
                row[2] = b.pd;
                row[3] = b.qd;
                row[4] = b.gs;
                row[5] = b.bs;
                row[7] = b.vm;
                row[8] = b.va;
                row[9] = b.base_kv;
                row[11] = b.vmax;
                row[12] = b.vmin;
                row
            })
            .collect();
        let gen_rows = self
            .gens
            .iter()
            .map(|g| {
                let mut row = g.row.clone();
                row.resize(row.len().max(10), 0.0);
                row[0] = g.bus as f64;
                row[1] = g.pg;
                row[2] = g.qg;
                row[3] = g.qmax;
                row[4] = g.qmin;
                row[5] = g.vg;
                row[7] = if g.in_service { 1.0 } else { 0.0 };
                row[8] = g.pmax;
                row[9] = g.pmin;
                row
            })
            .collect();
        let branch_rows = self
            .branches
            .iter()
            .map(|br| {
                let mut row = br.row.clone();
                row.resize(row.len().max(13), 0.0);
                row[10] = if br.in_service { 1.0 } else { 0.0 };
                row
            })
            .collect();
        let gencost_rows = if self.cost_rows.is_empty() {
            Vec::new()
        } else {
            self.costs
                .iter()
                .zip(&self.cost_rows)
                .map(|(c, src)| {
                    if polynomial_equals(src, c) {
                        src.clone()
                    } else {
                        vec![2.0, src[1], src[2], 3.0, c.c2, c.c1, c.c0]
                    }
                })
                .collect()
        };
        RawCase {
            function_name: self.name.clone(),
            base_mva: self.base_mva,
            bus_rows,
            gen_rows,
            branch_rows,
            gencost_rows,
        }
    }
}

fn polynomial_equals(src: &[f64], c: &GenCost) -> bool {
    matches!(parse_cost(0, src), Ok(parsed) if parsed == *c)
}

fn parse_cost(row_no: usize, row: &[f64]) -> Result<GenCost, GridError> {
    let model = row[0];
    if model != 2.0 {
        return Err(GridError::UnsupportedCostModel {
            row: row_no,
            reason: format!("model {model}, only polynomial (2) is supported"),
        });
    }
    let ncost = row[3] as usize;
    if ncost > 3 {
        return Err(GridError::UnsupportedCostModel {
            row: row_no,
            reason: format!("polynomial with {ncost} coefficients, at most 3 are supported"),
        });
    }
    if row.len() < 4 + ncost {
        return Err(GridError::UnsupportedCostModel {
            row: row_no,
            reason: format!("{ncost} coefficients declared, {} present", row.len() - 4),
        });
    }
    let coeffs = &row[4..4 + ncost];
    // Highest order first.
    let mut c = [0.0; 3];
    for (k, &v) in coeffs.iter().rev().enumerate() {
        c[k] = v;
    }
    Ok(GenCost {
        c0: c[0],
        c1: c[1],
        c2: c[2],
    })
}

/// Pi-model admittances `(yff, yft, ytf, ytt)` in per unit.
pub fn branch_admittance(br: &Branch) -> Result<[Complex64; 4], GridError> {
    if br.r == 0.0 && br.x == 0.0 {
        return Err(GridError::ZeroImpedance {
            fbus: br.fbus,
            tbus: br.tbus,
        });
    }
    let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
    let tap_mag = if br.ratio == 0.0 { 1.0 } else { br.ratio };
    let tap = Complex64::from_polar(tap_mag, br.angle.to_radians());
    let ych = Complex64::new(0.0, br.b / 2.0);
    let ytt = ys + ych;
    let yff = ytt / (tap_mag * tap_mag);
    let yft = -ys / tap.conj();
    let ytf = -ys / tap;
    Ok([yff, yft, ytf, ytt])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matpower::parse_case;

    fn case9() -> NetworkCase {
        let raw = parse_case(include_str!("../../../data/case9.m")).unwrap();
        NetworkCase::from_raw(&raw).unwrap()
    }

    fn branch(r: f64, x: f64, b: f64, ratio: f64, angle: f64) -> Branch {
        Branch {
            fbus: 1,
            tbus: 2,
            r,
            x,
            b,
            rate_a: 0.0,
            ratio,
            angle,
            in_service: true,
            row: vec![],
        }
    }

    #[test]
    fn typed_case9() {
        let c = case9();
        assert_eq!(c.reference_bus().unwrap(), 0);
        assert!(c.gens[2].is_wind);
        assert!(!c.gens[0].is_wind);
        assert_eq!(c.gens[0].ramp_30, Some(90.0));
        assert_eq!(c.costs[0], GenCost { c2: 0.11, c1: 5.0, c0: 150.0 });
    }

    #[test]
    fn no_reference_bus() {
        let mut raw = parse_case(include_str!("../../../data/case9.m")).unwrap();
        raw.bus_rows[0][1] = 2.0;
        assert_eq!(NetworkCase::from_raw(&raw), Err(GridError::NoReferenceBus));
    }

    #[test]
    fn zero_cost_with_pmin_is_not_wind() {
        let mut raw = parse_case(include_str!("../../../data/case9.m")).unwrap();
        raw.gen_rows[2][9] = 10.0;
        let c = NetworkCase::from_raw(&raw).unwrap();
        assert!(!c.gens[2].is_wind);
    }

    #[test]
    fn piecewise_linear_cost_rejected() {
        let mut raw = parse_case(include_str!("../../../data/case9.m")).unwrap();
        raw.gencost_rows[0][0] = 1.0;
        assert!(matches!(
            NetworkCase::from_raw(&raw),
            Err(GridError::UnsupportedCostModel { row: 1, .. })
        ));
    }

    #[test]
    fn dangling_generator_bus() {
        let mut raw = parse_case(include_str!("../../../data/case9.m")).unwrap();
        raw.gen_rows[1][0] = 42.0;
        assert!(matches!(
            NetworkCase::from_raw(&raw),
            Err(GridError::DanglingReference { bus: 42, .. })
        ));
    }

    #[test]
    fn admittance_of_listing_branch() {
        let [yff, yft, ytf, ytt] = branch_admittance(&branch(0.0001, 0.0576, 0.0001, 0.0, 0.0)).unwrap();
        // 1/(r + jx) = (r - jx)/(r^2 + x^2)
        let d = 0.0001f64.powi(2) + 0.0576f64.powi(2);
        let (g, bser) = (0.0001 / d, -0.0576 / d);
        assert!((yff.re - g).abs() < 1e-12);
        assert!((yff.im - (bser + 0.00005)).abs() < 1e-9);
        assert!((yft.re + g).abs() < 1e-12 && (yft.im + bser).abs() < 1e-9);
        assert_eq!(yft, ytf);
        assert_eq!(yff, ytt);
    }

    #[test]
    fn unit_reactance() {
        let [yff, yft, ytf, ytt] = branch_admittance(&branch(0.0, 1.0, 0.0, 1.0, 0.0)).unwrap();
        let j = Complex64::new(0.0, 1.0);
        assert!((yff + j).norm() < 1e-15 && (ytt + j).norm() < 1e-15);
        assert!((yft - j).norm() < 1e-15 && (ytf - j).norm() < 1e-15);
    }

    #[test]
    fn half_turn_phase_shift_flips_sign() {
        let br = branch(0.0, 1.0, 0.0, 1.0, 180.0);
        let [_, yft, ytf, _] = branch_admittance(&br).unwrap();
        let y = Complex64::new(0.0, -1.0);
        assert!((yft - y).norm() < 1e-12);
        assert!((ytf - y).norm() < 1e-12);
    }

    #[test]
    fn zero_impedance_rejected() {
        assert!(matches!(
            branch_admittance(&branch(0.0, 0.0, 0.0, 0.0, 0.0)),
            Err(GridError::ZeroImpedance { .. })
        ));
    }

    #[test]
    fn connectivity() {
        let c = case9();
        assert_eq!(c.check_connectivity().count, 1);

        let mut cut = c.clone();
        for (f, t) in [(4, 5), (5, 7)] {
            let b = cut.branch_position(f, t, 1).unwrap();
            cut.branches[b].in_service = false;
        }
        let isl = cut.check_connectivity();
        assert_eq!(isl.count, 2);
        let five = isl.labels[4];
        assert!(isl.labels.iter().enumerate().all(|(i, l)| (i == 4) == (*l == five)));

        let mut bare = c.clone();
        bare.branches.clear();
        assert_eq!(bare.check_connectivity().count, 9);
    }

    #[test]
    fn branch_outage() {
        let c = case9();
        let before = c.clone();
        let ctg = Contingency {
            id: 1,
            outages: vec![Outage { kind: OutageKind::Branch, fbus: 8, tbus: 9, ordinal: 1 }],
        };
        let out = c.apply_contingency(&ctg).unwrap();
        assert_eq!(out.branches.iter().filter(|b| b.in_service).count(), 8);
        assert!(!out.branches[8].in_service);
        assert_eq!(c, before);
    }

    #[test]
    fn wind_outage_leaves_dispatchable_capacity() {
        let c = case9();
        let ctg = Contingency {
            id: 3,
            outages: vec![Outage { kind: OutageKind::Gen, fbus: 3, tbus: 0, ordinal: 1 }],
        };
        let out = c.apply_contingency(&ctg).unwrap();
        let cap: f64 = out.gens.iter().filter(|g| g.in_service).map(|g| g.pmax).sum();
        assert_eq!(cap, 650.0);
    }

    #[test]
    fn reference_moves_when_its_generator_trips() {
        let c = case9();
        let ctg = Contingency {
            id: 1,
            outages: vec![Outage { kind: OutageKind::Gen, fbus: 1, tbus: 0, ordinal: 1 }],
        };
        let out = c.apply_contingency(&ctg).unwrap();
        assert_eq!(out.buses[out.reference_bus().unwrap()].id, 2);
        assert_eq!(out.buses[0].btype, BusType::Pq);
    }

    #[test]
    fn islanding_outage_rejected() {
        let c = case9();
        let ctg = Contingency {
            id: 7,
            outages: vec![Outage { kind: OutageKind::Branch, fbus: 1, tbus: 4, ordinal: 1 }],
        };
        assert!(matches!(
            c.apply_contingency(&ctg),
            Err(GridError::IslandingDetected { id: 7, islands: 2 })
        ));
    }

    #[test]
    fn unknown_outage_target() {
        let c = case9();
        let ctg = Contingency {
            id: 2,
            outages: vec![Outage { kind: OutageKind::Branch, fbus: 1, tbus: 9, ordinal: 1 }],
        };
        assert!(matches!(c.apply_contingency(&ctg), Err(GridError::UnknownElement(_))));
    }

    #[test]
    fn scenario_targets() {
        let c = case9();
        let mut s = Scenario { id: 2, weight: 0.4, wind_targets: BTreeMap::new() };
        assert_eq!(c.apply_scenario(&s).unwrap(), c);
        s.wind_targets.insert((3, 1), 85.0);
        let out = c.apply_scenario(&s).unwrap();
        assert_eq!(out.gens[2].pmax, 85.0);
        s.wind_targets.insert((3, 1), 75.0);
        assert_eq!(c.apply_scenario(&s).unwrap().gens[2].pmax, c.gens[2].pmax);
        s.wind_targets.insert((2, 1), 10.0);
        assert!(matches!(c.apply_scenario(&s), Err(GridError::TargetOnNonWind { bus: 2, .. })));
    }

    #[test]
    fn load_steps() {
        let c = case9();
        let empty = LoadProfile::default();
        assert_eq!(c.apply_load_step(&empty, 0).unwrap(), c);

        let mut lp = LoadProfile { times: vec![0.0, 5.0], ..Default::default() };
        lp.pd.insert(5, vec![75.0, 80.0]);
        let out = c.apply_load_step(&lp, 1).unwrap();
        assert_eq!(out.buses[4].pd, 80.0);
        assert_eq!(out.buses[5].pd, 90.0);
        assert_eq!(out.buses[7].pd, 100.0);
        assert_eq!(c.apply_load_step(&lp, 0).unwrap(), c);
        assert!(matches!(c.apply_load_step(&lp, 2), Err(GridError::IndexOutOfRange { .. })));
        lp.pd.insert(77, vec![1.0, 2.0]);
        assert_eq!(c.apply_load_step(&lp, 0), Err(GridError::UnknownBus(77)));
    }
}
