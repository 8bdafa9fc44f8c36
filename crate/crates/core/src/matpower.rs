//! Reading and writing MATPOWER case files.
//!
//! Only the numeric matrices `bus`, `gen`, `branch` and `gencost` plus the
//! scalar `baseMVA` are interpreted. Other assignments (`mpc.version`,
//! `mpc.bus_name = {...}`, extension matrices) are skipped.

use std::fmt::Write as _;

use thiserror::Error;

use crate::acopf::SolvedCase;

pub const MIN_BUS_COLS: usize = 13;
pub const MIN_GEN_COLS: usize = 10;
pub const MIN_BRANCH_COLS: usize = 13;
pub const MIN_GENCOST_COLS: usize = 4;

/// Column offsets of the branch flow results appended to solved cases.
pub const BR_PF: usize = 13;
pub const BR_QF: usize = 14;
pub const BR_PT: usize = 15;
pub const BR_QT: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseFormatError {
    #[error("missing required section `mpc.{0}`")]
    MissingSection(&'static str),
    #[error("line {line}: malformed token `{token}` in `mpc.{section}`")]
    MalformedRow {
        section: String,
        line: usize,
        token: String,
    },
    #[error("line {line}: `mpc.{section}` row has {found} columns, at least {min} required")]
    ShortRow {
        section: String,
        line: usize,
        found: usize,
        min: usize,
    },
    #[error("line {line}: unterminated matrix `mpc.{section}`")]
    Unterminated { section: String, line: usize },
    #[error("baseMVA must be positive, got {0}")]
    BadBaseMva(f64),
    #[error("gencost has {costs} rows but gen has {gens}")]
    CostCountMismatch { gens: usize, costs: usize },
}

/// Numeric content of a case file, rows in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawCase {
    pub function_name: String,
    pub base_mva: f64,
    pub bus_rows: Vec<Vec<f64>>,
    pub gen_rows: Vec<Vec<f64>>,
    pub branch_rows: Vec<Vec<f64>>,
    pub gencost_rows: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Bus,
    Gen,
    Branch,
    GenCost,
    Other,
}

impl Section {
    fn from_name(name: &str) -> Self {
        match name {
            "bus" => Section::Bus,
            "gen" => Section::Gen,
            "branch" => Section::Branch,
            "gencost" => Section::GenCost,
            _ => Section::Other,
        }
    }

    fn min_cols(self) -> usize {
        match self {
            Section::Bus => MIN_BUS_COLS,
            Section::Gen => MIN_GEN_COLS,
            Section::Branch => MIN_BRANCH_COLS,
            Section::GenCost => MIN_GENCOST_COLS,
            Section::Other => 0,
        }
    }
}

struct OpenMatrix {
    name: String,
    section: Section,
    start_line: usize,
    closer: char,
}

/// Parse the text of a MATPOWER case file.
pub fn parse_case(text: &str) -> Result<RawCase, CaseFormatError> {
    let mut raw = RawCase::default();
    let mut base_mva = None;
    let mut seen = [false; 4];
    let mut open: Option<OpenMatrix> = None;

    for (idx, full_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(full_line).trim_end_matches('\r');

        let mut rest = line;
        if open.is_none() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(sig) = trimmed.strip_prefix("function") {
                if let Some((_, name)) = sig.split_once('=') {
                    raw.function_name = name.trim().trim_end_matches(';').trim().to_string();
                }
                continue;
            }
            let Some(assign) = trimmed.strip_prefix("mpc.") else {
                continue;
            };
            let Some((name, rhs)) = assign.split_once('=') else {
                continue;
            };
            let name = name.trim();
            let rhs = rhs.trim_start();
            if let Some(body) = rhs.strip_prefix('[') {
                let section = Section::from_name(name);
                if let Some(i) = section_slot(section) {
                    seen[i] = true;
                }
                open = Some(OpenMatrix {
                    name: name.to_string(),
                    section,
                    start_line: line_no,
                    closer: ']',
                });
                rest = body;
            } else if let Some(body) = rhs.strip_prefix('{') {
                open = Some(OpenMatrix {
                    name: name.to_string(),
                    section: Section::Other,
                    start_line: line_no,
                    closer: '}',
                });
                rest = body;
            } else {
                if name == "baseMVA" {
                    let tok = rhs.trim().trim_end_matches(';').trim();
                    let v = tok.parse::<f64>().map_err(|_| CaseFormatError::MalformedRow {
                        section: name.to_string(),
                        line: line_no,
                        token: tok.to_string(),
                    })?;
                    base_mva = Some(v);
                }
                continue;
            }
        }

        let m = open.as_ref().expect("matrix open");
        let (content, closed) = match rest.find(m.closer) {
            Some(pos) => (&rest[..pos], true),
            None => (rest, false),
        };
        if m.section != Section::Other {
            for segment in content.split(';') {
                let row = parse_row(segment, &m.name, line_no)?;
                if row.is_empty() {
                    continue;
                }
                let min = m.section.min_cols();
                if row.len() < min {
                    return Err(CaseFormatError::ShortRow {
                        section: m.name.clone(),
                        line: line_no,
                        found: row.len(),
                        min,
                    });
                }
                match m.section {
                    Section::Bus => raw.bus_rows.push(row),
                    Section::Gen => raw.gen_rows.push(row),
                    Section::Branch => raw.branch_rows.push(row),
                    Section::GenCost => raw.gencost_rows.push(row),
                    Section::Other => unreachable!(),
                }
            }
        }
        if closed {
            open = None;
        }
    }

    if let Some(m) = open {
        return Err(CaseFormatError::Unterminated {
            section: m.name,
            line: m.start_line,
        });
    }
    let base_mva = base_mva.ok_or(CaseFormatError::MissingSection("baseMVA"))?;
    for (i, name) in ["bus", "gen", "branch"].into_iter().enumerate() {
        if !seen[i] {
            return Err(CaseFormatError::MissingSection(name));
        }
    }
    if !(base_mva > 0.0) {
        return Err(CaseFormatError::BadBaseMva(base_mva));
    }
    if !raw.gencost_rows.is_empty() && raw.gencost_rows.len() != raw.gen_rows.len() {
        return Err(CaseFormatError::CostCountMismatch {
            gens: raw.gen_rows.len(),
            costs: raw.gencost_rows.len(),
        });
    }
    raw.base_mva = base_mva;
    Ok(raw)
}

fn section_slot(s: Section) -> Option<usize> {
    match s {
        Section::Bus => Some(0),
        Section::Gen => Some(1),
        Section::Branch => Some(2),
        Section::GenCost => Some(3),
        Section::Other => None,
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_row(segment: &str, section: &str, line: usize) -> Result<Vec<f64>, CaseFormatError> {
    segment
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            parse_number(t).ok_or_else(|| CaseFormatError::MalformedRow {
                section: section.to_string(),
                line,
                token: t.to_string(),
            })
        })
        .collect()
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "Inf" | "inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().ok().filter(|v| !v.is_nan()),
    }
}

/// Format a value with at most 9 significant digits, falling back to the
/// shortest exact representation when 9 digits lose more than 1e-10 relative.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    let short = format_sig9(v);
    match short.parse::<f64>() {
        Ok(back) if (back - v).abs() <= 1e-10 * v.abs() => short,
        _ => format!("{v}"),
    }
}

fn format_sig9(v: f64) -> String {
    let exp = v.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        trim_fraction(&s)
    } else {
        let s = format!("{v:.8e}");
        let (mant, e) = s.split_once('e').expect("exponent form");
        format!("{}e{}", trim_fraction(mant), e)
    }
}

fn trim_fraction(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Serialize a raw case as a MATPOWER function body. Tab-separated columns,
/// LF line endings.
pub fn write_raw(raw: &RawCase) -> String {
    let mut out = String::new();
    let name = if raw.function_name.is_empty() {
        "mpc_case"
    } else {
        raw.function_name.as_str()
    };
    let _ = writeln!(out, "function mpc = {name}");
    out.push('\n');
    let _ = writeln!(out, "mpc.baseMVA = {};", format_number(raw.base_mva));
    for (label, rows) in [
        ("bus", &raw.bus_rows),
        ("gen", &raw.gen_rows),
        ("branch", &raw.branch_rows),
        ("gencost", &raw.gencost_rows),
    ] {
        if label == "gencost" && rows.is_empty() {
            continue;
        }
        out.push('\n');
        let _ = writeln!(out, "mpc.{label} = [");
        for row in rows {
            out.push('\t');
            let cells: Vec<String> = row.iter().map(|&v| format_number(v)).collect();
            out.push_str(&cells.join("\t"));
            out.push_str(";\n");
        }
        out.push_str("];\n");
    }
    out
}

/// Serialize a solved case: solved voltages and dispatch replace the case
/// values and every branch row carries `Pf Qf Pt Qt` in columns 14-17.
pub fn write_case(case: &SolvedCase) -> String {
    write_raw(&case.to_raw())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LISTING: &str = include_str!("../../../data/case9_listing.m");

    #[test]
    fn parses_listing_dimensions() {
        let raw = parse_case(LISTING).unwrap();
        assert_eq!(raw.function_name, "t0");
        assert_eq!(raw.base_mva, 100.0);
        assert_eq!(raw.bus_rows.len(), 9);
        assert_eq!(raw.gen_rows.len(), 3);
        assert_eq!(raw.branch_rows.len(), 9);
        assert_eq!(raw.gencost_rows.len(), 3);
        assert_eq!(raw.gencost_rows[0], vec![2.0, 1500.0, 0.0, 3.0, 0.11, 5.0, 150.0]);
        assert_eq!(raw.gen_rows[0].len(), 21);
        assert_eq!(raw.branch_rows[0].len(), 17);
        assert_eq!(raw.branch_rows[0][BR_PF], 68.0354);
    }

    #[test]
    fn empty_branch_matrix() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 345 1 1.1 0.9;\n];\nmpc.gen = [\n];\nmpc.branch = [\n];\n";
        let raw = parse_case(text).unwrap();
        assert!(raw.branch_rows.is_empty());
        assert!(raw.gen_rows.is_empty());
        assert_eq!(raw.bus_rows.len(), 1);
    }

    #[test]
    fn tolerates_comments_crlf_and_inline_rows() {
        let text = "function mpc = tiny\r\n% header\r\nmpc.baseMVA = 50; % base\r\nmpc.version = '2';\r\n\
                    mpc.bus = [1 3 0 0 0 0 1 1 0 345 1 1.1 0.9; 2 1 10 5 0 0 1 1 0 345 1 1.1 0.9];\r\n\
                    mpc.bus_name = {\r\n 'a';\r\n 'b';\r\n};\r\n\
                    mpc.gen = [ 1, 0, 0, 10, -10, 1, 100, 1, 50, 0 ];\r\n\
                    mpc.branch = [\r\n 1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360 ; % line\r\n];\r\n";
        let raw = parse_case(text).unwrap();
        assert_eq!(raw.function_name, "tiny");
        assert_eq!(raw.base_mva, 50.0);
        assert_eq!(raw.bus_rows.len(), 2);
        assert_eq!(raw.bus_rows[1][2], 10.0);
        assert_eq!(raw.gen_rows[0].len(), 10);
        assert_eq!(raw.branch_rows[0][12], 360.0);
    }

    #[test]
    fn missing_gen_section() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n];\nmpc.branch = [\n];\n";
        assert_eq!(parse_case(text), Err(CaseFormatError::MissingSection("gen")));
    }

    #[test]
    fn malformed_token_reports_line() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 x 345 1 1.1 0.9;\n];\n";
        match parse_case(text) {
            Err(CaseFormatError::MalformedRow { line, token, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(token, "x");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_row_rejected() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0;\n];\nmpc.gen=[];\nmpc.branch=[];\n";
        assert!(matches!(
            parse_case(text),
            Err(CaseFormatError::ShortRow { found: 4, min: 13, .. })
        ));
    }

    #[test]
    fn unterminated_matrix() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n1 3 0 0 0 0 1 1 0 345 1 1.1 0.9;\n";
        assert!(matches!(parse_case(text), Err(CaseFormatError::Unterminated { .. })));
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(68.035443), "68.035443");
        assert_eq!(format_number(0.152193861), "0.152193861");
        assert_eq!(format_number(-3.10766819), "-3.10766819");
        assert_eq!(format_number(100.0), "100");
        assert_eq!(format_number(1.0e-9), "1e-9");
        assert_eq!(format_number(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn listing_round_trip_is_exact() {
        let raw = parse_case(LISTING).unwrap();
        let again = parse_case(&write_raw(&raw)).unwrap();
        assert_eq!(raw, again);
    }
}
