//! Fixed-format MPS writer and reader.
//!
//! Names must fit in 8 characters and numbers in 12. One coefficient is
//! written per line. Minimization is declared in an `OBJSENSE` section.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::milp::{MilpArtifact, MilpRow, MilpVariable, RowSense};
use crate::error::{EmsError, Result};

const OBJECTIVE_ROW: &str = "COST";

/// Shortest representation of `v` that fits a 12-character field.
fn number(v: f64) -> String {
    let plain = format!("{v}");
    if plain.len() <= 12 {
        return plain;
    }
    for digits in (0..=8).rev() {
        let s = format!("{v:.digits$e}");
        if s.len() <= 12 {
            return s;
        }
    }
    format!("{v:.0e}")
}

fn line(out: &mut String, f1: &str, f2: &str, f3: &str, f4: &str) {
    let l = format!(" {f1:<2} {f2:<8}  {f3:<8}  {f4}");
    out.push_str(l.trim_end());
    out.push('\n');
}

fn check_name(kind: &str, name: &str) -> Result<()> {
    if name.is_empty() || name.len() > 8 || name.contains(char::is_whitespace) {
        return Err(EmsError::InvalidArgument(format!(
            "{kind} name `{name}` is not a valid fixed-format MPS name"
        )));
    }
    Ok(())
}

/// Renders the artifact as fixed-format MPS text.
pub fn write_mps(a: &MilpArtifact) -> Result<String> {
    for v in &a.variables {
        check_name("variable", &v.name)?;
    }
    for r in &a.rows {
        check_name("row", &r.name)?;
    }
    let mut columns: Vec<Vec<(&str, f64)>> = vec![Vec::new(); a.variables.len()];
    for &(j, c) in &a.objective {
        columns[j].push((OBJECTIVE_ROW, c));
    }
    for r in &a.rows {
        for &(j, c) in &r.coeffs {
            columns[j].push((&r.name, c));
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "NAME          {}", a.name);
    out.push_str("OBJSENSE\n    MIN\n");
    out.push_str("ROWS\n");
    line(&mut out, "N", OBJECTIVE_ROW, "", "");
    for r in &a.rows {
        let s = match r.sense {
            RowSense::Le => "L",
            RowSense::Ge => "G",
            RowSense::Eq => "E",
        };
        line(&mut out, s, &r.name, "", "");
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for (v, col) in a.variables.iter().zip(&columns) {
        if v.integer != in_int {
            let tag = if v.integer { "'INTORG'" } else { "'INTEND'" };
            let l = format!("    M{marker:<7}  'MARKER'                 {tag}");
            out.push_str(&l);
            out.push('\n');
            marker += 1;
            in_int = v.integer;
        }
        if col.is_empty() {
            line(&mut out, "", &v.name, OBJECTIVE_ROW, "0");
        }
        for (row, c) in col {
            line(&mut out, "", &v.name, row, &number(*c));
        }
    }
    if in_int {
        let l = format!("    M{marker:<7}  'MARKER'                 'INTEND'");
        out.push_str(&l);
        out.push('\n');
    }
    out.push_str("RHS\n");
    for r in &a.rows {
        if r.rhs != 0.0 {
            line(&mut out, "", "RHS", &r.name, &number(r.rhs));
        }
    }
    out.push_str("BOUNDS\n");
    for v in &a.variables {
        let n = v.name.as_str();
        if v.integer && v.lower == 0.0 && v.upper == 1.0 {
            line(&mut out, "BV", "BND", n, "");
            continue;
        }
        if v.lower == v.upper {
            line(&mut out, "FX", "BND", n, &number(v.lower));
            continue;
        }
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            line(&mut out, "FR", "BND", n, "");
            continue;
        }
        if v.lower == f64::NEG_INFINITY {
            line(&mut out, "MI", "BND", n, "");
        } else if v.lower != 0.0 {
            line(&mut out, "LO", "BND", n, &number(v.lower));
        }
        if v.upper != f64::INFINITY {
            line(&mut out, "UP", "BND", n, &number(v.upper));
        }
    }
    out.push_str("ENDATA\n");
    Ok(out)
}

pub fn export_mps(a: &MilpArtifact, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, write_mps(a)?)?;
    Ok(())
}

fn parse_err(line: usize, reason: impl Into<String>) -> EmsError {
    EmsError::MpsParse {
        line,
        reason: reason.into(),
    }
}

fn parse_num(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("`{tok}` is not a number")))
}

/// Reads MPS text produced by [`write_mps`] (or any MPS file using
/// whitespace-free names). Only minimization is accepted.
pub fn parse_mps(text: &str) -> Result<MilpArtifact> {
    let mut name = String::new();
    let mut section = "";
    let mut objective_row: Option<String> = None;
    let mut rows: Vec<MilpRow> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut variables: Vec<MilpVariable> = Vec::new();
    let mut var_index: HashMap<String, usize> = HashMap::new();
    let mut objective = Vec::new();
    let mut integer = false;

    for (n, raw) in text.lines().enumerate() {
        let ln = n + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') {
            section = match toks[0] {
                "NAME" => {
                    name = toks.get(1).copied().unwrap_or_default().to_string();
                    "NAME"
                }
                "OBJSENSE" => match toks.get(1) {
                    Some(&"MIN") | None => "OBJSENSE",
                    Some(other) => return Err(parse_err(ln, format!("unsupported objective sense {other}"))),
                },
                "ROWS" => "ROWS",
                "COLUMNS" => "COLUMNS",
                "RHS" => "RHS",
                "BOUNDS" => "BOUNDS",
                "RANGES" => return Err(parse_err(ln, "RANGES are not supported")),
                "ENDATA" => break,
                other => return Err(parse_err(ln, format!("unknown section {other}"))),
            };
            continue;
        }
        match section {
            "OBJSENSE" => {
                if toks[0] != "MIN" && toks[0] != "MINIMIZE" {
                    return Err(parse_err(ln, format!("unsupported objective sense {}", toks[0])));
                }
            }
            "ROWS" => {
                let [kind, rname] = toks[..] else {
                    return Err(parse_err(ln, "ROWS entries need a type and a name"));
                };
                let sense = match kind {
                    "N" => {
                        if objective_row.is_none() {
                            objective_row = Some(rname.to_string());
                        }
                        continue;
                    }
                    "L" => RowSense::Le,
                    "G" => RowSense::Ge,
                    "E" => RowSense::Eq,
                    other => return Err(parse_err(ln, format!("unknown row type {other}"))),
                };
                row_index.insert(rname.to_string(), rows.len());
                rows.push(MilpRow {
                    name: rname.to_string(),
                    sense,
                    rhs: 0.0,
                    coeffs: Vec::new(),
                });
            }
            "COLUMNS" => {
                if toks.get(1) == Some(&"'MARKER'") {
                    match toks.get(2) {
                        Some(&"'INTORG'") => integer = true,
                        Some(&"'INTEND'") => integer = false,
                        _ => return Err(parse_err(ln, "bad marker line")),
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(parse_err(ln, "COLUMNS entries need 3 or 5 fields"));
                }
                let j = *var_index.entry(toks[0].to_string()).or_insert_with(|| {
                    variables.push(MilpVariable {
                        name: toks[0].to_string(),
                        lower: 0.0,
                        upper: if integer { 1.0 } else { f64::INFINITY },
                        integer,
                    });
                    variables.len() - 1
                });
                for pair in toks[1..].chunks(2) {
                    let v = parse_num(pair[1], ln)?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        if v != 0.0 {
                            objective.push((j, v));
                        }
                    } else {
                        let r = row_index
                            .get(pair[0])
                            .ok_or_else(|| parse_err(ln, format!("unknown row {}", pair[0])))?;
                        rows[*r].coeffs.push((j, v));
                    }
                }
            }
            "RHS" => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(parse_err(ln, "RHS entries need 3 or 5 fields"));
                }
                for pair in toks[1..].chunks(2) {
                    let r = row_index
                        .get(pair[0])
                        .ok_or_else(|| parse_err(ln, format!("unknown row {}", pair[0])))?;
                    rows[*r].rhs = parse_num(pair[1], ln)?;
                }
            }
            "BOUNDS" => {
                if toks.len() < 3 {
                    return Err(parse_err(ln, "BOUNDS entries need a type, a set and a column"));
                }
                let j = *var_index
                    .get(toks[2])
                    .ok_or_else(|| parse_err(ln, format!("unknown column {}", toks[2])))?;
                let value = || -> Result<f64> {
                    toks.get(3)
                        .ok_or_else(|| parse_err(ln, "bound value missing"))
                        .and_then(|t| parse_num(t, ln))
                };
                let v = &mut variables[j];
                match toks[0] {
                    "UP" => v.upper = value()?,
                    "LO" => v.lower = value()?,
                    "FX" => {
                        v.lower = value()?;
                        v.upper = v.lower;
                    }
                    "FR" => {
                        v.lower = f64::NEG_INFINITY;
                        v.upper = f64::INFINITY;
                    }
                    "MI" => v.lower = f64::NEG_INFINITY,
                    "PL" => v.upper = f64::INFINITY,
                    "BV" => {
                        v.lower = 0.0;
                        v.upper = 1.0;
                        v.integer = true;
                    }
                    other => return Err(parse_err(ln, format!("unsupported bound type {other}"))),
                }
            }
            _ => return Err(parse_err(ln, "data line outside a section")),
        }
    }
    if objective_row.is_none() {
        return Err(parse_err(0, "no objective row"));
    }
    Ok(MilpArtifact {
        name,
        variables,
        rows,
        objective,
        big_m: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_lp() -> MilpArtifact {
        MilpArtifact {
            name: "TOY".into(),
            variables: vec![
                MilpVariable { name: "X".into(), lower: 0.0, upper: 4.0, integer: false },
                MilpVariable { name: "Y".into(), lower: -1.0, upper: 1.0, integer: false },
            ],
            rows: vec![
                MilpRow { name: "LIM1".into(), sense: RowSense::Ge, rhs: 1.0, coeffs: vec![(0, 1.0), (1, 1.0)] },
                MilpRow { name: "LIM2".into(), sense: RowSense::Le, rhs: 3.0, coeffs: vec![(0, 1.0), (1, -1.0)] },
            ],
            objective: vec![(0, 1.0), (1, 2.0)],
            big_m: None,
        }
    }

    const GOLDEN: &str = "\
NAME          TOY
OBJSENSE
    MIN
ROWS
 N  COST
 G  LIM1
 L  LIM2
COLUMNS
    X         COST      1
    X         LIM1      1
    X         LIM2      1
    Y         COST      2
    Y         LIM1      1
    Y         LIM2      -1
RHS
    RHS       LIM1      1
    RHS       LIM2      3
BOUNDS
 UP BND       X         4
 LO BND       Y         -1
 UP BND       Y         1
ENDATA
";

    #[test]
    fn toy_lp_matches_golden_file() {
        assert_eq!(write_mps(&toy_lp()).unwrap(), GOLDEN);
    }

    #[test]
    fn golden_parses_back() {
        assert_eq!(parse_mps(GOLDEN).unwrap(), toy_lp());
    }

    #[test]
    fn numbers_fit_the_field() {
        for v in [1.0 / 3.0, -2.0 / 30.0 / 0.95, 1e-20, 123456789012345.0, -0.0023333333333333335] {
            let s = number(v);
            assert!(s.len() <= 12, "{s}");
            let back: f64 = s.parse().unwrap();
            assert!((back - v).abs() <= 1e-6 * v.abs());
        }
    }

    #[test]
    fn long_names_are_rejected() {
        let mut a = toy_lp();
        a.variables[0].name = "TOOLONGNAME".into();
        assert!(write_mps(&a).is_err());
    }

    #[test]
    fn integer_markers_round_trip() {
        let mut a = toy_lp();
        a.variables[1] = MilpVariable { name: "Y".into(), lower: 0.0, upper: 1.0, integer: true };
        let text = write_mps(&a).unwrap();
        assert!(text.contains("'INTORG'") && text.contains(" BV BND       Y"));
        assert_eq!(parse_mps(&text).unwrap(), a);
    }
}
