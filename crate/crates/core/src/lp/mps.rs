//! MPS text interchange.
//!
//! Output follows the fixed-column layout (fields start at columns 2, 5, 15,
//! 25, 40, 50); names longer than eight characters widen their field, which
//! free-format readers accept. The reader parses whitespace-separated fields.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Constraint, LinearProgram};
use crate::error::{Error, Result};

const OBJ: &str = "obj";

fn field(out: &mut String, s: &str, width: usize) {
    let _ = write!(out, "{s:<width$}");
    if s.len() >= width {
        out.push(' ');
    }
}

fn entry(out: &mut String, code: &str, name: &str, pairs: &[(&str, f64)]) {
    out.push(' ');
    field(out, code, 3);
    field(out, name, 10);
    for (k, &(row, v)) in pairs.iter().enumerate() {
        field(out, row, 10);
        let num = format!("{v}");
        if k + 1 == pairs.len() {
            out.push_str(&num);
        } else {
            field(out, &num, 15);
        }
    }
    out.push('\n');
}

/// Renders `lp` as MPS text named `name`.
pub fn write_mps(lp: &LinearProgram, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME          {name}");
    out.push_str("ROWS\n");
    entry(&mut out, "N", OBJ, &[]);
    for r in &lp.equalities {
        entry(&mut out, "E", &r.name, &[]);
    }
    for r in &lp.inequalities {
        entry(&mut out, "L", &r.name, &[]);
    }
    for r in &lp.free_rows {
        entry(&mut out, "N", &r.name, &[]);
    }

    let mut by_col: Vec<Vec<(&str, f64)>> = vec![Vec::new(); lp.num_vars()];
    for (j, &c) in lp.objective.iter().enumerate() {
        if c != 0.0 {
            by_col[j].push((OBJ, c));
        }
    }
    for r in lp.equalities.iter().chain(&lp.inequalities).chain(&lp.free_rows) {
        for &(j, a) in &r.coeffs {
            if a != 0.0 {
                by_col[j].push((r.name.as_str(), a));
            }
        }
    }
    out.push_str("COLUMNS\n");
    for (j, entries) in by_col.iter().enumerate() {
        let name = &lp.var_names[j];
        if entries.is_empty() {
            // Keep the column declared so the variable count round-trips.
            entry(&mut out, "", name, &[(OBJ, 0.0)]);
        }
        for pair in entries.chunks(2) {
            entry(&mut out, "", name, pair);
        }
    }
    out.push_str("RHS\n");
    for r in lp.equalities.iter().chain(&lp.inequalities) {
        if r.rhs != 0.0 {
            entry(&mut out, "", "RHS", &[(r.name.as_str(), r.rhs)]);
        }
    }
    if !lp.fixed_zero.is_empty() {
        out.push_str("BOUNDS\n");
        for &j in &lp.fixed_zero {
            entry(&mut out, "FX", "BND", &[(lp.var_names[j].as_str(), 0.0)]);
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[derive(Clone, Copy, PartialEq)]
enum RowKind {
    Objective,
    Free,
    Eq,
    Le,
    Ge,
}

/// Parses MPS text written by [`write_mps`] or any free-format writer that uses
/// only `N`/`E`/`L`/`G` rows, nonnegative variables and `FX 0` bounds.
pub fn read_mps(text: &str) -> Result<LinearProgram> {
    let mut section = "";
    let mut rows: Vec<(String, RowKind)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut coeffs: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut var_names: Vec<String> = Vec::new();
    let mut var_index: HashMap<String, usize> = HashMap::new();
    let mut objective: Vec<f64> = Vec::new();
    let mut fixed_zero = Vec::new();

    let bad = |line: usize, msg: &str| Error::Parse(format!("MPS line {}: {msg}", line + 1));
    let num = |line: usize, s: &str| s.parse::<f64>().map_err(|_| bad(line, &format!("bad number {s:?}")));

    for (ln, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        if !raw.starts_with(' ') {
            section = raw.split_whitespace().next().unwrap_or("");
            if section == "ENDATA" {
                break;
            }
            continue;
        }
        let f: Vec<&str> = raw.split_whitespace().collect();
        match section {
            "ROWS" => {
                if f.len() != 2 {
                    return Err(bad(ln, "expected row type and name"));
                }
                let kind = match f[0] {
                    "N" if !rows.iter().any(|r| r.1 == RowKind::Objective) => RowKind::Objective,
                    "N" => RowKind::Free,
                    "E" => RowKind::Eq,
                    "L" => RowKind::Le,
                    "G" => RowKind::Ge,
                    t => return Err(bad(ln, &format!("unknown row type {t}"))),
                };
                row_index.insert(f[1].to_string(), rows.len());
                rows.push((f[1].to_string(), kind));
                coeffs.push(Vec::new());
                rhs.push(0.0);
            }
            "COLUMNS" => {
                if f.len() != 3 && f.len() != 5 {
                    return Err(bad(ln, "expected column name and one or two entries"));
                }
                let j = *var_index.entry(f[0].to_string()).or_insert_with(|| {
                    var_names.push(f[0].to_string());
                    objective.push(0.0);
                    var_names.len() - 1
                });
                for pair in f[1..].chunks(2) {
                    let r = *row_index.get(pair[0]).ok_or_else(|| bad(ln, &format!("unknown row {}", pair[0])))?;
                    let v = num(ln, pair[1])?;
                    if rows[r].1 == RowKind::Objective {
                        objective[j] += v;
                    } else if v != 0.0 {
                        coeffs[r].push((j, v));
                    }
                }
            }
            "RHS" => {
                if f.len() != 3 && f.len() != 5 {
                    return Err(bad(ln, "expected rhs name and one or two entries"));
                }
                for pair in f[1..].chunks(2) {
                    let r = *row_index.get(pair[0]).ok_or_else(|| bad(ln, &format!("unknown row {}", pair[0])))?;
                    rhs[r] = num(ln, pair[1])?;
                }
            }
            "BOUNDS" => {
                if f.len() != 4 || f[0] != "FX" || num(ln, f[3])? != 0.0 {
                    return Err(bad(ln, "only `FX <bnd> <col> 0` bounds are supported"));
                }
                let j = *var_index.get(f[2]).ok_or_else(|| bad(ln, &format!("unknown column {}", f[2])))?;
                fixed_zero.push(j);
            }
            "NAME" => {}
            s => return Err(bad(ln, &format!("unsupported section {s:?}"))),
        }
    }

    let mut lp = LinearProgram { var_names, objective, fixed_zero, ..Default::default() };
    for (r, (name, kind)) in rows.into_iter().enumerate() {
        let c = std::mem::take(&mut coeffs[r]);
        match kind {
            RowKind::Objective => {}
            RowKind::Free => lp.free_rows.push(Constraint::new(name, c, rhs[r])),
            RowKind::Eq => lp.equalities.push(Constraint::new(name, c, rhs[r])),
            RowKind::Le => lp.inequalities.push(Constraint::new(name, c, rhs[r])),
            RowKind::Ge => {
                let neg = c.into_iter().map(|(j, a)| (j, -a)).collect();
                lp.inequalities.push(Constraint::new(name, neg, -rhs[r]));
            }
        }
    }
    lp.validate()?;
    Ok(lp)
}
