//! MPS export in the fixed-column layout. Fields longer than the classic
//! widths are written in full, separated by at least one space, which every
//! free-format reader accepts.

use std::fmt::Write;

use num_traits::{One, Zero};

use super::model::{to_f64, LinearModel, Sense};
use crate::Rational;

const OBJ_ROW: &str = "COST";

fn number(r: Rational) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}", to_f64(r))
    }
}

fn field_line(out: &mut String, code: &str, f1: &str, f2: &str, f3: &str) {
    // Columns 2-3 code, 5-12 name, 15-22 name, 25-36 value.
    let _ = writeln!(out, " {code:<2} {f1:<8}  {f2:<8}  {f3}");
}

pub fn write_mps(model: &LinearModel) -> String {
    let mut out = String::new();
    let name = if model.name.is_empty() { "MODEL" } else { model.name.as_str() };
    let _ = writeln!(out, "NAME          {name}");

    out.push_str("ROWS\n");
    let _ = writeln!(out, " N  {OBJ_ROW}");
    for c in model.constraints() {
        let code = match c.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        let _ = writeln!(out, " {code}  {}", c.name);
    }

    // Column-major entries.
    let mut columns: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); model.n_vars()];
    for (k, c) in model.constraints().iter().enumerate() {
        for &(v, a) in &c.terms {
            if !a.is_zero() {
                columns[v].push((k, a));
            }
        }
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for (v, var) in model.vars().iter().enumerate() {
        if var.integer != in_int {
            let kind = if var.integer { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    MARKER{marker:<4}  'MARKER'                 {kind}");
            marker += 1;
            in_int = var.integer;
        }
        let mut wrote = false;
        if !var.objective.is_zero() {
            field_line(&mut out, "", &var.name, OBJ_ROW, &number(var.objective));
            wrote = true;
        }
        for &(k, a) in &columns[v] {
            field_line(&mut out, "", &var.name, &model.constraints()[k].name, &number(a));
            wrote = true;
        }
        if !wrote {
            field_line(&mut out, "", &var.name, OBJ_ROW, "0");
        }
    }
    if in_int {
        let _ = writeln!(out, "    MARKER{marker:<4}  'MARKER'                 'INTEND'");
    }

    out.push_str("RHS\n");
    for c in model.constraints() {
        if !c.rhs.is_zero() {
            field_line(&mut out, "", "RHS", &c.name, &number(c.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for var in model.vars() {
        match var.upper {
            Some(u) if u == var.lower => field_line(&mut out, "FX", "BND", &var.name, &number(u)),
            Some(u) => {
                if !var.lower.is_zero() {
                    field_line(&mut out, "LO", "BND", &var.name, &number(var.lower));
                }
                if var.integer && var.lower.is_zero() && u == Rational::one() {
                    field_line(&mut out, "BV", "BND", &var.name, "");
                } else {
                    field_line(&mut out, "UP", "BND", &var.name, &number(u));
                }
            }
            None => {
                if !var.lower.is_zero() {
                    field_line(&mut out, "LO", "BND", &var.name, &number(var.lower));
                }
                // Some readers cap marker-block integers at 1 without an explicit bound.
                if var.integer {
                    field_line(&mut out, "PL", "BND", &var.name, "");
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[cfg(test)]
pub(crate) mod reader {
    //! Minimal whitespace-token MPS reader used to check the writer.

    use std::collections::HashMap;

    use crate::mip::model::{Constraint, LinearModel, Sense};
    use crate::Rational;

    fn rat(s: &str) -> Rational {
        let f: f64 = s.parse().unwrap();
        if f.fract() == 0.0 {
            Rational::from_integer(f as i64)
        } else {
            Rational::approximate_float(f).unwrap()
        }
    }

    pub fn read(text: &str) -> LinearModel {
        let mut section = "";
        let mut rows: Vec<(String, Sense)> = Vec::new();
        let mut row_index: HashMap<String, usize> = HashMap::new();
        let mut obj_row = String::new();
        let mut cols: Vec<(String, bool, Rational, Vec<(usize, Rational)>)> = Vec::new();
        let mut col_index: HashMap<String, usize> = HashMap::new();
        let mut rhs: HashMap<usize, Rational> = HashMap::new();
        let mut bounds: HashMap<usize, (Rational, Option<Rational>)> = HashMap::new();
        let mut in_int = false;
        let mut model_name = String::new();
        for line in text.lines() {
            if !line.starts_with(' ') {
                let mut t = line.split_whitespace();
                section = match t.next() {
                    Some("NAME") => {
                        model_name = t.next().unwrap_or("").to_string();
                        "NAME"
                    }
                    Some("ROWS") => "ROWS",
                    Some("COLUMNS") => "COLUMNS",
                    Some("RHS") => "RHS",
                    Some("BOUNDS") => "BOUNDS",
                    Some("ENDATA") => "END",
                    other => panic!("unknown section {other:?}"),
                };
                continue;
            }
            let t: Vec<&str> = line.split_whitespace().collect();
            match section {
                "ROWS" => {
                    if t[0] == "N" {
                        obj_row = t[1].to_string();
                    } else {
                        let sense = match t[0] {
                            "L" => Sense::Le,
                            "G" => Sense::Ge,
                            _ => Sense::Eq,
                        };
                        row_index.insert(t[1].to_string(), rows.len());
                        rows.push((t[1].to_string(), sense));
                    }
                }
                "COLUMNS" => {
                    if t.get(1) == Some(&"'MARKER'") {
                        in_int = t[2] == "'INTORG'";
                        continue;
                    }
                    let c = *col_index.entry(t[0].to_string()).or_insert_with(|| {
                        cols.push((t[0].to_string(), in_int, Rational::from_integer(0), Vec::new()));
                        cols.len() - 1
                    });
                    for pair in t[1..].chunks(2) {
                        let v = rat(pair[1]);
                        if pair[0] == obj_row {
                            cols[c].2 = v;
                        } else {
                            cols[c].3.push((row_index[pair[0]], v));
                        }
                    }
                }
                "RHS" => {
                    for pair in t[1..].chunks(2) {
                        rhs.insert(row_index[pair[0]], rat(pair[1]));
                    }
                }
                "BOUNDS" => {
                    let c = col_index[t[2]];
                    let e = bounds.entry(c).or_insert((Rational::from_integer(0), None));
                    match t[0] {
                        "UP" => e.1 = Some(rat(t[3])),
                        "LO" => e.0 = rat(t[3]),
                        "FX" => *e = (rat(t[3]), Some(rat(t[3]))),
                        "BV" => *e = (Rational::from_integer(0), Some(Rational::from_integer(1))),
                        "PL" => e.1 = None,
                        other => panic!("bound type {other}"),
                    }
                }
                _ => {}
            }
        }
        let mut m = LinearModel::new(model_name);
        let mut terms: Vec<Vec<(usize, Rational)>> = vec![Vec::new(); rows.len()];
        for (c, (name, integer, obj, entries)) in cols.iter().enumerate() {
            let (lo, hi) = bounds.get(&c).cloned().unwrap_or((Rational::from_integer(0), None));
            m.add_var(name.clone(), lo, hi, *integer, *obj).unwrap();
            for &(r, a) in entries {
                terms[r].push((c, a));
            }
        }
        for (k, (name, sense)) in rows.into_iter().enumerate() {
            let rhs = rhs.get(&k).copied().unwrap_or(Rational::from_integer(0));
            m.add_constraint(Constraint::new(name, std::mem::take(&mut terms[k]), sense, rhs)).unwrap();
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mip::model::Constraint;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn empty_model() {
        let text = write_mps(&LinearModel::new("empty"));
        for section in ["NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"] {
            assert!(text.contains(section));
        }
        let back = reader::read(&text);
        assert_eq!(back.n_vars(), 0);
        assert_eq!(back.n_constraints(), 0);
    }

    fn sample() -> LinearModel {
        let mut m = LinearModel::new("sample");
        let h = m.add_var("H0", r(0, 1), None, false, r(264, 1)).unwrap();
        let x = m.add_binary("x_0_0_0", r(0, 1)).unwrap();
        let k = m.add_var("k", r(2, 1), Some(r(9, 1)), true, r(1, 2)).unwrap();
        let f = m.add_var("f", r(3, 1), Some(r(3, 1)), false, r(0, 1)).unwrap();
        m.add_constraint(Constraint::new("load", vec![(x, r(4, 1)), (h, r(-1, 1))], Sense::Le, r(0, 1))).unwrap();
        m.add_constraint(Constraint::new("asg", vec![(x, r(1, 1))], Sense::Eq, r(1, 1))).unwrap();
        m.add_constraint(Constraint::new("g", vec![(k, r(1, 1)), (f, r(1, 1))], Sense::Ge, r(11, 10))).unwrap();
        m
    }

    #[test]
    fn round_trip_through_reader() {
        let m = sample();
        let text = write_mps(&m);
        assert!(text.contains("'INTORG'") && text.contains("'INTEND'"));
        let back = reader::read(&text);
        assert_eq!(back.vars(), m.vars());
        let sorted = |m: &LinearModel| {
            m.constraints()
                .iter()
                .cloned()
                .map(|mut c| {
                    c.terms.sort_by_key(|t| t.0);
                    c
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(sorted(&back), sorted(&m));
    }
}
