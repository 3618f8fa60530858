//! CPLEX-LP-format export.
//!
//! Sections `Minimize`, `Subject To`, `Bounds`, `Binaries`, `End`, with
//! 17-significant-digit coefficients so a conformant reader reconstructs the
//! matrix bit-for-bit. The objective's constant term rides on a synthetic
//! variable `__const` fixed to 1 in the `Bounds` section; the header comment
//! states the convention.

use crate::model::{MilpModel, Sense, VarKind};
use std::io::{self, Write};
use std::path::Path;

const CONST_VAR: &str = "__const";

fn coef(value: f64) -> String {
    format!("{value:.16e}")
}

/// Writes the model in CPLEX LP format.
pub fn write_lp(model: &MilpModel, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "\\ LP export")?;
    writeln!(
        out,
        "\\ convention: the objective constant ({}) is the coefficient of the",
        coef(model.objective_constant)
    )?;
    writeln!(out, "\\ synthetic variable {CONST_VAR}, fixed to 1 in Bounds")?;
    writeln!(out, "Minimize")?;
    let mut terms: Vec<String> = Vec::with_capacity(model.objective().len() + 1);
    for &(v, c) in model.objective() {
        terms.push(format!("{} {}", signed(c), model.variable(v).name));
    }
    terms.push(format!("{} {CONST_VAR}", signed(model.objective_constant)));
    write_wrapped(out, " obj:", &terms)?;

    writeln!(out, "Subject To")?;
    for row in model.rows() {
        let mut terms: Vec<String> = Vec::with_capacity(row.terms.len());
        for &(v, c) in &row.terms {
            terms.push(format!("{} {}", signed(c), model.variable(v).name));
        }
        if terms.is_empty() {
            terms.push(format!("{} {CONST_VAR}", signed(0.0)));
        }
        let sense = match row.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        terms.push(format!("{sense} {}", coef(row.rhs)));
        write_wrapped(out, &format!(" {}:", row.name), &terms)?;
    }

    writeln!(out, "Bounds")?;
    writeln!(out, " {CONST_VAR} = 1")?;
    for var in model.variables() {
        if var.kind == VarKind::Binary {
            continue;
        }
        if var.lower == var.upper {
            writeln!(out, " {} = {}", var.name, coef(var.lower))?;
        } else if var.upper.is_infinite() {
            writeln!(out, " {} >= {}", var.name, coef(var.lower))?;
        } else {
            writeln!(out, " {} <= {} <= {}", coef(var.lower), var.name, coef(var.upper))?;
        }
    }

    let binaries: Vec<&str> = model
        .variables()
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        writeln!(out, "Binaries")?;
        for chunk in binaries.chunks(8) {
            writeln!(out, " {}", chunk.join(" "))?;
        }
    }
    writeln!(out, "End")
}

fn signed(c: f64) -> String {
    if c < 0.0 {
        format!("- {}", coef(-c))
    } else {
        format!("+ {}", coef(c))
    }
}

fn write_wrapped(out: &mut impl Write, head: &str, terms: &[String]) -> io::Result<()> {
    write!(out, "{head}")?;
    for (i, term) in terms.iter().enumerate() {
        if i > 0 && i % 6 == 0 {
            writeln!(out)?;
            write!(out, "   ")?;
        }
        write!(out, " {term}")?;
    }
    writeln!(out)
}

/// Exports the model to `path`.
pub fn export_lp(model: &MilpModel, path: &Path) -> io::Result<()> {
    let mut buffer = Vec::new();
    write_lp(model, &mut buffer)?;
    std::fs::write(path, buffer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinExpr, MilpModel, Sense};
    use std::collections::HashMap;

    fn sample_model() -> MilpModel {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x_flow", 0.0, 300.0);
        let y = m.add_binary("y_pick");
        let r = m.add_continuous("r_buy", 0.0, 1300.0);
        m.add_row("cap", LinExpr::var(x).term(y, -300.0), Sense::Le, 0.0);
        m.add_row("serve", LinExpr::var(x).term(r, 0.5), Sense::Ge, 42.125);
        m.add_row("tie", LinExpr::var(r).term(x, -1.0), Sense::Eq, 0.0);
        m.add_objective(LinExpr::var(x).scaled(2.25).term(y, 1500.0).term(r, 8.3).add_const(17.5));
        m
    }

    /// Minimal conformant reader for the emitted subset of the LP format.
    fn parse_lp(text: &str) -> (Vec<(String, f64)>, Vec<(String, Vec<(String, f64)>, Sense, f64)>) {
        let mut objective = Vec::new();
        let mut rows = Vec::new();
        let mut section = "";
        let mut pending: Vec<String> = Vec::new();
        let flush = |pending: &mut Vec<String>,
                         objective: &mut Vec<(String, f64)>,
                         rows: &mut Vec<(String, Vec<(String, f64)>, Sense, f64)>| {
            if pending.is_empty() {
                return;
            }
            let joined = pending.join(" ");
            pending.clear();
            let (label, rest) = joined.split_once(':').unwrap();
            let tokens: Vec<&str> = rest.split_whitespace().collect();
            let mut terms = Vec::new();
            let mut i = 0;
            let mut sense = None;
            let mut rhs = 0.0;
            while i < tokens.len() {
                match tokens[i] {
                    "+" | "-" => {
                        let sign = if tokens[i] == "-" { -1.0 } else { 1.0 };
                        let value: f64 = tokens[i + 1].parse().unwrap();
                        let name = tokens[i + 2].to_string();
                        terms.push((name, sign * value));
                        i += 3;
                    }
                    "<=" | ">=" | "=" => {
                        sense = Some(match tokens[i] {
                            "<=" => Sense::Le,
                            ">=" => Sense::Ge,
                            _ => Sense::Eq,
                        });
                        rhs = tokens[i + 1].parse().unwrap();
                        i += 2;
                    }
                    other => panic!("unexpected token {other}"),
                }
            }
            match sense {
                None => objective.extend(terms),
                Some(s) => rows.push((label.trim().to_string(), terms, s, rhs)),
            }
        };
        for line in text.lines() {
            let line = line.trim_end();
            if line.starts_with('\\') {
                continue;
            }
            match line.trim() {
                "Minimize" | "Subject To" | "Bounds" | "Binaries" | "End" => {
                    flush(&mut pending, &mut objective, &mut rows);
                    section = line.trim();
                    continue;
                }
                _ => {}
            }
            if section == "Minimize" || section == "Subject To" {
                if line.contains(':') {
                    flush(&mut pending, &mut objective, &mut rows);
                }
                pending.push(line.to_string());
            }
        }
        flush(&mut pending, &mut objective, &mut rows);
        (objective, rows)
    }

    #[test]
    fn export_round_trips_through_a_conformant_reader() {
        let model = sample_model();
        let mut buffer = Vec::new();
        write_lp(&model, &mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();

        let (objective, rows) = parse_lp(&text);
        let obj: HashMap<String, f64> = objective.into_iter().collect();
        assert_eq!(obj["x_flow"], 2.25);
        assert_eq!(obj["y_pick"], 1500.0);
        assert_eq!(obj["r_buy"], 8.3);
        assert_eq!(obj[CONST_VAR], 17.5);

        assert_eq!(rows.len(), model.n_rows());
        for (parsed, original) in rows.iter().zip(model.rows()) {
            let (name, terms, sense, rhs) = parsed;
            assert_eq!(name, &original.name);
            assert_eq!(*sense, original.sense);
            assert_eq!(*rhs, original.rhs);
            let want: Vec<(String, f64)> = original
                .terms
                .iter()
                .map(|&(v, c)| (model.variable(v).name.clone(), c))
                .collect();
            assert_eq!(terms, &want);
        }
    }

    #[test]
    fn sections_and_binaries_are_present() {
        let model = sample_model();
        let mut buffer = Vec::new();
        write_lp(&model, &mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        for section in ["Minimize", "Subject To", "Bounds", "Binaries", "End"] {
            assert!(text.contains(section), "missing {section}");
        }
        let binaries_at = text.find("Binaries").unwrap();
        assert!(text[binaries_at..].contains("y_pick"));
        assert!(text.contains(" __const = 1"));
        // 17 significant digits survive the round trip.
        assert!(text.contains("2.2500000000000000e0"));
    }

    #[test]
    fn empty_rows_reference_the_constant_variable() {
        let mut m = MilpModel::new();
        let x = m.add_binary("x");
        m.add_row("nothing", LinExpr::constant(0.0), Sense::Le, 1.0);
        m.add_objective(LinExpr::var(x));
        let mut buffer = Vec::new();
        write_lp(&m, &mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        assert!(text.contains("nothing:"));
        assert!(text.lines().any(|l| l.contains("__const <= ")));
    }
}
