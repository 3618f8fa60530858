//! External solver subprocess adapter.
//!
//! Protocol: the solver is invoked as
//! `command <lp_path> --time-limit <seconds> --sol <sol_path>` and must exit
//! with status 0 and write a solution file for a successful solve. Two
//! solution formats are accepted: XML-ish `.sol` files carrying
//! `<variable name="..." value="..."/>` elements, and plain text with one
//! `name value` pair per line (`#`-prefixed lines are comments). Exit 0 with
//! a parsable, feasible solution reports `Optimal`; a killed solver whose
//! partial solution file still parses reports `FeasibleTimeLimit`; anything
//! else is an `Error` preserving the raw output.
//!
//! The objective is always recomputed from the model; values claimed by the
//! solver are ignored.

use crate::model::MilpModel;
use crate::solver::limits::{relative_gap, Incumbent, SolveLimits, SolveOutcome, SolveStatus};
use crate::solver::lp_file::export_lp;
use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

const FEAS_TOL: f64 = 1e-6;

/// Runs `solver_command` on the exported model and parses its solution file.
pub fn run_external(model: &MilpModel, solver_command: &str, limits: &SolveLimits) -> SolveOutcome {
    let dir = match tempfile::tempdir() {
        Ok(dir) => dir,
        Err(e) => return error_outcome(format!("cannot create temp dir: {e}")),
    };
    let lp_path = dir.path().join("model.lp");
    let sol_path = dir.path().join("model.sol");
    if let Err(e) = export_lp(model, &lp_path) {
        return error_outcome(format!("cannot export model: {e}"));
    }

    let seconds = limits.wall_clock.as_secs_f64();
    let mut child = match Command::new(solver_command)
        .arg(&lp_path)
        .arg("--time-limit")
        .arg(format!("{seconds}"))
        .arg("--sol")
        .arg(&sol_path)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
    {
        Ok(child) => child,
        Err(e) => return error_outcome(format!("cannot start {solver_command}: {e}")),
    };

    let start = Instant::now();
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {
                if start.elapsed() > limits.wall_clock {
                    timed_out = true;
                    let _ = child.kill();
                    let _ = child.wait();
                    break None;
                }
                std::thread::sleep(std::time::Duration::from_millis(20));
            }
            Err(e) => return error_outcome(format!("wait failed: {e}")),
        }
    };
    // After a kill the pipes may still be held by the solver's children;
    // reading them could block, so raw output is only captured on clean exit.
    let output = if timed_out { None } else { child.wait_with_output().ok() };
    let raw = output
        .as_ref()
        .map(|o| {
            format!(
                "{}{}",
                String::from_utf8_lossy(&o.stdout),
                String::from_utf8_lossy(&o.stderr)
            )
        })
        .unwrap_or_default();

    let exited_ok = status.map(|s| s.success()).unwrap_or(false);
    if !timed_out && !exited_ok {
        return error_outcome(format!(
            "solver exited with {:?}; output: {raw}",
            status.map(|s| s.code())
        ));
    }

    let text = match std::fs::read_to_string(&sol_path) {
        Ok(text) => text,
        Err(e) => return error_outcome(format!("no solution file ({e}); output: {raw}")),
    };
    let values = match parse_solution(&text) {
        Ok(values) => values,
        Err(e) => return error_outcome(format!("unparsable solution ({e}); raw: {text}")),
    };

    let mut x: Vec<f64> = model.variables().iter().map(|v| v.lower).collect();
    for (name, value) in &values {
        if let Some(id) = model.var_id(name) {
            x[id] = *value;
        }
    }
    let (violation, offender) = model.max_violation(&x);
    if violation > FEAS_TOL {
        return error_outcome(format!(
            "solution violates {offender} by {violation}; raw: {text}"
        ));
    }
    let value = model.objective_value(&x);
    SolveOutcome {
        status: if timed_out { SolveStatus::FeasibleTimeLimit } else { SolveStatus::Optimal },
        incumbent: Some(Incumbent { value, assignment: x }),
        best_bound: f64::NEG_INFINITY,
        gap: relative_gap(value, f64::NEG_INFINITY),
        nodes: 0,
        effort_used: 0,
        message: None,
    }
}

fn error_outcome(message: String) -> SolveOutcome {
    SolveOutcome {
        status: SolveStatus::Error,
        incumbent: None,
        best_bound: f64::NEG_INFINITY,
        gap: None,
        nodes: 0,
        effort_used: 0,
        message: Some(message),
    }
}

/// Parses either solution format into name/value pairs.
pub fn parse_solution(text: &str) -> Result<HashMap<String, f64>, String> {
    if text.contains("<variable") {
        return parse_xml_solution(text);
    }
    let mut values = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().ok_or_else(|| format!("line {}: empty", lineno + 1))?;
        let value = parts
            .next()
            .ok_or_else(|| format!("line {}: missing value for {name}", lineno + 1))?;
        let value: f64 = value
            .parse()
            .map_err(|e| format!("line {}: bad value for {name}: {e}", lineno + 1))?;
        values.insert(name.to_string(), value);
    }
    if values.is_empty() {
        return Err("no variable values found".to_string());
    }
    Ok(values)
}

fn parse_xml_solution(text: &str) -> Result<HashMap<String, f64>, String> {
    let mut values = HashMap::new();
    let mut rest = text;
    while let Some(at) = rest.find("<variable") {
        rest = &rest[at..];
        let end = rest.find("/>").ok_or("unterminated <variable>")?;
        let element = &rest[..end];
        let name = attribute(element, "name").ok_or("variable without name")?;
        let value = attribute(element, "value").ok_or("variable without value")?;
        let value: f64 = value.parse().map_err(|e| format!("bad value for {name}: {e}"))?;
        values.insert(name.to_string(), value);
        rest = &rest[end..];
    }
    if values.is_empty() {
        return Err("no <variable> elements found".to_string());
    }
    Ok(values)
}

fn attribute<'a>(element: &'a str, key: &str) -> Option<&'a str> {
    let marker = format!("{key}=\"");
    let at = element.find(&marker)? + marker.len();
    let rest = &element[at..];
    let end = rest.find('"')?;
    Some(&rest[..end])
}

/// Writes a tiny solver stub script for tests and demos: it copies a fixed
/// solution text into the requested `--sol` path.
pub fn write_stub_solver(path: &Path, solution_text: &str, sleep_seconds: f64) -> std::io::Result<()> {
    let script = format!(
        "#!/bin/sh\nsleep {sleep_seconds}\nwhile [ $# -gt 0 ]; do\n  if [ \"$1\" = \"--sol\" ]; then SOL=\"$2\"; shift; fi\n  shift\ndone\ncat > \"$SOL\" <<'SOLEOF'\n{solution_text}\nSOLEOF\n"
    );
    std::fs::write(path, script)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o755))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinExpr, Sense};

    fn toy_model() -> MilpModel {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, 10.0);
        let b = m.add_binary("b");
        m.add_row("lo", LinExpr::var(x).term(b, 1.0), Sense::Ge, 3.0);
        m.add_objective(LinExpr::var(x).term(b, 1.0));
        m
    }

    #[test]
    fn failing_command_reports_error() {
        let out = run_external(&toy_model(), "false", &SolveLimits::from_seconds(5.0));
        assert_eq!(out.status, SolveStatus::Error);
        assert!(out.message.is_some());
    }

    #[test]
    fn missing_command_reports_error() {
        let out = run_external(
            &toy_model(),
            "/nonexistent/solver-binary",
            &SolveLimits::from_seconds(5.0),
        );
        assert_eq!(out.status, SolveStatus::Error);
    }

    #[test]
    fn stub_solver_round_trips_a_known_assignment() {
        let dir = tempfile::tempdir().unwrap();
        let stub = dir.path().join("stub.sh");
        write_stub_solver(&stub, "# a comment\nx 2.5\nb 1", 0.0).unwrap();
        let out = run_external(&toy_model(), stub.to_str().unwrap(), &SolveLimits::from_seconds(5.0));
        assert_eq!(out.status, SolveStatus::Optimal, "{:?}", out.message);
        let inc = out.incumbent.unwrap();
        assert!((inc.value - 3.5).abs() < 1e-9);
        assert_eq!(inc.assignment, vec![2.5, 1.0]);
    }

    #[test]
    fn infeasible_claim_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stub = dir.path().join("stub.sh");
        write_stub_solver(&stub, "x 0.0\nb 0", 0.0).unwrap();
        let out = run_external(&toy_model(), stub.to_str().unwrap(), &SolveLimits::from_seconds(5.0));
        assert_eq!(out.status, SolveStatus::Error);
        assert!(out.message.unwrap().contains("violates"));
    }

    #[test]
    fn timeout_kills_the_solver() {
        let dir = tempfile::tempdir().unwrap();
        let stub = dir.path().join("slow.sh");
        write_stub_solver(&stub, "x 3\nb 0", 30.0).unwrap();
        let mut limits = SolveLimits::from_seconds(5.0);
        limits.wall_clock = std::time::Duration::from_millis(300);
        let started = Instant::now();
        let out = run_external(&toy_model(), stub.to_str().unwrap(), &limits);
        assert!(started.elapsed() < std::time::Duration::from_secs(10));
        // The stub never wrote its solution: per protocol this is an error.
        assert_eq!(out.status, SolveStatus::Error);
    }

    #[test]
    fn xml_solutions_parse() {
        let text = r#"<?xml version="1.0"?>
<CPLEXSolution>
 <variables>
  <variable name="x" value="2.5" index="0"/>
  <variable name="b" value="1" index="1"/>
 </variables>
</CPLEXSolution>"#;
        let values = parse_solution(text).unwrap();
        assert_eq!(values["x"], 2.5);
        assert_eq!(values["b"], 1.0);
    }

    #[test]
    fn garbage_is_unparsable() {
        assert!(parse_solution("").is_err());
        assert!(parse_solution("x notanumber").is_err());
    }
}
