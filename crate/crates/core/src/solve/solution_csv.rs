//! `variable,value` solution files with a `# status=... objective=...` header.

use std::fmt::Write as _;

use crate::milp::{Assignment, MilpProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFile {
    pub status: String,
    pub objective: Option<f64>,
    pub values: Assignment,
}

/// Writes values in the problem's canonical variable order.
pub fn write_solution_csv(p: &MilpProblem, status: &str, objective: Option<f64>, values: &Assignment) -> String {
    let mut out = String::new();
    match objective {
        Some(v) => writeln!(out, "# status={status} objective={v:?}"),
        None => writeln!(out, "# status={status}"),
    }
    .unwrap();
    out.push_str("variable,value\n");
    for v in p.vars() {
        if let Some(x) = values.get(&v.name) {
            writeln!(out, "{},{x:?}", v.name).unwrap();
        }
    }
    out
}

pub fn parse_solution_csv(text: &str) -> Result<SolutionFile, String> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or("empty solution file")?;
    let meta = header.strip_prefix('#').ok_or("line 1: expected `# status=...` header")?;
    let mut status = None;
    let mut objective = None;
    for field in meta.split_whitespace() {
        match field.split_once('=') {
            Some(("status", s)) => status = Some(s.to_string()),
            Some(("objective", v)) => {
                objective = Some(v.parse::<f64>().map_err(|_| format!("line 1: bad objective `{v}`"))?)
            }
            _ => return Err(format!("line 1: unexpected field `{field}`")),
        }
    }
    match lines.next() {
        Some((_, "variable,value")) => {}
        _ => return Err("line 2: expected `variable,value`".into()),
    }
    let mut values = Assignment::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (name, v) = line.split_once(',').ok_or_else(|| format!("line {}: expected two fields", i + 1))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("line {}: bad value `{v}`", i + 1))?;
        values.insert(name.trim(), v);
    }
    Ok(SolutionFile {
        status: status.ok_or("line 1: missing status")?,
        objective,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solve::{solve_milp, SolverConfig};
    use crate::uc::{build_milp, fixtures};

    #[test]
    fn round_trip_optimal_solution() {
        let p = build_milp(&fixtures::two_unit_one_period()).unwrap();
        let r = solve_milp(&p, &SolverConfig::default()).unwrap();
        let inc = r.incumbent.unwrap();
        let text = write_solution_csv(&p, "optimal", r.objective, &inc);
        assert!(text.starts_with("# status=optimal objective=120.0\nvariable,value\np_0_0,60.0\n"));
        let back = parse_solution_csv(&text).unwrap();
        assert_eq!(back.values, inc);
        assert_eq!(back.objective, Some(120.0));
        assert_eq!(back.status, "optimal");
    }

    #[test]
    fn rejects_missing_header() {
        assert!(parse_solution_csv("variable,value\nx,1\n").is_err());
    }
}
