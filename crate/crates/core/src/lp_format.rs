//! A small, line-oriented subset of the CPLEX LP text format.
//!
//! ```text
//! Minimize
//!  obj: 2 x + 3 y + 1.5
//! Subject To
//!  c1: x + 4 y >= 2
//! Bounds
//!  0 <= x <= 10
//! Binary
//!  y
//! End
//! ```
//!
//! The objective line declares every variable, in canonical order; variables
//! without a cost are written with a zero coefficient. A bare number in the
//! objective is the constant offset. Continuous variables without a `Bounds`
//! line default to `[0, inf)`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::milp::{Constraint, MilpProblem, RowSense, VarKind, Variable};

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {msg}")]
pub struct LpParseError {
    pub line: usize,
    pub msg: String,
}

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        // Shortest representation that parses back to the same bits.
        format!("{x:?}")
    }
}

fn push_term(out: &mut String, first: bool, coef: f64, name: &str) {
    let mag = fmt_num(coef.abs());
    let neg = coef.is_sign_negative() && coef != 0.0;
    match (first, neg) {
        (true, false) => write!(out, " {mag} {name}"),
        (true, true) => write!(out, " - {mag} {name}"),
        (false, false) => write!(out, " + {mag} {name}"),
        (false, true) => write!(out, " - {mag} {name}"),
    }
    .unwrap();
}

pub fn write_lp(p: &MilpProblem) -> String {
    let mut out = String::from("Minimize\n obj:");
    let cost = p.cost_vector();
    for (j, v) in p.vars().iter().enumerate() {
        push_term(&mut out, j == 0, cost[j], &v.name);
    }
    if p.offset() != 0.0 {
        push_term(&mut out, p.num_vars() == 0, p.offset(), "");
        // push_term leaves a trailing space before the empty name
        out.truncate(out.trim_end().len());
    }
    out.push('\n');

    if p.num_constraints() > 0 {
        out.push_str("Subject To\n");
        for c in p.constraints() {
            write!(out, " {}:", c.name).unwrap();
            if c.terms.is_empty() {
                out.push_str(" 0");
            }
            for (k, &(j, a)) in c.terms.iter().enumerate() {
                push_term(&mut out, k == 0, a, &p.vars()[j].name);
            }
            writeln!(out, " {} {}", c.sense.symbol(), fmt_num(c.rhs)).unwrap();
        }
    }

    let bounded: Vec<&Variable> = p
        .vars()
        .iter()
        .filter(|v| !v.is_binary() && (v.lower != 0.0 || v.upper != f64::INFINITY))
        .collect();
    if !bounded.is_empty() {
        out.push_str("Bounds\n");
        for v in bounded {
            writeln!(out, " {} <= {} <= {}", fmt_num(v.lower), v.name, fmt_num(v.upper)).unwrap();
        }
    }

    let binaries: Vec<&str> = p.vars().iter().filter(|v| v.is_binary()).map(|v| v.name.as_str()).collect();
    if !binaries.is_empty() {
        out.push_str("Binary\n ");
        out.push_str(&binaries.join(" "));
        out.push('\n');
    }
    out.push_str("End\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Colon,
    Cmp(RowSense),
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || "_!\"#$%&()/,;?@'`{}|~".contains(c)
}

fn is_name_char(c: char) -> bool {
    is_name_start(c) || c.is_ascii_digit() || c == '.' || c == '[' || c == ']'
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Tok>, LpParseError> {
    let err = |msg: String| LpParseError { line: lineno, msg };
    let chars: Vec<char> = line.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '+' {
            toks.push(Tok::Plus);
            i += 1;
        } else if c == '-' {
            toks.push(Tok::Minus);
            i += 1;
        } else if c == ':' {
            toks.push(Tok::Colon);
            i += 1;
        } else if c == '<' || c == '>' || c == '=' {
            let next = chars.get(i + 1).copied();
            let (sense, width) = match (c, next) {
                ('<', Some('=')) | ('=', Some('<')) => (RowSense::Le, 2),
                ('>', Some('=')) | ('=', Some('>')) => (RowSense::Ge, 2),
                ('<', _) => (RowSense::Le, 1),
                ('>', _) => (RowSense::Ge, 1),
                _ => (RowSense::Eq, 1),
            };
            toks.push(Tok::Cmp(sense));
            i += width;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut k = i + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    i = k;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let val = text.parse::<f64>().map_err(|_| err(format!("bad number `{text}`")))?;
            toks.push(Tok::Num(val));
        } else if is_name_start(c) {
            let start = i;
            while i < chars.len() && is_name_char(chars[i]) {
                i += 1;
            }
            let name: String = chars[start..i].iter().collect();
            match name.to_ascii_lowercase().as_str() {
                "inf" | "infinity" => toks.push(Tok::Num(f64::INFINITY)),
                _ => toks.push(Tok::Name(name)),
            }
        } else {
            return Err(err(format!("unexpected character `{c}`")));
        }
    }
    Ok(toks)
}

/// Linear expression terms: `(coefficient, Some(name))` or a constant.
fn parse_terms(toks: &[Tok], lineno: usize) -> Result<Vec<(f64, Option<String>)>, LpParseError> {
    let err = |msg: &str| LpParseError {
        line: lineno,
        msg: msg.to_string(),
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let mut sign = 1.0;
        let mut signed = false;
        while let Some(t @ (Tok::Plus | Tok::Minus)) = toks.get(i) {
            if *t == Tok::Minus {
                sign = -sign;
            }
            signed = true;
            i += 1;
        }
        if !out.is_empty() && !signed {
            return Err(err("expected `+` or `-` between terms"));
        }
        let mut coef = None;
        if let Some(Tok::Num(v)) = toks.get(i) {
            coef = Some(*v);
            i += 1;
        }
        let name = match toks.get(i) {
            Some(Tok::Name(n)) => {
                i += 1;
                Some(n.clone())
            }
            _ => None,
        };
        if coef.is_none() && name.is_none() {
            return Err(err("expected a term"));
        }
        out.push((sign * coef.unwrap_or(1.0), name));
    }
    Ok(out)
}

fn split_label(toks: &[Tok]) -> (Option<String>, &[Tok]) {
    match toks {
        [Tok::Name(n), Tok::Colon, rest @ ..] => (Some(n.clone()), rest),
        _ => (None, toks),
    }
}

fn signed_number(toks: &[Tok], lineno: usize, what: &str) -> Result<f64, LpParseError> {
    let mut sign = 1.0;
    let mut rest = toks;
    while let [t @ (Tok::Plus | Tok::Minus), tail @ ..] = rest {
        if *t == Tok::Minus {
            sign = -sign;
        }
        rest = tail;
    }
    match rest {
        [Tok::Num(v)] => Ok(sign * v),
        _ => Err(LpParseError {
            line: lineno,
            msg: format!("expected a number for {what}"),
        }),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Start,
    Objective,
    Rows,
    Bounds,
    Binary,
    Done,
}

pub fn parse_lp(text: &str) -> Result<MilpProblem, LpParseError> {
    let mut section = Section::Start;
    let mut vars: Vec<Variable> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut objective = Vec::new();
    let mut offset = 0.0;
    let mut seen_objective = false;
    let mut rows: Vec<Constraint> = Vec::new();
    let mut row_names = HashSet::new();
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        last_line = lineno;
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| LpParseError { line: lineno, msg };
        let header = match line {
            "Minimize" => Some(Section::Objective),
            "Subject To" => Some(Section::Rows),
            "Bounds" => Some(Section::Bounds),
            "Binary" => Some(Section::Binary),
            "End" => Some(Section::Done),
            _ => None,
        };
        if section == Section::Done {
            return Err(err("content after `End`".into()));
        }
        if let Some(next) = header {
            let order = |s: Section| s as u8;
            let valid = match next {
                Section::Objective => section == Section::Start,
                _ => section != Section::Start && order(next) > order(section),
            };
            if !valid {
                return Err(err(format!("section header `{line}` out of order")));
            }
            section = next;
            continue;
        }
        let toks = tokenize(line, lineno)?;
        match section {
            Section::Start => return Err(err(format!("expected `Minimize`, found `{line}`"))),
            Section::Objective => {
                if seen_objective {
                    return Err(err("objective must be a single line".into()));
                }
                seen_objective = true;
                let (_, body) = split_label(&toks);
                for (coef, name) in parse_terms(body, lineno)? {
                    match name {
                        None => offset += coef,
                        Some(n) => {
                            if index.contains_key(&n) {
                                return Err(err(format!("duplicate variable `{n}` in objective")));
                            }
                            index.insert(n.clone(), vars.len());
                            objective.push((vars.len(), coef));
                            vars.push(Variable::continuous(n, 0.0, f64::INFINITY));
                        }
                    }
                }
            }
            Section::Rows => {
                let (label, body) = split_label(&toks);
                let name = label.ok_or_else(|| err("constraint needs a `name:` label".into()))?;
                if !row_names.insert(name.clone()) {
                    return Err(err(format!("duplicate constraint name `{name}`")));
                }
                let cmp = body
                    .iter()
                    .position(|t| matches!(t, Tok::Cmp(_)))
                    .ok_or_else(|| err("constraint needs `<=`, `=` or `>=`".into()))?;
                let Tok::Cmp(sense) = body[cmp] else { unreachable!() };
                let rhs = signed_number(&body[cmp + 1..], lineno, "right-hand side")?;
                let mut terms: Vec<(usize, f64)> = Vec::new();
                let mut constant = 0.0;
                for (coef, n) in parse_terms(&body[..cmp], lineno)? {
                    match n {
                        None => constant += coef,
                        Some(n) => {
                            let j = *index
                                .get(&n)
                                .ok_or_else(|| err(format!("unknown variable `{n}` in `{name}`")))?;
                            match terms.iter_mut().find(|(k, _)| *k == j) {
                                Some(t) => t.1 += coef,
                                None => terms.push((j, coef)),
                            }
                        }
                    }
                }
                rows.push(Constraint::new(name, terms, sense, rhs - constant));
            }
            Section::Bounds => {
                let shape = err("expected `<lo> <= <var> <= <hi>`".into());
                let le: Vec<usize> = toks
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| matches!(t, Tok::Cmp(_)))
                    .map(|(k, _)| k)
                    .collect();
                let (lo, name, hi) = match (le.as_slice(), toks.get(le.first().map_or(0, |k| k + 1))) {
                    (&[a, b], Some(Tok::Name(n)))
                        if b == a + 2
                            && toks[a] == Tok::Cmp(RowSense::Le)
                            && toks[b] == Tok::Cmp(RowSense::Le) =>
                    {
                        (
                            signed_number(&toks[..a], lineno, "lower bound")?,
                            n.clone(),
                            signed_number(&toks[b + 1..], lineno, "upper bound")?,
                        )
                    }
                    _ => return Err(shape),
                };
                let j = *index
                    .get(&name)
                    .ok_or_else(|| err(format!("unknown variable `{name}` in bounds")))?;
                vars[j].lower = lo;
                vars[j].upper = hi;
            }
            Section::Binary => {
                for t in toks {
                    let Tok::Name(n) = t else {
                        return Err(err("expected variable names".into()));
                    };
                    let j = *index
                        .get(&n)
                        .ok_or_else(|| err(format!("unknown variable `{n}` in Binary")))?;
                    let v = &mut vars[j];
                    if v.lower != 0.0 || v.upper != f64::INFINITY {
                        return Err(err(format!("binary variable `{n}` also has explicit bounds")));
                    }
                    v.kind = VarKind::Binary;
                    v.upper = 1.0;
                }
            }
            Section::Done => unreachable!(),
        }
    }
    if section != Section::Done {
        return Err(LpParseError {
            line: last_line + 1,
            msg: "expected `End`".into(),
        });
    }
    MilpProblem::new(vars, objective, offset, rows).map_err(|e| LpParseError {
        line: last_line,
        msg: e.to_string(),
    })
}
