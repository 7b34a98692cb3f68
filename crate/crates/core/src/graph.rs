//! Bipartite variable/constraint graph encoding of a MILP.
//!
//! Variable features: `[cost / max(1, max|cost|), is_binary, lower / B, upper / B]`
//! where `B = max(1, max finite |bound|)` and infinite bounds encode as 0.
//!
//! Constraint features: `[rhs / ||row||_inf, sense (-1 for <=, 0 for =, +1 for >=),
//! degree / #vars, mean normalized coefficient]`.
//!
//! Edge feature: `coefficient / ||row||_inf`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::milp::{MilpProblem, RowSense};

pub const VAR_FEATURES: usize = 4;
pub const CON_FEATURES: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("permutation of length {got} for {expected} variable nodes")]
    PermLength { expected: usize, got: usize },
    #[error("permutation is not a bijection (index {0} repeated or out of range)")]
    NotBijective(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarNode {
    pub name: String,
    pub features: [f64; VAR_FEATURES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConNode {
    pub name: String,
    pub features: [f64; CON_FEATURES],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub var: usize,
    pub con: usize,
    pub feature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    pub var_nodes: Vec<VarNode>,
    pub con_nodes: Vec<ConNode>,
    pub edges: Vec<Edge>,
    /// Ascending indices of the binary variable nodes.
    pub binary_mask: Vec<usize>,
}

fn sense_code(s: RowSense) -> f64 {
    match s {
        RowSense::Le => -1.0,
        RowSense::Eq => 0.0,
        RowSense::Ge => 1.0,
    }
}

pub fn encode(p: &MilpProblem) -> BipartiteGraph {
    let cost = p.cost_vector();
    let cost_scale = cost.iter().fold(1.0_f64, |m, c| m.max(c.abs()));
    let bound_scale = p
        .vars()
        .iter()
        .flat_map(|v| [v.lower, v.upper])
        .filter(|b| b.is_finite())
        .fold(1.0_f64, |m, b| m.max(b.abs()));
    let scaled = |b: f64| if b.is_finite() { b / bound_scale } else { 0.0 };

    let var_nodes = p
        .vars()
        .iter()
        .enumerate()
        .map(|(j, v)| VarNode {
            name: v.name.clone(),
            features: [
                cost[j] / cost_scale,
                if v.is_binary() { 1.0 } else { 0.0 },
                scaled(v.lower),
                scaled(v.upper),
            ],
        })
        .collect();

    let nvars = p.num_vars().max(1) as f64;
    let mut con_nodes = Vec::with_capacity(p.num_constraints());
    let mut edges = Vec::with_capacity(p.nonzeros());
    for (i, c) in p.constraints().iter().enumerate() {
        let norm = c.terms.iter().fold(0.0_f64, |m, &(_, a)| m.max(a.abs()));
        let norm = if norm > 0.0 { norm } else { 1.0 };
        let mut coef_sum = 0.0;
        for &(j, a) in &c.terms {
            let feature = a / norm;
            coef_sum += feature;
            edges.push(Edge { var: j, con: i, feature });
        }
        let degree = c.terms.len();
        let mean = if degree > 0 { coef_sum / degree as f64 } else { 0.0 };
        con_nodes.push(ConNode {
            name: c.name.clone(),
            features: [c.rhs / norm, sense_code(c.sense), degree as f64 / nvars, mean],
        });
    }

    BipartiteGraph {
        var_nodes,
        con_nodes,
        edges,
        binary_mask: p.binary_indices(),
    }
}

/// Moves variable node `i` to position `perm[i]`, remapping edges and mask.
pub fn relabel(g: &BipartiteGraph, perm: &[usize]) -> Result<BipartiteGraph, GraphError> {
    let n = g.var_nodes.len();
    if perm.len() != n {
        return Err(GraphError::PermLength { expected: n, got: perm.len() });
    }
    let mut slots: Vec<Option<VarNode>> = vec![None; n];
    for (i, &to) in perm.iter().enumerate() {
        if to >= n || slots[to].is_some() {
            return Err(GraphError::NotBijective(to));
        }
        slots[to] = Some(g.var_nodes[i].clone());
    }
    let mut binary_mask: Vec<usize> = g.binary_mask.iter().map(|&i| perm[i]).collect();
    binary_mask.sort_unstable();
    Ok(BipartiteGraph {
        var_nodes: slots.into_iter().map(Option::unwrap).collect(),
        con_nodes: g.con_nodes.clone(),
        edges: g
            .edges
            .iter()
            .map(|e| Edge {
                var: perm[e.var],
                ..*e
            })
            .collect(),
        binary_mask,
    })
}

impl BipartiteGraph {
    /// `VARS` / `CONS` / `EDGES` sections of CSV records.
    pub fn to_text(&self) -> String {
        let mut out = String::from("VARS\n");
        let mut is_bin = vec![false; self.var_nodes.len()];
        for &i in &self.binary_mask {
            is_bin[i] = true;
        }
        for (v, b) in self.var_nodes.iter().zip(&is_bin) {
            let f = &v.features;
            writeln!(out, "{},{:?},{:?},{:?},{:?},{}", v.name, f[0], f[1], f[2], f[3], u8::from(*b)).unwrap();
        }
        out.push_str("CONS\n");
        for c in &self.con_nodes {
            let f = &c.features;
            writeln!(out, "{},{:?},{:?},{:?},{:?}", c.name, f[0], f[1], f[2], f[3]).unwrap();
        }
        out.push_str("EDGES\n");
        for e in &self.edges {
            writeln!(out, "{},{},{:?}", e.var, e.con, e.feature).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, GraphError> {
        let mut g = BipartiteGraph {
            var_nodes: Vec::new(),
            con_nodes: Vec::new(),
            edges: Vec::new(),
            binary_mask: Vec::new(),
        };
        let mut section = "";
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let err = |msg: &str| GraphError::Parse { line: lineno, msg: msg.to_string() };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if matches!(line, "VARS" | "CONS" | "EDGES") {
                let expected = match section {
                    "" => "VARS",
                    "VARS" => "CONS",
                    "CONS" => "EDGES",
                    _ => "",
                };
                if line != expected {
                    return Err(err("section out of order"));
                }
                section = expected;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| err("bad number"));
            match (section, fields.len()) {
                ("VARS", 6) => {
                    let features = [num(fields[1])?, num(fields[2])?, num(fields[3])?, num(fields[4])?];
                    match fields[5] {
                        "1" => g.binary_mask.push(g.var_nodes.len()),
                        "0" => {}
                        _ => return Err(err("binary flag must be 0 or 1")),
                    }
                    g.var_nodes.push(VarNode { name: fields[0].to_string(), features });
                }
                ("CONS", 5) => {
                    let features = [num(fields[1])?, num(fields[2])?, num(fields[3])?, num(fields[4])?];
                    g.con_nodes.push(ConNode { name: fields[0].to_string(), features });
                }
                ("EDGES", 3) => {
                    let var: usize = fields[0].trim().parse().map_err(|_| err("bad variable index"))?;
                    let con: usize = fields[1].trim().parse().map_err(|_| err("bad constraint index"))?;
                    if var >= g.var_nodes.len() || con >= g.con_nodes.len() {
                        return Err(err("edge index out of range"));
                    }
                    g.edges.push(Edge { var, con, feature: num(fields[2])? });
                }
                ("", _) => return Err(err("expected `VARS`")),
                _ => return Err(err("wrong number of fields")),
            }
        }
        if section != "EDGES" {
            return Err(GraphError::Parse {
                line: text.lines().count() + 1,
                msg: "missing section".into(),
            });
        }
        Ok(g)
    }
}
