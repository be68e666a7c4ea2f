//! Line-oriented text format for belief networks.
//!
//! ```text
//! # comment
//! var Rain: no yes
//! var Wet: dry wet
//! cpt Rain: 0.8 0.2
//! cpt Wet | Rain:
//!   no: 0.9 0.1
//!   yes: 0.2 0.8
//! ```
//!
//! Conditional rows may appear in any order but every parent combination is
//! required. Each row must sum to one within [`ROW_SUM_TOLERANCE`].

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::binding::VarId;
use crate::error::{Error, Result};
use crate::net::{BeliefNet, ROW_SUM_TOLERANCE};

struct VarDecl {
    name: String,
    values: Vec<String>,
    line: usize,
}

struct CptDecl {
    child: String,
    parents: Vec<String>,
    // (line, parent labels, probabilities); one entry with no labels for roots
    rows: Vec<(usize, Vec<String>, Vec<f64>)>,
    line: usize,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn column_of(raw: &str, needle: &str) -> usize {
    raw.find(needle).map_or(1, |i| i + 1)
}

fn parse_probs(raw: &str, text: &str, line: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for tok in text.split_whitespace() {
        let p: f64 = tok
            .parse()
            .map_err(|_| err(line, column_of(raw, tok), format!("invalid probability `{tok}`")))?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(err(line, raw.len() + 1, "expected probabilities"));
    }
    let sum: f64 = out.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(err(line, 1, format!("row sums to {sum}, expected 1")));
    }
    Ok(out)
}

/// Parses the text format into a network.
pub fn parse(input: &str) -> Result<BeliefNet> {
    let mut vars: Vec<VarDecl> = Vec::new();
    let mut cpts: Vec<CptDecl> = Vec::new();
    let mut open_block: Option<usize> = None;

    for (idx, raw_line) in input.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let indented = content.starts_with(' ') || content.starts_with('\t');
        if indented {
            let Some(ci) = open_block else {
                return Err(err(line, 1, "indented row outside a conditional table"));
            };
            let (labels, probs) = content
                .split_once(':')
                .ok_or_else(|| err(line, content.len() + 1, "expected `:` after parent values"))?;
            let labels: Vec<String> = labels.split_whitespace().map(str::to_string).collect();
            let probs = parse_probs(raw_line, probs, line)?;
            cpts[ci].rows.push((line, labels, probs));
            continue;
        }
        open_block = None;
        let trimmed = content.trim_end();
        if let Some(rest) = trimmed.strip_prefix("var ") {
            let (name, values) = rest
                .split_once(':')
                .ok_or_else(|| err(line, trimmed.len() + 1, "expected `:` after variable name"))?;
            let name = name.trim();
            if name.is_empty() || name.contains(char::is_whitespace) {
                return Err(err(line, 5, "invalid variable name"));
            }
            vars.push(VarDecl {
                name: name.to_string(),
                values: values.split_whitespace().map(str::to_string).collect(),
                line,
            });
        } else if let Some(rest) = trimmed.strip_prefix("cpt ") {
            let (head, tail) = rest
                .split_once(':')
                .ok_or_else(|| err(line, trimmed.len() + 1, "expected `:` in cpt header"))?;
            let (child, parents) = match head.split_once('|') {
                Some((c, p)) => (
                    c.trim().to_string(),
                    p.split_whitespace().map(str::to_string).collect::<Vec<_>>(),
                ),
                None => (head.trim().to_string(), Vec::new()),
            };
            let mut decl = CptDecl {
                child,
                parents,
                rows: Vec::new(),
                line,
            };
            if decl.parents.is_empty() {
                let probs = parse_probs(raw_line, tail, line)?;
                decl.rows.push((line, Vec::new(), probs));
                cpts.push(decl);
            } else {
                if !tail.trim().is_empty() {
                    return Err(err(
                        line,
                        column_of(raw_line, tail.trim()),
                        "conditional rows go on indented lines",
                    ));
                }
                cpts.push(decl);
                open_block = Some(cpts.len() - 1);
            }
        } else {
            return Err(err(line, 1, format!("unknown statement `{}`", trimmed.split_whitespace().next().unwrap_or(""))));
        }
    }
    assemble(vars, cpts)
}

fn assemble(vars: Vec<VarDecl>, cpts: Vec<CptDecl>) -> Result<BeliefNet> {
    let mut decl_of: HashMap<&str, usize> = HashMap::new();
    for (i, v) in vars.iter().enumerate() {
        if decl_of.insert(v.name.as_str(), i).is_some() {
            return Err(err(v.line, 5, format!("duplicate variable `{}`", v.name)));
        }
    }
    let mut cpt_of: Vec<Option<usize>> = vec![None; vars.len()];
    for (ci, c) in cpts.iter().enumerate() {
        let &vi = decl_of
            .get(c.child.as_str())
            .ok_or_else(|| err(c.line, 5, format!("table for undeclared variable `{}`", c.child)))?;
        if cpt_of[vi].replace(ci).is_some() {
            return Err(err(c.line, 5, format!("second table for `{}`", c.child)));
        }
        for p in &c.parents {
            if !decl_of.contains_key(p.as_str()) {
                return Err(err(c.line, 5, format!("unknown parent `{p}`")));
            }
        }
    }
    if let Some(vi) = cpt_of.iter().position(Option::is_none) {
        return Err(err(vars[vi].line, 1, format!("no table for `{}`", vars[vi].name)));
    }

    // insert in an order where parents come first, ties by declaration order
    let mut net = BeliefNet::new();
    let mut placed: Vec<Option<VarId>> = vec![None; vars.len()];
    let mut remaining: Vec<usize> = (0..vars.len()).collect();
    while !remaining.is_empty() {
        let pos = remaining.iter().position(|&vi| {
            let c = &cpts[cpt_of[vi].unwrap()];
            c.parents.iter().all(|p| placed[decl_of[p.as_str()]].is_some())
        });
        let Some(pos) = pos else {
            let c = &cpts[cpt_of[remaining[0]].unwrap()];
            return Err(err(c.line, 1, "parent relation contains a cycle"));
        };
        let vi = remaining.remove(pos);
        let c = &cpts[cpt_of[vi].unwrap()];
        let parents: Vec<VarId> = c.parents.iter().map(|p| placed[decl_of[p.as_str()]].unwrap()).collect();
        let arities: Vec<usize> = parents.iter().map(|&p| net.arity(p)).collect();
        let n_rows: usize = arities.iter().product();
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; n_rows];
        for (line, labels, probs) in &c.rows {
            if labels.len() != parents.len() {
                return Err(err(*line, 1, format!("expected {} parent values", parents.len())));
            }
            let mut idx = 0;
            for ((label, &p), &k) in labels.iter().zip(&parents).zip(&arities) {
                let x = net
                    .variable(p)
                    .value_index(label)
                    .ok_or_else(|| err(*line, 1, format!("unknown value `{label}` for `{}`", net.name(p))))?;
                idx = idx * k + x;
            }
            if probs.len() != vars[vi].values.len() {
                return Err(err(
                    *line,
                    1,
                    format!("expected {} probabilities", vars[vi].values.len()),
                ));
            }
            if rows[idx].replace(probs.clone()).is_some() {
                return Err(err(*line, 1, "duplicate parent combination"));
            }
        }
        if rows.iter().any(Option::is_none) {
            return Err(err(c.line, 1, format!("missing rows for `{}`", c.child)));
        }
        let rows = rows.into_iter().map(Option::unwrap).collect();
        let id = net
            .add_variable(&vars[vi].name, vars[vi].values.clone(), parents, rows)
            .map_err(|e| err(vars[vi].line, 1, e.to_string()))?;
        placed[vi] = Some(id);
    }
    Ok(net)
}

pub fn load(path: &std::path::Path) -> Result<BeliefNet> {
    parse(&std::fs::read_to_string(path)?)
}

/// Writes a network in the text format; `parse(&write(n))` rebuilds `n`.
pub fn write(net: &BeliefNet) -> String {
    let mut out = String::new();
    for v in net.variables() {
        let _ = writeln!(out, "var {}: {}", v.name, v.values.join(" "));
    }
    for v in net.topological_order() {
        let t = net.table(v);
        let fmt_row = |row: &[f64]| row.iter().map(|p| format!("{p}")).collect::<Vec<_>>().join(" ");
        if t.parents.is_empty() {
            let _ = writeln!(out, "cpt {}: {}", net.name(v), fmt_row(&t.rows[0]));
            continue;
        }
        let names: Vec<&str> = t.parents.iter().map(|&p| net.name(p)).collect();
        let _ = writeln!(out, "cpt {} | {}:", net.name(v), names.join(" "));
        for (r, row) in t.rows.iter().enumerate() {
            let mut rem = r;
            let mut labels = vec![""; t.parents.len()];
            for (k, &p) in t.parents.iter().enumerate().rev() {
                let a = net.arity(p);
                labels[k] = &net.variable(p).values[rem % a];
                rem /= a;
            }
            let _ = writeln!(out, "  {}: {}", labels.join(" "), fmt_row(row));
        }
    }
    out
}
