//! Line-oriented command interpreter behind the `termnet` binary.
//!
//! ```text
//! load net.tn
//! evidence C=c1
//! query X,Y
//! mlch X,Y
//! step 3
//! bound
//! add-node H: h0 h1 | X: 0.3 0.7 0.6 0.4
//! add-arc Y H: 0.3 0.7 0.6 0.4 0.5 0.5 0.1 0.9
//! bench circuits --gates 9 --fault 1 --seed 7
//! dump
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use thiserror::Error;

use crate::binding::{Binding, VarId};
use crate::circuits::{self, CircuitSpec, Topology};
use crate::error::Error;
use crate::net::BeliefNet;
use crate::netfile;
use crate::session::{QueryId, RequestKind, Session};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: {source}")]
    Command {
        line: usize,
        #[source]
        source: Error,
    },
    #[error("{path}: {source}")]
    Load {
        path: String,
        #[source]
        source: Error,
    },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for malformed input, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Syntax { .. } => 2,
            CliError::Load {
                source: Error::Parse { .. },
                ..
            } => 2,
            _ => 1,
        }
    }
}

/// Formats with 10 significant digits, trailing zeros trimmed.
pub fn sig10(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..=10).contains(&mag) {
        return format!("{x:.9e}");
    }
    let decimals = (9 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn render_binding(net: &BeliefNet, b: &Binding) -> String {
    let parts: Vec<String> = b
        .iter()
        .map(|(v, x)| format!("{}={}", net.name(v), net.variable(v).values[x]))
        .collect();
    if parts.is_empty() {
        "()".into()
    } else {
        parts.join(",")
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    kind: &'a str,
    node: usize,
    binding: Vec<(&'a str, &'a str)>,
    mass: f64,
    counter: usize,
}

#[derive(Parser, Debug)]
#[command(name = "bench circuits", no_binary_name = true)]
struct BenchArgs {
    /// Gate count; runs the canonical 1, 2, 4, 9 suite when omitted.
    #[arg(long)]
    gates: Option<usize>,
    #[arg(long, default_value_t = 0)]
    fault: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = circuits::DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = circuits::DEFAULT_FAULT_PRIOR)]
    prior: f64,
    /// Inverter chain instead of the canonical layout.
    #[arg(long)]
    chain: bool,
    /// Also write the results as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

pub struct Interpreter<W: Write> {
    out: W,
    session: Option<Session>,
    base_dir: PathBuf,
    trace: Option<BufWriter<File>>,
}

type Step<T> = std::result::Result<T, CliError>;

fn syntax(line: usize, column: usize, message: impl Into<String>) -> CliError {
    CliError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

impl<W: Write> Interpreter<W> {
    pub fn new(out: W, base_dir: impl Into<PathBuf>) -> Self {
        Interpreter {
            out,
            session: None,
            base_dir: base_dir.into(),
            trace: None,
        }
    }

    /// Writes every engine event as one JSON object per line to `path`.
    pub fn trace_to(&mut self, path: &Path) -> Step<()> {
        self.trace = Some(BufWriter::new(File::create(path)?));
        if let Some(s) = &mut self.session {
            s.enable_trace();
        }
        Ok(())
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    pub fn into_output(self) -> W {
        self.out
    }

    pub fn run_script(&mut self, text: &str) -> Step<()> {
        for (i, raw) in text.lines().enumerate() {
            self.run_line(i + 1, raw)?;
        }
        self.flush_trace()?;
        Ok(())
    }

    pub fn run_line(&mut self, line: usize, raw: &str) -> Step<()> {
        let content = raw.split('#').next().unwrap_or("").trim_end();
        let Some(cmd) = content.split_whitespace().next() else {
            return Ok(());
        };
        let start = content.find(cmd).unwrap_or(0);
        let rest = content[start + cmd.len()..].trim();
        let rest_col = raw.find(rest).map_or(raw.len() + 1, |i| i + 1);
        let cmd_err = |source: Error| CliError::Command { line, source };
        match cmd {
            "load" => {
                if rest.is_empty() {
                    return Err(syntax(line, rest_col, "expected a file path"));
                }
                let path = self.base_dir.join(rest);
                let net = netfile::load(&path).map_err(|source| CliError::Load {
                    path: path.display().to_string(),
                    source,
                })?;
                writeln!(self.out, "loaded {} variables, {} arcs", net.len(), net.arc_count())?;
                let mut session = Session::new(net);
                if self.trace.is_some() {
                    session.enable_trace();
                }
                self.session = Some(session);
            }
            "query" | "mlch" => {
                let s = self.session_mut(line)?;
                let vars = parse_var_list(s.net(), rest, line, rest_col)?;
                let (q, label) = if cmd == "query" {
                    (s.add_query(&vars).map_err(cmd_err)?, "query")
                } else {
                    (s.add_mlch(&vars).map_err(cmd_err)?, "mlch")
                };
                let names = names(s.net(), &vars);
                writeln!(self.out, "{label} q{} over {names}", q.0)?;
            }
            "evidence" => {
                let s = self.session_mut(line)?;
                let (name, value) = rest
                    .split_once('=')
                    .ok_or_else(|| syntax(line, rest_col, "expected VAR=value"))?;
                let var = s.net().id_of(name.trim()).map_err(cmd_err)?;
                let x = s.net().value_index(var, value.trim()).map_err(cmd_err)?;
                let r = s.assert_evidence(var, x).map_err(cmd_err)?;
                writeln!(
                    self.out,
                    "evidence {}={}: killed {}, recomputed {}, rerooted {}",
                    name.trim(),
                    value.trim(),
                    r.removed_terms,
                    r.recomputed_terms,
                    r.rerooted.len()
                )?;
            }
            "add-node" => {
                let s = self.session_mut(line)?;
                let (name, values, parents, probs) = parse_add_node(s.net(), rest, line, rest_col)?;
                let rows = chunk_rows(&probs, values.len(), line, rest_col)?;
                let (_, r) = s.extend_add_node(&name, values, &parents, rows).map_err(cmd_err)?;
                writeln!(self.out, "added node {name}: graph nodes {}", r.graph_nodes)?;
            }
            "add-arc" => {
                let s = self.session_mut(line)?;
                let (head, probs) = rest
                    .split_once(':')
                    .ok_or_else(|| syntax(line, rest_col, "expected `PARENT CHILD: probabilities`"))?;
                let ends: Vec<&str> = head.split_whitespace().collect();
                let [p, c] = ends[..] else {
                    return Err(syntax(line, rest_col, "expected a parent and a child"));
                };
                let parent = s.net().id_of(p).map_err(cmd_err)?;
                let child = s.net().id_of(c).map_err(cmd_err)?;
                let probs = parse_probs(probs, line, raw)?;
                let rows = chunk_rows(&probs, s.net().arity(child), line, rest_col)?;
                let r = s.extend_add_arc(parent, child, rows).map_err(cmd_err)?;
                writeln!(
                    self.out,
                    "added arc {p} -> {c}: new nodes {}, rerooted {}, dropped streams {}",
                    r.new_nodes.len(),
                    r.rerooted.len(),
                    r.invalidated_streams.len()
                )?;
            }
            "step" => {
                let k: usize = rest
                    .parse()
                    .map_err(|_| syntax(line, rest_col, format!("expected a step count, got `{rest}`")))?;
                self.step(line, k)?;
            }
            "bound" | "bounds" => self.bound(line)?,
            "bench" => {
                let mut toks = rest.split_whitespace();
                if toks.next() != Some("circuits") {
                    return Err(syntax(line, rest_col, "expected `bench circuits`"));
                }
                let args = BenchArgs::try_parse_from(toks).map_err(|e| {
                    let msg = e.to_string();
                    syntax(line, rest_col, msg.lines().next().unwrap_or("").to_string())
                })?;
                self.bench(line, &args)?;
            }
            "dump" => {
                let s = self.session_mut(line)?;
                let text = s.graph().dump(s.net());
                write!(self.out, "{text}")?;
            }
            other => return Err(syntax(line, start + 1, format!("unknown command `{other}`"))),
        }
        self.flush_trace()?;
        Ok(())
    }

    fn session_mut(&mut self, line: usize) -> Step<&mut Session> {
        self.session.as_mut().ok_or_else(|| CliError::Command {
            line,
            source: Error::Degenerate("no network loaded".into()),
        })
    }

    fn step(&mut self, line: usize, k: usize) -> Step<()> {
        let cmd_err = |source: Error| CliError::Command { line, source };
        let s = self.session.as_mut().ok_or_else(|| CliError::Command {
            line,
            source: Error::Degenerate("no network loaded".into()),
        })?;
        let reqs: Vec<(QueryId, RequestKind)> = s.requests().map(|(q, kind, _)| (q, kind)).collect();
        for (q, kind) in reqs {
            match kind {
                RequestKind::Marginal => {
                    let merging = s.engine().stream(s.root_stream(q).map_err(cmd_err)?).is_marginalize();
                    let label = if merging { "merge" } else { "term" };
                    for _ in 0..k {
                        let Some(&t) = s.step_terms(q, 1).map_err(cmd_err)?.first() else {
                            break;
                        };
                        let t = s.engine().term(t);
                        let text = render_binding(s.net(), &t.binding);
                        writeln!(self.out, "q{} {label} {text} mass {}", q.0, sig10(t.mass))?;
                    }
                }
                RequestKind::Mlch => {
                    let out = s.mlch(q, k).map_err(cmd_err)?;
                    match out.hypothesis {
                        Some((b, m)) => writeln!(
                            self.out,
                            "q{} hypothesis {} mass {} (terms {})",
                            q.0,
                            render_binding(s.net(), &b),
                            sig10(m),
                            out.terms_created
                        )?,
                        None => writeln!(self.out, "q{} no hypothesis yet (terms {})", q.0, out.terms_created)?,
                    }
                }
            }
        }
        Ok(())
    }

    fn bound(&mut self, line: usize) -> Step<()> {
        let cmd_err = |source: Error| CliError::Command { line, source };
        let s = self.session.as_mut().ok_or_else(|| CliError::Command {
            line,
            source: Error::Degenerate("no network loaded".into()),
        })?;
        let reqs: Vec<(QueryId, RequestKind)> = s.requests().map(|(q, kind, _)| (q, kind)).collect();
        for (q, kind) in reqs {
            if kind == RequestKind::Mlch {
                match s.mlch(q, 0).map_err(cmd_err)?.hypothesis {
                    Some((b, m)) => writeln!(
                        self.out,
                        "q{} hypothesis {} mass {}",
                        q.0,
                        render_binding(s.net(), &b),
                        sig10(m)
                    )?,
                    None => writeln!(self.out, "q{} no hypothesis yet", q.0)?,
                }
                continue;
            }
            let b = s.bounds(q).map_err(cmd_err)?;
            for v in &b.values {
                writeln!(
                    self.out,
                    "q{} {} [{}, {}]",
                    q.0,
                    render_binding(s.net(), &v.binding),
                    sig10(v.lower),
                    sig10(v.upper)
                )?;
            }
            let fitted = b.fitted_remaining.map_or("-".to_string(), sig10);
            writeln!(
                self.out,
                "q{} steps {} accounted {} remaining {} fitted {}{}",
                q.0,
                b.steps,
                sig10(b.mass_accounted),
                sig10(b.remaining),
                fitted,
                if b.exhausted { " exhausted" } else { "" }
            )?;
        }
        Ok(())
    }

    fn bench(&mut self, line: usize, args: &BenchArgs) -> Step<()> {
        let cmd_err = |source: Error| CliError::Command { line, source };
        let reports = match args.gates {
            None => circuits::canonical_suite(args.seed).map_err(cmd_err)?,
            Some(g) => {
                let spec = CircuitSpec {
                    gate_count: g,
                    topology: if args.chain { Topology::Chain } else { Topology::Canonical },
                    fault_prior: args.prior,
                };
                vec![circuits::run_mlch_bench(&spec, args.fault, args.seed, args.budget).map_err(cmd_err)?]
            }
        };
        write!(self.out, "{}", circuits::format_table(&reports))?;
        if let Some(path) = &args.csv {
            std::fs::write(self.base_dir.join(path), circuits::format_csv(&reports))?;
        }
        Ok(())
    }

    fn flush_trace(&mut self) -> Step<()> {
        let (Some(w), Some(s)) = (&mut self.trace, &mut self.session) else {
            return Ok(());
        };
        for e in s.take_trace() {
            let net = s.net();
            let binding = e
                .binding
                .iter()
                .map(|(v, x)| (net.name(v), net.variable(v).values[x].as_str()))
                .collect();
            let rec = TraceLine {
                kind: e.kind,
                node: e.node,
                binding,
                mass: e.mass,
                counter: e.counter,
            };
            serde_json::to_writer(&mut *w, &rec).map_err(std::io::Error::from)?;
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn names(net: &BeliefNet, vars: &[VarId]) -> String {
    vars.iter().map(|&v| net.name(v)).collect::<Vec<_>>().join(",")
}

fn parse_var_list(net: &BeliefNet, text: &str, line: usize, col: usize) -> Step<Vec<VarId>> {
    let mut out = Vec::new();
    for name in text.split([',', ' ']).filter(|s| !s.is_empty()) {
        let v = net.id_of(name).map_err(|source| CliError::Command { line, source })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(syntax(line, col, "expected variable names"));
    }
    Ok(out)
}

fn parse_probs(text: &str, line: usize, raw: &str) -> Step<Vec<f64>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| {
                let col = raw.find(tok).map_or(1, |i| i + 1);
                syntax(line, col, format!("invalid probability `{tok}`"))
            })
        })
        .collect()
}

fn chunk_rows(probs: &[f64], arity: usize, line: usize, col: usize) -> Step<Vec<Vec<f64>>> {
    if arity == 0 || probs.is_empty() || probs.len() % arity != 0 {
        return Err(syntax(
            line,
            col,
            format!("{} probabilities do not split into rows of {arity}", probs.len()),
        ));
    }
    Ok(probs.chunks(arity).map(<[f64]>::to_vec).collect())
}

/// `NAME: v0 v1 [| P1 P2]: probabilities`
fn parse_add_node(
    net: &BeliefNet,
    text: &str,
    line: usize,
    col: usize,
) -> Step<(String, Vec<String>, Vec<VarId>, Vec<f64>)> {
    let mut parts = text.splitn(3, ':');
    let (Some(name), Some(mid), Some(probs)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(syntax(line, col, "expected `NAME: values [| parents]: probabilities`"));
    };
    let (values, parents) = match mid.split_once('|') {
        Some((v, p)) => (v, p),
        None => (mid, ""),
    };
    let values: Vec<String> = values.split_whitespace().map(str::to_string).collect();
    let parents = parents
        .split_whitespace()
        .map(|p| net.id_of(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| CliError::Command { line, source })?;
    let probs = parse_probs(probs, line, text)?;
    Ok((name.trim().to_string(), values, parents, probs))
}
