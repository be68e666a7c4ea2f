//! An inference session: one network, its evidence, the shared eval graph
//! and the term engine, plus the open requests.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::binding::{Binding, VarId};
use crate::engine::{Engine, Pull, ScalingHook, StreamId, TermId, TraceEvent};
use crate::error::{Error, Result};
use crate::estimator::{remaining_mass_bound, RemainingMass};
use crate::factoring::{EvalGraph, NodeId, NodeKind};
use crate::net::{BeliefNet, Evidence};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct QueryId(pub usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum RequestKind {
    Marginal,
    Mlch,
}

#[derive(Clone, Debug)]
struct Request {
    vars: Vec<VarId>,
    kind: RequestKind,
    root: NodeId,
    stream: StreamId,
    steps: usize,
    exhausted: bool,
    observations: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValueBounds {
    pub binding: Binding,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnytimeBounds {
    pub values: Vec<ValueBounds>,
    pub mass_accounted: f64,
    /// Sound remaining mass used for the upper bounds.
    pub remaining: f64,
    /// Skewness-model estimate; advisory.
    pub fitted_remaining: Option<f64>,
    pub n_eff: Option<f64>,
    pub steps: usize,
    pub exhausted: bool,
}

impl AnytimeBounds {
    pub fn get(&self, b: &Binding) -> Option<&ValueBounds> {
        self.values.iter().find(|v| &v.binding == b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MlchOutcome {
    pub hypothesis: Option<(Binding, f64)>,
    pub terms_created: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct UpdateReport {
    pub removed_terms: usize,
    pub recomputed_terms: usize,
    pub restricted_streams: usize,
    pub invalidated_streams: Vec<StreamId>,
    pub new_nodes: Vec<NodeId>,
    pub rerooted: Vec<QueryId>,
    pub reuse: usize,
    /// Terms killed or recomputed.
    pub touched: usize,
    pub graph_nodes: usize,
    /// Largest number of terms held by all streams of one node.
    pub max_node_terms: usize,
}

pub struct Session {
    net: BeliefNet,
    evidence: Evidence,
    graph: EvalGraph,
    engine: Engine,
    requests: Vec<Request>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("variables", &self.net.len())
            .field("evidence", &self.evidence)
            .field("graph_nodes", &self.graph.len())
            .field("requests", &self.requests.len())
            .finish()
    }
}

impl Session {
    pub fn new(net: BeliefNet) -> Self {
        let engine = Engine::new(&net, &Evidence::new());
        Session {
            net,
            evidence: Evidence::new(),
            graph: EvalGraph::new(),
            engine,
            requests: Vec::new(),
        }
    }

    /// A session whose evidence is in place before any request.
    pub fn with_evidence(net: BeliefNet, evidence: Evidence) -> Result<Self> {
        for (&v, &x) in &evidence {
            if !net.contains(v) {
                return Err(Error::UnknownVariable(v.to_string()));
            }
            if x >= net.arity(v) {
                return Err(Error::OutOfRange(format!("value {x} for `{}`", net.name(v))));
            }
        }
        let engine = Engine::new(&net, &evidence);
        Ok(Session {
            net,
            evidence,
            graph: EvalGraph::new(),
            engine,
            requests: Vec::new(),
        })
    }

    pub fn net(&self) -> &BeliefNet {
        &self.net
    }

    pub fn evidence(&self) -> &Evidence {
        &self.evidence
    }

    pub fn graph(&self) -> &EvalGraph {
        &self.graph
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn set_hook(&mut self, hook: Option<ScalingHook>) {
        self.engine.set_hook(hook);
    }

    pub fn enable_trace(&mut self) {
        self.engine.enable_trace();
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.engine.take_trace()
    }

    pub fn terms_created(&self) -> usize {
        self.engine.counters().terms_created
    }

    pub fn requests(&self) -> impl Iterator<Item = (QueryId, RequestKind, &[VarId])> {
        self.requests
            .iter()
            .enumerate()
            .map(|(i, r)| (QueryId(i), r.kind, r.vars.as_slice()))
    }

    fn request(&self, q: QueryId) -> Result<&Request> {
        self.requests.get(q.0).ok_or(Error::UnknownQuery(q.0))
    }

    pub fn root_stream(&self, q: QueryId) -> Result<StreamId> {
        Ok(self.request(q)?.stream)
    }

    pub fn root_node(&self, q: QueryId) -> Result<NodeId> {
        Ok(self.request(q)?.root)
    }

    fn open_request(&mut self, vars: &[VarId], kind: RequestKind) -> Result<QueryId> {
        if vars.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let set: BTreeSet<VarId> = vars.iter().copied().collect();
        for &v in &set {
            if !self.net.contains(v) {
                return Err(Error::UnknownVariable(v.to_string()));
            }
            if self.evidence.contains_key(&v) {
                return Err(Error::QueryObserved(self.net.name(v).to_string()));
            }
        }
        let out = self.graph.merge_query(&self.net, &set, &self.evidence)?;
        let stream = self.engine.open_stream(&self.graph, &self.net, out.root, &Binding::new())?;
        self.requests.push(Request {
            vars: set.into_iter().collect(),
            kind,
            root: out.root,
            stream,
            steps: 0,
            exhausted: false,
            observations: Vec::new(),
        });
        Ok(QueryId(self.requests.len() - 1))
    }

    /// Registers a marginal query over `vars`.
    pub fn add_query(&mut self, vars: &[VarId]) -> Result<QueryId> {
        self.open_request(vars, RequestKind::Marginal)
    }

    /// Registers a most-likely-composite-hypothesis request over `vars`.
    pub fn add_mlch(&mut self, vars: &[VarId]) -> Result<QueryId> {
        self.open_request(vars, RequestKind::Mlch)
    }

    /// One unit of anytime work: a marginalizing root absorbs one child
    /// term, any other root emits one term.
    fn step_once(&mut self, q: QueryId) -> Pull {
        let r = &self.requests[q.0];
        let sid = r.stream;
        let pull = if self.engine.stream(sid).is_marginalize() {
            self.engine.absorb_one(&self.graph, &self.net, sid)
        } else {
            self.engine.next_term(&self.graph, &self.net, sid)
        };
        match pull {
            Pull::Term(_) => {
                let accounted = self.accounted(q);
                let r = &mut self.requests[q.0];
                r.steps += 1;
                r.observations.push((r.steps as f64, accounted));
            }
            Pull::Exhausted => self.requests[q.0].exhausted = true,
            Pull::OutOfFuel => {}
        }
        pull
    }

    /// Performs up to `k` more steps; returns how many produced a term.
    pub fn step(&mut self, q: QueryId, k: usize) -> Result<usize> {
        Ok(self.step_terms(q, k)?.len())
    }

    /// Like [`Session::step`] but returns the term each step produced: a root
    /// term, or the child term a marginalizing root absorbed.
    pub fn step_terms(&mut self, q: QueryId, k: usize) -> Result<Vec<TermId>> {
        self.request(q)?;
        let mut out = Vec::new();
        for _ in 0..k {
            match self.step_once(q) {
                Pull::Term(t) => out.push(t),
                _ => break,
            }
        }
        Ok(out)
    }

    pub fn request_kind(&self, q: QueryId) -> Result<RequestKind> {
        Ok(self.request(q)?.kind)
    }

    pub fn request_vars(&self, q: QueryId) -> Result<&[VarId]> {
        Ok(&self.request(q)?.vars)
    }

    /// Runs a query until its root has nothing more to give.
    pub fn exhaust(&mut self, q: QueryId) -> Result<usize> {
        self.request(q)?;
        let mut done = 0;
        while let Pull::Term(_) = self.step_once(q) {
            done += 1;
        }
        Ok(done)
    }

    /// Live root terms with their current masses.
    fn root_terms(&self, q: QueryId) -> Vec<(Binding, f64)> {
        let r = &self.requests[q.0];
        let s = self.engine.stream(r.stream);
        let ids = if s.is_marginalize() {
            s.merged_terms()
        } else {
            s.emitted.clone()
        };
        ids.into_iter()
            .map(|t| self.engine.term(t))
            .filter(|t| t.alive)
            .map(|t| (t.binding.project(&r.vars), t.mass))
            .collect()
    }

    fn accounted(&self, q: QueryId) -> f64 {
        self.root_terms(q).iter().map(|t| t.1).sum()
    }

    /// Current per-value brackets for a query.
    pub fn bounds(&self, q: QueryId) -> Result<AnytimeBounds> {
        let r = self.request(q)?;
        let mut lowers: BTreeMap<Binding, f64> = BTreeMap::new();
        let size: u128 = r.vars.iter().map(|&v| self.net.arity(v) as u128).product();
        if size > crate::oracle::ENUMERATION_GUARD {
            return Err(Error::SizeGuard(size));
        }
        let mut digits = vec![0usize; r.vars.len()];
        'outer: loop {
            lowers.insert(r.vars.iter().copied().zip(digits.iter().copied()).collect(), 0.0);
            let mut k = r.vars.len();
            loop {
                if k == 0 {
                    break 'outer;
                }
                k -= 1;
                digits[k] += 1;
                if digits[k] < self.net.arity(r.vars[k]) {
                    break;
                }
                digits[k] = 0;
            }
        }
        for (b, m) in self.root_terms(q) {
            *lowers.entry(b).or_default() += m;
        }
        let accounted: f64 = lowers.values().sum();
        let RemainingMass {
            trivial,
            fitted,
            n_eff,
            ..
        } = remaining_mass_bound(&r.observations, accounted, r.exhausted);
        Ok(AnytimeBounds {
            values: lowers
                .into_iter()
                .map(|(binding, lower)| ValueBounds {
                    binding,
                    lower,
                    upper: lower + trivial,
                })
                .collect(),
            mass_accounted: accounted,
            remaining: trivial,
            fitted_remaining: fitted,
            n_eff,
            steps: r.steps,
            exhausted: r.exhausted,
        })
    }

    /// Brings a query to `budget` cumulative steps and returns its brackets.
    pub fn anytime_query(&mut self, q: QueryId, budget: usize) -> Result<AnytimeBounds> {
        let r = self.request(q)?;
        let more = budget.saturating_sub(r.steps);
        self.step(q, more)?;
        self.bounds(q)
    }

    /// First complete term of an MLCH request, creating at most `budget`
    /// terms in this call.
    pub fn mlch(&mut self, q: QueryId, budget: usize) -> Result<MlchOutcome> {
        let r = self.request(q)?;
        let sid = r.stream;
        let before = self.terms_created();
        let first = self.engine.stream(sid).emitted.first().copied();
        let found = match first {
            Some(t) => Some(t),
            None => {
                self.engine.set_fuel(Some(budget));
                let pull = self.engine.next_term(&self.graph, &self.net, sid);
                self.engine.set_fuel(None);
                match pull {
                    Pull::Term(t) => Some(t),
                    Pull::Exhausted => return Err(Error::Degenerate("no hypothesis is consistent with the evidence".into())),
                    Pull::OutOfFuel => None,
                }
            }
        };
        Ok(MlchOutcome {
            hypothesis: found.map(|t| {
                let t = self.engine.term(t);
                (t.binding.project(&self.requests[q.0].vars), t.mass)
            }),
            terms_created: self.terms_created() - before,
        })
    }

    /// Registers and answers an MLCH request in one call.
    pub fn mlch_over(&mut self, vars: &[VarId], budget: usize) -> Result<MlchOutcome> {
        let q = self.add_mlch(vars)?;
        self.mlch(q, budget)
    }

    fn max_node_terms(&self) -> usize {
        let mut per: BTreeMap<NodeId, usize> = BTreeMap::new();
        for t in self.engine.terms() {
            *per.entry(self.engine.stream(t.stream).node).or_default() += 1;
        }
        per.values().copied().max().unwrap_or(0)
    }

    /// Re-derives query roots after the net or evidence changed, reopening
    /// root streams and forgetting streams on nodes no longer in use.
    fn reroot(&mut self, report: &mut UpdateReport, stale: impl Fn(&EvalGraph, NodeId) -> bool) -> Result<()> {
        let before_nodes = self.graph.len();
        let before_reuse = self.graph.reuse_count();
        let reachable_before = self.graph.reachable();
        self.graph.rebuild_roots(&self.net, &self.evidence)?;
        report.new_nodes = (before_nodes..self.graph.len()).map(NodeId).collect();
        report.reuse = self.graph.reuse_count() - before_reuse;
        let reachable = self.graph.reachable();
        let dropped: BTreeSet<NodeId> = reachable_before
            .difference(&reachable)
            .copied()
            .filter(|&n| stale(&self.graph, n))
            .collect();
        report.invalidated_streams = self.engine.drop_streams(&dropped);
        for (i, r) in self.requests.iter_mut().enumerate() {
            let root = self.graph.root_of(&r.vars).expect("every request has a root");
            if root != r.root {
                let stream = self.engine.open_stream(&self.graph, &self.net, root, &Binding::new())?;
                if !report.invalidated_streams.contains(&r.stream) {
                    report.invalidated_streams.push(r.stream);
                }
                r.root = root;
                r.stream = stream;
                r.steps = 0;
                r.exhausted = false;
                r.observations.clear();
                report.rerooted.push(QueryId(i));
            }
        }
        report.invalidated_streams.sort_unstable();
        report.invalidated_streams.dedup();
        report.graph_nodes = self.graph.len();
        report.max_node_terms = self.max_node_terms();
        Ok(())
    }

    /// Observes `var = value`: removes contradicting terms, recomputes masses
    /// that depended on them, and re-roots queries whose relevant set grew.
    pub fn assert_evidence(&mut self, var: VarId, value: usize) -> Result<UpdateReport> {
        if !self.net.contains(var) {
            return Err(Error::UnknownVariable(var.to_string()));
        }
        if value >= self.net.arity(var) {
            return Err(Error::OutOfRange(format!("value {value} for `{}`", self.net.name(var))));
        }
        if let Some(&old) = self.evidence.get(&var) {
            if old == value {
                return Ok(UpdateReport {
                    graph_nodes: self.graph.len(),
                    ..Default::default()
                });
            }
            let existing = self.net.variable(var).values[old].clone();
            return Err(Error::ConflictingEvidence {
                var: self.net.name(var).to_string(),
                existing,
            });
        }
        if self.requests.iter().any(|r| r.vars.contains(&var)) {
            return Err(Error::QueryObserved(self.net.name(var).to_string()));
        }
        self.evidence.insert(var, value);
        let restriction = self.engine.restrict(&self.graph, &self.net, &self.evidence, &[var]);
        let mut report = UpdateReport {
            removed_terms: restriction.killed.len(),
            recomputed_terms: restriction.recomputed,
            restricted_streams: restriction.streams_touched.len(),
            touched: restriction.killed.len() + restriction.recomputed,
            ..Default::default()
        };
        for r in &mut self.requests {
            if self.graph.node(r.root).mentions.binary_search(&var).is_ok() {
                // masses went down; earlier fit points no longer describe the stream
                r.observations.clear();
            }
        }
        self.reroot(&mut report, |g, n| g.node(n).mentions.binary_search(&var).is_ok())?;
        Ok(report)
    }

    /// Adds a variable; existing structures are unaffected.
    pub fn extend_add_node(
        &mut self,
        name: &str,
        values: Vec<String>,
        parents: &[VarId],
        rows: Vec<Vec<f64>>,
    ) -> Result<(VarId, UpdateReport)> {
        let id = self.net.add_variable(name, values, parents.to_vec(), rows)?;
        Ok((
            id,
            UpdateReport {
                graph_nodes: self.graph.len(),
                ..Default::default()
            },
        ))
    }

    /// Adds `parent -> child` with a new table for `child`, then rebuilds the
    /// part of the graph that used the old table.
    pub fn extend_add_arc(&mut self, parent: VarId, child: VarId, rows: Vec<Vec<f64>>) -> Result<UpdateReport> {
        let old_version = if self.net.contains(child) {
            self.net.table_version(child)
        } else {
            return Err(Error::UnknownVariable(child.to_string()));
        };
        self.net.add_arc(parent, child, rows)?;
        self.graph.forget_table(child);
        let mut report = UpdateReport::default();
        let uses_old = |g: &EvalGraph, n: NodeId| -> bool { contains_leaf(g, n, child, old_version) };
        self.reroot(&mut report, uses_old)?;
        Ok(report)
    }
}

fn contains_leaf(g: &EvalGraph, n: NodeId, var: VarId, version: u32) -> bool {
    let node = g.node(n);
    if node.dists.binary_search(&var).is_err() {
        return false;
    }
    match &node.kind {
        NodeKind::Leaf { var: v, version: w } => *v == var && *w == version,
        _ => g.children(n).into_iter().any(|c| contains_leaf(g, c, var, version)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::tests::figure_two;
    use crate::oracle::exact_marginal;

    fn id(net: &BeliefNet, n: &str) -> VarId {
        net.id_of(n).unwrap()
    }

    #[test]
    fn budget_zero_brackets_everything() {
        let net = figure_two();
        let d = id(&net, "D");
        let mut s = Session::new(net);
        let q = s.add_query(&[d]).unwrap();
        let b = s.anytime_query(q, 0).unwrap();
        assert_eq!(b.mass_accounted, 0.0);
        for v in &b.values {
            assert_eq!(v.lower, 0.0);
            assert_eq!(v.upper, 1.0);
        }
    }

    #[test]
    fn exhaustion_closes_the_bracket() {
        let net = figure_two();
        let d = id(&net, "D");
        let exact = exact_marginal(&net, &[d], &Evidence::new()).unwrap();
        let mut s = Session::new(net);
        let q = s.add_query(&[d]).unwrap();
        let b = s.anytime_query(q, usize::MAX).unwrap();
        assert!(b.exhausted);
        for v in &b.values {
            assert!((v.lower - exact.get(&v.binding)).abs() < 1e-9);
            assert_eq!(v.lower, v.upper);
        }
    }

    #[test]
    fn conflicting_evidence_is_rejected() {
        let net = figure_two();
        let e = id(&net, "E");
        let mut s = Session::new(net);
        s.assert_evidence(e, 0).unwrap();
        assert!(s.assert_evidence(e, 0).is_ok());
        assert!(matches!(s.assert_evidence(e, 1), Err(Error::ConflictingEvidence { .. })));
    }

    #[test]
    fn adding_a_node_touches_nothing() {
        let net = figure_two();
        let (d, f) = (id(&net, "D"), id(&net, "F"));
        let mut s = Session::new(net);
        let q = s.add_query(&[d]).unwrap();
        let before = s.anytime_query(q, 5).unwrap();
        let (_, r) = s
            .extend_add_node("H", vec!["h0".into(), "h1".into()], &[f], vec![vec![0.5, 0.5], vec![0.1, 0.9]])
            .unwrap();
        assert!(r.invalidated_streams.is_empty());
        assert_eq!(s.bounds(q).unwrap(), before);
    }
}
