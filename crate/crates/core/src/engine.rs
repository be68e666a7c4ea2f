//! Term streams over an eval graph.
//!
//! Every (node, conditioning binding) pair owns at most one stream. Leaf
//! streams walk the rows of a table in decreasing order. Product streams run
//! a best-first search over pairs of child terms, with the partial product as
//! the priority. Marginalize streams sum child terms that agree on the
//! variables kept above and emit a merged term once no future child term can
//! exceed it. A merged term that grows after it was emitted pushes the
//! increase to every term built on top of it.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::Serialize;

use crate::binding::{Binding, VarId};
use crate::error::{Error, Result};
use crate::factoring::{EvalGraph, NodeId, NodeKind};
use crate::net::{BeliefNet, Evidence};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TermId(pub usize);

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StreamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub enum TermOrigin {
    Leaf,
    Product { left: TermId, right: TermId },
    Merged { contributors: Vec<TermId> },
}

#[derive(Clone, Debug)]
pub struct Term {
    pub id: TermId,
    pub stream: StreamId,
    /// Assignment of the owning node's free variables.
    pub binding: Binding,
    pub mass: f64,
    pub origin: TermOrigin,
    pub dependents: Vec<TermId>,
    /// Cleared when evidence contradicts the binding.
    pub alive: bool,
}

impl Term {
    pub fn is_merged(&self) -> bool {
        matches!(self.origin, TermOrigin::Merged { .. })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Pull {
    Term(TermId),
    Exhausted,
    OutOfFuel,
}

/// Maps a partial binding and its mass to an agenda priority.
pub type ScalingHook = Box<dyn Fn(&Binding, f64) -> f64>;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WorkCounters {
    pub terms_created: usize,
    pub merges: usize,
    pub deltas: usize,
    pub cache_hits: usize,
    pub streams_opened: usize,
    pub agenda_pops: usize,
    pub terms_killed: usize,
    pub terms_recomputed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceEvent {
    pub kind: &'static str,
    pub node: usize,
    pub binding: Binding,
    pub mass: f64,
    pub counter: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum EntryKind {
    /// The `i`-th left term and everything after it.
    NextLeft(usize),
    /// Left row `i` with the `j`-th term of its right stream and everything after.
    Pair(usize, usize),
    /// Left row `i` times right term `j`, both known.
    Complete(usize, usize),
}

#[derive(Clone, Debug)]
struct Entry {
    priority: f64,
    bound: f64,
    exact: bool,
    seq: u64,
    kind: EntryKind,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Clone, Debug)]
enum State {
    Leaf {
        rows: Vec<(Binding, f64)>,
        pos: usize,
    },
    Product {
        left: StreamId,
        right_node: NodeId,
        right_vars: Vec<VarId>,
        rows: Vec<(TermId, StreamId)>,
        agenda: BinaryHeap<Entry>,
        dirty: bool,
    },
    Marginalize {
        child: StreamId,
        keep: Vec<VarId>,
        cursor: usize,
        merged: HashMap<Binding, TermId>,
        pending: Vec<TermId>,
    },
}

#[derive(Clone, Debug)]
pub struct Stream {
    pub node: NodeId,
    pub cond: Binding,
    pub emitted: Vec<TermId>,
    pub exhausted: bool,
    state: State,
}

impl Stream {
    pub fn agenda_len(&self) -> usize {
        match &self.state {
            State::Leaf { rows, pos } => rows.len() - pos,
            State::Product { agenda, .. } => agenda.len(),
            State::Marginalize { pending, .. } => pending.len(),
        }
    }

    /// Merged terms not yet emitted (empty for other stream kinds).
    pub fn pending(&self) -> &[TermId] {
        match &self.state {
            State::Marginalize { pending, .. } => pending,
            _ => &[],
        }
    }

    /// Every merged term of a marginalize stream, emitted or not.
    pub fn merged_terms(&self) -> Vec<TermId> {
        match &self.state {
            State::Marginalize { merged, .. } => {
                let mut v: Vec<TermId> = merged.values().copied().collect();
                v.sort_unstable();
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn is_marginalize(&self) -> bool {
        matches!(self.state, State::Marginalize { .. })
    }
}

/// Effect of restricting live streams to new evidence.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Restriction {
    pub killed: Vec<TermId>,
    pub recomputed: usize,
    pub streams_touched: Vec<StreamId>,
}

#[derive(Default)]
pub struct Engine {
    terms: Vec<Term>,
    streams: Vec<Stream>,
    cache: HashMap<(NodeId, Binding), StreamId>,
    evidence: Binding,
    counters: WorkCounters,
    fuel: Option<usize>,
    hook: Option<ScalingHook>,
    trace: Option<Vec<TraceEvent>>,
    seq: u64,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("terms", &self.terms.len())
            .field("streams", &self.streams.len())
            .field("counters", &self.counters)
            .finish()
    }
}

impl Engine {
    pub fn new(net: &BeliefNet, evidence: &Evidence) -> Self {
        Engine {
            evidence: net.evidence_binding(evidence),
            ..Default::default()
        }
    }

    pub fn set_hook(&mut self, hook: Option<ScalingHook>) {
        self.hook = hook;
        for s in 0..self.streams.len() {
            if let State::Product { dirty, .. } = &mut self.streams[s].state {
                *dirty = true;
            }
        }
    }

    /// Limits how many more terms may be created; `None` removes the limit.
    pub fn set_fuel(&mut self, fuel: Option<usize>) {
        self.fuel = fuel;
    }

    pub fn fuel(&self) -> Option<usize> {
        self.fuel
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn counters(&self) -> &WorkCounters {
        &self.counters
    }

    pub fn term(&self, id: TermId) -> &Term {
        &self.terms[id.0]
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn stream(&self, id: StreamId) -> &Stream {
        &self.streams[id.0]
    }

    pub fn streams(&self) -> &[Stream] {
        &self.streams
    }

    pub fn cached(&self, node: NodeId, cond: &Binding) -> Option<StreamId> {
        self.cache.get(&(node, cond.clone())).copied()
    }

    pub fn live_terms(&self) -> usize {
        self.terms.iter().filter(|t| t.alive).count()
    }

    fn record(&mut self, kind: &'static str, node: NodeId, binding: &Binding, mass: f64) {
        if let Some(tr) = self.trace.as_mut() {
            tr.push(TraceEvent {
                kind,
                node: node.0,
                binding: binding.clone(),
                mass,
                counter: self.counters.terms_created,
            });
        }
    }

    fn spend(&mut self) -> bool {
        match self.fuel.as_mut() {
            Some(0) => false,
            Some(f) => {
                *f -= 1;
                true
            }
            None => true,
        }
    }

    fn has_fuel(&self) -> bool {
        self.fuel != Some(0)
    }

    fn new_term(&mut self, stream: StreamId, binding: Binding, mass: f64, origin: TermOrigin) -> TermId {
        let id = TermId(self.terms.len());
        match &origin {
            TermOrigin::Leaf => {}
            TermOrigin::Product { left, right } => {
                self.terms[left.0].dependents.push(id);
                self.terms[right.0].dependents.push(id);
            }
            TermOrigin::Merged { contributors } => {
                for c in contributors {
                    self.terms[c.0].dependents.push(id);
                }
            }
        }
        self.counters.terms_created += 1;
        let node = self.streams[stream.0].node;
        self.record("create", node, &binding, mass);
        self.terms.push(Term {
            id,
            stream,
            binding,
            mass,
            origin,
            dependents: Vec::new(),
            alive: true,
        });
        id
    }

    /// Cached stream for `(node, cond)`, creating it if needed. Conditioning
    /// may only bind variables in the node's needed set.
    pub fn open_stream(&mut self, g: &EvalGraph, net: &BeliefNet, node: NodeId, cond: &Binding) -> Result<StreamId> {
        let n = g.try_node(node)?;
        for v in cond.vars() {
            if n.needed.binary_search(&v).is_err() {
                return Err(Error::IllegalConditioning {
                    node: node.0,
                    var: net.name(v).to_string(),
                });
            }
        }
        Ok(self.open(g, net, node, cond.clone()))
    }

    fn open(&mut self, g: &EvalGraph, net: &BeliefNet, node: NodeId, cond: Binding) -> StreamId {
        if let Some(&sid) = self.cache.get(&(node, cond.clone())) {
            self.counters.cache_hits += 1;
            return sid;
        }
        let n = g.node(node);
        let state = match &n.kind {
            NodeKind::Leaf { var, .. } => State::Leaf {
                rows: self.leaf_rows(net, *var, &cond),
                pos: 0,
            },
            NodeKind::Product { left, right } => {
                let lvars = &g.node(*left).vars_present;
                let lsid = self.open(g, net, *left, cond.project(lvars));
                State::Product {
                    left: lsid,
                    right_node: *right,
                    right_vars: g.node(*right).vars_present.clone(),
                    rows: Vec::new(),
                    agenda: BinaryHeap::new(),
                    dirty: false,
                }
            }
            NodeKind::Marginalize { child, .. } => {
                let cvars = &g.node(*child).vars_present;
                let csid = self.open(g, net, *child, cond.project(cvars));
                State::Marginalize {
                    child: csid,
                    keep: n.vars_present.clone(),
                    cursor: 0,
                    merged: HashMap::new(),
                    pending: Vec::new(),
                }
            }
        };
        let sid = StreamId(self.streams.len());
        self.streams.push(Stream {
            node,
            cond: cond.clone(),
            emitted: Vec::new(),
            exhausted: false,
            state,
        });
        self.cache.insert((node, cond), sid);
        self.counters.streams_opened += 1;
        if matches!(self.streams[sid.0].state, State::Product { .. }) {
            let left = match &self.streams[sid.0].state {
                State::Product { left, .. } => *left,
                _ => unreachable!(),
            };
            if let Some((bound, exact)) = self.bound_at(left, 0) {
                let b = self.streams[sid.0].cond.clone();
                self.push(sid, EntryKind::NextLeft(0), bound, exact, &b);
            }
        }
        sid
    }

    fn leaf_rows(&self, net: &BeliefNet, var: VarId, cond: &Binding) -> Vec<(Binding, f64)> {
        let table = net.table(var);
        let scope = table.scope();
        // a dead left term can still open a right stream under a stale binding
        if !cond.consistent_with(&self.evidence) {
            return Vec::new();
        }
        let fixed = cond.union(&self.evidence.project(&scope));
        let free: Vec<VarId> = scope.iter().copied().filter(|v| !fixed.contains(*v)).collect();
        let mut rows = Vec::new();
        let mut digits = vec![0usize; free.len()];
        loop {
            let mut b = fixed.clone();
            for (&v, &x) in free.iter().zip(&digits) {
                b.set(v, x);
            }
            let p = table.prob(net, &b);
            // structural zeros contribute nothing to any sum
            if p > 0.0 {
                rows.push((b, p));
            }
            let mut k = free.len();
            loop {
                if k == 0 {
                    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                    return rows;
                }
                k -= 1;
                digits[k] += 1;
                if digits[k] < net.arity(free[k]) {
                    break;
                }
                digits[k] = 0;
            }
        }
    }

    fn push(&mut self, sid: StreamId, kind: EntryKind, bound: f64, exact: bool, partial: &Binding) {
        let priority = match &self.hook {
            Some(h) => h(partial, bound),
            None => bound,
        };
        self.seq += 1;
        let seq = self.seq;
        if let State::Product { agenda, .. } = &mut self.streams[sid.0].state {
            agenda.push(Entry {
                priority,
                bound,
                exact,
                seq,
                kind,
            });
        }
    }

    fn repush(&mut self, sid: StreamId, e: Entry) {
        if let State::Product { agenda, .. } = &mut self.streams[sid.0].state {
            agenda.push(e);
        }
    }

    /// Upper estimate of the mass of any term the stream has yet to emit;
    /// `None` once nothing more can come.
    pub fn peek_bound(&mut self, sid: StreamId) -> Option<f64> {
        self.refresh(sid);
        let s = &self.streams[sid.0];
        match &s.state {
            State::Leaf { rows, pos } => rows.get(*pos).map(|r| r.1),
            State::Product { agenda, .. } => agenda.peek().map(|e| e.bound),
            State::Marginalize {
                child, pending, cursor, ..
            } => {
                let best = pending
                    .iter()
                    .map(|t| self.terms[t.0].mass)
                    .max_by(f64::total_cmp);
                let (child, cursor) = (*child, *cursor);
                let cb = self.bound_at(child, cursor).map(|b| b.0);
                match (best, cb) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                }
            }
        }
    }

    /// Mass of the first live term at or after index `j`, exact when that
    /// term sits at `j` itself.
    fn bound_at(&mut self, sid: StreamId, j: usize) -> Option<(f64, bool)> {
        let s = &self.streams[sid.0];
        for (k, t) in s.emitted.iter().enumerate().skip(j) {
            let t = &self.terms[t.0];
            if t.alive {
                return Some((t.mass, k == j));
            }
        }
        self.peek_bound(sid).map(|b| (b, false))
    }

    fn refresh(&mut self, sid: StreamId) {
        let (left, rows, entries) = match &mut self.streams[sid.0].state {
            State::Product {
                dirty: dirty @ true,
                agenda,
                left,
                rows,
                ..
            } => {
                *dirty = false;
                (*left, rows.clone(), std::mem::take(agenda).into_vec())
            }
            _ => return,
        };
        let cond = self.streams[sid.0].cond.clone();
        let mut rebuilt = Vec::with_capacity(entries.len());
        for mut e in entries {
            let (bound, exact, partial) = match e.kind {
                EntryKind::NextLeft(i) => match self.bound_at(left, i) {
                    Some((b, x)) => (b, x, cond.clone()),
                    None => continue,
                },
                EntryKind::Pair(i, j) => {
                    let (lt, rs) = rows[i];
                    let lt = &self.terms[lt.0];
                    if !lt.alive {
                        continue;
                    }
                    let (lm, lb) = (lt.mass, lt.binding.clone());
                    match self.bound_at(rs, j) {
                        Some((b, x)) => (lm * b, x, lb),
                        None => continue,
                    }
                }
                EntryKind::Complete(i, j) => {
                    let (lt, rs) = rows[i];
                    let rt = self.streams[rs.0].emitted[j];
                    let (l, r) = (&self.terms[lt.0], &self.terms[rt.0]);
                    if !l.alive || !r.alive {
                        continue;
                    }
                    (l.mass * r.mass, true, l.binding.union(&r.binding))
                }
            };
            e.bound = bound;
            e.exact = exact;
            e.priority = match &self.hook {
                Some(h) => h(&partial, bound),
                None => bound,
            };
            rebuilt.push(e);
        }
        if let State::Product { agenda, .. } = &mut self.streams[sid.0].state {
            *agenda = BinaryHeap::from(rebuilt);
        }
    }

    /// The `j`-th emitted term of a stream, pulling as needed.
    pub fn term_at(&mut self, g: &EvalGraph, net: &BeliefNet, sid: StreamId, j: usize) -> Pull {
        loop {
            if let Some(&t) = self.streams[sid.0].emitted.get(j) {
                return Pull::Term(t);
            }
            match self.next_term(g, net, sid) {
                Pull::Term(_) => {}
                other => return other,
            }
        }
    }

    /// Advances a stream by one emitted term.
    pub fn next_term(&mut self, g: &EvalGraph, net: &BeliefNet, sid: StreamId) -> Pull {
        if self.streams[sid.0].exhausted {
            return Pull::Exhausted;
        }
        let out = match self.streams[sid.0].state {
            State::Leaf { .. } => self.leaf_next(sid),
            State::Product { .. } => self.product_next(g, net, sid),
            State::Marginalize { .. } => self.marginal_next(g, net, sid),
        };
        match out {
            Pull::Term(t) => self.streams[sid.0].emitted.push(t),
            Pull::Exhausted => self.streams[sid.0].exhausted = true,
            Pull::OutOfFuel => {}
        }
        out
    }

    fn leaf_next(&mut self, sid: StreamId) -> Pull {
        let State::Leaf { rows, pos } = &self.streams[sid.0].state else {
            unreachable!()
        };
        let Some((b, p)) = rows.get(*pos).cloned() else {
            return Pull::Exhausted;
        };
        if !self.spend() {
            return Pull::OutOfFuel;
        }
        if let State::Leaf { pos, .. } = &mut self.streams[sid.0].state {
            *pos += 1;
        }
        Pull::Term(self.new_term(sid, b, p, TermOrigin::Leaf))
    }

    fn product_parts(&self, sid: StreamId) -> (StreamId, NodeId, Vec<VarId>) {
        match &self.streams[sid.0].state {
            State::Product {
                left,
                right_node,
                right_vars,
                ..
            } => (*left, *right_node, right_vars.clone()),
            _ => unreachable!(),
        }
    }

    fn row(&self, sid: StreamId, i: usize) -> (TermId, StreamId) {
        match &self.streams[sid.0].state {
            State::Product { rows, .. } => rows[i],
            _ => unreachable!(),
        }
    }

    fn product_next(&mut self, g: &EvalGraph, net: &BeliefNet, sid: StreamId) -> Pull {
        if !self.has_fuel() {
            return Pull::OutOfFuel;
        }
        self.refresh(sid);
        let (left, right_node, right_vars) = self.product_parts(sid);
        loop {
            let popped = match &mut self.streams[sid.0].state {
                State::Product { agenda, .. } => agenda.pop(),
                _ => unreachable!(),
            };
            let Some(entry) = popped else {
                return Pull::Exhausted;
            };
            self.counters.agenda_pops += 1;
            match entry.kind {
                EntryKind::NextLeft(i) => {
                    let lt = match self.term_at(g, net, left, i) {
                        Pull::Term(t) => t,
                        Pull::Exhausted => continue,
                        Pull::OutOfFuel => {
                            self.repush(sid, entry);
                            return Pull::OutOfFuel;
                        }
                    };
                    let cond = self.streams[sid.0].cond.clone();
                    if let Some((b, x)) = self.bound_at(left, i + 1) {
                        self.push(sid, EntryKind::NextLeft(i + 1), b, x, &cond);
                    }
                    let t = &self.terms[lt.0];
                    let (lm, lb, alive) = (t.mass, t.binding.clone(), t.alive);
                    let rcond = cond.union(&lb).project(&right_vars);
                    let rs = self.open(g, net, right_node, rcond);
                    let row = match &mut self.streams[sid.0].state {
                        State::Product { rows, .. } => {
                            rows.push((lt, rs));
                            rows.len() - 1
                        }
                        _ => unreachable!(),
                    };
                    if !alive {
                        continue;
                    }
                    if let Some((b, x)) = self.bound_at(rs, 0) {
                        self.push(sid, EntryKind::Pair(row, 0), lm * b, x, &lb);
                    }
                }
                EntryKind::Pair(i, j) => {
                    let (lt, rs) = self.row(sid, i);
                    if !self.terms[lt.0].alive {
                        continue;
                    }
                    let rt = match self.term_at(g, net, rs, j) {
                        Pull::Term(t) => t,
                        Pull::Exhausted => continue,
                        Pull::OutOfFuel => {
                            self.repush(sid, entry);
                            return Pull::OutOfFuel;
                        }
                    };
                    let l = &self.terms[lt.0];
                    let (lm, lb) = (l.mass, l.binding.clone());
                    if let Some((b, x)) = self.bound_at(rs, j + 1) {
                        self.push(sid, EntryKind::Pair(i, j + 1), lm * b, x, &lb);
                    }
                    let r = &self.terms[rt.0];
                    if !r.alive {
                        continue;
                    }
                    let exact = lm * r.mass;
                    if entry.exact {
                        return self.emit_product(sid, lt, rt, entry);
                    }
                    let full = lb.union(&r.binding);
                    self.push(sid, EntryKind::Complete(i, j), exact, true, &full);
                }
                EntryKind::Complete(i, j) => {
                    let (lt, rs) = self.row(sid, i);
                    let rt = self.streams[rs.0].emitted[j];
                    if !self.terms[lt.0].alive || !self.terms[rt.0].alive {
                        continue;
                    }
                    return self.emit_product(sid, lt, rt, entry);
                }
            }
        }
    }

    fn emit_product(&mut self, sid: StreamId, lt: TermId, rt: TermId, entry: Entry) -> Pull {
        if !self.spend() {
            self.repush(sid, entry);
            return Pull::OutOfFuel;
        }
        let (l, r) = (&self.terms[lt.0], &self.terms[rt.0]);
        let binding = l.binding.union(&r.binding);
        let mass = l.mass * r.mass;
        Pull::Term(self.new_term(sid, binding, mass, TermOrigin::Product { left: lt, right: rt }))
    }

    fn marginal_parts(&self, sid: StreamId) -> (StreamId, usize) {
        match &self.streams[sid.0].state {
            State::Marginalize { child, cursor, .. } => (*child, *cursor),
            _ => unreachable!(),
        }
    }

    fn best_pending(&self, sid: StreamId) -> Option<(usize, TermId)> {
        let State::Marginalize { pending, .. } = &self.streams[sid.0].state else {
            unreachable!()
        };
        let mut best: Option<(usize, TermId)> = None;
        for (k, &t) in pending.iter().enumerate() {
            let m = self.terms[t.0].mass;
            if best.is_none_or(|(_, b)| m > self.terms[b.0].mass) {
                best = Some((k, t));
            }
        }
        best
    }

    fn marginal_next(&mut self, g: &EvalGraph, net: &BeliefNet, sid: StreamId) -> Pull {
        loop {
            let (child, cursor) = self.marginal_parts(sid);
            // the child may be shared, so bound from this stream's cursor
            let bound = self.bound_at(child, cursor).map(|b| b.0);
            if let Some((k, t)) = self.best_pending(sid) {
                if bound.is_none_or(|b| self.terms[t.0].mass >= b) {
                    if let State::Marginalize { pending, .. } = &mut self.streams[sid.0].state {
                        pending.remove(k);
                    }
                    return Pull::Term(t);
                }
            } else if bound.is_none() && self.streams[child.0].exhausted {
                return Pull::Exhausted;
            }
            match self.absorb_one(g, net, sid) {
                Pull::OutOfFuel => return Pull::OutOfFuel,
                Pull::Exhausted => {
                    if self.best_pending(sid).is_none() {
                        return Pull::Exhausted;
                    }
                }
                Pull::Term(_) => {}
            }
        }
    }

    /// Pulls one child term into a marginalize stream, merging it with any
    /// term that agrees on the kept variables. Returns the merged term.
    pub fn absorb_one(&mut self, g: &EvalGraph, net: &BeliefNet, sid: StreamId) -> Pull {
        let (child, cursor) = self.marginal_parts(sid);
        let ct = match self.term_at(g, net, child, cursor) {
            Pull::Term(t) => t,
            other => return other,
        };
        if let State::Marginalize { cursor, .. } = &mut self.streams[sid.0].state {
            *cursor += 1;
        }
        if !self.terms[ct.0].alive {
            return self.absorb_one(g, net, sid);
        }
        Pull::Term(self.merge(sid, ct))
    }

    /// Adds a child term to the merged term sharing its kept bindings.
    pub fn merge(&mut self, sid: StreamId, ground: TermId) -> TermId {
        let State::Marginalize { keep, merged, .. } = &self.streams[sid.0].state else {
            panic!("merge on a stream that does not marginalize");
        };
        let key = self.terms[ground.0].binding.project(keep);
        let mass = self.terms[ground.0].mass;
        match merged.get(&key).copied() {
            Some(m) => {
                self.counters.merges += 1;
                self.terms[ground.0].dependents.push(m);
                if let TermOrigin::Merged { contributors } = &mut self.terms[m.0].origin {
                    contributors.push(ground);
                }
                let node = self.streams[sid.0].node;
                self.record("merge", node, &key, mass);
                self.propagate_delta(m, mass);
                m
            }
            None => {
                let m = self.new_term(
                    sid,
                    key.clone(),
                    mass,
                    TermOrigin::Merged {
                        contributors: vec![ground],
                    },
                );
                if let State::Marginalize { merged, pending, .. } = &mut self.streams[sid.0].state {
                    merged.insert(key, m);
                    pending.push(m);
                }
                m
            }
        }
    }

    /// Raises `term` by `delta` and carries the change to every term built on it.
    pub fn propagate_delta(&mut self, term: TermId, delta: f64) {
        if delta == 0.0 {
            return;
        }
        self.counters.deltas += 1;
        self.terms[term.0].mass += delta;
        let t = &self.terms[term.0];
        let node = self.streams[t.stream.0].node;
        let (b, m, stream) = (t.binding.clone(), t.mass, t.stream);
        self.record("delta", node, &b, m);
        self.mark_dirty(stream);
        let deps = self.terms[term.0].dependents.clone();
        for d in deps {
            if !self.terms[d.0].alive {
                continue;
            }
            match self.terms[d.0].origin {
                TermOrigin::Product { left, right } => {
                    let new = self.terms[left.0].mass * self.terms[right.0].mass;
                    let old = self.terms[d.0].mass;
                    self.propagate_delta(d, new - old);
                }
                TermOrigin::Merged { .. } => self.propagate_delta(d, delta),
                TermOrigin::Leaf => {}
            }
        }
    }

    fn mark_dirty(&mut self, sid: StreamId) {
        // any product stream may hold entries priced off this stream's terms
        for s in &mut self.streams {
            if let State::Product { left, rows, dirty, .. } = &mut s.state {
                if *left == sid || rows.iter().any(|r| r.1 == sid) {
                    *dirty = true;
                }
            }
        }
    }

    /// Applies an extended evidence set to every live stream whose node
    /// mentions one of `vars`, bottom-up by node height.
    pub fn restrict(&mut self, g: &EvalGraph, net: &BeliefNet, evidence: &Evidence, vars: &[VarId]) -> Restriction {
        self.evidence = net.evidence_binding(evidence);
        let mut order: Vec<StreamId> = (0..self.streams.len())
            .map(StreamId)
            .filter(|s| {
                let n = g.node(self.streams[s.0].node);
                vars.iter().any(|v| n.mentions.binary_search(v).is_ok())
            })
            .collect();
        order.sort_by_key(|s| (g.node(self.streams[s.0].node).height, s.0));
        let ev = self.evidence.clone();
        let mut out = Restriction::default();
        for sid in order {
            out.streams_touched.push(sid);
            let emitted = self.streams[sid.0].emitted.clone();
            match &mut self.streams[sid.0].state {
                State::Leaf { rows, pos } => {
                    let mut kept: Vec<(Binding, f64)> = rows[..*pos].to_vec();
                    kept.extend(rows[*pos..].iter().filter(|r| r.0.consistent_with(&ev)).cloned());
                    *rows = kept;
                    for t in emitted {
                        if self.terms[t.0].alive && !self.terms[t.0].binding.consistent_with(&ev) {
                            self.kill(t, &mut out);
                        }
                    }
                }
                State::Product { dirty, .. } => {
                    *dirty = true;
                    for t in emitted {
                        if !self.terms[t.0].alive {
                            continue;
                        }
                        let TermOrigin::Product { left, right } = self.terms[t.0].origin else {
                            unreachable!()
                        };
                        let (l, r) = (&self.terms[left.0], &self.terms[right.0]);
                        if !l.alive || !r.alive {
                            self.kill(t, &mut out);
                            continue;
                        }
                        let m = l.mass * r.mass;
                        if m != self.terms[t.0].mass {
                            self.terms[t.0].mass = m;
                            out.recomputed += 1;
                        }
                    }
                }
                State::Marginalize { merged, pending, .. } => {
                    let all: Vec<TermId> = merged.values().copied().collect();
                    let mut dead = Vec::new();
                    for m in all {
                        if !self.terms[m.0].alive {
                            continue;
                        }
                        if !self.terms[m.0].binding.consistent_with(&ev) {
                            dead.push(m);
                            continue;
                        }
                        let TermOrigin::Merged { contributors } = &self.terms[m.0].origin else {
                            unreachable!()
                        };
                        let live: Vec<TermId> = contributors
                            .iter()
                            .copied()
                            .filter(|c| self.terms[c.0].alive)
                            .collect();
                        let mass: f64 = live.iter().map(|c| self.terms[c.0].mass).sum();
                        if live.len() != contributors.len() || mass != self.terms[m.0].mass {
                            out.recomputed += 1;
                        }
                        self.terms[m.0].origin = TermOrigin::Merged { contributors: live };
                        self.terms[m.0].mass = mass;
                    }
                    pending.retain(|t| !dead.contains(t));
                    for m in dead {
                        self.kill(m, &mut out);
                    }
                }
            }
        }
        self.counters.terms_recomputed += out.recomputed;
        out
    }

    fn kill(&mut self, t: TermId, out: &mut Restriction) {
        self.terms[t.0].alive = false;
        self.counters.terms_killed += 1;
        out.killed.push(t);
        let term = &self.terms[t.0];
        let (node, b, m) = (self.streams[term.stream.0].node, term.binding.clone(), term.mass);
        self.record("kill", node, &b, m);
    }

    /// Forgets cached streams on the given nodes; the stream objects stay
    /// readable but are never handed out again.
    pub fn drop_streams(&mut self, nodes: &std::collections::BTreeSet<NodeId>) -> Vec<StreamId> {
        let mut gone: Vec<StreamId> = Vec::new();
        self.cache.retain(|(n, _), s| {
            if nodes.contains(n) {
                gone.push(*s);
                false
            } else {
                true
            }
        });
        gone.sort_unstable();
        gone
    }

    /// Streams currently reachable through the cache, by node.
    pub fn cached_streams(&self) -> Vec<(NodeId, StreamId)> {
        let mut v: Vec<(NodeId, StreamId)> = self.cache.iter().map(|((n, _), s)| (*n, *s)).collect();
        v.sort_unstable();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::tests::figure_two;
    use std::collections::BTreeSet;

    fn setup(net: &BeliefNet, q: &[&str], ev: &Evidence) -> (EvalGraph, Engine, StreamId) {
        let qs: BTreeSet<VarId> = q.iter().map(|n| net.id_of(n).unwrap()).collect();
        let g = EvalGraph::build(net, &[qs], ev).unwrap();
        let mut e = Engine::new(net, ev);
        let root = g.queries()[0].root;
        let s = e.open_stream(&g, net, root, &Binding::new()).unwrap();
        (g, e, s)
    }

    fn drain(g: &EvalGraph, net: &BeliefNet, e: &mut Engine, s: StreamId) -> Vec<TermId> {
        let mut out = Vec::new();
        while let Pull::Term(t) = e.next_term(g, net, s) {
            out.push(t);
        }
        out
    }

    #[test]
    fn leaf_stream_in_mass_order() {
        let mut net = BeliefNet::new();
        net.add_simple("A", 2, &[], vec![vec![0.25, 0.75]]).unwrap();
        let (g, mut e, s) = setup(&net, &["A"], &Evidence::new());
        let ts = drain(&g, &net, &mut e, s);
        let masses: Vec<f64> = ts.iter().map(|t| e.term(*t).mass).collect();
        assert_eq!(masses, vec![0.75, 0.25]);
        assert_eq!(e.term(ts[0]).binding.get(VarId(0)), Some(1));
    }

    #[test]
    fn reopening_hits_the_cache() {
        let net = figure_two();
        let (g, mut e, s) = setup(&net, &["D"], &Evidence::new());
        let hits = e.counters().cache_hits;
        let root = g.queries()[0].root;
        let again = e.open_stream(&g, &net, root, &Binding::new()).unwrap();
        assert_eq!(again, s);
        assert_eq!(e.counters().cache_hits, hits + 1);
    }

    #[test]
    fn conditioning_outside_needed_is_rejected() {
        let net = figure_two();
        let (g, mut e, _) = setup(&net, &["D"], &Evidence::new());
        let root = g.queries()[0].root;
        let a = net.id_of("A").unwrap();
        let bad: Binding = [(a, 0)].into_iter().collect();
        assert!(matches!(
            e.open_stream(&g, &net, root, &bad),
            Err(Error::IllegalConditioning { .. })
        ));
    }

    #[test]
    fn merged_term_conserves_mass() {
        let mut net = BeliefNet::new();
        let a = net.add_simple("A", 2, &[], vec![vec![0.6, 0.4]]).unwrap();
        net.add_simple("B", 2, &[a], vec![vec![0.5, 0.5], vec![0.5, 0.5]])
            .unwrap();
        let (g, mut e, s) = setup(&net, &["B"], &Evidence::new());
        let ts = drain(&g, &net, &mut e, s);
        assert_eq!(ts.len(), 2);
        for t in ts {
            let t = e.term(t);
            assert!((t.mass - 0.5).abs() < 1e-12);
            let TermOrigin::Merged { contributors } = &t.origin else {
                panic!()
            };
            let sum: f64 = contributors.iter().map(|c| e.term(*c).mass).sum();
            assert!((sum - t.mass).abs() < 1e-12);
        }
    }

    #[test]
    fn late_merge_raises_parent_by_the_delta() {
        // A -> B -> C; the b0 merged term is emitted before all of its
        // contributions arrive, so its parents must grow afterwards
        let mut net = BeliefNet::new();
        let a = net.add_simple("A", 2, &[], vec![vec![0.6, 0.4]]).unwrap();
        let b = net
            .add_simple("B", 2, &[a], vec![vec![0.9, 0.1], vec![0.7, 0.3]])
            .unwrap();
        net.add_simple("C", 2, &[b], vec![vec![0.8, 0.2], vec![0.5, 0.5]])
            .unwrap();
        let (g, mut e, s) = setup(&net, &["C"], &Evidence::new());
        let first = match e.next_term(&g, &net, s) {
            Pull::Term(t) => t,
            other => panic!("{other:?}"),
        };
        let before = e.term(first).mass;
        drain(&g, &net, &mut e, s);
        // first root term: c0 summed over B; it ends at P(c0)
        let after = e.term(first).mass;
        let exact = 0.6 * (0.9 * 0.8 + 0.1 * 0.5) + 0.4 * (0.7 * 0.8 + 0.3 * 0.5);
        assert!(after > before);
        assert!((after - exact).abs() < 1e-12);
        assert!(e.counters().deltas > 0);
    }

    #[test]
    fn zero_delta_changes_nothing() {
        let net = figure_two();
        let (g, mut e, s) = setup(&net, &["D"], &Evidence::new());
        let t = match e.next_term(&g, &net, s) {
            Pull::Term(t) => t,
            _ => panic!(),
        };
        let m = e.term(t).mass;
        let d = e.counters().deltas;
        e.propagate_delta(t, 0.0);
        assert_eq!(e.term(t).mass, m);
        assert_eq!(e.counters().deltas, d);
    }

    #[test]
    fn chain_full_joint_order() {
        let mut net = BeliefNet::new();
        let a = net.add_simple("A", 2, &[], vec![vec![0.9, 0.1]]).unwrap();
        net.add_simple("B", 2, &[a], vec![vec![0.9, 0.1], vec![0.2, 0.8]])
            .unwrap();
        let (g, mut e, s) = setup(&net, &["A", "B"], &Evidence::new());
        let ms: Vec<f64> = drain(&g, &net, &mut e, s).iter().map(|t| e.term(*t).mass).collect();
        let want = [0.81, 0.09, 0.08, 0.02];
        assert_eq!(ms.len(), 4);
        for (m, w) in ms.iter().zip(want) {
            assert!((m - w).abs() < 1e-12);
        }
    }

    #[test]
    fn fuel_stops_and_resumes() {
        let net = figure_two();
        let (g, mut e, s) = setup(&net, &["D"], &Evidence::new());
        e.set_fuel(Some(2));
        assert_eq!(e.next_term(&g, &net, s), Pull::OutOfFuel);
        e.set_fuel(None);
        let mut total = 0.0;
        while let Pull::Term(t) = e.next_term(&g, &net, s) {
            let _ = t;
        }
        for &t in &e.stream(s).emitted {
            total += e.term(t).mass;
        }
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn evidence_restriction_kills_contradicting_terms() {
        let net = figure_two();
        let (g, mut e, s) = setup(&net, &["D"], &Evidence::new());
        drain(&g, &net, &mut e, s);
        let ev_var = net.id_of("E").unwrap();
        let ev: Evidence = [(ev_var, 0)].into_iter().collect();
        let r = e.restrict(&g, &net, &ev, &[ev_var]);
        assert!(!r.killed.is_empty());
        for t in &r.killed {
            let b = &e.term(*t).binding;
            assert_ne!(b.get(ev_var), Some(0));
        }
        let total: f64 = e.stream(s).emitted.iter().map(|t| e.term(*t)).filter(|t| t.alive).map(|t| t.mass).sum();
        assert!((total - 0.6).abs() < 1e-12);
    }
}
