//! Evaluation poly-trees: a shared DAG of products and marginalizations that
//! factors each query expression.
//!
//! Construction is bottom-up from the network roots. Relevant variables are
//! split into layers by longest distance from a root; each layer's tables are
//! grouped with the factors built so far into connected components, and each
//! component is collapsed into one subtree by greedy pairwise combination.
//! A variable is summed out at the lowest node where every relevant table
//! mentioning it sits below. Nodes are hash-consed, so identical subtrees
//! built for different queries are one physical node.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::binding::{Binding, VarId};
use crate::error::{Error, Result};
use crate::net::{BeliefNet, Evidence};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// The table of `var` as of table version `version`.
    Leaf { var: VarId, version: u32 },
    Product { left: NodeId, right: NodeId },
    Marginalize { child: NodeId, summed: Vec<VarId> },
}

#[derive(Clone, Debug)]
pub struct EvalNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Free variables of the subtree's value, sorted.
    pub vars_present: Vec<VarId>,
    /// Variables required above this node, sorted.
    pub needed: Vec<VarId>,
    /// Variables whose tables sit in the subtree, sorted.
    pub dists: Vec<VarId>,
    /// Every variable any table in the subtree mentions, sorted.
    pub mentions: Vec<VarId>,
    pub height: usize,
    /// Leaf holding a root variable's marginal.
    pub is_marginal: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryRoot {
    pub vars: Vec<VarId>,
    pub root: NodeId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// `var` is summed at `node` but some table outside its subtree mentions it.
    IllegalMarginalization { node: NodeId, var: VarId },
    /// A table naming root variable `var` precedes its marginal at `node`.
    MarginalOrder { node: NodeId, var: VarId },
    /// The root's free variables differ from the query.
    RootMismatch { root: NodeId },
}

/// Result of adding one query to a graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeOutcome {
    pub root: NodeId,
    pub new_nodes: Vec<NodeId>,
    pub reused: usize,
}

#[derive(Clone, Debug, Default)]
pub struct EvalGraph {
    nodes: Vec<EvalNode>,
    structural: HashMap<NodeKind, NodeId>,
    factor_index: HashMap<(Vec<VarId>, Vec<VarId>), NodeId>,
    queries: Vec<QueryRoot>,
    reuse_count: usize,
}

#[derive(Clone, Debug)]
struct Factor {
    node: NodeId,
    vars: Vec<VarId>,
    dists: Vec<VarId>,
}

fn sorted_union(a: &[VarId], b: &[VarId]) -> Vec<VarId> {
    let mut v: Vec<VarId> = a.iter().chain(b).copied().collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn intersects(a: &[VarId], b: &[VarId]) -> bool {
    a.iter().any(|x| b.binary_search(x).is_ok())
}

struct BuildCtx<'a> {
    net: &'a BeliefNet,
    query: Vec<VarId>,
    /// Number of relevant tables mentioning each variable.
    uses: HashMap<VarId, usize>,
    relevant: BTreeSet<VarId>,
}

impl BuildCtx<'_> {
    fn summable(&self, dists: &[VarId], vars: &[VarId]) -> Vec<VarId> {
        vars.iter()
            .copied()
            .filter(|v| self.query.binary_search(v).is_err())
            .filter(|v| {
                let inside = dists
                    .iter()
                    .filter(|&&d| d == *v || self.net.parents(d).contains(v))
                    .count();
                inside == self.uses.get(v).copied().unwrap_or(0)
            })
            .collect()
    }

    fn upstream(&self, a: &Factor, b: &Factor) -> bool {
        // some table of b names, as a parent, a variable whose table is in a
        b.dists
            .iter()
            .any(|&d| self.net.parents(d).iter().any(|p| a.dists.binary_search(p).is_ok()))
    }

    fn has_root_marginal(&self, f: &Factor) -> bool {
        f.dists.iter().any(|&d| self.net.table(d).is_marginal())
    }

    /// Marginal-left orientation; `None` when the pair cannot be ordered.
    fn orient(&self, a: &Factor, b: &Factor) -> Option<bool> {
        let (ab, ba) = (self.upstream(a, b), self.upstream(b, a));
        match (ab, ba) {
            (true, false) => Some(true),
            (false, true) => Some(false),
            (true, true) => {
                // both feed each other; only root marginals constrain the order
                let am = self.marginal_conflict(a, b);
                let bm = self.marginal_conflict(b, a);
                match (am, bm) {
                    (true, true) => None,
                    (true, false) => Some(true),
                    (false, true) => Some(false),
                    (false, false) => Some(a.node <= b.node),
                }
            }
            (false, false) => match (self.has_root_marginal(a), self.has_root_marginal(b)) {
                (true, false) => Some(true),
                (false, true) => Some(false),
                _ => Some(a.node <= b.node),
            },
        }
    }

    /// Every relevant root named by a table in `dists` has its marginal there too.
    fn closed(&self, dists: &[VarId]) -> bool {
        dists.iter().all(|&d| {
            self.net.parents(d).iter().all(|p| {
                !self.net.table(*p).is_marginal() || !self.relevant.contains(p) || dists.binary_search(p).is_ok()
            })
        })
    }

    /// a holds a root marginal that some conditional table in b names.
    fn marginal_conflict(&self, a: &Factor, b: &Factor) -> bool {
        a.dists.iter().any(|&x| {
            self.net.table(x).is_marginal()
                && b.dists.iter().any(|&d| self.net.parents(d).contains(&x))
        })
    }
}

impl EvalGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&self, id: NodeId) -> &EvalNode {
        &self.nodes[id.0]
    }

    pub fn try_node(&self, id: NodeId) -> Result<&EvalNode> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    pub fn nodes(&self) -> &[EvalNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn queries(&self) -> &[QueryRoot] {
        &self.queries
    }

    /// Number of times construction found an existing node instead of making one.
    pub fn reuse_count(&self) -> usize {
        self.reuse_count
    }

    pub fn root_of(&self, vars: &[VarId]) -> Option<NodeId> {
        let mut v = vars.to_vec();
        v.sort_unstable();
        self.queries.iter().find(|q| q.vars == v).map(|q| q.root)
    }

    fn intern(&mut self, kind: NodeKind, fill: impl FnOnce(&Self) -> EvalNode) -> NodeId {
        if let Some(&id) = self.structural.get(&kind) {
            self.reuse_count += 1;
            return id;
        }
        let mut node = fill(self);
        let id = NodeId(self.nodes.len());
        node.id = id;
        self.structural.insert(kind, id);
        self.nodes.push(node);
        id
    }

    /// Leaf for the current table of `var`.
    pub fn add_leaf(&mut self, net: &BeliefNet, var: VarId) -> NodeId {
        let kind = NodeKind::Leaf {
            var,
            version: net.table_version(var),
        };
        let scope = net.table(var).scope();
        let is_marginal = net.table(var).is_marginal();
        self.intern(kind.clone(), |_| EvalNode {
            id: NodeId(0),
            kind,
            vars_present: scope.clone(),
            needed: Vec::new(),
            dists: vec![var],
            mentions: scope,
            height: 0,
            is_marginal,
        })
    }

    pub fn add_product(&mut self, left: NodeId, right: NodeId) -> NodeId {
        let kind = NodeKind::Product { left, right };
        self.intern(kind.clone(), |g| {
            let (l, r) = (g.node(left), g.node(right));
            EvalNode {
                id: NodeId(0),
                kind,
                vars_present: sorted_union(&l.vars_present, &r.vars_present),
                needed: Vec::new(),
                dists: sorted_union(&l.dists, &r.dists),
                mentions: sorted_union(&l.mentions, &r.mentions),
                height: 1 + l.height.max(r.height),
                is_marginal: false,
            }
        })
    }

    pub fn add_marginalize(&mut self, child: NodeId, summed: &[VarId]) -> NodeId {
        let mut summed = summed.to_vec();
        summed.sort_unstable();
        summed.dedup();
        let kind = NodeKind::Marginalize {
            child,
            summed: summed.clone(),
        };
        self.intern(kind.clone(), |g| {
            let c = g.node(child);
            EvalNode {
                id: NodeId(0),
                kind,
                vars_present: c
                    .vars_present
                    .iter()
                    .copied()
                    .filter(|v| summed.binary_search(v).is_err())
                    .collect(),
                needed: Vec::new(),
                dists: c.dists.clone(),
                mentions: c.mentions.clone(),
                height: c.height + 1,
                is_marginal: false,
            }
        })
    }

    /// Registers `root` as the answer node for `vars` (replacing any previous root).
    pub fn add_query_root(&mut self, vars: &[VarId], root: NodeId) {
        let mut v = vars.to_vec();
        v.sort_unstable();
        v.dedup();
        match self.queries.iter_mut().find(|q| q.vars == v) {
            Some(q) => q.root = root,
            None => self.queries.push(QueryRoot { vars: v, root }),
        }
        self.refresh_needed();
    }

    fn factor_of(&self, node: NodeId) -> Factor {
        let n = self.node(node);
        Factor {
            node,
            vars: n.vars_present.clone(),
            dists: n.dists.clone(),
        }
    }

    fn wrap(&mut self, ctx: &BuildCtx<'_>, f: Factor) -> Factor {
        let legal = ctx.summable(&f.dists, &f.vars);
        if legal.is_empty() {
            return f;
        }
        let node = self.add_marginalize(f.node, &legal);
        self.factor_of(node)
    }

    fn combine(&mut self, ctx: &BuildCtx<'_>, a: Factor, b: Factor, a_left: bool) -> Factor {
        let (l, r) = if a_left { (a, b) } else { (b, a) };
        let node = self.add_product(l.node, r.node);
        let f = self.factor_of(node);
        let f = self.wrap(ctx, f);
        let key = (f.dists.clone(), f.vars.clone());
        self.factor_index.entry(key).or_insert(f.node);
        f
    }

    /// Greedy pairwise collapse of `group` into a single factor.
    fn set_factor(&mut self, ctx: &BuildCtx<'_>, mut group: Vec<Factor>) -> Factor {
        if group.len() > 1 {
            let dists: Vec<VarId> = group.iter().fold(Vec::new(), |acc, f| sorted_union(&acc, &f.dists));
            let vars: Vec<VarId> = group.iter().fold(Vec::new(), |acc, f| sorted_union(&acc, &f.vars));
            let legal = ctx.summable(&dists, &vars);
            let needed: Vec<VarId> = vars.into_iter().filter(|v| legal.binary_search(v).is_err()).collect();
            if let Some(&node) = self.factor_index.get(&(dists, needed)) {
                self.reuse_count += 1;
                return self.factor_of(node);
            }
        }
        while group.len() > 1 {
            let any_shared = (0..group.len())
                .any(|i| (i + 1..group.len()).any(|j| intersects(&group[i].vars, &group[j].vars)));
            let mut best: Option<((u128, usize, NodeId, NodeId), usize, usize, bool)> = None;
            // prefer unions that hold the marginal of every root they name:
            // two such factors can always be ordered marginal-first
            for pass in 0..4 {
                for i in 0..group.len() {
                    for j in i + 1..group.len() {
                        let (a, b) = (&group[i], &group[j]);
                        if any_shared && pass != 1 && !intersects(&a.vars, &b.vars) {
                            continue;
                        }
                        let orient = match ctx.orient(a, b) {
                            Some(o) => o,
                            None if pass == 3 => a.node <= b.node,
                            None => continue,
                        };
                        let dists = sorted_union(&a.dists, &b.dists);
                        if pass < 2 && !ctx.closed(&dists) {
                            continue;
                        }
                        let vars = sorted_union(&a.vars, &b.vars);
                        let legal = ctx.summable(&dists, &vars);
                        let size: u128 = vars
                            .iter()
                            .filter(|v| legal.binary_search(v).is_err())
                            .map(|&v| ctx.net.arity(v) as u128)
                            .product();
                        let ids = (a.node.min(b.node), a.node.max(b.node));
                        let key = (size, dists.len(), ids.0, ids.1);
                        if best.as_ref().is_none_or(|(k, ..)| key < *k) {
                            best = Some((key, i, j, orient));
                        }
                    }
                }
                if best.is_some() {
                    break;
                }
            }
            let (_, i, j, a_left) = best.expect("some pair is always combinable");
            let b = group.remove(j);
            let a = group.remove(i);
            let f = self.combine(ctx, a, b, a_left);
            group.push(f);
        }
        group.pop().expect("non-empty group")
    }

    fn construct(&mut self, net: &BeliefNet, query: &[VarId], evidence: &Evidence) -> Result<NodeId> {
        if query.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let qset: BTreeSet<VarId> = query.iter().copied().collect();
        let relevant = net.relevant_nodes(&qset, evidence)?;
        let mut uses: HashMap<VarId, usize> = HashMap::new();
        for &r in &relevant {
            for v in net.table(r).scope() {
                *uses.entry(v).or_default() += 1;
            }
        }
        let ctx = BuildCtx {
            net,
            query: qset.iter().copied().collect(),
            uses,
            relevant: relevant.clone(),
        };
        let mut pool: Vec<Factor> = Vec::new();
        for layer in net.layers(&relevant) {
            for v in layer {
                let leaf = self.add_leaf(net, v);
                let f = self.factor_of(leaf);
                let f = self.wrap(&ctx, f);
                pool.push(f);
            }
            // connected components over shared variables
            let n = pool.len();
            let mut comp: Vec<usize> = (0..n).collect();
            fn find(c: &mut [usize], x: usize) -> usize {
                let mut r = x;
                while c[r] != r {
                    r = c[r];
                }
                c[x] = r;
                r
            }
            for i in 0..n {
                for j in i + 1..n {
                    if intersects(&pool[i].vars, &pool[j].vars) {
                        let (ri, rj) = (find(&mut comp, i), find(&mut comp, j));
                        if ri != rj {
                            comp[ri.max(rj)] = ri.min(rj);
                        }
                    }
                }
            }
            let mut groups: BTreeMap<usize, Vec<Factor>> = BTreeMap::new();
            for (i, f) in pool.drain(..).enumerate() {
                let r = find(&mut comp, i);
                groups.entry(r).or_default().push(f);
            }
            for (_, g) in groups {
                let f = self.set_factor(&ctx, g);
                pool.push(f);
            }
        }
        let root = self.set_factor(&ctx, pool);
        let root = self.wrap(&ctx, root);
        debug_assert_eq!(root.vars, ctx.query);
        Ok(root.node)
    }

    /// Builds a graph answering every query in `queries`.
    pub fn build(net: &BeliefNet, queries: &[BTreeSet<VarId>], evidence: &Evidence) -> Result<EvalGraph> {
        if queries.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let mut g = EvalGraph::new();
        for q in queries {
            g.merge_query(net, q, evidence)?;
        }
        Ok(g)
    }

    /// Adds one query, reusing every existing subtree it can.
    pub fn merge_query(&mut self, net: &BeliefNet, query: &BTreeSet<VarId>, evidence: &Evidence) -> Result<MergeOutcome> {
        let vars: Vec<VarId> = query.iter().copied().collect();
        let before_nodes = self.nodes.len();
        let before_reuse = self.reuse_count;
        let root = match self.root_of(&vars) {
            Some(r) => r,
            None => {
                let r = self.construct(net, &vars, evidence)?;
                self.add_query_root(&vars, r);
                r
            }
        };
        Ok(MergeOutcome {
            root,
            new_nodes: (before_nodes..self.nodes.len()).map(NodeId).collect(),
            reused: self.reuse_count - before_reuse,
        })
    }

    /// Drops lookup entries for factors built from `var`'s table so a later
    /// build cannot hand back a node over a superseded version.
    pub fn forget_table(&mut self, var: VarId) {
        self.factor_index.retain(|(dists, _), _| dists.binary_search(&var).is_err());
    }

    /// Recomputes the root of every registered query against the current
    /// network and evidence. Returns the queries whose root changed.
    pub fn rebuild_roots(&mut self, net: &BeliefNet, evidence: &Evidence) -> Result<Vec<(usize, NodeId, NodeId)>> {
        let mut changed = Vec::new();
        for qi in 0..self.queries.len() {
            let vars = self.queries[qi].vars.clone();
            let old = self.queries[qi].root;
            let new = self.construct(net, &vars, evidence)?;
            if new != old {
                self.queries[qi].root = new;
                changed.push((qi, old, new));
            }
        }
        self.refresh_needed();
        Ok(changed)
    }

    fn refresh_needed(&mut self) {
        for n in &mut self.nodes {
            n.needed.clear();
        }
        let roots: Vec<NodeId> = self.queries.iter().map(|q| q.root).collect();
        for r in roots {
            let need = self.node(r).vars_present.clone();
            self.push_needed(r, need);
        }
    }

    fn push_needed(&mut self, id: NodeId, need: Vec<VarId>) {
        let node = &mut self.nodes[id.0];
        let merged = sorted_union(&node.needed, &need);
        if merged == node.needed && !merged.is_empty() {
            return;
        }
        node.needed = merged.clone();
        match node.kind.clone() {
            NodeKind::Leaf { .. } => {}
            NodeKind::Marginalize { child, .. } => {
                let c = self.node(child).vars_present.clone();
                let need: Vec<VarId> = c.into_iter().filter(|v| merged.binary_search(v).is_ok()).collect();
                self.push_needed(child, need);
            }
            NodeKind::Product { left, right } => {
                let lv = self.node(left).vars_present.clone();
                let rv = self.node(right).vars_present.clone();
                let lneed: Vec<VarId> = lv
                    .iter()
                    .copied()
                    .filter(|v| merged.binary_search(v).is_ok() || rv.binary_search(v).is_ok())
                    .collect();
                let rneed: Vec<VarId> = rv
                    .iter()
                    .copied()
                    .filter(|v| merged.binary_search(v).is_ok() || lv.binary_search(v).is_ok())
                    .collect();
                self.push_needed(left, lneed);
                self.push_needed(right, rneed);
            }
        }
    }

    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        match &self.node(id).kind {
            NodeKind::Leaf { .. } => vec![],
            NodeKind::Product { left, right } => vec![*left, *right],
            NodeKind::Marginalize { child, .. } => vec![*child],
        }
    }

    /// Nodes reachable from any query root.
    pub fn reachable(&self) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<NodeId> = self.queries.iter().map(|q| q.root).collect();
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(self.children(n));
            }
        }
        seen
    }

    fn leaf_sequence(&self, id: NodeId, out: &mut Vec<NodeId>) {
        match &self.node(id).kind {
            NodeKind::Leaf { .. } => out.push(id),
            NodeKind::Product { left, right } => {
                self.leaf_sequence(*left, out);
                self.leaf_sequence(*right, out);
            }
            NodeKind::Marginalize { child, .. } => self.leaf_sequence(*child, out),
        }
    }

    fn subtree(&self, id: NodeId, out: &mut Vec<NodeId>) {
        out.push(id);
        for c in self.children(id) {
            self.subtree(c, out);
        }
    }

    /// Every marginalization-legality and marginal-ordering violation.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for q in &self.queries {
            if self.node(q.root).vars_present != q.vars {
                out.push(Violation::RootMismatch { root: q.root });
            }
            let mut all_leaves = Vec::new();
            self.leaf_sequence(q.root, &mut all_leaves);
            let mut nodes = Vec::new();
            self.subtree(q.root, &mut nodes);
            for &n in &nodes {
                match &self.node(n).kind {
                    NodeKind::Marginalize { child, summed } => {
                        let mut inside = Vec::new();
                        self.leaf_sequence(*child, &mut inside);
                        for &z in summed {
                            let count = |ls: &[NodeId]| {
                                ls.iter()
                                    .filter(|&&l| self.node(l).mentions.binary_search(&z).is_ok())
                                    .count()
                            };
                            if count(&inside) < count(&all_leaves) {
                                out.push(Violation::IllegalMarginalization { node: n, var: z });
                            }
                        }
                    }
                    NodeKind::Product { .. } => {
                        let mut seq = Vec::new();
                        self.leaf_sequence(n, &mut seq);
                        for (i, &l) in seq.iter().enumerate() {
                            let leaf = self.node(l);
                            if !leaf.is_marginal {
                                continue;
                            }
                            let x = leaf.dists[0];
                            let early = seq[..i].iter().any(|&o| {
                                let on = self.node(o);
                                on.dists[0] != x && on.mentions.binary_search(&x).is_ok()
                            });
                            if early {
                                out.push(Violation::MarginalOrder { node: n, var: x });
                            }
                        }
                    }
                    NodeKind::Leaf { .. } => {}
                }
            }
        }
        out.sort_by_key(|v| format!("{v:?}"));
        out.dedup();
        out
    }

    /// Deterministic pre-order dump of every query tree.
    pub fn dump(&self, net: &BeliefNet) -> String {
        let names = |vs: &[VarId]| vs.iter().map(|&v| net.name(v)).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        for q in &self.queries {
            let _ = writeln!(out, "query {{{}}}", names(&q.vars));
            let mut stack = vec![(q.root, 1usize)];
            while let Some((id, depth)) = stack.pop() {
                let n = self.node(id);
                let head = match &n.kind {
                    NodeKind::Leaf { var, .. } => format!("leaf {}", net.name(*var)),
                    NodeKind::Product { .. } => "product".to_string(),
                    NodeKind::Marginalize { summed, .. } => format!("sum [{}]", names(summed)),
                };
                let _ = writeln!(
                    out,
                    "{}{} {} present={{{}}} needed={{{}}}",
                    "  ".repeat(depth),
                    id,
                    head,
                    names(&n.vars_present),
                    names(&n.needed)
                );
                for c in self.children(id).into_iter().rev() {
                    stack.push((c, depth + 1));
                }
            }
        }
        out
    }

    /// Exact value table of a node: one entry per assignment of its free
    /// variables consistent with the evidence.
    pub fn exact_table(&self, net: &BeliefNet, id: NodeId, evidence: &Evidence) -> BTreeMap<Binding, f64> {
        let ev = net.evidence_binding(evidence);
        match &self.node(id).kind {
            NodeKind::Leaf { var, .. } => {
                let t = net.table(*var);
                let mut out = BTreeMap::new();
                let scope = t.scope();
                let mut digits = vec![0usize; scope.len()];
                loop {
                    let b: Binding = scope.iter().copied().zip(digits.iter().copied()).collect();
                    if b.consistent_with(&ev) {
                        out.insert(b.clone(), t.prob(net, &b));
                    }
                    let mut k = scope.len();
                    loop {
                        if k == 0 {
                            return out;
                        }
                        k -= 1;
                        digits[k] += 1;
                        if digits[k] < net.arity(scope[k]) {
                            break;
                        }
                        digits[k] = 0;
                    }
                }
            }
            NodeKind::Product { left, right } => {
                let l = self.exact_table(net, *left, evidence);
                let r = self.exact_table(net, *right, evidence);
                let mut out = BTreeMap::new();
                for (lb, lm) in &l {
                    for (rb, rm) in &r {
                        if lb.consistent_with(rb) {
                            out.insert(lb.union(rb), lm * rm);
                        }
                    }
                }
                out
            }
            NodeKind::Marginalize { child, summed } => {
                let mut out: BTreeMap<Binding, f64> = BTreeMap::new();
                for (b, m) in self.exact_table(net, *child, evidence) {
                    *out.entry(b.without(summed)).or_default() += m;
                }
                out
            }
        }
    }
}
