#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use termnet::oracle::exact_marginal;
use termnet::random::{random_net, random_row};
use termnet::session::{QueryId, Session, UpdateReport};
use termnet::{Binding, VarId};

/// Outcome of one randomized build / query / evidence / extend / query run.
#[derive(Debug, Default)]
pub struct SequenceOutcome {
    /// Largest gap between the session's exhausted answers and a fresh build.
    pub fresh_gap: f64,
    /// Largest gap between normalized answers and the enumeration oracle.
    pub oracle_gap: f64,
    /// Stream-cache hits while opening the queries that followed the first.
    pub cache_reuse: usize,
    pub factor_reuse: usize,
    pub updates: Vec<UpdateReport>,
    pub log: Vec<String>,
}

/// `touched <= n * c * log2(max(c, 2))`.
pub fn update_cost_bound(r: &UpdateReport) -> f64 {
    let c = r.max_node_terms.max(2) as f64;
    r.graph_nodes as f64 * c * c.log2()
}

fn exhausted_answers(s: &mut Session, qs: &[QueryId]) -> Vec<BTreeMap<Binding, f64>> {
    qs.iter()
        .map(|&q| {
            s.exhaust(q).unwrap();
            s.bounds(q).unwrap().values.into_iter().map(|v| (v.binding, v.lower)).collect()
        })
        .collect()
}

fn pick_query<R: Rng>(rng: &mut R, s: &Session) -> Option<VarId> {
    let free: Vec<VarId> = s.net().var_ids().filter(|v| !s.evidence().contains_key(v)).collect();
    (!free.is_empty()).then(|| free[rng.gen_range(0..free.len())])
}

fn open_query<R: Rng>(rng: &mut R, s: &mut Session, qs: &mut Vec<QueryId>, out: &mut SequenceOutcome) {
    let Some(v) = pick_query(rng, s) else { return };
    let hits = s.engine().counters().cache_hits;
    let reuse = s.graph().reuse_count();
    let q = s.add_query(&[v]).unwrap();
    if !qs.is_empty() {
        out.cache_reuse += s.engine().counters().cache_hits - hits;
        out.factor_reuse += s.graph().reuse_count() - reuse;
    }
    note(out, format!("query {}", s.net().name(v)));
    qs.push(q);
    let k = rng.gen_range(0..6);
    s.step(q, k).unwrap();
}

fn observe<R: Rng>(rng: &mut R, s: &mut Session, qs: &[QueryId], out: &mut SequenceOutcome) {
    let queried: Vec<VarId> = qs
        .iter()
        .flat_map(|&q| s.request_vars(q).unwrap().to_vec())
        .collect();
    let pool: Vec<VarId> = s
        .net()
        .var_ids()
        .filter(|v| !s.evidence().contains_key(v) && !queried.contains(v))
        .collect();
    if pool.is_empty() {
        return;
    }
    let v = pool[rng.gen_range(0..pool.len())];
    let x = rng.gen_range(0..s.net().arity(v));
    note(out, format!("evidence {}={x}", s.net().name(v)));
    let r = s.assert_evidence(v, x).unwrap();
    out.updates.push(r);
}

fn extend<R: Rng>(rng: &mut R, s: &mut Session, out: &mut SequenceOutcome) {
    let n = s.net().len();
    if rng.gen_bool(0.5) || n < 2 {
        let k = rng.gen_range(0..=n.min(2));
        let mut parents: Vec<VarId> = Vec::new();
        while parents.len() < k {
            let p = VarId(rng.gen_range(0..n));
            if !parents.contains(&p) {
                parents.push(p);
            }
        }
        let rows = (0..1usize << k).map(|_| random_row(rng, 2, None)).collect();
        let name = format!("N{n}");
        note(out, format!("add-node {name} <- {parents:?}"));
        s.extend_add_node(&name, vec!["n0".into(), "n1".into()], &parents, rows)
            .unwrap();
    } else {
        for _ in 0..20 {
            let a = VarId(rng.gen_range(0..n));
            let b = VarId(rng.gen_range(0..n));
            if a == b || s.net().parents(b).contains(&a) || s.net().is_ancestor(b, a) {
                continue;
            }
            let k = s.net().parents(b).len() + 1;
            let rows = (0..1usize << k).map(|_| random_row(rng, 2, None)).collect();
            note(out, format!("add-arc {} -> {}", s.net().name(a), s.net().name(b)));
            let r = s.extend_add_arc(a, b, rows).unwrap();
            out.factor_reuse += r.reuse;
            return;
        }
    }
}

/// Runs build -> query -> evidence -> extend -> query, with a few extra
/// random operations mixed in, then compares against a fresh build.
pub fn run_sequence<R: Rng>(rng: &mut R) -> SequenceOutcome {
    let n = rng.gen_range(2..=7);
    let net = random_net(rng, n, 2, None);
    let mut s = Session::new(net);
    let mut qs = Vec::new();
    let mut out = SequenceOutcome::default();

    open_query(rng, &mut s, &mut qs, &mut out);
    observe(rng, &mut s, &qs, &mut out);
    extend(rng, &mut s, &mut out);
    open_query(rng, &mut s, &mut qs, &mut out);
    for _ in 0..rng.gen_range(0..4) {
        match rng.gen_range(0..3) {
            0 => open_query(rng, &mut s, &mut qs, &mut out),
            1 => observe(rng, &mut s, &qs, &mut out),
            _ => extend(rng, &mut s, &mut out),
        }
        if s.net().len() >= 8 {
            break;
        }
    }

    let vars: Vec<Vec<VarId>> = qs.iter().map(|&q| s.request_vars(q).unwrap().to_vec()).collect();
    let mut fresh = Session::with_evidence(s.net().clone(), s.evidence().clone()).unwrap();
    let fresh_qs: Vec<QueryId> = vars.iter().map(|v| fresh.add_query(v).unwrap()).collect();
    let got = exhausted_answers(&mut s, &qs);
    let want = exhausted_answers(&mut fresh, &fresh_qs);
    for ((g, w), v) in got.iter().zip(&want).zip(&vars) {
        assert_eq!(g.len(), w.len());
        for (b, m) in g {
            out.fresh_gap = out.fresh_gap.max((m - w[b]).abs());
        }
        let exact = exact_marginal(s.net(), v, s.evidence()).unwrap().posterior();
        let z: f64 = g.values().sum();
        if z > 0.0 {
            for (b, m) in g {
                out.oracle_gap = out.oracle_gap.max((m / z - exact[b]).abs());
            }
        }
    }
    out
}

fn note(out: &mut SequenceOutcome, line: String) {
    out.log.push(line);
}
