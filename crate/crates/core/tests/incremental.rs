mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use termnet::factoring::NodeKind;
use termnet::session::Session;
use termnet::{BeliefNet, VarId};

#[test]
fn random_sequences_match_fresh_builds() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut reuse = 0;
    for trial in 0..300 {
        let out = common::run_sequence(&mut rng);
        assert!(out.fresh_gap <= 1e-12, "trial {trial}: gap {} after {:?}", out.fresh_gap, out.log);
        assert!(out.oracle_gap <= 1e-9, "trial {trial}: oracle gap {} after {:?}", out.oracle_gap, out.log);
        for r in &out.updates {
            assert!((r.touched as f64) <= common::update_cost_bound(r), "trial {trial}: {r:?}");
        }
        reuse += out.cache_reuse + out.factor_reuse;
    }
    assert!(reuse > 0);
}

fn diamond() -> (BeliefNet, [VarId; 4]) {
    let mut net = BeliefNet::new();
    let a = net.add_simple("A", 2, &[], vec![vec![0.6, 0.4]]).unwrap();
    let b = net.add_simple("B", 2, &[a], vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
    let c = net.add_simple("C", 2, &[a], vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap();
    let d = net
        .add_simple("D", 2, &[b, c], vec![vec![0.99, 0.01], vec![0.5, 0.5], vec![0.3, 0.7], vec![0.05, 0.95]])
        .unwrap();
    (net, [a, b, c, d])
}

fn sum_height(s: &Session, var: VarId) -> usize {
    let root = s.root_node(termnet::session::QueryId(0)).unwrap();
    let g = s.graph();
    let mut stack = vec![root];
    let mut best = 0;
    while let Some(n) = stack.pop() {
        if let NodeKind::Marginalize { summed, .. } = &g.node(n).kind {
            if summed.contains(&var) {
                best = best.max(g.node(n).height);
            }
        }
        stack.extend(g.children(n));
    }
    best
}

#[test]
fn loop_arc_moves_a_sum_upward() {
    // B -> E -> D and A -> C -> D: B is summed right above E's table until
    // the arc B -> C closes a loop and C's table needs it too
    let mut net = BeliefNet::new();
    let a = net.add_simple("A", 2, &[], vec![vec![0.6, 0.4]]).unwrap();
    let b = net.add_simple("B", 2, &[], vec![vec![0.7, 0.3]]).unwrap();
    let c = net.add_simple("C", 2, &[a], vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap();
    let e = net.add_simple("E", 2, &[b], vec![vec![0.85, 0.15], vec![0.1, 0.9]]).unwrap();
    let d = net
        .add_simple("D", 2, &[e, c], vec![vec![0.99, 0.01], vec![0.5, 0.5], vec![0.3, 0.7], vec![0.05, 0.95]])
        .unwrap();
    let mut s = Session::new(net);
    let q = s.add_query(&[d]).unwrap();
    s.step(q, 3).unwrap();
    let before = sum_height(&s, b);
    let rows = vec![vec![0.9, 0.1], vec![0.5, 0.5], vec![0.4, 0.6], vec![0.2, 0.8]];
    let r = s.extend_add_arc(b, c, rows).unwrap();
    assert_eq!(r.rerooted, vec![q]);
    let after = sum_height(&s, b);
    assert!(after > before, "B summed at height {before} before, {after} after");
    assert!(s.graph().validate().is_empty());

    let mut fresh = Session::new(s.net().clone());
    let fq = fresh.add_query(&[d]).unwrap();
    s.exhaust(q).unwrap();
    fresh.exhaust(fq).unwrap();
    let (x, y) = (s.bounds(q).unwrap(), fresh.bounds(fq).unwrap());
    for (u, v) in x.values.iter().zip(&y.values) {
        assert!((u.lower - v.lower).abs() < 1e-12);
    }
}

#[test]
fn diamond_loop_arc_matches_fresh_build() {
    let (net, [_, b, c, d]) = diamond();
    let mut s = Session::new(net);
    let q = s.add_query(&[d]).unwrap();
    s.step(q, 3).unwrap();
    let rows = vec![vec![0.9, 0.1], vec![0.5, 0.5], vec![0.4, 0.6], vec![0.2, 0.8]];
    s.extend_add_arc(b, c, rows).unwrap();
    let mut fresh = Session::new(s.net().clone());
    let fq = fresh.add_query(&[d]).unwrap();
    s.exhaust(q).unwrap();
    fresh.exhaust(fq).unwrap();
    for (u, v) in s.bounds(q).unwrap().values.iter().zip(&fresh.bounds(fq).unwrap().values) {
        assert!((u.lower - v.lower).abs() < 1e-12);
    }
}

#[test]
fn arc_into_relevant_set_reuses_untouched_subtrees() {
    let mut net = BeliefNet::new();
    let a = net.add_simple("A", 2, &[], vec![vec![0.7, 0.3]]).unwrap();
    let e = net.add_simple("E", 2, &[], vec![vec![0.6, 0.4]]).unwrap();
    let b = net.add_simple("B", 2, &[a], vec![vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
    let f = net.add_simple("F", 2, &[e], vec![vec![0.95, 0.05], vec![0.4, 0.6]]).unwrap();
    let d = net
        .add_simple("D", 2, &[b, f], vec![vec![0.8, 0.2], vec![0.6, 0.4], vec![0.3, 0.7], vec![0.1, 0.9]])
        .unwrap();
    let mut s = Session::new(net);
    let qd = s.add_query(&[d]).unwrap();
    let qf = s.add_query(&[f]).unwrap();
    s.step(qd, 4).unwrap();
    s.step(qf, 4).unwrap();
    // new arc touches B's table only; the E/F side is kept
    let r = s.extend_add_arc(e, b, vec![vec![0.9, 0.1], vec![0.5, 0.5], vec![0.3, 0.7], vec![0.2, 0.8]]).unwrap();
    assert_eq!(r.rerooted, vec![qd]);
    assert!(!r.invalidated_streams.is_empty());
    assert!(r.reuse > 0 || s.engine().counters().cache_hits > 0, "{r:?}");
    assert!(!r.invalidated_streams.contains(&s.root_stream(qf).unwrap()));

    let mut fresh = Session::new(s.net().clone());
    let fd = fresh.add_query(&[d]).unwrap();
    s.exhaust(qd).unwrap();
    fresh.exhaust(fd).unwrap();
    for (u, v) in s.bounds(qd).unwrap().values.iter().zip(&fresh.bounds(fd).unwrap().values) {
        assert!((u.lower - v.lower).abs() < 1e-12);
    }
}

#[test]
fn evidence_keeps_matching_terms_and_spares_unrelated_streams() {
    let (net, [a, _, c, d]) = diamond();
    let mut s = Session::new(net);
    let qd = s.add_query(&[d]).unwrap();
    let qa = s.add_query(&[a]).unwrap();
    s.exhaust(qd).unwrap();
    s.step(qa, 1).unwrap();
    let live_before = s.engine().live_terms();
    let r = s.assert_evidence(c, 1).unwrap();
    assert!(r.removed_terms <= live_before);
    for t in s.engine().terms().iter().filter(|t| t.alive) {
        assert_ne!(t.binding.get(c), Some(0), "term binding the dropped value survived");
    }
}
