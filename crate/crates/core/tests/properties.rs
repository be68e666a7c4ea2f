use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use termnet::estimator::mass_lower_bound;
use termnet::factoring::NodeKind;
use termnet::oracle::{enumerate_joint, exact_factor_marginal, exact_marginal};
use termnet::random::{random_evidence, random_net, random_row, skewed_chain};
use termnet::session::Session;
use termnet::{BeliefNet, Binding, Evidence, VarId};

fn setup(seed: u64, max_n: usize, max_ev: usize) -> (BeliefNet, Evidence, VarId) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_n);
    let net = random_net(&mut rng, n, 3, None);
    let q = VarId(rng.gen_range(0..n));
    let ev = random_evidence(&mut rng, &net, max_ev, &[q]);
    (net, ev, q)
}

fn answers(s: &Session, q: termnet::session::QueryId) -> BTreeMap<Binding, f64> {
    s.bounds(q).unwrap().values.into_iter().map(|v| (v.binding, v.lower)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 96,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn brackets_tighten_and_hold_the_exact_value(seed in any::<u64>()) {
        let (net, ev, q) = setup(seed, 7, 2);
        let relevant = net.relevant_nodes(&[q].into_iter().collect(), &ev).unwrap();
        let exact = exact_factor_marginal(&net, &relevant, &[q], &ev).unwrap();
        let mut s = Session::with_evidence(net, ev).unwrap();
        let id = s.add_query(&[q]).unwrap();
        let mut prev: Option<Vec<(f64, f64)>> = None;
        loop {
            let b = s.bounds(id).unwrap();
            let cur: Vec<(f64, f64)> = b.values.iter().map(|v| (v.lower, v.upper)).collect();
            for v in &b.values {
                let x = exact.get(&v.binding);
                prop_assert!(v.lower <= x + 1e-12 && x <= v.upper + 1e-12, "{v:?} vs {x}");
            }
            if let Some(p) = &prev {
                for ((l0, u0), (l1, u1)) in p.iter().zip(&cur) {
                    prop_assert!(*l1 >= l0 - 1e-12 && *u1 <= u0 + 1e-12);
                }
            }
            prev = Some(cur);
            if b.exhausted {
                break;
            }
            s.step(id, 1).unwrap();
        }
    }

    #[test]
    fn merged_mass_equals_absorbed_mass(seed in any::<u64>()) {
        let (net, ev, q) = setup(seed, 8, 2);
        let mut s = Session::with_evidence(net, ev).unwrap();
        let id = s.add_query(&[q]).unwrap();
        s.exhaust(id).unwrap();
        let e = s.engine();
        for st in e.streams() {
            let NodeKind::Marginalize { child, .. } = s.graph().node(st.node).kind else { continue };
            if !st.exhausted {
                continue;
            }
            let cvars = &s.graph().node(child).vars_present;
            let cs = e.cached(child, &st.cond.project(cvars)).unwrap();
            let absorbed: f64 = e.stream(cs).emitted.iter().map(|&t| e.term(t)).filter(|t| t.alive).map(|t| t.mass).sum();
            let merged: f64 = st.merged_terms().iter().map(|&t| e.term(t).mass).sum();
            prop_assert!((absorbed - merged).abs() < 1e-12, "{absorbed} vs {merged}");
        }
    }

    #[test]
    fn product_streams_emit_in_descending_order(seed in any::<u64>()) {
        // with every variable in the request nothing is summed, so each
        // stream's emissions must come out best first
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=7);
        let net = random_net(&mut rng, n, 3, None);
        let vars: Vec<VarId> = net.var_ids().collect();
        let joint = enumerate_joint(&net, &Evidence::new()).unwrap();
        let best = joint.iter().map(|t| t.1).fold(0.0, f64::max);
        let mut s = Session::new(net);
        let id = s.add_mlch(&vars).unwrap();
        s.exhaust(id).unwrap();
        let e = s.engine();
        for st in e.streams() {
            let masses: Vec<f64> = st.emitted.iter().map(|&t| e.term(t).mass).collect();
            prop_assert!(masses.windows(2).all(|w| w[0] >= w[1]), "{masses:?}");
        }
        let root = e.stream(s.root_stream(id).unwrap());
        prop_assert_eq!(root.emitted.len(), joint.len());
        prop_assert!((e.term(root.emitted[0]).mass - best).abs() < 1e-15);
    }

    #[test]
    fn interleaved_queries_stay_sound_and_agree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=7);
        let net = random_net(&mut rng, n, 2, None);
        let a = VarId(rng.gen_range(0..n));
        let b = VarId(rng.gen_range(0..n));
        prop_assume!(a != b);
        let exact = exact_marginal(&net, &[a], &Evidence::new()).unwrap();
        let mut alone = Session::new(net.clone());
        let qa = alone.add_query(&[a]).unwrap();
        alone.exhaust(qa).unwrap();
        let mut shared = Session::new(net);
        let sa = shared.add_query(&[a]).unwrap();
        let sb = shared.add_query(&[b]).unwrap();
        loop {
            let done = shared.step(sa, 1).unwrap();
            shared.step(sb, rng.gen_range(0..3)).unwrap();
            for v in shared.bounds(sa).unwrap().values {
                let x = exact.get(&v.binding);
                prop_assert!(v.lower <= x + 1e-12 && x <= v.upper + 1e-12);
            }
            if done == 0 {
                break;
            }
        }
        let (x, y) = (answers(&shared, sa), answers(&alone, qa));
        for (k, m) in &x {
            prop_assert!((m - y[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_graph_answers_match_separate_graphs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=8);
        let net = random_net(&mut rng, n, 3, None);
        let ev = random_evidence(&mut rng, &net, 2, &[]);
        let free: Vec<VarId> = net.var_ids().filter(|v| !ev.contains_key(v)).collect();
        prop_assume!(free.len() >= 2);
        let (a, b) = (free[0], free[free.len() - 1]);
        let mut both = Session::with_evidence(net.clone(), ev.clone()).unwrap();
        let (qa, qb) = (both.add_query(&[a]).unwrap(), both.add_query(&[b]).unwrap());
        both.exhaust(qb).unwrap();
        both.exhaust(qa).unwrap();
        for (v, q) in [(a, qa), (b, qb)] {
            let mut one = Session::with_evidence(net.clone(), ev.clone()).unwrap();
            let id = one.add_query(&[v]).unwrap();
            one.exhaust(id).unwrap();
            let (x, y) = (answers(&both, q), answers(&one, id));
            for (k, m) in &x {
                prop_assert!((m - y[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn skewed_chain_work_tracks_k_graph_sizes(seed in any::<u64>(), n in 2usize..10, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let skew = (n as f64 - 1.0) / n as f64;
        let net = skewed_chain(&mut rng, n, skew);
        let mut s = Session::new(net);
        let q = s.add_query(&[VarId(n - 1)]).unwrap();
        s.step(q, k).unwrap();
        // a request can open another value's stream along the whole chain
        let limit = 2 * k * s.graph().len();
        prop_assert!(s.terms_created() <= limit, "{} terms, {} nodes", s.terms_created(), s.graph().len());
    }

    #[test]
    fn irrelevant_tables_do_not_move_the_posterior(seed in any::<u64>()) {
        let (net, ev, q) = setup(seed, 8, 3);
        let relevant = net.relevant_nodes(&[q].into_iter().collect(), &ev).unwrap();
        let base = exact_marginal(&net, &[q], &ev).unwrap().posterior();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut other = BeliefNet::new();
        for v in net.var_ids() {
            let t = net.table(v);
            let rows = if relevant.contains(&v) {
                t.rows.clone()
            } else {
                t.rows.iter().map(|r| random_row(&mut rng, r.len(), None)).collect()
            };
            other.add_variable(net.name(v), net.variable(v).values.clone(), t.parents.clone(), rows).unwrap();
        }
        let moved = exact_marginal(&other, &[q], &ev).unwrap().posterior();
        for (b, p) in &base {
            prop_assert!((p - moved[b]).abs() < 1e-9);
        }
    }

    #[test]
    fn layers_partition_the_relevant_set(seed in any::<u64>()) {
        let (net, ev, q) = setup(seed, 10, 3);
        let relevant = net.relevant_nodes(&[q].into_iter().collect(), &ev).unwrap();
        let layers = net.layers(&relevant);
        prop_assert!(layers.len() <= relevant.len().max(1));
        let mut seen = std::collections::BTreeSet::new();
        for (i, layer) in layers.iter().enumerate() {
            for &v in layer {
                prop_assert!(seen.insert(v));
                for p in net.parents(v) {
                    if relevant.contains(p) {
                        prop_assert!(layers[..i].iter().any(|l| l.contains(p)));
                    }
                }
            }
        }
        prop_assert_eq!(seen, relevant);
    }

    #[test]
    fn joint_sums_to_one_in_any_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=8);
        let net = random_net(&mut rng, n, 3, None);
        let mut masses: Vec<f64> = enumerate_joint(&net, &Evidence::new()).unwrap().into_iter().map(|t| t.1).collect();
        let forward: f64 = masses.iter().sum();
        masses.sort_by(f64::total_cmp);
        let ascending: f64 = masses.iter().sum();
        prop_assert!((forward - 1.0).abs() < 1e-12 && (ascending - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_lower_bound_grows_with_m(n in 1u32..40, m in 0u64..5000) {
        let m = 1 + m % ((1u64 << n.min(20)) - 1).max(1);
        let a = mass_lower_bound(n, m as u128).unwrap();
        let b = mass_lower_bound(n, (m as u128 + 1).min(1u128 << n)).unwrap();
        prop_assert!(a <= b + 1e-15 && b <= 1.0 + 1e-12);
    }
}
