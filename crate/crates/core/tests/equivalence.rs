use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use termnet::oracle::{exact_factor_marginal, exact_marginal, exact_mlch};
use termnet::random::{random_evidence, random_net};
use termnet::session::Session;
use termnet::VarId;

#[test]
fn exhausted_streams_match_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..3000 {
        let n = rng.gen_range(1..=9);
        let net = random_net(&mut rng, n, 3, None);
        let q = VarId(rng.gen_range(0..n));
        let ev = random_evidence(&mut rng, &net, 3, &[q]);
        let relevant = net.relevant_nodes(&[q].into_iter().collect(), &ev).unwrap();
        let want = exact_factor_marginal(&net, &relevant, &[q], &ev).unwrap();
        let post = exact_marginal(&net, &[q], &ev).unwrap();
        let mut s = Session::with_evidence(net, ev.clone()).unwrap();
        let id = s.add_query(&[q]).unwrap();
        assert!(s.graph().validate().is_empty(), "trial {trial}: {:?}\n{}\n{:?}", s.graph().validate(), s.graph().dump(s.net()), termnet::netfile::write(s.net()));
        s.exhaust(id).unwrap();
        let b = s.bounds(id).unwrap();
        let z: f64 = b.values.iter().map(|v| v.lower).sum();
        for v in &b.values {
            assert!((v.lower - want.get(&v.binding)).abs() < 1e-9, "trial {trial}: {v:?} vs {}", want.get(&v.binding));
            if z > 0.0 {
                assert!((v.lower / z - post.posterior()[&v.binding]).abs() < 1e-9, "trial {trial}");
            }
        }
    }
}

#[test]
fn mlch_matches_oracle_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..200 {
        let n = rng.gen_range(1..=10);
        let net = random_net(&mut rng, n, 3, None);
        let ev = random_evidence(&mut rng, &net, 2, &[]);
        let vars: Vec<VarId> = net.var_ids().filter(|v| !ev.contains_key(v)).collect();
        if vars.is_empty() {
            continue;
        }
        let (want, _) = exact_mlch(&net, &vars, &ev).unwrap();
        let mut s = Session::with_evidence(net, ev).unwrap();
        let out = s.mlch_over(&vars, usize::MAX).unwrap();
        let (got, _) = out.hypothesis.unwrap();
        assert_eq!(got, want, "trial {trial}");
    }
}
