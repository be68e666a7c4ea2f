use termnet::circuits::{
    canonical_suite, format_csv, format_table, run_mlch_bench, Circuit, CircuitSpec, Topology, DEFAULT_BUDGET, MODES,
};
use termnet::oracle::exact_mlch;
use termnet::session::Session;
use termnet::Evidence;

#[test]
fn canonical_suite_stays_within_term_limits() {
    for seed in 0..10 {
        let reports = canonical_suite(seed).unwrap();
        for (r, limit) in reports.iter().zip([20, 60, 200, 1000]) {
            assert!(r.correct, "{r:?}");
            assert!(r.terms <= limit, "{} gates: {} terms", r.gates, r.terms);
            assert_eq!(r.joint_size, 4u128.pow(r.gates as u32));
        }
    }
}

#[test]
fn fault_free_runs_blame_nothing() {
    let c = Circuit::new(&CircuitSpec::canonical(4)).unwrap();
    let mut ev = Evidence::new();
    for &v in &c.input_vars {
        ev.insert(v, 0);
    }
    ev.insert(c.wire_vars[c.outputs[0]], 0);
    let mut s = Session::with_evidence(c.net.clone(), ev).unwrap();
    let (b, _) = s.mlch_over(&c.mode_vars, DEFAULT_BUDGET).unwrap().hypothesis.unwrap();
    for &m in &c.mode_vars {
        assert_eq!(c.net.variable(m).values[b.get(m).unwrap()], MODES[0]);
    }
}

#[test]
fn small_circuits_match_the_oracle_with_two_faults() {
    for seed in 0..6 {
        let r = run_mlch_bench(&CircuitSpec::canonical(4), 2, seed, DEFAULT_BUDGET).unwrap();
        assert!(r.correct && r.oracle_mass.is_some(), "{r:?}");
    }
}

#[test]
fn shapes_of_the_canonical_nets() {
    let one = Circuit::new(&CircuitSpec::canonical(1)).unwrap();
    assert_eq!((one.inputs, one.mode_vars.len(), one.outputs.len()), (1, 1, 1));
    let adder = Circuit::new(&CircuitSpec::canonical(9)).unwrap();
    assert_eq!((adder.inputs, adder.outputs.len()), (3, 2));
    assert_eq!(adder.net.len(), 3 + 2 * 9);
    assert!(Circuit::new(&CircuitSpec::canonical(5)).is_err());
    let chain = CircuitSpec {
        topology: Topology::Chain,
        ..CircuitSpec::canonical(6)
    };
    let r = run_mlch_bench(&chain, 1, 3, DEFAULT_BUDGET).unwrap();
    assert!(r.found && r.hypothesis_mass >= r.injected_mass * (1.0 - 1e-12));
}

#[test]
fn oracle_agrees_on_the_inverter() {
    let c = Circuit::new(&CircuitSpec::canonical(1)).unwrap();
    let ev: Evidence = [(c.input_vars[0], 1), (c.wire_vars[0], 1)].into_iter().collect();
    let (b, m) = exact_mlch(&c.net, &c.diagnosis_vars(), &ev).unwrap();
    let full = c.net.evidence_binding(&ev);
    let mut s = Session::with_evidence(c.net.clone(), ev).unwrap();
    let (got, _) = s.mlch_over(&c.diagnosis_vars(), DEFAULT_BUDGET).unwrap().hypothesis.unwrap();
    assert_eq!(got, b);
    assert!((c.net.joint_mass(&got.union(&full)) - m).abs() < 1e-15);
    // an inverter that copies its input must be faulty
    assert_ne!(c.net.variable(c.mode_vars[0]).values[b.get(c.mode_vars[0]).unwrap()], MODES[0]);
}

#[test]
fn reports_render_as_table_and_csv() {
    let reports = canonical_suite(1).unwrap();
    let table = format_table(&reports);
    assert_eq!(table.lines().count(), 5);
    assert!(table.lines().next().unwrap().contains("correct"));
    let csv = format_csv(&reports);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[1..].iter().all(|r| r.split(',').count() == rows[0].split(',').count()));
    assert!(rows[4].starts_with("9,mlch,1,"));
}
