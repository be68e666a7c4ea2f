//! NAND-gate circuit diagnosis networks.
//!
//! Each gate `g` has a mode variable `M<g>` (ok, stuck0, stuck1, unknown)
//! and an output wire `W<g>`. Primary inputs `I<k>` are uniform roots. A
//! working gate computes NAND of its inputs, stuck gates pin their output and
//! an unknown gate flips a fair coin.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binding::VarId;
use crate::error::{Error, Result};
use crate::net::{BeliefNet, Evidence};
use crate::oracle;
use crate::session::Session;

pub const MODES: [&str; 4] = ["ok", "stuck0", "stuck1", "unknown"];
pub const BITS: [&str; 2] = ["lo", "hi"];

const OK: usize = 0;
const STUCK0: usize = 1;
const STUCK1: usize = 2;
const UNKNOWN: usize = 3;

/// Default fault prior per gate.
pub const DEFAULT_FAULT_PRIOR: f64 = 0.01;

/// Default term budget for one diagnosis.
pub const DEFAULT_BUDGET: usize = 100_000;

/// Circuits up to this many gates are also checked against enumeration.
pub const ORACLE_GATES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Signal {
    Input(usize),
    Gate(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    /// 1 gate: inverter; 2: inverter chain; 4: XOR; 9: full adder.
    Canonical,
    /// A chain of inverters of any length.
    Chain,
}

#[derive(Clone, Debug)]
pub struct CircuitSpec {
    pub gate_count: usize,
    pub topology: Topology,
    pub fault_prior: f64,
}

impl CircuitSpec {
    pub fn canonical(gate_count: usize) -> Self {
        CircuitSpec {
            gate_count,
            topology: Topology::Canonical,
            fault_prior: DEFAULT_FAULT_PRIOR,
        }
    }
}

/// Gate wiring plus the variables of the diagnosis network.
#[derive(Clone, Debug)]
pub struct Circuit {
    pub inputs: usize,
    /// Two inputs per gate; an inverter repeats its input.
    pub gates: Vec<[Signal; 2]>,
    pub outputs: Vec<usize>,
    pub net: BeliefNet,
    pub input_vars: Vec<VarId>,
    pub mode_vars: Vec<VarId>,
    pub wire_vars: Vec<VarId>,
}

fn layout(spec: &CircuitSpec) -> Result<(usize, Vec<[Signal; 2]>, Vec<usize>)> {
    use Signal::{Gate as G, Input as I};
    let n = spec.gate_count;
    if n == 0 {
        return Err(Error::OutOfRange("a circuit needs at least one gate".into()));
    }
    let chain = |n: usize| {
        let gates = (0..n)
            .map(|g| if g == 0 { [I(0), I(0)] } else { [G(g - 1), G(g - 1)] })
            .collect();
        (1, gates, vec![n - 1])
    };
    match (spec.topology, n) {
        (Topology::Chain, _) | (Topology::Canonical, 1 | 2) => Ok(chain(n)),
        (Topology::Canonical, 4) => Ok((
            2,
            vec![[I(0), I(1)], [I(0), G(0)], [I(1), G(0)], [G(1), G(2)]],
            vec![3],
        )),
        (Topology::Canonical, 9) => Ok((
            3,
            vec![
                [I(0), I(1)],
                [I(0), G(0)],
                [I(1), G(0)],
                [G(1), G(2)],
                [G(3), I(2)],
                [G(3), G(4)],
                [I(2), G(4)],
                [G(5), G(6)],
                [G(4), G(0)],
            ],
            vec![7, 8],
        )),
        (Topology::Canonical, _) => Err(Error::UnsupportedLayout(format!(
            "no canonical layout with {n} gates (have 1, 2, 4, 9)"
        ))),
    }
}

fn nand(a: bool, b: bool) -> bool {
    !(a && b)
}

fn gate_row(mode: usize, a: bool, b: bool) -> Vec<f64> {
    match mode {
        OK if nand(a, b) => vec![0.0, 1.0],
        OK => vec![1.0, 0.0],
        STUCK0 => vec![1.0, 0.0],
        STUCK1 => vec![0.0, 1.0],
        UNKNOWN => vec![0.5, 0.5],
        _ => unreachable!("four modes"),
    }
}

fn strings(labels: &[&str]) -> Vec<String> {
    labels.iter().map(|s| s.to_string()).collect()
}

impl Circuit {
    pub fn new(spec: &CircuitSpec) -> Result<Self> {
        if !(0.0..1.0).contains(&spec.fault_prior) {
            return Err(Error::OutOfRange(format!("fault prior {} outside [0, 1)", spec.fault_prior)));
        }
        let (inputs, gates, outputs) = layout(spec)?;
        let mut net = BeliefNet::new();
        let input_vars: Vec<VarId> = (0..inputs)
            .map(|k| net.add_variable(&format!("I{k}"), strings(&BITS), vec![], vec![vec![0.5, 0.5]]))
            .collect::<Result<_>>()?;
        let pf = spec.fault_prior;
        let prior = vec![1.0 - pf, pf / 3.0, pf / 3.0, pf / 3.0];
        let mut mode_vars = Vec::new();
        let mut wire_vars: Vec<VarId> = Vec::new();
        for (g, ins) in gates.iter().enumerate() {
            let m = net.add_variable(&format!("M{g}"), strings(&MODES), vec![], vec![prior.clone()])?;
            mode_vars.push(m);
            let var_of = |s: Signal| match s {
                Signal::Input(k) => input_vars[k],
                Signal::Gate(j) => wire_vars[j],
            };
            let (a, b) = (var_of(ins[0]), var_of(ins[1]));
            let mut rows = Vec::new();
            if a == b {
                for x in 0..2 {
                    for mode in 0..4 {
                        rows.push(gate_row(mode, x == 1, x == 1));
                    }
                }
                let w = net.add_variable(&format!("W{g}"), strings(&BITS), vec![a, m], rows)?;
                wire_vars.push(w);
            } else {
                for x in 0..2 {
                    for y in 0..2 {
                        for mode in 0..4 {
                            rows.push(gate_row(mode, x == 1, y == 1));
                        }
                    }
                }
                let w = net.add_variable(&format!("W{g}"), strings(&BITS), vec![a, b, m], rows)?;
                wire_vars.push(w);
            }
        }
        Ok(Circuit {
            inputs,
            gates,
            outputs,
            net,
            input_vars,
            mode_vars,
            wire_vars,
        })
    }

    /// Wire values for given inputs and modes; `coin` decides unknown gates.
    pub fn simulate(&self, inputs: &[bool], modes: &[usize], coin: &mut impl FnMut() -> bool) -> Vec<bool> {
        let mut wires: Vec<bool> = Vec::with_capacity(self.gates.len());
        for (g, ins) in self.gates.iter().enumerate() {
            let val = |s: Signal, wires: &[bool]| match s {
                Signal::Input(k) => inputs[k],
                Signal::Gate(j) => wires[j],
            };
            let v = match modes[g] {
                OK => nand(val(ins[0], &wires), val(ins[1], &wires)),
                STUCK0 => false,
                STUCK1 => true,
                _ => coin(),
            };
            wires.push(v);
        }
        wires
    }

    /// Mode variables plus every wire that is not a primary output.
    pub fn diagnosis_vars(&self) -> Vec<VarId> {
        let mut vars = self.mode_vars.clone();
        vars.extend(
            self.wire_vars
                .iter()
                .enumerate()
                .filter(|(g, _)| !self.outputs.contains(g))
                .map(|(_, &v)| v),
        );
        vars.sort_unstable();
        vars
    }
}

/// One diagnosis run.
#[derive(Clone, Debug)]
pub struct BenchReport {
    pub gates: usize,
    pub task: &'static str,
    pub faults: usize,
    pub seed: u64,
    /// Number of mode assignments, 4^gates.
    pub joint_size: u128,
    pub terms: usize,
    pub found: bool,
    pub correct: bool,
    pub hypothesis_mass: f64,
    pub injected_mass: f64,
    /// Enumerated MLCH mass when the circuit is small enough.
    pub oracle_mass: Option<f64>,
}

/// Injects `faults` stuck-at faults on random gates, observes inputs and
/// outputs, and asks for the most likely mode and wire assignment.
///
/// A run is correct when the returned hypothesis is at least as likely as the
/// injected one and, on small circuits, matches the enumerated maximum.
pub fn run_mlch_bench(spec: &CircuitSpec, faults: usize, seed: u64, budget: usize) -> Result<BenchReport> {
    let circuit = Circuit::new(spec)?;
    let gates = circuit.gates.len();
    if faults > gates {
        return Err(Error::OutOfRange(format!("{faults} faults on {gates} gates")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<bool> = (0..circuit.inputs).map(|_| rng.gen_bool(0.5)).collect();
    let mut modes = vec![OK; gates];
    for g in sample(&mut rng, gates, faults) {
        modes[g] = if rng.gen_bool(0.5) { STUCK0 } else { STUCK1 };
    }
    let wires = circuit.simulate(&inputs, &modes, &mut || rng.gen_bool(0.5));

    let mut evidence = Evidence::new();
    for (k, &v) in circuit.input_vars.iter().enumerate() {
        evidence.insert(v, usize::from(inputs[k]));
    }
    for &g in &circuit.outputs {
        evidence.insert(circuit.wire_vars[g], usize::from(wires[g]));
    }
    let mut injected = circuit.net.evidence_binding(&evidence);
    for g in 0..gates {
        injected.set(circuit.mode_vars[g], modes[g]);
        injected.set(circuit.wire_vars[g], usize::from(wires[g]));
    }
    let injected_mass = circuit.net.joint_mass(&injected);

    let vars = circuit.diagnosis_vars();
    let mut session = Session::with_evidence(circuit.net.clone(), evidence.clone())?;
    let out = session.mlch_over(&vars, budget)?;
    let hypothesis_mass = match &out.hypothesis {
        Some((b, _)) => circuit.net.joint_mass(&b.union(&circuit.net.evidence_binding(&evidence))),
        None => 0.0,
    };
    let oracle_mass = if gates <= ORACLE_GATES {
        Some(oracle::exact_mlch(&circuit.net, &vars, &evidence)?.1)
    } else {
        None
    };
    let tol = 1e-12 * injected_mass.max(hypothesis_mass);
    let mut correct = out.hypothesis.is_some() && hypothesis_mass + tol >= injected_mass;
    if let Some(best) = oracle_mass {
        correct &= (hypothesis_mass - best).abs() <= 1e-12 * best.max(1e-300);
    }
    Ok(BenchReport {
        gates,
        task: "mlch",
        faults,
        seed,
        joint_size: 4u128.pow(gates as u32),
        terms: out.terms_created,
        found: out.hypothesis.is_some(),
        correct,
        hypothesis_mass,
        injected_mass,
        oracle_mass,
    })
}

/// Fixed-width table, one row per report.
pub fn format_table(reports: &[BenchReport]) -> String {
    let mut s = format!(
        "{:>5}  {:<5}  {:>6}  {:>6}  {:>12}  {:>7}\n",
        "gates", "task", "faults", "terms", "joint", "correct"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:>5}  {:<5}  {:>6}  {:>6}  {:>12}  {:>7}",
            r.gates, r.task, r.faults, r.terms, r.joint_size, r.correct
        );
    }
    s
}

pub fn format_csv(reports: &[BenchReport]) -> String {
    let mut s = String::from("gates,task,faults,seed,terms,joint_size,correct,hypothesis_mass,injected_mass\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{:e},{:e}",
            r.gates, r.task, r.faults, r.seed, r.terms, r.joint_size, r.correct, r.hypothesis_mass, r.injected_mass
        );
    }
    s
}

/// The canonical runs: 1, 2 and 4 gates with no fault, 9 gates with one.
pub fn canonical_suite(seed: u64) -> Result<Vec<BenchReport>> {
    [(1, 0), (2, 0), (4, 0), (9, 1)]
        .into_iter()
        .map(|(g, f)| run_mlch_bench(&CircuitSpec::canonical(g), f, seed, DEFAULT_BUDGET))
        .collect()
}
