//! Small hand-written networks used by tests, docs and the CLI examples.

use crate::binding::VarId;
use crate::net::{BeliefNet, Evidence};
use crate::netfile;

/// Three-node network X -> Y, (X, Y) -> C.
pub const WORKED_EXAMPLE: &str = "\
var X: x0 x1
var Y: y0 y1
var C: c0 c1
cpt X: 0.95 0.05
cpt Y | X:
  x0: 0.9 0.1
  x1: 0.85 0.15
cpt C | X Y:
  x0 y0: 0.25 0.75
  x0 y1: 0.8 0.2
  x1 y0: 0.8 0.2
  x1 y1: 0.25 0.75
";

/// Root masses of the (X, Y) query under `C = c1`, in emission order.
pub const WORKED_EXAMPLE_MASSES: [f64; 4] = [0.64125, 0.019, 0.0085, 0.005625];

pub fn worked_example() -> BeliefNet {
    netfile::parse(WORKED_EXAMPLE).expect("fixture parses")
}

/// Returns the net, the `C = c1` observation and the query variables `[X, Y]`.
pub fn worked_example_query() -> (BeliefNet, Evidence, Vec<VarId>) {
    let net = worked_example();
    let c = net.id_of("C").expect("C");
    let x = net.id_of("X").expect("X");
    let y = net.id_of("Y").expect("Y");
    let ev: Evidence = [(c, 1)].into_iter().collect();
    (net, ev, vec![x, y])
}
