//! Random network generators for property tests and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::binding::VarId;
use crate::net::{BeliefNet, Evidence};

/// One random distribution over `arity` values. With `skew = Some(s)` a
/// random value gets mass in `[s, 1]` and the rest is spread randomly.
pub fn random_row<R: Rng + ?Sized>(rng: &mut R, arity: usize, skew: Option<f64>) -> Vec<f64> {
    match skew {
        None => {
            let raw: Vec<f64> = (0..arity).map(|_| rng.gen_range(0.01..1.0)).collect();
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / z).collect()
        }
        Some(s) => {
            let top = rng.gen_range(s..=1.0);
            let modal = rng.gen_range(0..arity);
            let raw: Vec<f64> = (0..arity - 1).map(|_| rng.gen_range(0.01..1.0)).collect();
            let z: f64 = raw.iter().sum();
            let mut rest = raw.into_iter().map(|x| x / z * (1.0 - top));
            (0..arity)
                .map(|i| if i == modal { top } else { rest.next().unwrap_or(0.0) })
                .collect()
        }
    }
}

/// Binary net over `n` variables; each variable picks up to `max_parents`
/// parents among earlier ones.
pub fn random_net<R: Rng + ?Sized>(rng: &mut R, n: usize, max_parents: usize, skew: Option<f64>) -> BeliefNet {
    let mut net = BeliefNet::new();
    for i in 0..n {
        let mut pool: Vec<VarId> = (0..i).map(VarId).collect();
        pool.shuffle(rng);
        let k = rng.gen_range(0..=max_parents.min(i));
        let mut parents: Vec<VarId> = pool.into_iter().take(k).collect();
        parents.sort_unstable();
        let rows = (0..1usize << parents.len()).map(|_| random_row(rng, 2, skew)).collect();
        net.add_simple(&format!("X{i}"), 2, &parents, rows)
            .expect("generated tables are well formed");
    }
    net
}

/// `n` independent binary roots, each putting exactly (n-1)/n on a random value.
pub fn independent_skewed<R: Rng + ?Sized>(rng: &mut R, n: usize) -> BeliefNet {
    let hi = (n as f64 - 1.0) / n as f64;
    let mut net = BeliefNet::new();
    for i in 0..n {
        let row = if rng.gen_bool(0.5) { vec![hi, 1.0 - hi] } else { vec![1.0 - hi, hi] };
        net.add_simple(&format!("X{i}"), 2, &[], vec![row]).expect("valid row");
    }
    net
}

/// Binary chain X0 -> X1 -> ... with every row skewed at `skew`.
pub fn skewed_chain<R: Rng + ?Sized>(rng: &mut R, n: usize, skew: f64) -> BeliefNet {
    let mut net = BeliefNet::new();
    for i in 0..n {
        let parents: Vec<VarId> = if i == 0 { vec![] } else { vec![VarId(i - 1)] };
        let rows = (0..1usize << parents.len()).map(|_| random_row(rng, 2, Some(skew))).collect();
        net.add_simple(&format!("X{i}"), 2, &parents, rows).expect("valid rows");
    }
    net
}

/// Up to `max` observations on distinct variables outside `exclude`.
pub fn random_evidence<R: Rng + ?Sized>(rng: &mut R, net: &BeliefNet, max: usize, exclude: &[VarId]) -> Evidence {
    let mut pool: Vec<VarId> = net.var_ids().filter(|v| !exclude.contains(v)).collect();
    pool.shuffle(rng);
    let k = rng.gen_range(0..=max.min(pool.len()));
    pool.into_iter()
        .take(k)
        .map(|v| (v, rng.gen_range(0..net.arity(v))))
        .collect()
}
