//! Brute-force reference computations over the full joint. Deliberately
//! naive: every answer is a plain enumeration of assignments.

use std::collections::{BTreeMap, BTreeSet};

use crate::binding::{Binding, VarId};
use crate::error::{Error, Result};
use crate::net::{BeliefNet, Evidence};

/// Largest number of assignments any oracle call will enumerate.
pub const ENUMERATION_GUARD: u128 = 1 << 24;

/// Exact distribution over the value combinations of a variable set.
#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    pub vars: Vec<VarId>,
    /// Unnormalized masses (joint with the evidence), one per combination.
    pub masses: BTreeMap<Binding, f64>,
}

impl Marginal {
    pub fn total(&self) -> f64 {
        self.masses.values().sum()
    }

    pub fn posterior(&self) -> BTreeMap<Binding, f64> {
        let z = self.total();
        self.masses.iter().map(|(b, m)| (b.clone(), m / z)).collect()
    }

    pub fn get(&self, b: &Binding) -> f64 {
        self.masses.get(b).copied().unwrap_or(0.0)
    }
}

/// Calls `f` with every assignment of `free` (mixed radix, last var fastest)
/// merged into `fixed`.
fn for_each_assignment(
    net: &BeliefNet,
    free: &[VarId],
    fixed: &Binding,
    mut f: impl FnMut(&Binding),
) -> Result<()> {
    let size: u128 = free.iter().map(|&v| net.arity(v) as u128).product();
    if size > ENUMERATION_GUARD {
        return Err(Error::SizeGuard(size));
    }
    let mut digits = vec![0usize; free.len()];
    loop {
        let mut b = fixed.clone();
        for (&v, &x) in free.iter().zip(&digits) {
            b.set(v, x);
        }
        f(&b);
        let mut k = free.len();
        loop {
            if k == 0 {
                return Ok(());
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

/// Every full assignment consistent with the evidence, with its joint mass,
/// sorted by decreasing mass and then lexicographically.
pub fn enumerate_joint(net: &BeliefNet, evidence: &Evidence) -> Result<Vec<(Binding, f64)>> {
    let free: Vec<VarId> = net.var_ids().filter(|v| !evidence.contains_key(v)).collect();
    let fixed = net.evidence_binding(evidence);
    let mut out = Vec::new();
    for_each_assignment(net, &free, &fixed, |b| out.push((b.clone(), net.joint_mass(b))))?;
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// Joint masses `P(query = q, evidence)` for every query combination.
pub fn exact_marginal(net: &BeliefNet, query: &[VarId], evidence: &Evidence) -> Result<Marginal> {
    let all: BTreeSet<VarId> = net.var_ids().collect();
    exact_factor_marginal(net, &all, query, evidence)
}

/// Like [`exact_marginal`] but multiplying only the tables of `tables`; the
/// assignment space is every non-evidence variable those tables mention.
pub fn exact_factor_marginal(
    net: &BeliefNet,
    tables: &BTreeSet<VarId>,
    query: &[VarId],
    evidence: &Evidence,
) -> Result<Marginal> {
    let mut qs: Vec<VarId> = query.to_vec();
    qs.sort_unstable();
    let mut scope: BTreeSet<VarId> = qs.iter().copied().collect();
    for &t in tables {
        scope.extend(net.table(t).scope());
    }
    let free: Vec<VarId> = scope.into_iter().filter(|v| !evidence.contains_key(v)).collect();
    let fixed = net.evidence_binding(evidence);
    let mut masses: BTreeMap<Binding, f64> = BTreeMap::new();
    // seed every combination so zero-mass values are present
    for_each_assignment(net, &qs, &Binding::new(), |b| {
        masses.insert(b.clone(), 0.0);
    })?;
    for_each_assignment(net, &free, &fixed, |b| {
        let m: f64 = tables.iter().map(|&t| net.table(t).prob(net, b)).product();
        *masses.get_mut(&b.project(&qs)).expect("seeded") += m;
    })?;
    Ok(Marginal { vars: qs, masses })
}

/// Most probable combination of `vars` given the evidence, with its joint
/// mass; ties go to the lexicographically smallest binding.
pub fn exact_mlch(net: &BeliefNet, vars: &[VarId], evidence: &Evidence) -> Result<(Binding, f64)> {
    let m = exact_marginal(net, vars, evidence)?;
    let mut best: Option<(Binding, f64)> = None;
    for (b, &p) in &m.masses {
        if best.as_ref().is_none_or(|(_, q)| p > *q) {
            best = Some((b.clone(), p));
        }
    }
    best.ok_or(Error::EmptyQuery)
}
