//! Variable handles and partial assignments.

use std::fmt;

use serde::Serialize;

/// Dense, stable handle of a network variable.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VarId(pub usize);

impl VarId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// A partial assignment of value indices to variables, kept sorted by variable.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Binding(Vec<(VarId, usize)>);

impl Binding {
    pub fn new() -> Self {
        Binding(Vec::new())
    }

    pub fn from_pairs<I: IntoIterator<Item = (VarId, usize)>>(pairs: I) -> Self {
        let mut v: Vec<_> = pairs.into_iter().collect();
        v.sort_unstable_by_key(|p| p.0);
        v.dedup_by_key(|p| p.0);
        Binding(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, usize)> + '_ {
        self.0.iter().copied()
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.0.iter().map(|p| p.0)
    }

    pub fn get(&self, var: VarId) -> Option<usize> {
        self.0
            .binary_search_by_key(&var, |p| p.0)
            .ok()
            .map(|i| self.0[i].1)
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.get(var).is_some()
    }

    /// Inserts or overwrites one assignment.
    pub fn set(&mut self, var: VarId, value: usize) {
        match self.0.binary_search_by_key(&var, |p| p.0) {
            Ok(i) => self.0[i].1 = value,
            Err(i) => self.0.insert(i, (var, value)),
        }
    }

    /// Restriction to the variables in `vars` (which must be sorted).
    pub fn project(&self, vars: &[VarId]) -> Binding {
        Binding(
            self.0
                .iter()
                .filter(|p| vars.binary_search(&p.0).is_ok())
                .copied()
                .collect(),
        )
    }

    /// Drops the variables in `vars` (which must be sorted).
    pub fn without(&self, vars: &[VarId]) -> Binding {
        Binding(
            self.0
                .iter()
                .filter(|p| vars.binary_search(&p.0).is_err())
                .copied()
                .collect(),
        )
    }

    /// True when no variable is bound to different values in the two bindings.
    pub fn consistent_with(&self, other: &Binding) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            let (a, b) = (self.0[i], other.0[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    if a.1 != b.1 {
                        return false;
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        true
    }

    /// Union of two consistent bindings.
    pub fn union(&self, other: &Binding) -> Binding {
        let mut out = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() || j < other.0.len() {
            if j >= other.0.len() || (i < self.0.len() && self.0[i].0 < other.0[j].0) {
                out.push(self.0[i]);
                i += 1;
            } else if i >= self.0.len() || other.0[j].0 < self.0[i].0 {
                out.push(other.0[j]);
                j += 1;
            } else {
                debug_assert_eq!(self.0[i].1, other.0[j].1);
                out.push(self.0[i]);
                i += 1;
                j += 1;
            }
        }
        Binding(out)
    }
}

impl FromIterator<(VarId, usize)> for Binding {
    fn from_iter<T: IntoIterator<Item = (VarId, usize)>>(iter: T) -> Self {
        Binding::from_pairs(iter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(pairs: &[(usize, usize)]) -> Binding {
        pairs.iter().map(|&(v, x)| (VarId(v), x)).collect()
    }

    #[test]
    fn consistency_and_union() {
        let x = b(&[(0, 1), (2, 0)]);
        let y = b(&[(1, 1), (2, 0)]);
        let z = b(&[(2, 1)]);
        assert!(x.consistent_with(&y));
        assert!(!x.consistent_with(&z));
        assert_eq!(x.union(&y), b(&[(0, 1), (1, 1), (2, 0)]));
    }

    #[test]
    fn project_and_without() {
        let x = b(&[(0, 1), (1, 0), (3, 1)]);
        assert_eq!(x.project(&[VarId(1), VarId(3)]), b(&[(1, 0), (3, 1)]));
        assert_eq!(x.without(&[VarId(1)]), b(&[(0, 1), (3, 1)]));
        let mut y = x.clone();
        y.set(VarId(2), 5);
        assert_eq!(y.get(VarId(2)), Some(5));
        assert_eq!(y.len(), 4);
    }
}
