//! Discrete belief networks: variables, conditional tables, structural
//! queries (relevance, layering) and the skewness classification.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::binding::{Binding, VarId};
use crate::error::{Error, Result};

/// Observed values, keyed by variable.
pub type Evidence = BTreeMap<VarId, usize>;

/// Tolerance on each table row summing to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub id: VarId,
    pub name: String,
    pub values: Vec<String>,
}

impl Variable {
    pub fn arity(&self) -> usize {
        self.values.len()
    }

    pub fn value_index(&self, label: &str) -> Option<usize> {
        self.values.iter().position(|v| v == label)
    }
}

/// `P(child | parents)` stored as one row per parent combination. Rows are
/// in row-major order of the parent value indices, last parent fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTable {
    pub child: VarId,
    pub parents: Vec<VarId>,
    pub rows: Vec<Vec<f64>>,
}

impl ConditionalTable {
    pub fn is_marginal(&self) -> bool {
        self.parents.is_empty()
    }

    /// Every variable the table mentions: the child and its parents, sorted.
    pub fn scope(&self) -> Vec<VarId> {
        let mut s = self.parents.clone();
        s.push(self.child);
        s.sort_unstable();
        s
    }

    /// Row index for a binding covering all parents.
    pub fn row_index(&self, net: &BeliefNet, binding: &Binding) -> usize {
        let mut idx = 0;
        for &p in &self.parents {
            idx = idx * net.arity(p) + binding.get(p).expect("parent unbound");
        }
        idx
    }

    /// Probability of the child value in `binding` given the parent values in it.
    pub fn prob(&self, net: &BeliefNet, binding: &Binding) -> f64 {
        let row = self.row_index(net, binding);
        self.rows[row][binding.get(self.child).expect("child unbound")]
    }
}

/// Per-variable and global skewness classification.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewnessReport {
    pub per_variable_skew: BTreeMap<VarId, f64>,
    pub n: usize,
    pub threshold: f64,
    pub is_skewed: bool,
}

#[derive(Clone, Debug, Default)]
pub struct BeliefNet {
    variables: Vec<Variable>,
    tables: Vec<ConditionalTable>,
    children: Vec<Vec<VarId>>,
    versions: Vec<u32>,
    by_name: HashMap<String, VarId>,
}

impl BeliefNet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.variables.len()).map(VarId)
    }

    pub fn variable(&self, id: VarId) -> &Variable {
        &self.variables[id.0]
    }

    pub fn table(&self, id: VarId) -> &ConditionalTable {
        &self.tables[id.0]
    }

    pub fn parents(&self, id: VarId) -> &[VarId] {
        &self.tables[id.0].parents
    }

    pub fn children(&self, id: VarId) -> &[VarId] {
        &self.children[id.0]
    }

    pub fn arity(&self, id: VarId) -> usize {
        self.variables[id.0].values.len()
    }

    /// Bumped every time the variable's table is replaced.
    pub fn table_version(&self, id: VarId) -> u32 {
        self.versions[id.0]
    }

    pub fn arc_count(&self) -> usize {
        self.tables.iter().map(|t| t.parents.len()).sum()
    }

    pub fn contains(&self, id: VarId) -> bool {
        id.0 < self.variables.len()
    }

    pub fn id_of(&self, name: &str) -> Result<VarId> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.variables[id.0].name
    }

    pub fn value_index(&self, id: VarId, label: &str) -> Result<usize> {
        self.variables[id.0]
            .value_index(label)
            .ok_or_else(|| Error::UnknownValue {
                var: self.name(id).to_string(),
                value: label.to_string(),
            })
    }

    fn check_id(&self, id: VarId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(Error::UnknownVariable(id.to_string()))
        }
    }

    fn check_rows(&self, name: &str, arity: usize, parents: &[VarId], rows: &[Vec<f64>]) -> Result<()> {
        let malformed = |reason: String| Error::MalformedTable {
            var: name.to_string(),
            reason,
        };
        let expected: usize = parents.iter().map(|&p| self.arity(p)).product();
        if rows.len() != expected {
            return Err(malformed(format!(
                "expected {expected} rows, found {}",
                rows.len()
            )));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != arity {
                return Err(malformed(format!(
                    "row {r} has {} entries, expected {arity}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(malformed(format!("row {r} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(malformed(format!("row {r} sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Adds a variable together with its table. Parents must already exist.
    pub fn add_variable(
        &mut self,
        name: &str,
        values: Vec<String>,
        parents: Vec<VarId>,
        rows: Vec<Vec<f64>>,
    ) -> Result<VarId> {
        if self.by_name.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        if values.len() < 2 {
            return Err(Error::MalformedTable {
                var: name.to_string(),
                reason: "a variable needs at least two values".into(),
            });
        }
        let distinct: BTreeSet<&String> = values.iter().collect();
        if distinct.len() != values.len() {
            return Err(Error::MalformedTable {
                var: name.to_string(),
                reason: "duplicate value label".into(),
            });
        }
        for &p in &parents {
            if !self.contains(p) {
                return Err(Error::UnknownVariable(p.to_string()));
            }
        }
        let unique: BTreeSet<VarId> = parents.iter().copied().collect();
        if unique.len() != parents.len() {
            return Err(Error::MalformedTable {
                var: name.to_string(),
                reason: "repeated parent".into(),
            });
        }
        self.check_rows(name, values.len(), &parents, &rows)?;
        let id = VarId(self.variables.len());
        for &p in &parents {
            self.children[p.0].push(id);
        }
        self.variables.push(Variable {
            id,
            name: name.to_string(),
            values,
        });
        self.tables.push(ConditionalTable {
            child: id,
            parents,
            rows,
        });
        self.children.push(Vec::new());
        self.versions.push(0);
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Convenience wrapper naming values `<name>0`, `<name>1`, ...
    pub fn add_simple(&mut self, name: &str, arity: usize, parents: &[VarId], rows: Vec<Vec<f64>>) -> Result<VarId> {
        let values = (0..arity).map(|i| format!("{}{}", name.to_lowercase(), i)).collect();
        self.add_variable(name, values, parents.to_vec(), rows)
    }

    /// Adds `parent -> child` and replaces the child's table. The new table's
    /// parent list is the old one with `parent` appended.
    pub fn add_arc(&mut self, parent: VarId, child: VarId, rows: Vec<Vec<f64>>) -> Result<()> {
        self.check_id(parent)?;
        self.check_id(child)?;
        let (pn, cn) = (self.name(parent).to_string(), self.name(child).to_string());
        if parent == child || self.parents(child).contains(&parent) {
            return Err(Error::ArcExists { parent: pn, child: cn });
        }
        if self.is_ancestor(child, parent) {
            return Err(Error::Cycle { parent: pn, child: cn });
        }
        let mut parents = self.parents(child).to_vec();
        parents.push(parent);
        self.check_rows(&cn, self.arity(child), &parents, &rows)?;
        self.tables[child.0] = ConditionalTable {
            child,
            parents,
            rows,
        };
        self.children[parent.0].push(child);
        self.versions[child.0] += 1;
        Ok(())
    }

    /// True when a directed path leads from `a` to `b` (or `a == b`).
    pub fn is_ancestor(&self, a: VarId, b: VarId) -> bool {
        let mut stack = vec![a];
        let mut seen = vec![false; self.len()];
        while let Some(v) = stack.pop() {
            if v == b {
                return true;
            }
            if std::mem::replace(&mut seen[v.0], true) {
                continue;
            }
            stack.extend(self.children(v).iter().copied());
        }
        false
    }

    /// Variables in an order where every parent precedes its children.
    pub fn topological_order(&self) -> Vec<VarId> {
        // arcs added later may point from a younger variable to an older one
        let mut indegree: Vec<usize> = self.tables.iter().map(|t| t.parents.len()).collect();
        let mut ready: Vec<VarId> = self.var_ids().filter(|v| indegree[v.0] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(self.len());
        while let Some(v) = ready.pop() {
            order.push(v);
            for &c in self.children(v).iter().rev() {
                indegree[c.0] -= 1;
                if indegree[c.0] == 0 {
                    ready.push(c);
                }
            }
        }
        order
    }

    pub fn skewness(&self) -> SkewnessReport {
        let n = self.len();
        let threshold = if n == 0 { 0.0 } else { (n as f64 - 1.0) / n as f64 };
        let per_variable_skew: BTreeMap<VarId, f64> = self
            .tables
            .iter()
            .map(|t| {
                let skew = t
                    .rows
                    .iter()
                    .map(|row| row.iter().copied().fold(0.0, f64::max))
                    .fold(f64::INFINITY, f64::min);
                (t.child, skew)
            })
            .collect();
        let is_skewed = per_variable_skew.values().all(|&s| s >= threshold);
        SkewnessReport {
            per_variable_skew,
            n,
            threshold,
            is_skewed,
        }
    }

    fn check_query(&self, query: &BTreeSet<VarId>, evidence: &Evidence) -> Result<()> {
        for &q in query {
            self.check_id(q)?;
            if evidence.contains_key(&q) {
                return Err(Error::QueryObserved(self.name(q).to_string()));
            }
        }
        for (&e, &val) in evidence {
            self.check_id(e)?;
            if val >= self.arity(e) {
                return Err(Error::OutOfRange(format!(
                    "value {val} for `{}`",
                    self.name(e)
                )));
            }
        }
        Ok(())
    }

    /// Variables whose tables are requisite for the posterior of `query`
    /// given `evidence` (Bayes-ball reachability).
    pub fn relevant_nodes(&self, query: &BTreeSet<VarId>, evidence: &Evidence) -> Result<BTreeSet<VarId>> {
        self.check_query(query, evidence)?;
        let n = self.len();
        let mut top = vec![false; n];
        let mut bottom = vec![false; n];
        // (variable, arrived from a child)
        let mut schedule: Vec<(VarId, bool)> = query.iter().map(|&q| (q, true)).collect();
        while let Some((j, from_child)) = schedule.pop() {
            let observed = evidence.contains_key(&j);
            if from_child {
                if observed {
                    continue;
                }
                if !top[j.0] {
                    top[j.0] = true;
                    schedule.extend(self.parents(j).iter().map(|&p| (p, true)));
                }
                if !bottom[j.0] {
                    bottom[j.0] = true;
                    schedule.extend(self.children(j).iter().map(|&c| (c, false)));
                }
            } else if observed {
                if !top[j.0] {
                    top[j.0] = true;
                    schedule.extend(self.parents(j).iter().map(|&p| (p, true)));
                }
            } else if !bottom[j.0] {
                bottom[j.0] = true;
                schedule.extend(self.children(j).iter().map(|&c| (c, false)));
            }
        }
        Ok(self.var_ids().filter(|v| top[v.0]).collect())
    }

    /// Splits `relevant` into layers by longest directed distance from a root,
    /// counting only parents inside `relevant`.
    pub fn layers(&self, relevant: &BTreeSet<VarId>) -> Vec<BTreeSet<VarId>> {
        let mut depth: HashMap<VarId, usize> = HashMap::new();
        for v in self.topological_order() {
            if !relevant.contains(&v) {
                continue;
            }
            let d = self
                .parents(v)
                .iter()
                .filter_map(|p| depth.get(p))
                .map(|d| d + 1)
                .max()
                .unwrap_or(0);
            depth.insert(v, d);
        }
        let max = depth.values().copied().max();
        let mut out = vec![BTreeSet::new(); max.map_or(0, |m| m + 1)];
        for (v, d) in depth {
            out[d].insert(v);
        }
        out
    }

    /// Product of table entries for a binding covering the scope of every table.
    pub fn joint_mass(&self, full: &Binding) -> f64 {
        self.tables.iter().map(|t| t.prob(self, full)).product()
    }

    /// Resolves `NAME=value` style evidence.
    pub fn evidence_binding(&self, evidence: &Evidence) -> Binding {
        evidence.iter().map(|(&v, &x)| (v, x)).collect()
    }
}
