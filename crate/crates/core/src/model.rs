//! Finite-domain CSP intermediate representation.
//!
//! A [`CspInstance`] is built once (by the XCSP3 parser or by hand) and is
//! immutable afterwards. Construction validates every structural invariant
//! and instantiates all constraint groups up front, so downstream passes can
//! rely on [`CspInstance::constraints`] being well formed.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::expr::IntensionExpr;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("instance declares no variables")]
    NoVariables,
    #[error("variable `{0}` is declared more than once")]
    DuplicateVariable(String),
    #[error("domain of variable `{0}` is empty")]
    EmptyDomain(String),
    #[error("constraint references undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("variable `{0}` occurs more than once in a scope")]
    RepeatedScopeVariable(String),
    #[error("tuple #{index} has arity {found}, scope has arity {expected}")]
    TupleArity {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("allDifferent needs at least two distinct variables, got {0}")]
    AllDifferentTooSmall(usize),
    #[error("intensional constraint `{0}` still contains placeholders")]
    UnboundPlaceholder(String),
    #[error("group `{group}`: args vector #{index} has {found} entries, template expects {expected}")]
    ArgsArity {
        group: String,
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("group `{group}`: args vector #{index}: {reason}")]
    BadArgument {
        group: String,
        index: usize,
        reason: String,
    },
}

/// A finite set of integers stored as disjoint, ascending, inclusive ranges.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Domain {
    ranges: Vec<(i64, i64)>,
}

impl Domain {
    /// Normalizes arbitrary (possibly overlapping or reversed-empty) ranges.
    pub fn from_ranges(ranges: impl IntoIterator<Item = (i64, i64)>) -> Self {
        let mut rs: Vec<(i64, i64)> = ranges.into_iter().filter(|(lo, hi)| lo <= hi).collect();
        rs.sort_unstable();
        let mut merged: Vec<(i64, i64)> = Vec::with_capacity(rs.len());
        for (lo, hi) in rs {
            match merged.last_mut() {
                Some(last) if lo <= last.1.saturating_add(1) => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Domain { ranges: merged }
    }

    pub fn from_values(values: impl IntoIterator<Item = i64>) -> Self {
        Self::from_ranges(values.into_iter().map(|v| (v, v)))
    }

    pub fn range(lo: i64, hi: i64) -> Self {
        Self::from_ranges([(lo, hi)])
    }

    pub fn ranges(&self) -> &[(i64, i64)] {
        &self.ranges
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn is_contiguous(&self) -> bool {
        self.ranges.len() == 1
    }

    /// Number of values. Saturates for absurdly wide domains.
    pub fn size(&self) -> u64 {
        self.ranges
            .iter()
            .map(|&(lo, hi)| (hi as i128 - lo as i128 + 1).min(u64::MAX as i128) as u64)
            .fold(0u64, u64::saturating_add)
    }

    pub fn contains(&self, v: i64) -> bool {
        self.ranges
            .binary_search_by(|&(lo, hi)| {
                if hi < v {
                    std::cmp::Ordering::Less
                } else if lo > v {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            })
            .is_ok()
    }

    pub fn min(&self) -> Option<i64> {
        self.ranges.first().map(|r| r.0)
    }

    pub fn max(&self) -> Option<i64> {
        self.ranges.last().map(|r| r.1)
    }

    pub fn values(&self) -> impl Iterator<Item = i64> + '_ {
        self.ranges.iter().flat_map(|&(lo, hi)| lo..=hi)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &(lo, hi)) in self.ranges.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            if lo == hi {
                write!(f, "{lo}")?;
            } else {
                write!(f, "{lo}..{hi}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableDecl {
    pub id: String,
    pub domain: Domain,
}

impl VariableDecl {
    pub fn new(id: impl Into<String>, domain: Domain) -> Self {
        VariableDecl {
            id: id.into(),
            domain,
        }
    }
}

/// Whether a table lists allowed tuples or forbidden ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Supports,
    Conflicts,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    Extensional {
        scope: Vec<String>,
        polarity: Polarity,
        tuples: Vec<Vec<i64>>,
    },
    Intensional {
        expr: IntensionExpr,
    },
    AllDifferent {
        scope: Vec<String>,
    },
}

impl Constraint {
    /// Ordered scope. For intensional constraints this is the variables of
    /// the expression in first-occurrence order.
    pub fn scope(&self) -> Vec<&str> {
        match self {
            Constraint::Extensional { scope, .. } | Constraint::AllDifferent { scope } => {
                scope.iter().map(String::as_str).collect()
            }
            Constraint::Intensional { expr } => expr.variables(),
        }
    }

    pub fn is_extensional(&self) -> bool {
        matches!(self, Constraint::Extensional { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Constraint::Extensional {
                polarity: Polarity::Supports,
                ..
            } => "supports",
            Constraint::Extensional {
                polarity: Polarity::Conflicts,
                ..
            } => "conflicts",
            Constraint::Intensional { .. } => "intension",
            Constraint::AllDifferent { .. } => "allDifferent",
        }
    }

    fn validate(&self, declared: &HashSet<&str>) -> Result<(), ModelError> {
        let check_scope = |scope: &[String]| -> Result<(), ModelError> {
            let mut seen = HashSet::new();
            for v in scope {
                if !declared.contains(v.as_str()) {
                    return Err(ModelError::UndeclaredVariable(v.clone()));
                }
                if !seen.insert(v.as_str()) {
                    return Err(ModelError::RepeatedScopeVariable(v.clone()));
                }
            }
            Ok(())
        };
        match self {
            Constraint::Extensional { scope, tuples, .. } => {
                check_scope(scope)?;
                for (index, t) in tuples.iter().enumerate() {
                    if t.len() != scope.len() {
                        return Err(ModelError::TupleArity {
                            index,
                            expected: scope.len(),
                            found: t.len(),
                        });
                    }
                }
            }
            Constraint::AllDifferent { scope } => {
                check_scope(scope)?;
                if scope.len() < 2 {
                    return Err(ModelError::AllDifferentTooSmall(scope.len()));
                }
            }
            Constraint::Intensional { expr } => {
                if expr.has_placeholders() {
                    return Err(ModelError::UnboundPlaceholder(expr.to_string()));
                }
                for v in expr.variables() {
                    if !declared.contains(v) {
                        return Err(ModelError::UndeclaredVariable(v.to_string()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A scope entry in a group template: a concrete variable or a `%i` slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Slot {
    Var(String),
    Placeholder(usize),
}

/// One entry of an `<args>` vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Arg {
    Var(String),
    Const(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintTemplate {
    Extensional {
        scope: Vec<Slot>,
        polarity: Polarity,
        tuples: Vec<Vec<i64>>,
    },
    Intensional {
        expr: IntensionExpr,
    },
    AllDifferent {
        scope: Vec<Slot>,
    },
}

impl ConstraintTemplate {
    pub fn placeholder_count(&self) -> usize {
        match self {
            ConstraintTemplate::Extensional { scope, .. }
            | ConstraintTemplate::AllDifferent { scope } => scope
                .iter()
                .filter_map(|s| match s {
                    Slot::Placeholder(i) => Some(i + 1),
                    Slot::Var(_) => None,
                })
                .max()
                .unwrap_or(0),
            ConstraintTemplate::Intensional { expr } => expr.placeholder_count(),
        }
    }

    fn instantiate(&self, args: &[Arg]) -> Result<Constraint, String> {
        let fill = |scope: &[Slot]| -> Result<Vec<String>, String> {
            scope
                .iter()
                .map(|s| match s {
                    Slot::Var(v) => Ok(v.clone()),
                    Slot::Placeholder(i) => match &args[*i] {
                        Arg::Var(v) => Ok(v.clone()),
                        Arg::Const(c) => {
                            Err(format!("%{i} is bound to constant {c}, a variable is required"))
                        }
                    },
                })
                .collect()
        };
        Ok(match self {
            ConstraintTemplate::Extensional {
                scope,
                polarity,
                tuples,
            } => Constraint::Extensional {
                scope: fill(scope)?,
                polarity: *polarity,
                tuples: tuples.clone(),
            },
            ConstraintTemplate::AllDifferent { scope } => Constraint::AllDifferent {
                scope: fill(scope)?,
            },
            ConstraintTemplate::Intensional { expr } => Constraint::Intensional {
                expr: expr
                    .substitute(args)
                    .map_err(|i| format!("placeholder %{i} has no argument"))?,
            },
        })
    }
}

/// A `<group>` (template plus argument rows) or a single concrete constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintGroup {
    Single(Constraint),
    Template {
        name: String,
        template: ConstraintTemplate,
        args: Vec<Vec<Arg>>,
    },
}

impl ConstraintGroup {
    pub fn instantiate(&self) -> Result<Vec<Constraint>, ModelError> {
        instantiate_group(self)
    }

    /// How many concrete constraints the group stands for.
    pub fn len(&self) -> usize {
        match self {
            ConstraintGroup::Single(_) => 1,
            ConstraintGroup::Template { args, .. } => args.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Expands a group into concrete constraints, substituting placeholders
/// positionally. Order of the `<args>` rows is preserved.
pub fn instantiate_group(group: &ConstraintGroup) -> Result<Vec<Constraint>, ModelError> {
    match group {
        ConstraintGroup::Single(c) => Ok(vec![c.clone()]),
        ConstraintGroup::Template {
            name,
            template,
            args,
        } => {
            let expected = template.placeholder_count();
            args.iter()
                .enumerate()
                .map(|(index, row)| {
                    if row.len() != expected {
                        return Err(ModelError::ArgsArity {
                            group: name.clone(),
                            index,
                            expected,
                            found: row.len(),
                        });
                    }
                    template
                        .instantiate(row)
                        .map_err(|reason| ModelError::BadArgument {
                            group: name.clone(),
                            index,
                            reason,
                        })
                })
                .collect()
        }
    }
}

/// A validated CSP `(X, C)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CspInstance {
    name: String,
    variables: Vec<VariableDecl>,
    groups: Vec<ConstraintGroup>,
    /// Instantiated constraints paired with the index of their group.
    constraints: Vec<(usize, Constraint)>,
    /// Original XCSP3 reference (e.g. `x[0]`) to flattened id (`x0`).
    flattening: BTreeMap<String, String>,
    index: HashMap<String, usize>,
}

impl CspInstance {
    pub fn new(
        name: impl Into<String>,
        variables: Vec<VariableDecl>,
        groups: Vec<ConstraintGroup>,
    ) -> Result<Self, ModelError> {
        if variables.is_empty() {
            return Err(ModelError::NoVariables);
        }
        let mut index = HashMap::with_capacity(variables.len());
        for (i, v) in variables.iter().enumerate() {
            if v.domain.is_empty() {
                return Err(ModelError::EmptyDomain(v.id.clone()));
            }
            if index.insert(v.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateVariable(v.id.clone()));
            }
        }
        let declared: HashSet<&str> = variables.iter().map(|v| v.id.as_str()).collect();
        let mut constraints = Vec::new();
        for (gi, g) in groups.iter().enumerate() {
            for c in instantiate_group(g)? {
                c.validate(&declared)?;
                constraints.push((gi, c));
            }
        }
        Ok(CspInstance {
            name: name.into(),
            variables,
            groups,
            constraints,
            flattening: BTreeMap::new(),
            index,
        })
    }

    /// Attaches the array-reference to flat-identifier map kept for reporting.
    pub fn with_flattening(mut self, map: BTreeMap<String, String>) -> Self {
        self.flattening = map;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &[VariableDecl] {
        &self.variables
    }

    pub fn groups(&self) -> &[ConstraintGroup] {
        &self.groups
    }

    pub fn flattening(&self) -> &BTreeMap<String, String> {
        &self.flattening
    }

    /// All instantiated constraints in declaration order.
    pub fn constraints(&self) -> impl ExactSizeIterator<Item = &Constraint> + '_ {
        self.constraints.iter().map(|(_, c)| c)
    }

    /// Instantiated constraints with the index of the group they came from.
    pub fn constraints_with_group(&self) -> &[(usize, Constraint)] {
        &self.constraints
    }

    pub fn constraint_count(&self) -> usize {
        self.constraints.len()
    }

    pub fn variable_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn variable(&self, id: &str) -> Option<&VariableDecl> {
        self.variable_index(id).map(|i| &self.variables[i])
    }

    /// Size of the full domain product, saturating at `u128::MAX`.
    pub fn search_space(&self) -> u128 {
        self.variables
            .iter()
            .fold(1u128, |acc, v| acc.saturating_mul(v.domain.size() as u128))
    }

    pub fn is_purely_extensional(&self) -> bool {
        self.constraints().all(Constraint::is_extensional)
    }

    pub fn is_purely_intensional(&self) -> bool {
        self.constraints().all(|c| !c.is_extensional())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::BinaryOp;

    fn bool_vars(n: usize) -> Vec<VariableDecl> {
        (0..n)
            .map(|i| VariableDecl::new(format!("x{i}"), Domain::range(0, 1)))
            .collect()
    }

    fn slots(n: usize) -> Vec<Slot> {
        (0..n).map(Slot::Placeholder).collect()
    }

    fn vars(names: &[&str]) -> Vec<Arg> {
        names.iter().map(|n| Arg::Var(n.to_string())).collect()
    }

    fn conflict_group() -> ConstraintGroup {
        ConstraintGroup::Template {
            name: "g".into(),
            template: ConstraintTemplate::Extensional {
                scope: slots(3),
                polarity: Polarity::Conflicts,
                tuples: vec![vec![0, 0, 0], vec![0, 1, 0]],
            },
            args: vec![vars(&["x0", "x1", "x2"]), vars(&["x3", "x4", "x5"])],
        }
    }

    #[test]
    fn domain_normalizes_ranges() {
        let d = Domain::from_ranges([(5, 7), (1, 2), (3, 3), (10, 9)]);
        assert_eq!(d.ranges(), &[(1, 3), (5, 7)]);
        assert_eq!(Domain::from_ranges([(1, 2), (3, 4)]).ranges(), &[(1, 4)]);
        let d = Domain::from_values([4, 1, 2, 9]);
        assert_eq!(d.ranges(), &[(1, 2), (4, 4), (9, 9)]);
        assert_eq!(d.size(), 4);
        assert!(d.contains(4) && !d.contains(3) && !d.contains(10));
        assert_eq!(d.to_string(), "1..2 4 9");
    }

    #[test]
    fn conflict_group_instantiates_two_conflict_tables() {
        let cs = instantiate_group(&conflict_group()).unwrap();
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].scope(), ["x0", "x1", "x2"]);
        assert_eq!(cs[1].scope(), ["x3", "x4", "x5"]);
        for c in &cs {
            match c {
                Constraint::Extensional {
                    polarity, tuples, ..
                } => {
                    assert_eq!(*polarity, Polarity::Conflicts);
                    assert_eq!(tuples, &vec![vec![0, 0, 0], vec![0, 1, 0]]);
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn dist_template_substitutes_positionally() {
        let template = IntensionExpr::binary(
            BinaryOp::Eq,
            IntensionExpr::Placeholder(0),
            IntensionExpr::binary(
                BinaryOp::Dist,
                IntensionExpr::Placeholder(1),
                IntensionExpr::Placeholder(2),
            ),
        );
        let g = ConstraintGroup::Template {
            name: "g".into(),
            template: ConstraintTemplate::Intensional { expr: template },
            args: vec![vars(&["y0", "x0", "x1"]), vars(&["y1", "x1", "x2"])],
        };
        let got: Vec<String> = instantiate_group(&g)
            .unwrap()
            .into_iter()
            .map(|c| match c {
                Constraint::Intensional { expr } => expr.to_string(),
                other => panic!("unexpected {other:?}"),
            })
            .collect();
        assert_eq!(got, ["eq(y0,dist(x0,x1))", "eq(y1,dist(x1,x2))"]);
    }

    #[test]
    fn singleton_group_is_identity() {
        let c = Constraint::AllDifferent {
            scope: vec!["x0".into(), "x1".into()],
        };
        assert_eq!(
            instantiate_group(&ConstraintGroup::Single(c.clone())).unwrap(),
            vec![c]
        );
    }

    #[test]
    fn args_arity_mismatch_names_group_and_row() {
        let mut g = conflict_group();
        if let ConstraintGroup::Template { args, .. } = &mut g {
            args.push(vars(&["x0", "x1"]));
        }
        assert_eq!(
            instantiate_group(&g),
            Err(ModelError::ArgsArity {
                group: "g".into(),
                index: 2,
                expected: 3,
                found: 2
            })
        );
    }

    #[test]
    fn instance_validation() {
        assert_eq!(
            CspInstance::new("e", vec![], vec![]),
            Err(ModelError::NoVariables)
        );
        let mut vs = bool_vars(2);
        vs.push(VariableDecl::new("x0", Domain::range(0, 1)));
        assert_eq!(
            CspInstance::new("d", vs, vec![]),
            Err(ModelError::DuplicateVariable("x0".into()))
        );
        let c = Constraint::AllDifferent {
            scope: vec!["x0".into(), "zz".into()],
        };
        assert_eq!(
            CspInstance::new("u", bool_vars(2), vec![ConstraintGroup::Single(c)]),
            Err(ModelError::UndeclaredVariable("zz".into()))
        );
        let c = Constraint::Extensional {
            scope: vec!["x0".into(), "x1".into(), "x2".into()],
            polarity: Polarity::Supports,
            tuples: vec![vec![0, 1]],
        };
        assert!(matches!(
            CspInstance::new("a", bool_vars(3), vec![ConstraintGroup::Single(c)]),
            Err(ModelError::TupleArity { .. })
        ));
        let c = Constraint::AllDifferent {
            scope: vec!["x0".into()],
        };
        assert_eq!(
            CspInstance::new("s", bool_vars(1), vec![ConstraintGroup::Single(c)]),
            Err(ModelError::AllDifferentTooSmall(1))
        );
    }

    #[test]
    fn constraint_count_sums_args_rows_and_singletons() {
        let single = ConstraintGroup::Single(Constraint::AllDifferent {
            scope: vec!["x0".into(), "x3".into()],
        });
        let inst =
            CspInstance::new("p", bool_vars(6), vec![conflict_group(), single]).unwrap();
        let expected: usize = inst.groups().iter().map(ConstraintGroup::len).sum();
        assert_eq!(inst.constraint_count(), expected);
        assert_eq!(inst.constraint_count(), 3);
        assert_eq!(inst.search_space(), 64);
        let groups: Vec<usize> = inst.constraints_with_group().iter().map(|(g, _)| *g).collect();
        assert_eq!(groups, [0, 0, 1]);
    }
}
