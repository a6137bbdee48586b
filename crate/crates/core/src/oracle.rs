//! Brute-force reference solver.
//!
//! Enumerates the domain product in declared variable order and value order,
//! checking each constraint as soon as the last variable of its scope is
//! bound. The solver is meant to be obviously correct rather than fast; it
//! is the ground truth for the differential verifier.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::expr::{BinaryOp, IntensionExpr, UnaryOp};
use crate::model::{Constraint, CspInstance, Polarity};

/// Default cap on the number of assignments a search may cover.
pub const DEFAULT_LIMIT: u64 = 10_000_000;

const C_INT_MIN: i128 = i32::MIN as i128;
const C_INT_MAX: i128 = i32::MAX as i128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("variable `{0}` is not bound")]
    Unbound(String),
    #[error("`{expr}` evaluates to {value}, outside the 32-bit signed range of C `int`")]
    Overflow { expr: String, value: i128 },
}

/// A valuation of (some of) the instance's variables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Assignment(BTreeMap<String, i64>);

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, value: i64) {
        self.0.insert(id.into(), value);
    }

    pub fn get(&self, id: &str) -> Option<i64> {
        self.0.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Values in the instance's declared variable order.
    pub fn ordered_values(&self, csp: &CspInstance) -> Vec<Option<i64>> {
        csp.variables().iter().map(|v| self.get(&v.id)).collect()
    }

    /// `id=value` pairs in the instance's declared variable order.
    pub fn display_in(&self, csp: &CspInstance) -> String {
        csp.variables()
            .iter()
            .filter_map(|v| self.get(&v.id).map(|x| format!("{}={x}", v.id)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl<S: Into<String>> FromIterator<(S, i64)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (S, i64)>>(iter: I) -> Self {
        Assignment(iter.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Satisfiable,
    Unsatisfiable,
    ResourceLimit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub witness: Option<Assignment>,
    /// Number of full assignments covered, either tested directly or ruled
    /// out wholesale by a violated constraint on a partial assignment.
    pub explored: u64,
}

/// Outcome of [`enumerate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enumeration {
    pub solutions: Vec<Assignment>,
    pub explored: u64,
    /// False when the limit stopped the search early.
    pub complete: bool,
}

fn checked(value: i128, expr: &IntensionExpr) -> Result<i64, EvalError> {
    if (C_INT_MIN..=C_INT_MAX).contains(&value) {
        Ok(value as i64)
    } else {
        Err(EvalError::Overflow {
            expr: expr.to_string(),
            value,
        })
    }
}

/// Evaluates an expression under `a`. Comparisons and connectives yield 0 or
/// 1; every intermediate value must fit a C `int`.
pub fn eval_expr(expr: &IntensionExpr, a: &Assignment) -> Result<i64, EvalError> {
    eval_with(expr, &|v| a.get(v))
}

pub(crate) fn eval_with(
    expr: &IntensionExpr,
    lookup: &impl Fn(&str) -> Option<i64>,
) -> Result<i64, EvalError> {
    let value: i128 = match expr {
        IntensionExpr::Var(v) => lookup(v).ok_or_else(|| EvalError::Unbound(v.clone()))? as i128,
        IntensionExpr::Const(c) => *c as i128,
        IntensionExpr::Placeholder(i) => return Err(EvalError::Unbound(format!("%{i}"))),
        IntensionExpr::Unary(op, e) => {
            let x = eval_with(e, lookup)? as i128;
            match op {
                UnaryOp::Neg => -x,
                UnaryOp::Abs => x.abs(),
                UnaryOp::Not => (x == 0) as i128,
            }
        }
        IntensionExpr::Binary(op, l, r) => {
            let a = eval_with(l, lookup)? as i128;
            let b = eval_with(r, lookup)? as i128;
            match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                BinaryOp::Eq => (a == b) as i128,
                BinaryOp::Ne => (a != b) as i128,
                BinaryOp::Lt => (a < b) as i128,
                BinaryOp::Le => (a <= b) as i128,
                BinaryOp::Gt => (a > b) as i128,
                BinaryOp::Ge => (a >= b) as i128,
                BinaryOp::And => (a != 0 && b != 0) as i128,
                BinaryOp::Or => (a != 0 || b != 0) as i128,
                BinaryOp::Dist => (a - b).abs(),
            }
        }
    };
    checked(value, expr)
}

/// Whether `a` satisfies `c`. Every scope variable must be bound.
pub fn constraint_satisfied(c: &Constraint, a: &Assignment) -> Result<bool, EvalError> {
    satisfied_with(c, &|v| a.get(v))
}

fn satisfied_with(
    c: &Constraint,
    lookup: &impl Fn(&str) -> Option<i64>,
) -> Result<bool, EvalError> {
    let value_of = |v: &String| lookup(v).ok_or_else(|| EvalError::Unbound(v.clone()));
    match c {
        Constraint::Extensional {
            scope,
            polarity,
            tuples,
        } => {
            let current = scope.iter().map(value_of).collect::<Result<Vec<_>, _>>()?;
            let listed = tuples.contains(&current);
            Ok(match polarity {
                Polarity::Supports => listed,
                Polarity::Conflicts => !listed,
            })
        }
        Constraint::Intensional { expr } => Ok(eval_with(expr, lookup)? != 0),
        Constraint::AllDifferent { scope } => {
            let vals = scope.iter().map(value_of).collect::<Result<Vec<_>, _>>()?;
            Ok(vals
                .iter()
                .enumerate()
                .all(|(i, x)| vals[i + 1..].iter().all(|y| x != y)))
        }
    }
}

/// True iff `a` gives every variable a value from its domain and satisfies
/// every instantiated constraint.
pub fn is_solution(csp: &CspInstance, a: &Assignment) -> Result<bool, EvalError> {
    for v in csp.variables() {
        match a.get(&v.id) {
            Some(x) if v.domain.contains(x) => {}
            Some(_) => return Ok(false),
            None => return Err(EvalError::Unbound(v.id.clone())),
        }
    }
    for c in csp.constraints() {
        if !constraint_satisfied(c, a)? {
            return Ok(false);
        }
    }
    Ok(true)
}

struct Search<'a> {
    csp: &'a CspInstance,
    /// Constraints to check once the variable at this position is bound.
    checks_at: Vec<Vec<&'a Constraint>>,
    /// Number of full assignments below a node at each depth.
    below: Vec<u128>,
    total: u128,
    index: HashMap<&'a str, usize>,
    values: Vec<i64>,
    explored: u128,
    limit: u128,
    hit_limit: bool,
}

impl<'a> Search<'a> {
    fn new(csp: &'a CspInstance, limit: u64) -> Self {
        let vars = csp.variables();
        let n = vars.len();
        let index: HashMap<&str, usize> =
            vars.iter().enumerate().map(|(i, v)| (v.id.as_str(), i)).collect();
        let mut checks_at = vec![Vec::new(); n];
        for c in csp.constraints() {
            let level = c
                .scope()
                .iter()
                .filter_map(|v| index.get(v).copied())
                .max()
                .unwrap_or(0);
            checks_at[level].push(c);
        }
        let mut below = vec![1u128; n];
        for i in (0..n.saturating_sub(1)).rev() {
            below[i] = below[i + 1].saturating_mul(vars[i + 1].domain.size() as u128);
        }
        Search {
            csp,
            checks_at,
            below,
            total: csp.search_space(),
            index,
            values: vec![0; n],
            explored: 0,
            limit: limit.max(1) as u128,
            hit_limit: false,
        }
    }

    fn lookup(&self, level: usize) -> impl Fn(&str) -> Option<i64> + '_ {
        move |v| self.index.get(v).filter(|&&i| i <= level).map(|&i| self.values[i])
    }

    fn consistent(&self, level: usize) -> Result<bool, EvalError> {
        let lookup = self.lookup(level);
        for c in &self.checks_at[level] {
            if !satisfied_with(c, &lookup)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn account(&mut self, n: u128) -> bool {
        self.explored = self.explored.saturating_add(n);
        if self.explored >= self.limit && self.explored < self.total {
            self.hit_limit = true;
        }
        self.hit_limit
    }

    fn current(&self) -> Assignment {
        self.csp
            .variables()
            .iter()
            .zip(&self.values)
            .map(|(v, &x)| (v.id.clone(), x))
            .collect()
    }

    /// Visits every solution in lexicographic order; `on_solution` returns
    /// false to stop. Returns false if the search was cut short.
    fn run(&mut self, on_solution: &mut impl FnMut(Assignment) -> bool) -> Result<bool, EvalError> {
        self.dfs(0, on_solution)
    }

    fn dfs(
        &mut self,
        level: usize,
        on_solution: &mut impl FnMut(Assignment) -> bool,
    ) -> Result<bool, EvalError> {
        let last = level + 1 == self.values.len();
        let csp = self.csp;
        for x in csp.variables()[level].domain.values() {
            self.values[level] = x;
            if !self.consistent(level)? {
                if self.account(self.below[level]) {
                    return Ok(false);
                }
                continue;
            }
            if last {
                let keep_going = on_solution(self.current());
                let limited = self.account(1);
                if !keep_going || limited {
                    return Ok(false);
                }
            } else if !self.dfs(level + 1, on_solution)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn explored(&self) -> u64 {
        self.explored.min(u64::MAX as u128) as u64
    }
}

/// Finds the lexicographically first solution, visiting at most `limit`
/// assignments.
pub fn solve(csp: &CspInstance, limit: u64) -> Result<SolveResult, EvalError> {
    let mut search = Search::new(csp, limit);
    let mut witness = None;
    search.run(&mut |a| {
        witness = Some(a);
        false
    })?;
    let status = if witness.is_some() {
        SolveStatus::Satisfiable
    } else if search.hit_limit {
        SolveStatus::ResourceLimit
    } else {
        SolveStatus::Unsatisfiable
    };
    Ok(SolveResult {
        status,
        witness,
        explored: search.explored(),
    })
}

/// Collects every solution in lexicographic order, visiting at most `limit`
/// assignments.
pub fn enumerate(csp: &CspInstance, limit: u64) -> Result<Enumeration, EvalError> {
    let mut search = Search::new(csp, limit);
    let mut solutions = Vec::new();
    let complete = search.run(&mut |a| {
        solutions.push(a);
        true
    })?;
    Ok(Enumeration {
        solutions,
        explored: search.explored(),
        complete: complete && !search.hit_limit,
    })
}

/// Convenience wrapper over [`enumerate`] returning just the solutions.
pub fn enumerate_solutions(csp: &CspInstance, limit: u64) -> Result<Vec<Assignment>, EvalError> {
    enumerate(csp, limit).map(|e| e.solutions)
}
