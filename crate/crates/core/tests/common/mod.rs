//! Helpers shared by the integration tests: corpus loading and a
//! brute-force checker written independently of the library's oracle.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use csp2c_core::xcsp::{parse_file, ParseFailure};
use csp2c_core::{BinaryOp, Constraint, CspInstance, IntensionExpr, Polarity, UnaryOp};
use serde::Deserialize;

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus")
}

#[derive(Debug, Deserialize)]
pub struct ValidEntry {
    pub file: String,
    pub variables: usize,
    pub groups: usize,
    pub constraints: usize,
    pub space: u128,
    pub solutions: usize,
}

#[derive(Debug, Deserialize)]
pub struct InvalidEntry {
    pub file: String,
    pub kind: String,
    pub mentions: String,
}

#[derive(Debug, Deserialize)]
pub struct Expected {
    pub valid: Vec<ValidEntry>,
    pub invalid: Vec<InvalidEntry>,
}

pub fn expected() -> Expected {
    let text = std::fs::read_to_string(corpus_dir().join("expected.toml")).unwrap();
    toml::from_str(&text).unwrap()
}

pub fn load(file: &str) -> CspInstance {
    parse_file(corpus_dir().join(file))
        .unwrap_or_else(|e| panic!("{file}: {e}"))
        .instance
}

pub fn load_err(file: &str) -> ParseFailure {
    match parse_file(corpus_dir().join(file)) {
        Ok(_) => panic!("{file} parsed but should not"),
        Err(e) => e,
    }
}

/// Every valid corpus instance with its expectations.
pub fn valid_instances() -> Vec<(ValidEntry, CspInstance)> {
    expected()
        .valid
        .into_iter()
        .map(|e| {
            let csp = load(&e.file);
            (e, csp)
        })
        .collect()
}

/// `None` on anything a 32-bit C int cannot hold.
fn eval(e: &IntensionExpr, env: &BTreeMap<&str, i64>) -> Option<i64> {
    let fits = |v: i64| (i32::MIN as i64..=i32::MAX as i64).contains(&v).then_some(v);
    let truth = |b: bool| Some(b as i64);
    match e {
        IntensionExpr::Var(v) => env.get(v.as_str()).copied(),
        IntensionExpr::Const(c) => fits(*c),
        IntensionExpr::Placeholder(_) => None,
        IntensionExpr::Unary(op, x) => {
            let x = eval(x, env)?;
            match op {
                UnaryOp::Neg => fits(-x),
                UnaryOp::Abs => fits(x.abs()),
                UnaryOp::Not => truth(x == 0),
            }
        }
        IntensionExpr::Binary(op, l, r) => {
            let (a, b) = (eval(l, env)?, eval(r, env)?);
            match op {
                BinaryOp::Add => fits(a + b),
                BinaryOp::Sub => fits(a - b),
                BinaryOp::Mul => fits(a.checked_mul(b)?),
                BinaryOp::Dist => fits((a - b).abs()),
                BinaryOp::Eq => truth(a == b),
                BinaryOp::Ne => truth(a != b),
                BinaryOp::Lt => truth(a < b),
                BinaryOp::Le => truth(a <= b),
                BinaryOp::Gt => truth(a > b),
                BinaryOp::Ge => truth(a >= b),
                BinaryOp::And => truth(a != 0 && b != 0),
                BinaryOp::Or => truth(a != 0 || b != 0),
            }
        }
    }
}

/// Whether `values` (in declaration order) satisfies every constraint.
/// `None` when evaluation overflows.
pub fn satisfies(csp: &CspInstance, values: &[i64]) -> Option<bool> {
    let env: BTreeMap<&str, i64> = csp
        .variables()
        .iter()
        .zip(values)
        .map(|(v, &x)| (v.id.as_str(), x))
        .collect();
    if !csp
        .variables()
        .iter()
        .zip(values)
        .all(|(v, &x)| v.domain.values().any(|d| d == x))
    {
        return Some(false);
    }
    for c in csp.constraints() {
        let ok = match c {
            Constraint::Extensional {
                scope,
                polarity,
                tuples,
            } => {
                let t: Vec<i64> = scope.iter().map(|s| env[s.as_str()]).collect();
                let listed = tuples.contains(&t);
                match polarity {
                    Polarity::Supports => listed,
                    Polarity::Conflicts => !listed,
                }
            }
            Constraint::Intensional { expr } => eval(expr, &env)? != 0,
            Constraint::AllDifferent { scope } => {
                let mut vals: Vec<i64> = scope.iter().map(|s| env[s.as_str()]).collect();
                vals.sort_unstable();
                vals.windows(2).all(|w| w[0] != w[1])
            }
        };
        if !ok {
            return Some(false);
        }
    }
    Some(true)
}

/// Every point of the domain product, declaration order, first variable
/// most significant.
pub fn product(csp: &CspInstance) -> Vec<Vec<i64>> {
    let mut out: Vec<Vec<i64>> = vec![Vec::new()];
    for v in csp.variables() {
        let vals: Vec<i64> = v.domain.values().collect();
        out = out
            .into_iter()
            .flat_map(|prefix| {
                vals.iter().map(move |&x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    out
}

/// Brute-force solution list; `None` if any point overflows.
pub fn brute_force(csp: &CspInstance) -> Option<Vec<Vec<i64>>> {
    let mut sols = Vec::new();
    for p in product(csp) {
        if satisfies(csp, &p)? {
            sols.push(p);
        }
    }
    Some(sols)
}
