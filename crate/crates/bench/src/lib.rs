//! Scalable XCSP3 instance generators for benchmarks.
//!
//! Each generator returns document text so that parsing is part of what
//! can be measured; [`instance`] parses it.

use std::fmt::Write;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use csp2c_core::{parse_document, CspInstance};

/// `holes + 1` pigeons, pairwise different, each in `0..holes`. Unsatisfiable.
pub fn pigeonhole(holes: usize) -> String {
    let pigeons = holes + 1;
    format!(
        r#"<instance format="XCSP3" type="CSP">
  <variables>
    <array id="p" size="[{pigeons}]"> 0..{} </array>
  </variables>
  <constraints>
    <allDifferent> p[] </allDifferent>
  </constraints>
</instance>
"#,
        holes - 1
    )
}

/// All-interval series of length `n`: a permutation of `0..n` whose
/// consecutive distances are also pairwise different.
pub fn all_interval(n: usize) -> String {
    assert!(n >= 2, "series needs two elements");
    let mut args = String::new();
    for i in 0..n - 1 {
        let _ = writeln!(args, "      <args> d[{i}] x[{i}] x[{}] </args>", i + 1);
    }
    format!(
        r#"<instance format="XCSP3" type="CSP">
  <variables>
    <array id="x" size="[{n}]"> 0..{hi} </array>
    <array id="d" size="[{m}]"> 1..{hi} </array>
  </variables>
  <constraints>
    <allDifferent> x[] </allDifferent>
    <allDifferent> d[] </allDifferent>
    <group>
      <intension> eq(%0,dist(%1,%2)) </intension>
{args}    </group>
  </constraints>
</instance>
"#,
        hi = n - 1,
        m = n - 1,
    )
}

/// Random binary conflict tables over `vars` variables with domain
/// `0..domain`. Each of the `constraints` tables forbids `conflicts`
/// distinct pairs on a random pair of variables.
pub fn random_tables(vars: usize, domain: i64, constraints: usize, conflicts: usize, seed: u64) -> String {
    assert!(vars >= 2 && domain >= 1);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut body = String::new();
    for _ in 0..constraints {
        let a = rng.random_range(0..vars);
        let b = (a + rng.random_range(1..vars)) % vars;
        let mut pairs: Vec<(i64, i64)> = Vec::new();
        let want = conflicts.min((domain * domain) as usize);
        while pairs.len() < want {
            let p = (rng.random_range(0..domain), rng.random_range(0..domain));
            if !pairs.contains(&p) {
                pairs.push(p);
            }
        }
        pairs.sort_unstable();
        let tuples: Vec<String> = pairs.iter().map(|(x, y)| format!("({x},{y})")).collect();
        let _ = writeln!(
            body,
            "    <extension>\n      <list> x[{a}] x[{b}] </list>\n      <conflicts> {} </conflicts>\n    </extension>",
            tuples.join(" ")
        );
    }
    format!(
        r#"<instance format="XCSP3" type="CSP">
  <variables>
    <array id="x" size="[{vars}]"> 0..{} </array>
  </variables>
  <constraints>
{body}  </constraints>
</instance>
"#,
        domain - 1
    )
}

/// Parses generator output, panicking on malformed text.
pub fn instance(xml: &str) -> CspInstance {
    parse_document(xml).unwrap_or_else(|e| panic!("generator produced an invalid document:\n{e}"))
}
