mod common;

use proptest::prelude::*;
use proptest::sample::subsequence;

use csp2c_core::codegen::encoding_section;
use csp2c_core::harness::{normalize, Outcome, RunRecord, ToolKind, BASELINE_VERSION};
use csp2c_core::oracle::{self, DEFAULT_LIMIT};
use csp2c_core::verifier::{all_versions, differential_check, VerifyConfig, VerifyStatus};
use csp2c_core::{
    parse_intension, transform, version_to_spec, BinaryOp, Constraint, ConstraintGroup,
    CspInstance, Dialect, Domain, Family, IntensionExpr, Polarity, UnaryOp, VariableDecl,
};

fn var(i: usize) -> IntensionExpr {
    IntensionExpr::var(format!("v{i}"))
}

fn domain() -> impl Strategy<Value = Domain> {
    prop_oneof![
        3 => (-2i64..=1, 0i64..=2).prop_map(|(lo, w)| Domain::range(lo, lo + w)),
        1 => proptest::collection::btree_set(-3i64..=3, 1..=3).prop_map(Domain::from_values),
    ]
}

fn term(n: usize) -> impl Strategy<Value = IntensionExpr> {
    prop_oneof![
        2 => (0..n).prop_map(var),
        1 => (-3i64..=3).prop_map(IntensionExpr::Const),
        2 => (0..n, 0..n, prop::sample::select(vec![BinaryOp::Add, BinaryOp::Sub, BinaryOp::Dist]))
            .prop_map(|(a, b, op)| IntensionExpr::binary(op, var(a), var(b))),
    ]
}

/// Boolean-valued expression whose first operand always mentions a variable.
fn condition(n: usize) -> impl Strategy<Value = IntensionExpr> {
    let cmp = (
        0..n,
        term(n),
        prop::sample::select(vec![
            BinaryOp::Eq,
            BinaryOp::Ne,
            BinaryOp::Lt,
            BinaryOp::Le,
            BinaryOp::Gt,
            BinaryOp::Ge,
        ]),
    )
        .prop_map(|(v, t, op)| IntensionExpr::binary(op, var(v), t))
        .boxed();
    let cmp2 = cmp.clone();
    prop_oneof![
        2 => cmp,
        1 => (cmp2.clone(), cmp2, any::<bool>()).prop_map(|(a, b, and)| {
            IntensionExpr::binary(if and { BinaryOp::And } else { BinaryOp::Or }, a, b)
        }),
    ]
}

fn table(n: usize) -> impl Strategy<Value = Constraint> {
    let vars: Vec<usize> = (0..n).collect();
    (subsequence(vars, 1..=n.min(3)), any::<bool>()).prop_flat_map(|(scope, supports)| {
        let arity = scope.len();
        proptest::collection::vec(proptest::collection::vec(-2i64..=2, arity), 1..=5).prop_map(
            move |tuples| Constraint::Extensional {
                scope: scope.iter().map(|i| format!("v{i}")).collect(),
                polarity: if supports { Polarity::Supports } else { Polarity::Conflicts },
                tuples,
            },
        )
    })
}

fn intensional(n: usize) -> impl Strategy<Value = Constraint> {
    let vars: Vec<usize> = (0..n).collect();
    prop_oneof![
        3 => condition(n).prop_map(|expr| Constraint::Intensional { expr }),
        1 => subsequence(vars, 2..=n).prop_map(|s| Constraint::AllDifferent {
            scope: s.iter().map(|i| format!("v{i}")).collect(),
        }),
    ]
}

#[derive(Debug, Clone, Copy)]
enum Mix {
    Extensional,
    Intensional,
    Mixed,
}

fn instance(mix: Mix) -> impl Strategy<Value = CspInstance> {
    (2usize..=4).prop_flat_map(move |n| {
        let constraint = match mix {
            Mix::Extensional => table(n).boxed(),
            Mix::Intensional => intensional(n).boxed(),
            Mix::Mixed => prop_oneof![table(n), intensional(n)].boxed(),
        };
        (
            proptest::collection::vec(domain(), n),
            proptest::collection::vec(constraint, 1..=4),
        )
            .prop_map(|(domains, cs)| {
                let vars = domains
                    .into_iter()
                    .enumerate()
                    .map(|(i, d)| VariableDecl::new(format!("v{i}"), d))
                    .collect();
                let groups = cs.into_iter().map(ConstraintGroup::Single).collect();
                CspInstance::new("random", vars, groups).unwrap()
            })
    })
}

fn pure_instance() -> impl Strategy<Value = (Family, CspInstance)> {
    prop_oneof![
        instance(Mix::Extensional).prop_map(|c| (Family::Extensional, c)),
        instance(Mix::Intensional).prop_map(|c| (Family::Intensional, c)),
    ]
}

fn c_tokens(source: &str) -> Vec<String> {
    let re = regex::Regex::new(r"&&|\|\||==|!=|<=|>=|[A-Za-z_][A-Za-z0-9_]*|\d+|\S").unwrap();
    re.find_iter(source).map(|m| m.as_str().to_string()).collect()
}

fn body(source: &str) -> String {
    source.split_once('\n').map_or(String::new(), |(_, b)| b.to_string())
}

fn general_expr() -> impl Strategy<Value = IntensionExpr> {
    let leaf = prop_oneof![
        (0usize..4).prop_map(var),
        (-50i64..=50).prop_map(IntensionExpr::Const),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (0usize..4, prop::sample::select(vec![UnaryOp::Neg, UnaryOp::Abs]))
                .prop_map(|(v, op)| IntensionExpr::unary(op, var(v))),
            inner.clone().prop_map(|e| IntensionExpr::unary(UnaryOp::Not, e)),
            (inner.clone(), inner, prop::sample::select(BinaryOp::ALL.to_vec()))
                .prop_map(|(l, r, op)| IntensionExpr::binary(op, l, r)),
        ]
    })
}

proptest! {
    #[test]
    fn oracle_matches_brute_force(csp in instance(Mix::Mixed)) {
        let brute = common::brute_force(&csp).expect("small constants cannot overflow");
        let found = oracle::enumerate_solutions(&csp, DEFAULT_LIMIT).unwrap();
        let mut ours: Vec<Vec<i64>> = found
            .iter()
            .map(|a| a.ordered_values(&csp).into_iter().map(Option::unwrap).collect())
            .collect();
        ours.sort();
        prop_assert_eq!(ours, brute);
        let solved = oracle::solve(&csp, DEFAULT_LIMIT).unwrap();
        prop_assert_eq!(solved.witness.is_some(), !found.is_empty());
    }

    #[test]
    fn codegen_is_deterministic((family, csp) in pure_instance()) {
        for spec in all_versions(family) {
            let a = transform(&csp, spec).unwrap();
            let b = transform(&csp.clone(), spec).unwrap();
            prop_assert_eq!(a.source, b.source);
        }
    }

    #[test]
    fn grouping_reduces_statement_count((family, csp) in pure_instance()) {
        let triples: &[(u8, u8, u8)] = match family {
            Family::Extensional => &[(1, 2, 3), (4, 5, 6), (7, 8, 9), (10, 11, 12)],
            Family::Intensional => &[(1, 2, 3), (1, 4, 5), (6, 7, 8), (6, 9, 10)],
        };
        let count = |v| transform(&csp, version_to_spec(family, v).unwrap()).unwrap().statement_count;
        for &(no, yes, all) in triples {
            prop_assert!(count(no) >= count(yes));
            prop_assert!(count(yes) >= count(all));
            prop_assert_eq!(count(all), 1);
        }
    }

    #[test]
    fn operator_variants_differ_only_in_connectives((family, csp) in pure_instance()) {
        let pairs: &[(u8, u8)] = match family {
            Family::Extensional => &[(1, 4), (2, 5), (3, 6), (7, 10), (8, 11), (9, 12)],
            Family::Intensional => &[(2, 4), (3, 5), (7, 9), (8, 10)],
        };
        for &(l, b) in pairs {
            let lt = c_tokens(&body(&transform(&csp, version_to_spec(family, l).unwrap()).unwrap().source));
            let bt = c_tokens(&body(&transform(&csp, version_to_spec(family, b).unwrap()).unwrap().source));
            prop_assert_eq!(lt.len(), bt.len());
            for (x, y) in lt.iter().zip(&bt) {
                prop_assert!(
                    x == y || matches!((x.as_str(), y.as_str()), ("&&", "&") | ("||", "|")),
                    "{} vs {}", x, y
                );
            }
        }
    }

    #[test]
    fn dialects_share_the_encoding((family, csp) in pure_instance()) {
        for spec in all_versions(family) {
            let klee = transform(&csp, spec.with_dialect(Dialect::Klee)).unwrap();
            let llbmc = transform(&csp, spec.with_dialect(Dialect::Llbmc)).unwrap();
            let k = encoding_section(&klee.source).join("\n").replace("klee_assume", "ASSUME");
            let l = encoding_section(&llbmc.source).join("\n").replace("__llbmc_assume", "ASSUME");
            prop_assert_eq!(c_tokens(&k), c_tokens(&l));
            prop_assert_eq!(klee.statement_count, llbmc.statement_count);
        }
    }

    #[test]
    fn domain_ranges_are_canonical(values in proptest::collection::vec(-20i64..20, 1..15)) {
        let d = Domain::from_values(values.clone());
        let mut want = values;
        want.sort_unstable();
        want.dedup();
        prop_assert_eq!(d.values().collect::<Vec<_>>(), want.clone());
        prop_assert_eq!(d.size(), want.len() as u64);
        for w in d.ranges().windows(2) {
            prop_assert!(w[0].1 + 1 < w[1].0, "ranges {:?} not merged", d.ranges());
        }
        prop_assert_eq!(d.is_contiguous(), d.ranges().len() == 1);
    }

    #[test]
    fn intension_text_round_trips(e in general_expr()) {
        let text = e.to_string();
        let back = parse_intension(&text).unwrap();
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn normalization_scales_with_baseline(
        times in proptest::collection::vec((0.01f64..100.0, 0.0f64..1000.0, 0.0f64..1000.0), 1..6),
        k in 0.001f64..1000.0,
    ) {
        let rec = |kind, inst: String, version: &str, t: f64| RunRecord {
            tool: "t".into(),
            kind,
            instance: inst,
            version: version.into(),
            outcome: Outcome::Reached,
            wallclock_s: t,
            normalized: None,
            exit_code: Some(0),
            parallel: false,
        };
        let build = |scale: f64| -> Vec<RunRecord> {
            times
                .iter()
                .enumerate()
                .flat_map(|(i, &(b, t1, t2))| {
                    vec![
                        rec(ToolKind::Baseline, format!("p{i}"), BASELINE_VERSION, b * scale),
                        rec(ToolKind::Analysis, format!("p{i}"), "E1", t1),
                        rec(ToolKind::Analysis, format!("p{i}"), "E2", t2),
                    ]
                })
                .collect()
        };
        for (a, b) in normalize(&build(1.0)).iter().zip(normalize(&build(k))) {
            match (a.normalized, b.normalized) {
                (Some(x), Some(y)) => prop_assert!((y * k - x).abs() <= 1e-12 * x.abs().max(1.0)),
                (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn compiled_versions_agree_with_oracle((family, csp) in pure_instance()) {
        let report = differential_check(&csp, &all_versions(family), &VerifyConfig::default()).unwrap();
        prop_assert_eq!(report.status, VerifyStatus::Pass, "{:?}", report.mismatches.first());
        prop_assert!(report.accepting_sets_agree());
    }
}
