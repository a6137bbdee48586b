use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use csp2c_bench::{all_interval, instance, pigeonhole, random_tables};
use csp2c_core::oracle::{solve, DEFAULT_LIMIT};
use csp2c_core::{parse_document, transform, Dialect, Family, TransformSpec};

fn parse(c: &mut Criterion) {
    let mut g = c.benchmark_group("parse");
    for n in [6, 12, 24] {
        let text = all_interval(n);
        g.bench_with_input(BenchmarkId::new("all_interval", n), &text, |b, t| {
            b.iter(|| parse_document(black_box(t)).unwrap())
        });
    }
    let tables = random_tables(30, 5, 60, 6, 1);
    g.bench_function("random_tables_30x60", |b| b.iter(|| parse_document(black_box(&tables)).unwrap()));
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve");
    g.sample_size(20);
    for holes in [4, 5, 6] {
        let csp = instance(&pigeonhole(holes));
        g.bench_with_input(BenchmarkId::new("pigeonhole", holes), &csp, |b, csp| {
            b.iter(|| solve(black_box(csp), DEFAULT_LIMIT).unwrap())
        });
    }
    let csp = instance(&all_interval(6));
    g.bench_function("all_interval_6", |b| b.iter(|| solve(black_box(&csp), DEFAULT_LIMIT).unwrap()));
    g.finish();
}

fn codegen(c: &mut Criterion) {
    let mut g = c.benchmark_group("transform");
    let tables = instance(&random_tables(20, 4, 40, 4, 2));
    let series = instance(&all_interval(12));
    for (name, csp, family) in [
        ("random_tables", &tables, Family::Extensional),
        ("all_interval", &series, Family::Intensional),
    ] {
        let specs = TransformSpec::all(family, Dialect::Klee);
        g.bench_function(BenchmarkId::new("all_versions", name), |b| {
            b.iter(|| {
                for &s in &specs {
                    black_box(transform(csp, s).unwrap());
                }
            })
        });
    }
    g.finish();
}

criterion_group!(benches, parse, oracle, codegen);
criterion_main!(benches);
