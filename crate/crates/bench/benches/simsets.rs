use std::hint::black_box;

use ciderbtw_bench::corpus;
use ciderbtw_core::simset::{build_sets_cider_exhaustive, CiderIndex};
use ciderbtw_core::{CiderVariant, Split};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn index(c: &mut Criterion) {
    let mut group = c.benchmark_group("cider_index");
    group.sample_size(10);
    for n in [500, 2000] {
        let (corpus, df) = corpus(n);
        group.bench_with_input(BenchmarkId::new("build", n), &n, |b, _| {
            b.iter(|| {
                CiderIndex::build(&corpus, Split::Train, &df, CiderVariant::default()).unwrap()
            })
        });
        let index = CiderIndex::build(&corpus, Split::Train, &df, CiderVariant::default()).unwrap();
        group.bench_with_input(BenchmarkId::new("query_k5", n), &n, |b, _| {
            b.iter(|| index.similar_sets(black_box(5)).unwrap())
        });
    }
    group.finish();
}

fn exhaustive(c: &mut Criterion) {
    let mut group = c.benchmark_group("cider_exhaustive");
    group.sample_size(10);
    let (corpus, df) = corpus(500);
    group.bench_function("k5_500", |b| {
        b.iter(|| {
            build_sets_cider_exhaustive(&corpus, Split::Train, 5, &df, CiderVariant::default())
                .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, index, exhaustive);
criterion_main!(benches);
