use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hashrank_bench::{code_fixture, index_fixture, Cycle};
use hashrank_core::search::SearchScratch;
use hashrank_core::{
    bucket_search_locate, hamming_ranking_locate, hamming_to_all, quantized_locate, search_with,
    BucketDirectory, SearchMode, SearchParams,
};
use std::hint::black_box;

fn hamming_scan(c: &mut Criterion) {
    let n = 100_000;
    let mut group = c.benchmark_group("hamming_to_all");
    group.throughput(Throughput::Elements(n as u64));
    for bits in [64, 128, 1024] {
        let (codes, queries) = code_fixture(n, bits, 16, 1);
        let mut out = vec![0u16; n];
        let mut q = Cycle::new(queries.len());
        group.bench_function(BenchmarkId::from_parameter(bits), |b| {
            b.iter(|| {
                hamming_to_all(&codes, &queries[q.next().unwrap()], black_box(&mut out)).unwrap()
            })
        });
    }
    group.finish();
}

fn ranking(c: &mut Criterion) {
    let (codes, queries) = code_fixture(100_000, 128, 16, 2);
    let mut group = c.benchmark_group("hamming_ranking_locate");
    let mut scratch = SearchScratch::new();
    for pool in [500, 5_000, 50_000] {
        let mut q = Cycle::new(queries.len());
        group.bench_function(BenchmarkId::from_parameter(pool), |b| {
            b.iter(|| {
                hamming_ranking_locate(&codes, &queries[q.next().unwrap()], pool, &mut scratch)
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn buckets(c: &mut Criterion) {
    let mut group = c.benchmark_group("bucket_search_locate");
    group.sample_size(20);
    for bits in [16, 24, 32] {
        let (codes, queries) = code_fixture(100_000, bits, 16, 3);
        let dir = BucketDirectory::build(&codes, 1).unwrap();
        let mut visited = Vec::new();
        let mut q = Cycle::new(queries.len());
        group.bench_function(BenchmarkId::new("L=1000", bits), |b| {
            b.iter(|| {
                bucket_search_locate(&dir, &queries[q.next().unwrap()], 1000, &mut visited).unwrap()
            })
        });
    }
    // Multiple tables over one long code.
    let (codes, queries) = code_fixture(100_000, 128, 16, 4);
    for tables in [4, 8] {
        let dir = BucketDirectory::build(&codes, tables).unwrap();
        let mut visited = Vec::new();
        let mut q = Cycle::new(queries.len());
        group.bench_function(BenchmarkId::new("l=128,L=1000,tables", tables), |b| {
            b.iter(|| {
                bucket_search_locate(&dir, &queries[q.next().unwrap()], 1000, &mut visited).unwrap()
            })
        });
    }
    group.finish();
}

fn quantized(c: &mut Criterion) {
    let fx = index_fixture(50_000, 64, 256, 200, 8, 5);
    let partition = fx.index.partition().unwrap();
    let encoder = fx.index.encoder().unwrap();
    let codes: Vec<_> = (0..fx.queries.rows())
        .map(|i| encoder.encode(fx.queries.row(i)).unwrap())
        .collect();
    let mut scratch = SearchScratch::for_index(&fx.index);
    let mut group = c.benchmark_group("quantized_locate");
    for nprobe in [5, 20, 50] {
        let mut q = Cycle::random_start(codes.len(), 6);
        group.bench_function(BenchmarkId::new("L=1000,C", nprobe), |b| {
            b.iter(|| {
                let i = q.next().unwrap();
                quantized_locate(
                    partition,
                    fx.index.codes(),
                    fx.queries.row(i),
                    &codes[i],
                    nprobe,
                    1000,
                    &mut scratch,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let fx = index_fixture(50_000, 64, 256, 200, 8, 7);
    let mut scratch = SearchScratch::for_index(&fx.index);
    let mut group = c.benchmark_group("search");
    for mode in SearchMode::ALL {
        let params = SearchParams::new(mode, 100, 1000, 20);
        let mut q = Cycle::new(fx.queries.rows());
        group.bench_function(BenchmarkId::from_parameter(mode), |b| {
            b.iter(|| {
                search_with(
                    &fx.index,
                    fx.queries.row(q.next().unwrap()),
                    None,
                    &params,
                    &mut scratch,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    hamming_scan,
    ranking,
    buckets,
    quantized,
    end_to_end
);
criterion_main!(benches);
