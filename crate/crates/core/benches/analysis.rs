use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use themeloom_core::analysis::{agreement_table, binarize, threshold_sweep_with, Exec};
use themeloom_core::{Coding, Dims, ScoreMatrix, Threshold};

fn scores(seed: u64, dims: Dims) -> ScoreMatrix {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    ScoreMatrix::from_fn(format!("m{seed}"), 1, dims, |_| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % 101) as u8
    })
    .unwrap()
}

fn paths() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn sweep(c: &mut Criterion) {
    let grid: Vec<Threshold> = (0..=100).map(|t| Threshold::new(t).unwrap()).collect();
    let mut group = c.benchmark_group("threshold_sweep_101");
    for dims in [Dims::new(17, 11), Dims::new(2000, 40)] {
        let m = scores(1, dims);
        let reference = binarize(&scores(2, dims), Threshold::new(60).unwrap());
        for (name, exec) in paths() {
            group.bench_with_input(BenchmarkId::new(name, dims), &exec, |b, &exec| {
                b.iter(|| threshold_sweep_with(exec, black_box(&m), black_box(&reference), &grid).unwrap())
            });
        }
    }
    group.finish();
}

fn pairs(c: &mut Criterion) {
    let dims = Dims::new(500, 20);
    let codings: Vec<Coding> = (0..20).map(|i| Coding::Scores(scores(i, dims))).collect();
    let tau = Threshold::new(70).unwrap();
    let mut group = c.benchmark_group("agreement_table_20_coders");
    for (name, exec) in paths() {
        group.bench_function(name, |b| b.iter(|| agreement_table(exec, black_box(&codings), tau).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, sweep, pairs);
criterion_main!(benches);
