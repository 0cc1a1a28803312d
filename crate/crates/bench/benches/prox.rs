use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array1;
use optlab_core::prox::tv1d_denoise;
use optlab_core::ProxTerm;
use std::hint::black_box;

fn operators(c: &mut Criterion) {
    let mut g = c.benchmark_group("prox");
    for d in [100usize, 10_000] {
        let x = Array1::from_shape_fn(d, |i| ((i * 7919) % 101) as f64 / 50.0 - 1.0);
        for (name, term) in [
            ("l1", ProxTerm::l1(0.3).unwrap()),
            ("elastic", ProxTerm::elastic(0.3, 0.1).unwrap()),
            ("fused_lasso", ProxTerm::fused_lasso(0.1, 0.3).unwrap()),
        ] {
            g.bench_with_input(BenchmarkId::new(name, d), &x, |b, x| {
                b.iter(|| term.prox(0.5, black_box(x)))
            });
        }
    }
    g.finish();
}

fn tv(c: &mut Criterion) {
    let input: Vec<f64> = (0..4096)
        .map(|i| ((i as f64) * 0.01).sin() + if i % 97 == 0 { 1.0 } else { 0.0 })
        .collect();
    c.bench_function("tv1d_denoise/4096", |b| b.iter(|| tv1d_denoise(black_box(&input), 0.2)));
}

criterion_group!(benches, operators, tv);
criterion_main!(benches);
