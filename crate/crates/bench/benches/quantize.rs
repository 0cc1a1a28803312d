use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use optlab_core::problems::gaussian_vector;
use optlab_core::quantize::{quant_block, BlockSpec, PNorm};
use optlab_core::RngStream;
use std::hint::black_box;

fn quantize(c: &mut Criterion) {
    let mut g = c.benchmark_group("quant_block");
    let s = RngStream::new(3);
    for d in [1_000usize, 100_000] {
        let delta = gaussian_vector(d, &s);
        let blocks = BlockSpec::uniform(d, 10).unwrap();
        for p in [PNorm::Two, PNorm::Inf] {
            let mut rng = s.child("q").rng();
            g.bench_with_input(BenchmarkId::new(format!("{p:?}"), d), &delta, |b, delta| {
                b.iter(|| quant_block(black_box(delta), p, &blocks, &mut rng).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, quantize);
criterion_main!(benches);
