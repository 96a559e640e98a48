use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use batchts_core::sampling::{sample_beta, sample_gaussian, sample_j, RandomStream};
use batchts_core::LinearPosterior;

fn samplers(c: &mut Criterion) {
    let mut s = RandomStream::new(1);
    c.bench_function("uniform", |b| b.iter(|| black_box(s.uniform())));
    c.bench_function("gaussian", |b| {
        b.iter(|| sample_gaussian(&mut s, black_box(0.3), 0.1).unwrap())
    });
    c.bench_function("beta(31, 71)", |b| {
        b.iter(|| sample_beta(&mut s, black_box(31.0), 71.0).unwrap())
    });
    c.bench_function("two-sided rayleigh", |b| {
        b.iter(|| sample_j(&mut s, black_box(0.3), 0.1).unwrap())
    });

    let mut posterior = LinearPosterior::new(5);
    let ctx = [0.2, -0.4, 0.1, 0.5, 0.3];
    posterior
        .flush_update((0..64).map(|_| (&ctx[..], 1.0)))
        .unwrap();
    c.bench_function("mu_tilde d=5", |b| {
        b.iter(|| posterior.sample_mu_tilde(black_box(0.2), &mut s))
    });
}

criterion_group!(benches, samplers);
criterion_main!(benches);
