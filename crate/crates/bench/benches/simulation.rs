use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use batchts_bench::{bernoulli_instance, gaussian_instance};
use batchts_core::{run_policy, ContextualVariant, EnvironmentSpec, MabVariant, PolicyConfig};

fn mab_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("mab run T=10^4");
    group.sample_size(10);
    let bernoulli = bernoulli_instance(10).prepare(None).unwrap();
    let gaussian = gaussian_instance(10).prepare(None).unwrap();
    for (variant, env) in [
        (MabVariant::BTsBeta, &bernoulli),
        (MabVariant::TsBeta, &bernoulli),
        (MabVariant::Ucb1, &bernoulli),
        (MabVariant::BMots, &gaussian),
        (MabVariant::BMotsJ, &gaussian),
    ] {
        let policy = PolicyConfig::mab(variant);
        group.bench_with_input(
            BenchmarkId::from_parameter(policy.label()),
            env,
            |b, env| b.iter(|| run_policy(&policy, env, 10_000, 7, false).unwrap()),
        );
    }
    group.finish();
}

fn contextual_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("contextual run T=10^3");
    group.sample_size(10);
    let env = EnvironmentSpec::Linear {
        arms: 10,
        dim: 5,
        noise_sigma: 0.1,
        mu: None,
    }
    .prepare(None)
    .unwrap();
    for variant in [ContextualVariant::BTsC, ContextualVariant::TsC] {
        let policy = PolicyConfig::contextual(variant);
        group.bench_function(policy.label(), |b| {
            b.iter(|| run_policy(&policy, &env, 1_000, 7, false).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, mab_runs, contextual_runs);
criterion_main!(benches);
