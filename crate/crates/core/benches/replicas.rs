use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use opkin::mc::{simulate, InitialCondition};
use opkin::noise::default_noise;
use opkin::{CompromiseFunction, DiffusionFunction, Execution, KineticParams, SimConfig};

fn config(realizations: usize) -> SimConfig {
    let params = KineticParams::from_lambda(0.05, 0.5).unwrap();
    let diffusion = DiffusionFunction::OneMinusWSquared;
    SimConfig {
        n: 20_000,
        params,
        compromise: CompromiseFunction::Constant,
        noise: default_noise(&params, &diffusion).unwrap().model,
        diffusion,
        initial: InitialCondition::default(),
        t_end: 20.0,
        record_every: 5.0,
        histogram_bins: 100,
        realizations,
        seed: 1,
        snapshots: false,
    }
}

fn replicas(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for realizations in [1usize, 8] {
        let cfg = config(realizations);
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, realizations), &cfg, |b, cfg| {
                b.iter(|| simulate(cfg, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, replicas);
criterion_main!(benches);
