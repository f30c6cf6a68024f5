use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pamclt::feynman_kac::{rho_profile, sample_ensemble_with, u_estimate};
use pamclt::field::synthesize;
use pamclt::{CovarianceModel, Execution, GridSpec};

fn solution_estimate(c: &mut Criterion) {
    let model = CovarianceModel::integrable();
    let grid = GridSpec::new(64.0, 1 << 13).unwrap();
    let eps = grid.dx();
    let field = synthesize(&model, grid, eps, 1, false, Execution::Sequential).unwrap();
    let window = grid.index_of(-16.0)..grid.index_of(16.0);
    let mut group = c.benchmark_group("u_estimate");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let ens = sample_ensemble_with(1.0, 3200, 64, 2, exec).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| u_estimate(&field, &ens, window.clone(), exec).unwrap())
        });
    }
    group.finish();
}

fn profile(c: &mut Criterion) {
    let model = CovarianceModel::rough(0.3).unwrap();
    let mut group = c.benchmark_group("rho_profile");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| rho_profile(&model, 1.0, 1.0, 1.0 / 64.0, 16.0, &[4.0, 8.0], 256, 3, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, solution_estimate, profile);
criterion_main!(benches);
