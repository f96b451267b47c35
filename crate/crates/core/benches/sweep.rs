//! Sweep throughput: data-parallel grid evaluation against the sequential
//! fallback, plus the single-cell classification cost that drives both.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use lateral_inhibition::kinetics::ParameterSet;
use lateral_inhibition::sweep::{classify_cell, run_sweep, Execution, SweepSpec};

fn bench_spec(points: usize) -> SweepSpec {
    SweepSpec {
        receptor_min: 1e-10,
        receptor_max: 1e-4,
        receptor_points: points,
        length_min: 0.1e-3,
        length_max: 6.0e-3,
        length_points: points,
        ..SweepSpec::default()
    }
}

fn sweep_modes(c: &mut Criterion) {
    let params = ParameterSet::default();
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for points in [8usize, 16] {
        let spec = bench_spec(points);
        group.bench_with_input(
            BenchmarkId::new("sequential", points * points),
            &spec,
            |b, spec| {
                b.iter(|| run_sweep(&params, &params, spec, Execution::Sequential).unwrap())
            },
        );
        #[cfg(feature = "parallel")]
        group.bench_with_input(
            BenchmarkId::new("parallel", points * points),
            &spec,
            |b, spec| b.iter(|| run_sweep(&params, &params, spec, Execution::Parallel).unwrap()),
        );
    }
    group.finish();
}

fn single_cell(c: &mut Criterion) {
    let params = ParameterSet::default();
    let spec = SweepSpec::default();
    c.bench_function("classify_cell_nominal", |b| {
        b.iter(|| classify_cell(&params, &params, &spec, 5e-7, 500e-6))
    });
}

criterion_group!(benches, sweep_modes, single_cell);
criterion_main!(benches);
