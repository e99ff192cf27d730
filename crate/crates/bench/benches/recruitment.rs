//! Recruitment cost: scoring and greedy selection as the pool grows, and
//! each optimizer on the default population.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use crowdrl_core::allocation::{filter_candidates, greedy_select};
use crowdrl_core::metaheuristics::{aco_select, ga_select, pso_select, OptimizerConfig};
use crowdrl_core::sim::{generate_population, BenchTask, PopulationSpec};
use crowdrl_core::AllocationConfig;

fn greedy_scaling(c: &mut Criterion) {
    let config = AllocationConfig::default();
    let task = BenchTask::default().spec(10);
    let mut group = c.benchmark_group("filter_and_greedy");
    for n in [100, 1_000, 10_000] {
        let pop = generate_population(&PopulationSpec {
            n_workers: n,
            ..Default::default()
        })
        .unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(n),
            &pop.workers,
            |b, workers| {
                b.iter(|| {
                    let eligible = filter_candidates(&task, workers, &config).unwrap().eligible;
                    black_box(greedy_select(&task, &eligible))
                })
            },
        );
    }
    group.finish();
}

fn optimizers(c: &mut Criterion) {
    let pop = generate_population(&PopulationSpec::default()).unwrap();
    let task = BenchTask::default().spec(10);
    let eligible = filter_candidates(&task, &pop.workers, &AllocationConfig::default())
        .unwrap()
        .eligible;
    let opt = OptimizerConfig::default();
    let mut group = c.benchmark_group("select_10_of_default_pool");
    group.sample_size(10);
    group.bench_function("greedy", |b| {
        b.iter(|| black_box(greedy_select(&task, &eligible)))
    });
    group.bench_function("ga", |b| {
        b.iter(|| black_box(ga_select(&task, &eligible, &opt).unwrap()))
    });
    group.bench_function("pso", |b| {
        b.iter(|| black_box(pso_select(&task, &eligible, &opt).unwrap()))
    });
    group.bench_function("aco", |b| {
        b.iter(|| black_box(aco_select(&task, &eligible, &opt).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, greedy_scaling, optimizers);
criterion_main!(benches);
