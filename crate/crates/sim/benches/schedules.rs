use std::hint::black_box;

use apac_core::access_analysis::AnalysisOptions;
use apac_core::pipeline::prepare;
use apac_sim::{check_against_with, sequential_execute, Ablation, Exec, Program, ScheduleRequest, SimConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn replay_benchmark(c: &mut Criterion) {
    let src = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/stf/mergesort.cpp")).expect("fixture");
    let prepared = prepare(&src, &AnalysisOptions::default()).expect("fixture parses");
    let cfg = SimConfig::default();
    let reference = sequential_execute(&Program::sequential(&prepared).unwrap(), &cfg).unwrap();
    let tasked = Program::tasked(&prepared, &Ablation::default()).unwrap();

    let mut group = c.benchmark_group("replay_200_schedules");
    for (name, exec) in [("sequential", Exec::Sequential), ("rayon", Exec::Parallel)] {
        group.bench_function(name, |b| {
            b.iter(|| {
                let report = check_against_with(&tasked, &reference, &cfg, ScheduleRequest::Random(200), 7, exec).unwrap();
                black_box(report.divergences())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, replay_benchmark);
criterion_main!(benches);
