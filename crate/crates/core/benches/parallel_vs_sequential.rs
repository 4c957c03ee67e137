use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use streamtune::baseline::Ds2Config;
use streamtune::clustering::DistanceMatrix;
use streamtune::dag::LogicalDag;
use streamtune::encoder::TrainConfig;
use streamtune::finetune::TuneConfig;
use streamtune::par::Execution;
use streamtune::pipeline::{compare, pretrain, tuning_cases, PretrainConfig};
use streamtune::workload::{generate_corpus, generate_histories_with, CorpusSpec, HistorySpec, RateSchedule};

const MODES: [(&str, Execution); 2] = [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)];

fn distance_matrix(c: &mut Criterion) {
    let corpus = generate_corpus(&CorpusSpec::counts(4, 4, 8), 1);
    let dags: Vec<LogicalDag> = corpus.iter().map(|q| q.dag.clone()).collect();
    let mut group = c.benchmark_group("ged_distance_matrix");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| DistanceMatrix::compute(exec, &dags).unwrap())
        });
    }
    group.finish();
}

fn histories(c: &mut Criterion) {
    let corpus = generate_corpus(&CorpusSpec::default(), 1);
    let spec = HistorySpec::default();
    let mut group = c.benchmark_group("history_generation");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| generate_histories_with(exec, &corpus, &spec, 2).unwrap())
        });
    }
    group.finish();
}

fn tuning_sessions(c: &mut Criterion) {
    let corpus = generate_corpus(&CorpusSpec::counts(2, 2, 4), 1);
    let hist = generate_histories_with(Execution::Parallel, &corpus, &HistorySpec::default(), 2).unwrap();
    let config = PretrainConfig {
        k: 2,
        train: TrainConfig {
            epochs: 60,
            ..TrainConfig::default()
        },
        ..PretrainConfig::default()
    };
    let pre = pretrain(Execution::Parallel, &corpus, &hist, &config).unwrap();
    let cases = tuning_cases(&corpus, &RateSchedule::default(), 8, 3);
    let mut group = c.benchmark_group("compare_sessions");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| compare(exec, &corpus, &cases, &pre, &TuneConfig::default(), &Ds2Config::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, distance_matrix, histories, tuning_sessions);
criterion_main!(benches);
