use streamtune::baseline::{run_ds2, Ds2Config};
use streamtune::dag::{DagBuilder, LogicalDag, OperatorKind};
use streamtune::encoder::TrainConfig;
use streamtune::finetune::{session_jsonl, tune, FineTuneError, Termination, TuneConfig};
use streamtune::par::Execution;
use streamtune::pipeline::{pretrain, PretrainConfig, Pretrained};
use streamtune::simulator::{brute_force_min_assignment, simulate, GroundTruthProfile, OperatorProfile};
use streamtune::workload::{generate_histories, HistorySpec, Query, Template};

fn chain(ops: &[(OperatorKind, f64, f64, f64)]) -> Query {
    let mut b = DagBuilder::new();
    let mut prev = b.source(1000.0);
    let mut profile = GroundTruthProfile::default();
    for &(kind, base, alpha, sel) in ops {
        let id = b.node(kind);
        b.edge(prev, id).parallelism(id, 30);
        profile.insert(id, OperatorProfile::new(base, alpha, sel));
        prev = id;
    }
    let sink = b.node(OperatorKind::Sink);
    b.edge(prev, sink);
    Query {
        name: "chain".to_string(),
        template: Template::Linear,
        dag: b.build(),
        profile,
    }
}

fn pretrained(query: &Query) -> Pretrained {
    let corpus = vec![query.clone()];
    let spec = HistorySpec {
        runs_per_dag: 200,
        ..HistorySpec::default()
    };
    let histories = generate_histories(&corpus, &spec, 4).unwrap();
    let config = PretrainConfig {
        k: 1,
        train: TrainConfig {
            epochs: 300,
            ..TrainConfig::default()
        },
        ..PretrainConfig::default()
    };
    pretrain(Execution::Parallel, &corpus, &histories, &config).unwrap()
}

fn deployed(query: &Query, rate: f64, p: u32) -> LogicalDag {
    let mut dag = query.at_uniform_rate(rate);
    for id in dag.tunable_ids() {
        dag.node_mut(id).unwrap().parallelism = p;
    }
    dag
}

#[test]
fn single_operator_reaches_exact_minimum() {
    let q = chain(&[(OperatorKind::Map, 100.0, 1.0, 1.0)]);
    let pre = pretrained(&q);
    let dag = deployed(&q, 1000.0, 3);
    let bf = brute_force_min_assignment(&dag, &q.profile, 100).unwrap();
    assert_eq!(bf.get(1), Some(10));
    let session = tune(&dag, &q.profile, pre.context(), &TuneConfig::default()).unwrap();
    assert_eq!(session.final_assignment(), &bf);
    assert!(!session.last().job_backpressure);
    assert!(session.records.len() <= 1 + TuneConfig::default().iteration_cap + 1);
}

#[test]
fn three_operator_chain_within_two() {
    let q = chain(&[
        (OperatorKind::Filter, 300.0, 0.9, 0.9),
        (OperatorKind::Map, 120.0, 0.9, 1.0),
        (OperatorKind::FlatMap, 80.0, 0.9, 1.2),
    ]);
    let pre = pretrained(&q);
    let dag = deployed(&q, 1500.0, 2);
    let bf = brute_force_min_assignment(&dag, &q.profile, 100).unwrap();
    let session = tune(&dag, &q.profile, pre.context(), &TuneConfig::default()).unwrap();
    assert!(!session.last().job_backpressure);
    for (id, p) in session.final_assignment().iter() {
        assert!(p <= bf.get(id).unwrap() + 2, "operator {id}: {p} vs {bf:?}");
    }
    // The log has one line per observed deployment.
    assert_eq!(session_jsonl(&session).lines().count(), session.records.len());
}

#[test]
fn trivially_feasible_dag_settles_on_ones() {
    let q = chain(&[(OperatorKind::Map, 5000.0, 0.9, 1.0), (OperatorKind::Filter, 5000.0, 0.9, 0.5)]);
    let pre = pretrained(&q);
    let dag = deployed(&q, 1000.0, 12);
    let session = tune(&dag, &q.profile, pre.context(), &TuneConfig::default()).unwrap();
    assert_eq!(session.termination, Termination::Converged);
    assert_eq!(session.reconfigurations(), 1);
    assert!(session.final_assignment().iter().all(|(_, p)| p == 1));
    assert!(!simulate(&dag, session.final_assignment(), &q.profile).unwrap().job_level_backpressure);
}

#[test]
fn converged_sessions_are_clean() {
    let q = chain(&[(OperatorKind::Map, 150.0, 0.9, 1.0), (OperatorKind::WindowAggregate, 400.0, 0.9, 0.2)]);
    let pre = pretrained(&q);
    for (rate, p) in [(400.0, 1), (1800.0, 40), (1100.0, 5)] {
        let dag = deployed(&q, rate, p);
        for config in [TuneConfig::default(), TuneConfig::default().ablation()] {
            let s = tune(&dag, &q.profile, pre.context(), &config).unwrap();
            if s.termination == Termination::Converged {
                assert!(!s.last().job_backpressure);
            }
        }
        let ds2 = run_ds2(&dag, &q.profile, &Ds2Config::default()).unwrap();
        if ds2.termination == Termination::Converged {
            assert!(!ds2.last().job_backpressure);
        }
    }
}

#[test]
fn missing_encoder_is_reported() {
    let q = chain(&[(OperatorKind::Map, 100.0, 1.0, 1.0)]);
    let mut pre = pretrained(&q);
    pre.encoders.clear();
    let dag = deployed(&q, 1000.0, 3);
    assert_eq!(
        tune(&dag, &q.profile, pre.context(), &TuneConfig::default()).unwrap_err(),
        FineTuneError::NoEncoderForCluster(0)
    );
}
