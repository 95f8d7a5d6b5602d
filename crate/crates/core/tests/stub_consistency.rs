use calum_core::backend::StubKind;
use calum_core::corpus::load_tsv;
use calum_core::metrics::{aggregate, evaluate_model, EvalOptions};
use calum_core::synthetic::pair_fixture;
use calum_core::{BackendDescriptor, Dataset, RunMetrics, Split, TaskRegistry};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/pairs_1000.tsv");

fn fixture(split: Split) -> Dataset {
    let t = TaskRegistry::builtin().get("rte").unwrap().clone();
    load_tsv(FIXTURE, &t, split).unwrap()
}

fn run(kind: StubKind) -> Vec<RunMetrics> {
    let (test, val) = (fixture(Split::Test), fixture(Split::Validation));
    evaluate_model(
        &BackendDescriptor::stub(kind, 0),
        &test.task,
        &test,
        &val,
        &[0, 1, 2, 3, 4],
        &EvalOptions::default(),
    )
    .unwrap()
}

/// (acc_val, c_reverse, c_signal) per seed 0..5, from tests/oracles/order_stub.py.
const ORDER_SENSITIVE: [(f64, f64, f64); 5] = [
    (0.518, 0.484, 0.5),
    (0.523, 0.479, 0.477),
    (0.501, 0.513, 0.501),
    (0.503, 0.471, 0.487),
    (0.491, 0.49, 0.502),
];
const SYMMETRIC_ACC: [f64; 5] = [0.488, 0.481, 0.52, 0.52, 0.515];

#[test]
fn fixture_is_the_generated_pairs() {
    let t = TaskRegistry::builtin().get("rte").unwrap().clone();
    let generated = pair_fixture(&t, 1000, 0).unwrap();
    assert_eq!(fixture(Split::Test).examples(), generated.examples());
}

#[test]
fn order_sensitive_matches_oracle() {
    let runs = run(StubKind::OrderSensitive);
    for (r, (acc, cr, cs)) in runs.iter().zip(ORDER_SENSITIVE) {
        assert_eq!((r.acc_val, r.c_reverse, r.c_signal), (acc, cr, cs), "seed {:?}", r.seed);
        assert!(r.c_reverse < 1.0);
        assert!(r.n_unparseable.values().all(|&n| n == 0));
    }
    let agg = aggregate(&runs).unwrap();
    assert!(agg.c_reverse.mean < 1.0);
}

#[test]
fn symmetric_is_fully_consistent() {
    let runs = run(StubKind::Symmetric);
    assert_eq!(runs.len(), 5);
    for (r, acc) in runs.iter().zip(SYMMETRIC_ACC) {
        assert_eq!((r.c_reverse, r.c_signal), (1.0, 1.0));
        assert_eq!(r.acc_val, acc);
    }
}

#[test]
fn symmetric_on_other_tasks() {
    for t in TaskRegistry::builtin().iter() {
        let d = pair_fixture(t, 200, 3).unwrap();
        let runs = evaluate_model(&BackendDescriptor::stub(StubKind::Symmetric, 0), t, &d, &d, &[7, 8], &EvalOptions::default()).unwrap();
        assert!(runs.iter().all(|r| r.c_reverse == 1.0 && r.c_signal == 1.0), "{}", t.task_id);
    }
}
