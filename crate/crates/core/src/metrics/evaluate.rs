use std::collections::BTreeMap;

use thiserror::Error;

use crate::backend::{predict_all, Backend, BackendError, BackendFactory, BatchOptions};
use crate::corpus::{Dataset, TaskSpec};
use crate::perturb::{render, Perturbation};

use super::{accuracy, consistency, MetricsError, PredictionVector, RunMetrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    pub batch: BatchOptions,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
    #[error("dataset task `{found}` does not match `{expected}`")]
    TaskMismatch { expected: String, found: String },
    #[error("run {run_index} failed after {} completed run(s): {source}", completed.len())]
    Backend {
        completed: Vec<RunMetrics>,
        run_index: usize,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl EvalError {
    /// Runs finished before the failure.
    pub fn completed(&self) -> &[RunMetrics] {
        match self {
            EvalError::Backend { completed, .. } => completed,
            _ => &[],
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self, EvalError::Backend { source, .. } if source.is_transport())
    }
}

fn predict_vector(
    backend: &dyn Backend,
    task: &TaskSpec,
    data: &Dataset,
    p: Perturbation,
    opts: &EvalOptions,
) -> Result<PredictionVector, BackendError> {
    let inputs: Vec<_> = data.examples().iter().map(|e| render(e, task, p)).collect();
    let outcomes = predict_all(backend, task, &inputs, opts.batch)?;
    let items = data.examples().iter().map(|e| e.id.clone()).zip(outcomes).collect();
    Ok(PredictionVector::new(task.task_id.clone(), p, items))
}

/// One [`RunMetrics`] per seed. Each run opens a fresh backend and issues,
/// in order, the ORIGINAL, REVERSE and SIGNAL renderings of `test`, then
/// ORIGINAL over `val`. Consistency comes from `test`, accuracy from `val`.
pub fn evaluate_model(
    factory: &dyn BackendFactory,
    task: &TaskSpec,
    test: &Dataset,
    val: &Dataset,
    seeds: &[u64],
    opts: &EvalOptions,
) -> Result<Vec<RunMetrics>, EvalError> {
    for (name, d) in [("test", test), ("validation", val)] {
        if d.is_empty() {
            return Err(EvalError::EmptyDataset(name));
        }
        if d.task.task_id != task.task_id {
            return Err(EvalError::TaskMismatch {
                expected: task.task_id.clone(),
                found: d.task.task_id.clone(),
            });
        }
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for (run_index, &seed) in seeds.iter().enumerate() {
        let result = (|| {
            let backend = factory.open(seed)?;
            let mut vectors = Vec::with_capacity(3);
            for p in Perturbation::ALL {
                vectors.push(predict_vector(backend.as_ref(), task, test, p, opts)?);
            }
            let val_vec = predict_vector(backend.as_ref(), task, val, Perturbation::Original, opts)?;
            Ok::<_, BackendError>((vectors, val_vec))
        })();
        let (vectors, val_vec) = match result {
            Ok(v) => v,
            Err(source) => {
                return Err(EvalError::Backend {
                    completed: runs,
                    run_index,
                    source,
                })
            }
        };
        let [orig, rev, sig] = <[PredictionVector; 3]>::try_from(vectors).expect("three perturbations");
        let n_unparseable: BTreeMap<String, usize> = [&orig, &rev, &sig]
            .iter()
            .map(|v| (v.perturbation.as_str().to_string(), v.n_unparseable()))
            .collect();
        let run = RunMetrics {
            model_name: factory.model_name().to_string(),
            task_id: task.task_id.clone(),
            run_index,
            seed: Some(seed),
            acc_val: accuracy(&val_vec, val)?,
            c_reverse: consistency(&orig, &rev)?,
            c_signal: consistency(&orig, &sig)?,
            n_unparseable,
        };
        log::info!(
            "{} {} run {run_index}: acc {:.4} C_R {:.4} C_S {:.4}",
            run.model_name,
            run.task_id,
            run.acc_val,
            run.c_reverse,
            run.c_signal
        );
        runs.push(run);
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{BackendDescriptor, PredictionOutcome, StubKind};
    use crate::corpus::{Example, Split, TaskRegistry};
    use crate::perturb::RenderedInput;

    fn data(task: &TaskSpec, split: Split, n: usize) -> Dataset {
        let ex = (0..n)
            .map(|i| {
                Example::new(
                    format!("{split}{i}"),
                    format!("the first sentence number {i}"),
                    format!("another one {}", i * 3),
                    Some(task.labels[i % task.labels.len()].clone()),
                )
                .unwrap()
            })
            .collect();
        Dataset::new(task.clone(), split, ex).unwrap()
    }

    #[test]
    fn symmetric_stub_is_fully_consistent() {
        let task = TaskRegistry::builtin().get("mnli").unwrap().clone();
        let (test, val) = (data(&task, Split::Test, 40), data(&task, Split::Validation, 20));
        let desc = BackendDescriptor::stub(StubKind::Symmetric, 3);
        let runs = evaluate_model(&desc, &task, &test, &val, &[3, 4, 5], &EvalOptions::default()).unwrap();
        assert_eq!(runs.len(), 3);
        for (i, r) in runs.iter().enumerate() {
            assert_eq!(r.run_index, i);
            assert_eq!((r.c_reverse, r.c_signal), (1.0, 1.0));
            assert!((0.0..=1.0).contains(&r.acc_val));
            assert_eq!(r.n_unparseable.values().sum::<usize>(), 0);
            assert_eq!(r.n_unparseable.len(), 3);
        }
    }

    struct FailingFactory;

    struct Fails;

    impl Backend for Fails {
        fn classify_batch(&self, _: &TaskSpec, _: &[RenderedInput]) -> Result<Vec<PredictionOutcome>, BackendError> {
            Err(BackendError::Transport {
                attempts: 3,
                message: "connection refused".into(),
            })
        }
    }

    impl BackendFactory for FailingFactory {
        fn model_name(&self) -> &str {
            "flaky"
        }

        fn open(&self, run_seed: u64) -> Result<Box<dyn Backend>, BackendError> {
            if run_seed == 2 {
                Ok(Box::new(Fails))
            } else {
                BackendDescriptor::stub(StubKind::Symmetric, run_seed).open(run_seed)
            }
        }
    }

    #[test]
    fn failure_keeps_partial_results() {
        let task = TaskRegistry::builtin().get("rte").unwrap().clone();
        let (test, val) = (data(&task, Split::Test, 10), data(&task, Split::Validation, 10));
        let err = evaluate_model(&FailingFactory, &task, &test, &val, &[0, 1, 2, 3], &EvalOptions::default()).unwrap_err();
        assert!(err.is_transport());
        assert_eq!(err.completed().len(), 2);
        assert!(matches!(err, EvalError::Backend { run_index: 2, .. }));
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let reg = TaskRegistry::builtin();
        let task = reg.get("rte").unwrap().clone();
        let empty = Dataset::new(task.clone(), Split::Test, vec![]).unwrap();
        let val = data(&task, Split::Validation, 3);
        let desc = BackendDescriptor::stub(StubKind::Symmetric, 0);
        assert!(matches!(
            evaluate_model(&desc, &task, &empty, &val, &[0], &EvalOptions::default()),
            Err(EvalError::EmptyDataset("test"))
        ));
        let other = data(reg.get("mnli").unwrap(), Split::Test, 3);
        assert!(matches!(
            evaluate_model(&desc, &task, &other, &val, &[0], &EvalOptions::default()),
            Err(EvalError::TaskMismatch { .. })
        ));
    }
}
