//! Accuracy, consistency, aggregation over runs, and significance tests.

mod evaluate;
pub mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::PredictionOutcome;
use crate::corpus::Dataset;
use crate::perturb::Perturbation;

pub use evaluate::{evaluate_model, EvalError, EvalOptions};
pub use stats::{regularized_incomplete_beta, welch_t_test, StatsError, TTestResult};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("prediction ids do not line up: {0}")]
    IdMismatch(String),
    #[error("prediction vectors belong to different tasks (`{0}` vs `{1}`)")]
    TaskMismatch(String, String),
    #[error("cannot aggregate zero runs")]
    NoRuns,
    #[error("runs mix (model, task) keys: ({0}, {1}) vs ({2}, {3})")]
    MixedKeys(String, String, String, String),
}

/// Outcomes for one task under one perturbation, in example order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionVector {
    pub task_id: String,
    pub perturbation: Perturbation,
    pub items: Vec<(String, PredictionOutcome)>,
}

impl PredictionVector {
    pub fn new(task_id: impl Into<String>, perturbation: Perturbation, items: Vec<(String, PredictionOutcome)>) -> Self {
        PredictionVector {
            task_id: task_id.into(),
            perturbation,
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_unparseable(&self) -> usize {
        self.items.iter().filter(|(_, o)| o.is_unparseable()).count()
    }
}

/// Fraction of examples whose outcome is the gold label. Unparseable
/// outcomes count as wrong; an empty vector scores 0.
pub fn accuracy(preds: &PredictionVector, gold: &Dataset) -> Result<f64, MetricsError> {
    if preds.task_id != gold.task.task_id {
        return Err(MetricsError::TaskMismatch(preds.task_id.clone(), gold.task.task_id.clone()));
    }
    if preds.len() != gold.len() {
        return Err(MetricsError::IdMismatch(format!(
            "{} predictions for {} examples",
            preds.len(),
            gold.len()
        )));
    }
    let mut correct = 0usize;
    for (id, outcome) in &preds.items {
        let ex = gold
            .get(id)
            .ok_or_else(|| MetricsError::IdMismatch(format!("`{id}` is not in the dataset")))?;
        let g = ex
            .gold
            .as_deref()
            .ok_or_else(|| MetricsError::IdMismatch(format!("`{id}` has no gold label")))?;
        if outcome.label() == Some(g) {
            correct += 1;
        }
    }
    Ok(ratio(correct, preds.len()))
}

/// Fraction of positions where both outcomes are the same label.
pub fn consistency(a: &PredictionVector, b: &PredictionVector) -> Result<f64, MetricsError> {
    if a.task_id != b.task_id {
        return Err(MetricsError::TaskMismatch(a.task_id.clone(), b.task_id.clone()));
    }
    if a.len() != b.len() {
        return Err(MetricsError::IdMismatch(format!("lengths {} and {}", a.len(), b.len())));
    }
    let mut agree = 0usize;
    for (i, ((ia, oa), (ib, ob))) in a.items.iter().zip(&b.items).enumerate() {
        if ia != ib {
            return Err(MetricsError::IdMismatch(format!("position {i}: `{ia}` vs `{ib}`")));
        }
        if oa.agrees_with(ob) {
            agree += 1;
        }
    }
    Ok(ratio(agree, a.len()))
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Metrics of one evaluation run. Fractions are in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    #[serde(skip)]
    pub model_name: String,
    #[serde(skip)]
    pub task_id: String,
    pub run_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub acc_val: f64,
    pub c_reverse: f64,
    pub c_signal: f64,
    /// Keyed by perturbation name.
    pub n_unparseable: BTreeMap<String, usize>,
}

/// Mean and sample standard deviation (absent for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() >= 2)
            .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Summary { mean, std }
    }

    pub fn exact(mean: f64) -> Summary {
        Summary { mean, std: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub model: String,
    pub task: String,
    pub runs: usize,
    pub acc_val: Summary,
    pub c_reverse: Summary,
    pub c_signal: Summary,
    pub n_unparseable: BTreeMap<String, Summary>,
}

pub fn aggregate(runs: &[RunMetrics]) -> Result<AggregateMetrics, MetricsError> {
    let first = runs.first().ok_or(MetricsError::NoRuns)?;
    if let Some(r) = runs
        .iter()
        .find(|r| r.model_name != first.model_name || r.task_id != first.task_id)
    {
        return Err(MetricsError::MixedKeys(
            first.model_name.clone(),
            first.task_id.clone(),
            r.model_name.clone(),
            r.task_id.clone(),
        ));
    }
    let field = |f: fn(&RunMetrics) -> f64| Summary::of(&runs.iter().map(f).collect::<Vec<_>>());
    let keys: std::collections::BTreeSet<&String> = runs.iter().flat_map(|r| r.n_unparseable.keys()).collect();
    let n_unparseable = keys
        .into_iter()
        .map(|k| {
            let vals: Vec<f64> = runs
                .iter()
                .map(|r| r.n_unparseable.get(k).copied().unwrap_or(0) as f64)
                .collect();
            (k.clone(), Summary::of(&vals))
        })
        .collect();
    Ok(AggregateMetrics {
        model: first.model_name.clone(),
        task: first.task_id.clone(),
        runs: runs.len(),
        acc_val: field(|r| r.acc_val),
        c_reverse: field(|r| r.c_reverse),
        c_signal: field(|r| r.c_signal),
        n_unparseable,
    })
}

/// The JSON document written by `evaluate` and read by `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub task: String,
    pub runs: Vec<RunMetrics>,
    pub aggregate: AggregateMetrics,
}

impl MetricsReport {
    pub fn from_runs(runs: Vec<RunMetrics>) -> Result<MetricsReport, MetricsError> {
        let aggregate = aggregate(&runs)?;
        Ok(MetricsReport {
            model: aggregate.model.clone(),
            task: aggregate.task.clone(),
            runs,
            aggregate,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<MetricsReport, serde_json::Error> {
        let mut report: MetricsReport = serde_json::from_str(text)?;
        for r in &mut report.runs {
            r.model_name = report.model.clone();
            r.task_id = report.task.clone();
        }
        Ok(report)
    }
}
