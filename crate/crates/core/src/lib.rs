//! Consistency evaluation for sentence-pair classifiers.
//!
//! Inputs are rendered with sentence-type indicators (`Premise: ...`), then
//! perturbed in two ways that cannot change their meaning: swapping the two
//! tagged sentences, and restyling the indicator from `L:` to `[L]`. A model
//! is consistent to the extent that its predictions survive both.

pub mod backend;
pub mod corpus;
pub mod humankit;
pub mod metrics;
pub mod perturb;
pub mod refmodel;
pub mod report;
pub mod rng;
pub mod synthetic;

use std::hash::Hasher;

pub use backend::{Backend, BackendDescriptor, BackendError, BackendFactory, PredictionOutcome};
pub use corpus::{Dataset, Example, Split, TaskRegistry, TaskSpec, TaskType};
pub use metrics::{AggregateMetrics, MetricsReport, RunMetrics, TTestResult};
pub use perturb::{render, render_seq2seq, Perturbation, RenderedInput};
pub use refmodel::{Model, TrainConfig};

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}
