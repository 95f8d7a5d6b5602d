//! Model access: the backend trait, built-in stubs, the HTTP client for
//! external predictors, and parsing of generated text into labels.

mod descriptor;
pub mod http;
pub mod protocol;
pub mod server;
mod stub;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{normalize_label, TaskSpec};
use crate::perturb::{PerturbError, RenderedInput};

pub use descriptor::{BackendDescriptor, BackendKind};
pub use http::{HttpBackend, RetryPolicy};
pub use stub::{order_sensitive_label, symmetric_label, StubBackend, StubKind};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("label `{label}` is not in the label set of task `{task}`")]
    LabelOutOfSet { label: String, task: String },
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error("model: {0}")]
    Model(String),
    #[error("backend descriptor: {0}")]
    Descriptor(String),
}

impl BackendError {
    pub fn is_transport(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

/// What a backend produced for one input.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionOutcome {
    Label(String),
    /// Generated text that does not name any label, kept verbatim.
    Unparseable(String),
}

impl PredictionOutcome {
    pub fn label(&self) -> Option<&str> {
        match self {
            PredictionOutcome::Label(l) => Some(l),
            PredictionOutcome::Unparseable(_) => None,
        }
    }

    /// Agreement as used by the consistency metric: both are labels and
    /// they are equal. An unparseable outcome agrees with nothing, itself
    /// included.
    pub fn agrees_with(&self, other: &PredictionOutcome) -> bool {
        matches!((self, other), (PredictionOutcome::Label(a), PredictionOutcome::Label(b)) if a == b)
    }

    pub fn is_unparseable(&self) -> bool {
        matches!(self, PredictionOutcome::Unparseable(_))
    }
}

/// Normalize a generation and match it exactly against the task's labels.
///
/// Normalization is trim, lowercase, then dropping trailing `.` and `,`.
/// Anything else is `Unparseable`; no substring matching.
pub fn parse_generated_label(raw: &str, task: &TaskSpec) -> PredictionOutcome {
    let norm = normalize_label(raw);
    let norm = norm.trim_end_matches(['.', ',']).trim_end();
    match task.resolve_label(norm) {
        Some(label) => PredictionOutcome::Label(label.to_string()),
        None => PredictionOutcome::Unparseable(raw.to_string()),
    }
}

/// A predictor for sentence-pair inputs of one task at a time.
pub trait Backend: Send + Sync {
    /// One outcome per input, in input order.
    fn classify_batch(&self, task: &TaskSpec, inputs: &[RenderedInput]) -> Result<Vec<PredictionOutcome>, BackendError>;
}

/// Produces a backend per evaluation run.
pub trait BackendFactory: Sync {
    fn model_name(&self) -> &str;
    fn open(&self, run_seed: u64) -> Result<Box<dyn Backend>, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOptions {
    pub batch_size: usize,
    /// Maximum number of batches outstanding at once.
    pub in_flight: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            batch_size: 32,
            in_flight: 4,
        }
    }
}

/// Run `inputs` through `backend` in batches, with up to
/// `opts.in_flight` batches outstanding. Batches are dispatched in index
/// order and the outcomes are reassembled in input order. On failure the
/// error of the lowest-indexed failing batch is returned.
pub fn predict_all(
    backend: &dyn Backend,
    task: &TaskSpec,
    inputs: &[RenderedInput],
    opts: BatchOptions,
) -> Result<Vec<PredictionOutcome>, BackendError> {
    let batch_size = opts.batch_size.max(1);
    let chunks: Vec<&[RenderedInput]> = inputs.chunks(batch_size).collect();
    let run_one = |chunk: &[RenderedInput]| -> Result<Vec<PredictionOutcome>, BackendError> {
        let out = backend.classify_batch(task, chunk)?;
        if out.len() != chunk.len() {
            return Err(BackendError::Protocol(format!(
                "backend returned {} outcomes for {} inputs",
                out.len(),
                chunk.len()
            )));
        }
        Ok(out)
    };

    let workers = opts.in_flight.clamp(1, chunks.len().max(1));
    let results: Vec<Result<Vec<PredictionOutcome>, BackendError>> = if workers == 1 {
        chunks.iter().map(|c| run_one(c)).collect()
    } else {
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<Vec<PredictionOutcome>, BackendError>>>> =
            Mutex::new((0..chunks.len()).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= chunks.len() {
                        break;
                    }
                    let r = run_one(chunks[i]);
                    slots.lock().unwrap()[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|r| r.expect("every batch was dispatched"))
            .collect()
    };

    let mut out = Vec::with_capacity(inputs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
