use std::collections::BTreeMap;
use std::sync::Arc;

use indexmap::IndexMap;

use crate::backend::{Backend, BackendError, PredictionOutcome};
use crate::corpus::TaskSpec;
use crate::perturb::RenderedInput;
use crate::rng::{indexed_seed, Rng};

use super::features::{Featurizer, SparseVec};
use super::ModelError;

pub const DEFAULT_DIM: usize = 64;

const EMPTY: u32 = u32::MAX;

/// The shared `buckets × dim` weight matrix, applied as `relu(Wᵀx)`.
///
/// Rows are materialized on first write; until then a row holds its
/// deterministic initial value, regenerated from a per-row PRNG stream.
/// Effective weights are `scale * stored`, which lets weight decay touch
/// every row in O(1).
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub(crate) buckets: usize,
    pub(crate) dim: usize,
    init_seed: u64,
    init_range: f64,
    slots: Vec<u32>,
    rows: Vec<u32>,
    pub(crate) values: Vec<f64>,
    pub(crate) scale: f64,
}

impl Encoder {
    /// Rows drawn from `uniform(-r, r)`, `r = 1/sqrt(buckets)`.
    pub fn new(buckets: usize, dim: usize, seed: u64) -> Self {
        Self::with_range(buckets, dim, seed, 1.0 / (buckets as f64).sqrt())
    }

    pub fn zeros(buckets: usize, dim: usize) -> Self {
        Self::with_range(buckets, dim, 0, 0.0)
    }

    fn with_range(buckets: usize, dim: usize, init_seed: u64, init_range: f64) -> Self {
        Encoder {
            buckets,
            dim,
            init_seed,
            init_range,
            slots: vec![EMPTY; buckets],
            rows: Vec::new(),
            values: Vec::new(),
            scale: 1.0,
        }
    }

    /// Every row materialized from `weights` (row-major), scale 1.
    pub(crate) fn from_dense(buckets: usize, dim: usize, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), buckets * dim);
        Encoder {
            buckets,
            dim,
            init_seed: 0,
            init_range: 0.0,
            slots: (0..buckets as u32).collect(),
            rows: (0..buckets as u32).collect(),
            values: weights,
            scale: 1.0,
        }
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn materialized_rows(&self) -> usize {
        self.rows.len()
    }

    fn init_row(&self, row: usize, out: &mut [f64]) {
        let mut rng = Rng::new(indexed_seed(self.init_seed, row as u64));
        for v in out.iter_mut() {
            *v = rng.symmetric(self.init_range);
        }
    }

    pub(crate) fn slot_of(&self, row: usize) -> Option<usize> {
        match self.slots[row] {
            EMPTY => None,
            s => Some(s as usize),
        }
    }

    pub(crate) fn materialize(&mut self, row: usize) -> usize {
        if let Some(s) = self.slot_of(row) {
            return s;
        }
        let slot = self.rows.len();
        let start = self.values.len();
        self.values.resize(start + self.dim, 0.0);
        let mut init = vec![0.0; self.dim];
        self.init_row(row, &mut init);
        self.values[start..].copy_from_slice(&init);
        self.slots[row] = slot as u32;
        self.rows.push(row as u32);
        slot
    }

    /// Effective weights of one row.
    pub fn row(&self, row: usize, out: &mut [f64]) {
        match self.slot_of(row) {
            Some(s) => out.copy_from_slice(&self.values[s * self.dim..(s + 1) * self.dim]),
            None => self.init_row(row, out),
        }
        for v in out.iter_mut() {
            *v *= self.scale;
        }
    }

    pub fn weight(&self, row: usize, j: usize) -> f64 {
        let mut buf = vec![0.0; self.dim];
        self.row(row, &mut buf);
        buf[j]
    }

    pub fn set_weight(&mut self, row: usize, j: usize, w: f64) {
        let s = self.materialize(row);
        self.values[s * self.dim + j] = w / self.scale;
    }

    /// `Wᵀx`.
    pub fn pre_activation(&self, x: &SparseVec) -> Vec<f64> {
        let mut z = vec![0.0; self.dim];
        let mut buf = vec![0.0; self.dim];
        for (r, xv) in x.iter() {
            self.row(r, &mut buf);
            for (zj, wj) in z.iter_mut().zip(&buf) {
                *zj += xv * wj;
            }
        }
        z
    }
}

/// Per-task affine map from the hidden layer to label logits.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead {
    pub n_labels: usize,
    /// `n_labels × dim`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl TaskHead {
    pub fn new(n_labels: usize, dim: usize, seed: u64, task_id: &str) -> Self {
        let r = 1.0 / (dim as f64).sqrt();
        let mut rng = Rng::derived(seed, &format!("head:{task_id}"));
        let weight = (0..n_labels * dim).map(|_| rng.symmetric(r)).collect();
        let bias = (0..n_labels).map(|_| rng.symmetric(r)).collect();
        TaskHead { n_labels, weight, bias }
    }

    pub fn zeros(n_labels: usize, dim: usize) -> Self {
        TaskHead {
            n_labels,
            weight: vec![0.0; n_labels * dim],
            bias: vec![0.0; n_labels],
        }
    }

    pub fn logits(&self, hidden: &[f64]) -> Vec<f64> {
        let dim = hidden.len();
        (0..self.n_labels)
            .map(|k| {
                let row = &self.weight[k * dim..(k + 1) * dim];
                self.bias[k] + row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect()
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Gradients of the mean cross-entropy over a batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients {
    /// Rows of `∂L/∂W` touched by the batch.
    pub encoder: BTreeMap<u32, Vec<f64>>,
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
}

/// Shared encoder plus one head per task.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub featurizer: Featurizer,
    pub encoder: Encoder,
    pub heads: IndexMap<String, TaskHead>,
}

impl Model {
    pub fn new(featurizer: Featurizer, dim: usize, seed: u64, tasks: &[&TaskSpec]) -> Self {
        let encoder = Encoder::new(featurizer.buckets, dim, crate::rng::derive_seed(seed, "encoder"));
        let heads = tasks
            .iter()
            .map(|t| (t.task_id.clone(), TaskHead::new(t.labels.len(), dim, seed, &t.task_id)))
            .collect();
        Model {
            featurizer,
            encoder,
            heads,
        }
    }

    /// All parameters zero.
    pub fn zeros(featurizer: Featurizer, dim: usize, tasks: &[&TaskSpec]) -> Self {
        Model {
            featurizer,
            encoder: Encoder::zeros(featurizer.buckets, dim),
            heads: tasks
                .iter()
                .map(|t| (t.task_id.clone(), TaskHead::zeros(t.labels.len(), dim)))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim
    }

    pub fn head(&self, task_id: &str) -> Result<&TaskHead, ModelError> {
        self.heads
            .get(task_id)
            .ok_or_else(|| ModelError::NoHeadForTask(task_id.to_string()))
    }

    pub fn hidden(&self, x: &SparseVec) -> Vec<f64> {
        self.encoder.pre_activation(x).into_iter().map(|z| z.max(0.0)).collect()
    }

    pub fn probabilities(&self, task_id: &str, x: &SparseVec) -> Result<Vec<f64>, ModelError> {
        Ok(softmax(&self.head(task_id)?.logits(&self.hidden(x))))
    }

    pub fn predict_index(&self, task_id: &str, x: &SparseVec) -> Result<usize, ModelError> {
        Ok(argmax(&self.head(task_id)?.logits(&self.hidden(x))))
    }

    pub fn predict(&self, task: &TaskSpec, input: &RenderedInput) -> Result<PredictionOutcome, ModelError> {
        let head = self.head(&task.task_id)?;
        if head.n_labels != task.labels.len() {
            return Err(ModelError::LabelCountMismatch {
                task: task.task_id.clone(),
                head: head.n_labels,
                task_labels: task.labels.len(),
            });
        }
        let idx = self.predict_index(&task.task_id, &self.featurizer.featurize(input))?;
        Ok(PredictionOutcome::Label(task.labels[idx].clone()))
    }

    /// Mean cross-entropy of `(features, gold index)` pairs under one head.
    pub fn loss(&self, task_id: &str, batch: &[(&SparseVec, usize)]) -> Result<f64, ModelError> {
        let head = self.head(task_id)?;
        let mut total = 0.0;
        for (x, y) in batch {
            let p = softmax(&head.logits(&self.hidden(x)));
            total -= p[*y].ln();
        }
        Ok(total / batch.len() as f64)
    }

    /// Loss and analytic gradients for one head's batch.
    pub fn gradients(&self, task_id: &str, batch: &[(&SparseVec, usize)]) -> Result<(f64, Gradients), ModelError> {
        let head = self.head(task_id)?;
        let dim = self.dim();
        let n = batch.len() as f64;
        let mut g = Gradients {
            encoder: BTreeMap::new(),
            head_weight: vec![0.0; head.weight.len()],
            head_bias: vec![0.0; head.n_labels],
        };
        let mut loss = 0.0;
        for (x, y) in batch {
            let z = self.encoder.pre_activation(x);
            let h: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
            let mut d_logits = softmax(&head.logits(&h));
            loss -= d_logits[*y].ln();
            d_logits[*y] -= 1.0;
            for v in d_logits.iter_mut() {
                *v /= n;
            }
            let mut d_z = vec![0.0; dim];
            for (k, dk) in d_logits.iter().enumerate() {
                g.head_bias[k] += dk;
                let w_row = &head.weight[k * dim..(k + 1) * dim];
                let g_row = &mut g.head_weight[k * dim..(k + 1) * dim];
                for j in 0..dim {
                    g_row[j] += dk * h[j];
                    d_z[j] += dk * w_row[j];
                }
            }
            for (dz, zj) in d_z.iter_mut().zip(&z) {
                if *zj <= 0.0 {
                    *dz = 0.0;
                }
            }
            for (r, xv) in x.iter() {
                let row = g.encoder.entry(r as u32).or_insert_with(|| vec![0.0; dim]);
                for (gj, dz) in row.iter_mut().zip(&d_z) {
                    *gj += xv * dz;
                }
            }
        }
        Ok((loss / n, g))
    }
}

/// Serves predictions from a trained model.
#[derive(Debug, Clone)]
pub struct RefModelBackend {
    model: Arc<Model>,
}

impl RefModelBackend {
    pub fn new(model: Arc<Model>) -> Self {
        RefModelBackend { model }
    }
}

impl Backend for RefModelBackend {
    fn classify_batch(&self, task: &TaskSpec, inputs: &[RenderedInput]) -> Result<Vec<PredictionOutcome>, BackendError> {
        inputs
            .iter()
            .map(|i| self.model.predict(task, i).map_err(|e| BackendError::Model(e.to_string())))
            .collect()
    }
}
