//! Single-task and shared-encoder multi-task training.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, TaskRegistry, TaskSpec, TaskType};
use crate::perturb::{render, Perturbation};
use crate::rng::Rng;

use super::features::{FeatureMode, Featurizer, SparseVec, DEFAULT_BUCKETS};
use super::model::{Gradients, Model, DEFAULT_DIM};
use super::{ModelError, TrainError};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Fraction of each task's steps spent in linear warmup; the rest
    /// decays linearly to zero.
    pub warmup_fraction: f64,
    /// Stop after this many epochs without a new best validation accuracy.
    pub early_stop_patience: usize,
    pub seed: u64,
    pub encoder_dim: usize,
    pub buckets: usize,
    /// Multiplies the learning rate (and so the decay) of the shared
    /// encoder. Zero freezes it.
    pub encoder_lr_scale: f64,
    pub feature_mode: FeatureMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-2,
            weight_decay: 1e-3,
            warmup_fraction: 0.1,
            early_stop_patience: 2,
            seed: 0,
            encoder_dim: DEFAULT_DIM,
            buckets: DEFAULT_BUCKETS,
            encoder_lr_scale: 1.0,
            feature_mode: FeatureMode::Joined,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 {
            return bad("epochs, batch_size and early_stop_patience must be positive");
        }
        if self.encoder_dim == 0 || self.buckets == 0 || self.buckets > u32::MAX as usize {
            return bad("encoder_dim and buckets must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1)");
        }
        if !(self.encoder_lr_scale >= 0.0 && self.encoder_lr_scale.is_finite()) {
            return bad("encoder_lr_scale must be non-negative");
        }
        Ok(())
    }

    fn featurizer(&self) -> Featurizer {
        Featurizer::new(self.buckets, self.feature_mode)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultitaskMode {
    /// Main task plus every registered paraphrase (STS) task.
    Para,
    /// Main task plus every other registered task.
    All,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub val_accuracy: Vec<f64>,
    pub step_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub report: TrainReport,
}

/// Auxiliary tasks implied by `mode` for `main_id`, in registry order.
pub fn aux_tasks_for(registry: &TaskRegistry, main_id: &str, mode: MultitaskMode) -> Result<Vec<TaskSpec>, TrainError> {
    registry.require(main_id).map_err(|_| TrainError::UnknownTask(main_id.to_string()))?;
    Ok(registry
        .iter()
        .filter(|t| t.task_id != main_id)
        .filter(|t| mode == MultitaskMode::All || t.task_type == TaskType::Sts)
        .cloned()
        .collect())
}

pub fn train_single(train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_tasks(train, val, &[], cfg)
}

/// Train one shared encoder with a head per task. The auxiliary datasets
/// must cover exactly the tasks [`aux_tasks_for`] names for `mode`.
pub fn train_multitask(
    registry: &TaskRegistry,
    train: &Dataset,
    val: &Dataset,
    aux: &[Dataset],
    cfg: &TrainConfig,
    mode: MultitaskMode,
) -> Result<TrainOutcome, TrainError> {
    let expected: BTreeSet<String> = aux_tasks_for(registry, &train.task.task_id, mode)?
        .into_iter()
        .map(|t| t.task_id)
        .collect();
    if expected.is_empty() {
        return Err(TrainError::InvalidAuxTasks(format!("no auxiliary tasks registered for {mode:?}")));
    }
    let mut given = BTreeSet::new();
    for d in aux {
        if registry.get(&d.task.task_id).is_none() {
            return Err(TrainError::UnknownTask(d.task.task_id.clone()));
        }
        if !given.insert(d.task.task_id.clone()) {
            return Err(TrainError::InvalidAuxTasks(format!("`{}` given twice", d.task.task_id)));
        }
    }
    if given != expected {
        return Err(TrainError::InvalidAuxTasks(format!(
            "{mode:?} needs {:?}, got {:?}",
            expected, given
        )));
    }
    train_tasks(train, val, aux, cfg)
}

struct TaskRun {
    task_id: String,
    features: Vec<SparseVec>,
    labels: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
    shuffle: Rng,
    batches_per_epoch: usize,
    total_steps: usize,
    warmup_steps: usize,
    step: usize,
}

impl TaskRun {
    fn new(data: &Dataset, featurizer: &Featurizer, cfg: &TrainConfig) -> Result<Self, TrainError> {
        if data.is_empty() {
            return Err(TrainError::EmptySplit {
                task: data.task.task_id.clone(),
                split: data.split.to_string(),
            });
        }
        let (features, labels) = encode(data, featurizer)?;
        let batches_per_epoch = data.len().div_ceil(cfg.batch_size);
        let total_steps = batches_per_epoch * cfg.epochs;
        Ok(TaskRun {
            task_id: data.task.task_id.clone(),
            order: (0..features.len()).collect(),
            features,
            labels,
            cursor: 0,
            shuffle: Rng::derived(cfg.seed, &format!("shuffle:{}", data.task.task_id)),
            batches_per_epoch,
            total_steps,
            warmup_steps: (cfg.warmup_fraction * total_steps as f64).floor() as usize,
            step: 0,
        })
    }

    fn learning_rate(&self, base: f64) -> f64 {
        let t = self.step;
        if t < self.warmup_steps {
            base * (t + 1) as f64 / self.warmup_steps as f64
        } else {
            base * (self.total_steps - t) as f64 / (self.total_steps - self.warmup_steps) as f64
        }
    }
}

fn encode(data: &Dataset, featurizer: &Featurizer) -> Result<(Vec<SparseVec>, Vec<usize>), TrainError> {
    let mut features = Vec::with_capacity(data.len());
    let mut labels = Vec::with_capacity(data.len());
    for ex in data.examples() {
        let gold = ex.gold.as_deref().ok_or_else(|| TrainError::MissingLabel {
            task: data.task.task_id.clone(),
            example: ex.id.clone(),
        })?;
        let idx = data.task.label_index(gold).ok_or_else(|| TrainError::MissingLabel {
            task: data.task.task_id.clone(),
            example: ex.id.clone(),
        })?;
        features.push(featurizer.featurize(&render(ex, &data.task, Perturbation::Original)));
        labels.push(idx);
    }
    Ok((features, labels))
}

#[derive(Debug, Default, Clone)]
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

/// One bias-corrected Adam direction per gradient entry, advancing the state.
fn adam_direction(state: &mut AdamState, grads: &[f64]) -> Vec<f64> {
    if state.m.is_empty() {
        state.m = vec![0.0; grads.len()];
        state.v = vec![0.0; grads.len()];
    }
    state.t += 1;
    let c1 = 1.0 - BETA1.powi(state.t as i32);
    let c2 = 1.0 - BETA2.powi(state.t as i32);
    grads
        .iter()
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        .map(|(g, (m, v))| {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            (*m / c1) / ((*v / c2).sqrt() + EPS)
        })
        .collect()
}

/// AdamW over a [`Model`]. Encoder rows keep their own Adam moments and
/// are updated only on steps whose batch touches them; the decoupled
/// weight decay still reaches every encoder row on every step through the
/// encoder's global scale. Heads keep dense per-head state.
#[derive(Debug, Clone, Default)]
pub struct Optimizer {
    pub weight_decay: f64,
    /// Multiplies the encoder's learning rate. Zero freezes the encoder.
    pub encoder_lr_scale: f64,
    encoder_rows: Vec<AdamState>,
    heads: HashMap<String, AdamState>,
}

impl Optimizer {
    pub fn new(weight_decay: f64, encoder_lr_scale: f64) -> Self {
        Optimizer {
            weight_decay,
            encoder_lr_scale,
            ..Default::default()
        }
    }

    /// One update from a batch of `task_id`, which touches the encoder and
    /// that task's head only. Returns the batch loss before the update.
    pub fn step(&mut self, model: &mut Model, task_id: &str, batch: &[(&SparseVec, usize)], lr: f64) -> Result<f64, ModelError> {
        let (loss, grads) = model.gradients(task_id, batch)?;
        self.update_encoder(model, &grads, lr * self.encoder_lr_scale);
        let state = self.heads.entry(task_id.to_string()).or_default();
        let head = model.heads.get_mut(task_id).expect("gradients checked the head exists");
        let flat: Vec<f64> = grads.head_weight.iter().chain(&grads.head_bias).copied().collect();
        let dir = adam_direction(state, &flat);
        for (w, u) in head.weight.iter_mut().chain(head.bias.iter_mut()).zip(dir) {
            *w -= lr * (u + self.weight_decay * *w);
        }
        Ok(loss)
    }

    fn update_encoder(&mut self, model: &mut Model, grads: &Gradients, lr: f64) {
        if lr == 0.0 {
            return;
        }
        let enc = &mut model.encoder;
        enc.scale *= 1.0 - lr * self.weight_decay;
        let dim = enc.dim;
        for (&row, g) in &grads.encoder {
            let slot = enc.materialize(row as usize);
            if self.encoder_rows.len() <= slot {
                self.encoder_rows.resize_with(slot + 1, AdamState::default);
            }
            let dir = adam_direction(&mut self.encoder_rows[slot], g);
            let stored = &mut enc.values[slot * dim..(slot + 1) * dim];
            for (w, u) in stored.iter_mut().zip(dir) {
                *w -= lr * u / enc.scale;
            }
        }
    }
}

fn accuracy(model: &Model, task_id: &str, features: &[SparseVec], labels: &[usize]) -> f64 {
    let correct = features
        .iter()
        .zip(labels)
        .filter(|(x, y)| model.predict_index(task_id, x).expect("head exists") == **y)
        .count();
    correct as f64 / labels.len() as f64
}

fn train_tasks(train: &Dataset, val: &Dataset, aux: &[Dataset], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.task.task_id != val.task.task_id {
        return Err(TrainError::TaskMismatch(train.task.task_id.clone(), val.task.task_id.clone()));
    }
    if val.is_empty() {
        return Err(TrainError::EmptySplit {
            task: val.task.task_id.clone(),
            split: val.split.to_string(),
        });
    }
    let featurizer = cfg.featurizer();
    let mut runs = vec![TaskRun::new(train, &featurizer, cfg)?];
    for d in aux {
        runs.push(TaskRun::new(d, &featurizer, cfg)?);
    }
    let (val_x, val_y) = encode(val, &featurizer)?;
    let main_id = train.task.task_id.clone();

    let specs: Vec<&TaskSpec> = std::iter::once(&train.task).chain(aux.iter().map(|d| &d.task)).collect();
    let mut model = Model::new(featurizer, cfg.encoder_dim, cfg.seed, &specs);
    let mut opt = Optimizer::new(cfg.weight_decay, cfg.encoder_lr_scale);
    let mut mixer = Rng::derived(cfg.seed, "task-mix");

    let mut report = TrainReport::default();
    let mut best: Option<Model> = None;
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        let mut slots = Vec::new();
        for (i, run) in runs.iter_mut().enumerate() {
            run.shuffle.shuffle(&mut run.order);
            run.cursor = 0;
            slots.extend(std::iter::repeat(i).take(run.batches_per_epoch));
        }
        mixer.shuffle(&mut slots);

        for &i in &slots {
            let run = &mut runs[i];
            let end = (run.cursor + cfg.batch_size).min(run.order.len());
            let batch: Vec<(&SparseVec, usize)> = run.order[run.cursor..end]
                .iter()
                .map(|&k| (&run.features[k], run.labels[k]))
                .collect();
            run.cursor = end;
            let lr = run.learning_rate(cfg.learning_rate);
            run.step += 1;
            let loss = opt.step(&mut model, &run.task_id, &batch, lr)?;
            report.step_losses.push(loss);
        }

        let acc = accuracy(&model, &main_id, &val_x, &val_y);
        report.val_accuracy.push(acc);
        report.epochs_run = epoch + 1;
        log::debug!("epoch {epoch}: val accuracy {acc:.4}");
        if best.is_none() || acc > report.best_val_accuracy {
            report.best_val_accuracy = acc;
            report.best_epoch = epoch;
            best = Some(model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        model: best.expect("at least one epoch ran"),
        report,
    })
}
