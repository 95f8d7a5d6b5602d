//! A small trainable reference classifier: hashed n-gram features, a shared
//! ReLU encoder and one softmax head per task.

mod features;
mod io;
mod model;
mod train;

use thiserror::Error;

pub use features::{FeatureMode, Featurizer, SparseVec, DEFAULT_BUCKETS};
pub use model::{argmax, softmax, Encoder, Gradients, Model, RefModelBackend, TaskHead, DEFAULT_DIM};
pub use train::{aux_tasks_for, train_multitask, train_single, MultitaskMode, Optimizer, TrainConfig, TrainOutcome, TrainReport};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model has no head for task `{0}`")]
    NoHeadForTask(String),
    #[error("head for `{task}` has {head} labels but the task has {task_labels}")]
    LabelCountMismatch { task: String, head: usize, task_labels: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{split} split of `{task}` is empty")]
    EmptySplit { task: String, split: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("auxiliary tasks: {0}")]
    InvalidAuxTasks(String),
    #[error("train and validation sets belong to different tasks (`{0}` vs `{1}`)")]
    TaskMismatch(String, String),
    #[error("example `{example}` of `{task}` has no usable gold label")]
    MissingLabel { task: String, example: String },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
