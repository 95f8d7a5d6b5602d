//! Two-sentence classification corpora and the task registry.

mod jsonl;
mod registry;
mod tsv;

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;

pub use jsonl::load_jsonl;
pub use registry::{TaskConfig, TaskFields, TaskRegistry};
pub use tsv::load_tsv;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {row}: label `{value}` is not in the task's label set")]
    BadLabel { row: usize, value: String },
    #[error("line {row}: gold label required for this split")]
    MissingLabel { row: usize },
    #[error("line {0}: malformed row")]
    MalformedRow(usize),
    #[error("line {0}: invalid UTF-8")]
    Encoding(usize),
    #[error("row {row}: {reason}")]
    InvalidExample { row: usize, reason: String },
    #[error("duplicate example id `{0}`")]
    DuplicateId(String),
    #[error("cannot sample {n} examples from a dataset of {len}")]
    NTooLarge { n: usize, len: usize },
    #[error("task `{task}`: {reason}")]
    InvalidTask { task: String, reason: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskType {
    #[serde(rename = "NLI", alias = "nli")]
    Nli,
    #[serde(rename = "STS", alias = "sts")]
    Sts,
}

/// A registered sentence-pair task.
///
/// Built through [`TaskSpec::from_config`], which enforces the label and
/// indicator invariants. Labels are stored trimmed and lowercased.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub display_name: String,
    pub task_type: TaskType,
    pub indicator_a: String,
    pub indicator_b: String,
    pub labels: Vec<String>,
    pub fields: TaskFields,
    pub seq2seq_prefix: Option<String>,
    /// Alternative spellings (e.g. `"1"` for `equivalent`) accepted at
    /// ingestion and when parsing generated text.
    pub label_aliases: Vec<(String, String)>,
}

impl TaskSpec {
    /// Map a raw label string to its canonical form, if it names a label.
    pub fn resolve_label(&self, raw: &str) -> Option<&str> {
        let norm = normalize_label(raw);
        if let Some(l) = self.labels.iter().find(|l| **l == norm) {
            return Some(l);
        }
        self.label_aliases
            .iter()
            .find(|(alias, _)| *alias == norm)
            .and_then(|(_, target)| self.labels.iter().find(|l| *l == target))
            .map(String::as_str)
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.label_index(label).is_some()
    }
}

pub(crate) fn normalize_label(raw: &str) -> String {
    raw.trim().to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn requires_labels(self) -> bool {
        !matches!(self, Split::Test)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" | "dev" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub sentence_a: String,
    pub sentence_b: String,
    pub gold: Option<String>,
}

impl Example {
    /// Checks the text invariants. Tabs and line breaks are refused so every
    /// example can be written back as a TSV row.
    pub fn new(
        id: impl Into<String>,
        sentence_a: impl Into<String>,
        sentence_b: impl Into<String>,
        gold: Option<String>,
    ) -> Result<Self, String> {
        let ex = Example {
            id: id.into(),
            sentence_a: sentence_a.into(),
            sentence_b: sentence_b.into(),
            gold,
        };
        if ex.id.is_empty() || has_row_breaking_char(&ex.id) {
            return Err(format!("invalid id `{}`", ex.id));
        }
        for s in [&ex.sentence_a, &ex.sentence_b] {
            if s.trim().is_empty() {
                return Err("empty sentence".into());
            }
            if has_row_breaking_char(s) {
                return Err("sentence contains a tab or line break".into());
            }
        }
        Ok(ex)
    }
}

fn has_row_breaking_char(s: &str) -> bool {
    s.contains(['\t', '\n', '\r'])
}

/// An ordered, validated collection of examples for one task and split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub task: TaskSpec,
    pub split: Split,
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(task: TaskSpec, split: Split, examples: Vec<Example>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(examples.len());
        for (row, ex) in examples.iter().enumerate() {
            if !seen.insert(ex.id.as_str()) {
                return Err(CorpusError::DuplicateId(ex.id.clone()));
            }
            match &ex.gold {
                Some(g) if !task.has_label(g) => {
                    return Err(CorpusError::BadLabel {
                        row,
                        value: g.clone(),
                    })
                }
                None if split.requires_labels() => return Err(CorpusError::MissingLabel { row }),
                _ => {}
            }
        }
        Ok(Dataset {
            task,
            split,
            examples,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Example> {
        self.examples.iter().find(|e| e.id == id)
    }

    /// Same task and split, different examples (already validated upstream).
    fn with_examples(&self, examples: Vec<Example>) -> Dataset {
        Dataset {
            task: self.task.clone(),
            split: self.split,
            examples,
        }
    }
}

/// Sample `n` examples without replacement, keeping their original order.
pub fn sample_split(dataset: &Dataset, n: usize, seed: u64) -> Result<Dataset, CorpusError> {
    let len = dataset.len();
    if n > len {
        return Err(CorpusError::NTooLarge { n, len });
    }
    let picked = Rng::new(seed).sample_indices(len, n);
    Ok(dataset.with_examples(picked.into_iter().map(|i| dataset.examples[i].clone()).collect()))
}
