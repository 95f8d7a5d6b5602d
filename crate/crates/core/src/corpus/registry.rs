use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{normalize_label, CorpusError, TaskSpec, TaskType};

/// Source-column names for the two sentences and the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFields {
    pub a: String,
    pub b: String,
    pub label: String,
}

impl Default for TaskFields {
    fn default() -> Self {
        TaskFields {
            a: "sentence1".into(),
            b: "sentence2".into(),
            label: "label".into(),
        }
    }
}

/// On-disk form of one registry entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskConfig {
    #[serde(default)]
    pub display_name: Option<String>,
    pub task_type: TaskType,
    pub indicator_a: String,
    pub indicator_b: String,
    pub labels: Vec<String>,
    #[serde(default)]
    pub fields: TaskFields,
    #[serde(default)]
    pub seq2seq_prefix: Option<String>,
    #[serde(default)]
    pub label_aliases: BTreeMap<String, String>,
}

impl TaskSpec {
    pub fn from_config(task_id: &str, cfg: TaskConfig) -> Result<TaskSpec, CorpusError> {
        let invalid = |reason: String| CorpusError::InvalidTask {
            task: task_id.to_string(),
            reason,
        };
        if task_id.trim().is_empty() {
            return Err(invalid("empty task id".into()));
        }
        let labels: Vec<String> = cfg.labels.iter().map(|l| normalize_label(l)).collect();
        if labels.iter().any(String::is_empty) {
            return Err(invalid("empty label".into()));
        }
        let unique: HashSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(invalid("duplicate labels".into()));
        }
        let arity_ok = match cfg.task_type {
            TaskType::Sts => labels.len() == 2,
            TaskType::Nli => matches!(labels.len(), 2 | 3),
        };
        if !arity_ok {
            return Err(invalid(format!(
                "{:?} task cannot have {} labels",
                cfg.task_type,
                labels.len()
            )));
        }
        let indicator_a = cfg.indicator_a.trim().to_string();
        let indicator_b = cfg.indicator_b.trim().to_string();
        if indicator_a.is_empty() || indicator_b.is_empty() {
            return Err(invalid("empty indicator".into()));
        }
        if indicator_a == indicator_b {
            return Err(invalid("indicators must differ".into()));
        }
        if indicator_a.to_lowercase() == indicator_b.to_lowercase() {
            return Err(invalid("indicators differ only by case".into()));
        }
        if [&indicator_a, &indicator_b]
            .iter()
            .any(|i| i.contains(char::is_whitespace) || i.contains([':', '[', ']']))
        {
            return Err(invalid("indicators must be single words without `:`, `[` or `]`".into()));
        }
        let mut label_aliases = Vec::with_capacity(cfg.label_aliases.len());
        for (alias, target) in cfg.label_aliases {
            let target = normalize_label(&target);
            if !labels.contains(&target) {
                return Err(invalid(format!("alias `{alias}` targets unknown label `{target}`")));
            }
            label_aliases.push((normalize_label(&alias), target));
        }
        let seq2seq_prefix = cfg
            .seq2seq_prefix
            .map(|p| p.trim().to_lowercase())
            .filter(|p| !p.is_empty());
        Ok(TaskSpec {
            task_id: task_id.to_string(),
            display_name: cfg.display_name.unwrap_or_else(|| task_id.to_uppercase()),
            task_type: cfg.task_type,
            indicator_a,
            indicator_b,
            labels,
            fields: cfg.fields,
            seq2seq_prefix,
            label_aliases,
        })
    }
}

impl From<&TaskSpec> for TaskConfig {
    fn from(t: &TaskSpec) -> Self {
        TaskConfig {
            display_name: Some(t.display_name.clone()),
            task_type: t.task_type,
            indicator_a: t.indicator_a.clone(),
            indicator_b: t.indicator_b.clone(),
            labels: t.labels.clone(),
            fields: t.fields.clone(),
            seq2seq_prefix: t.seq2seq_prefix.clone(),
            label_aliases: t.label_aliases.iter().cloned().collect(),
        }
    }
}

/// Ordered set of tasks keyed by id.
#[derive(Debug, Clone, Default)]
pub struct TaskRegistry {
    tasks: IndexMap<String, TaskSpec>,
}

impl TaskRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The five GLUE sentence-pair tasks.
    pub fn builtin() -> Self {
        let mut reg = TaskRegistry::empty();
        for (id, cfg) in builtin_configs() {
            let spec = TaskSpec::from_config(id, cfg).expect("builtin task is valid");
            reg.insert(spec);
        }
        reg
    }

    /// Builtins, then overrides from the JSON file named by `CALUM_CONFIG`
    /// when that variable is set.
    pub fn from_env() -> Result<Self, CorpusError> {
        let mut reg = Self::builtin();
        if let Some(path) = std::env::var_os("CALUM_CONFIG") {
            let text = std::fs::read_to_string(&path).map_err(|source| CorpusError::Io {
                path: path.into(),
                source,
            })?;
            reg.apply_overrides_json(&text)?;
        }
        Ok(reg)
    }

    /// Adds or replaces tasks from `{"task_id": {...}, ...}`.
    pub fn apply_overrides_json(&mut self, json: &str) -> Result<(), CorpusError> {
        let parsed: IndexMap<String, TaskConfig> =
            serde_json::from_str(json).map_err(|e| CorpusError::Config(e.to_string()))?;
        for (id, cfg) in parsed {
            self.insert(TaskSpec::from_config(&id, cfg)?);
        }
        Ok(())
    }

    /// The registry in the form [`TaskRegistry::apply_overrides_json`] reads.
    pub fn to_config_json(&self) -> String {
        let map: IndexMap<&str, TaskConfig> = self.tasks.iter().map(|(id, t)| (id.as_str(), TaskConfig::from(t))).collect();
        serde_json::to_string_pretty(&map).expect("task configs serialize") + "\n"
    }

    pub fn insert(&mut self, spec: TaskSpec) {
        self.tasks.insert(spec.task_id.clone(), spec);
    }

    pub fn get(&self, task_id: &str) -> Option<&TaskSpec> {
        self.tasks.get(task_id)
    }

    pub fn require(&self, task_id: &str) -> Result<&TaskSpec, CorpusError> {
        self.get(task_id)
            .ok_or_else(|| CorpusError::UnknownTask(task_id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaskSpec> {
        self.tasks.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.tasks.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn of_type(&self, task_type: TaskType) -> impl Iterator<Item = &TaskSpec> {
        self.iter().filter(move |t| t.task_type == task_type)
    }
}

fn builtin_configs() -> Vec<(&'static str, TaskConfig)> {
    fn cfg(
        name: &str,
        task_type: TaskType,
        indicators: (&str, &str),
        labels: &[&str],
        fields: (&str, &str, &str),
        aliases: &[(&str, &str)],
        prefix: &str,
    ) -> TaskConfig {
        TaskConfig {
            display_name: Some(name.into()),
            task_type,
            indicator_a: indicators.0.into(),
            indicator_b: indicators.1.into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            fields: TaskFields {
                a: fields.0.into(),
                b: fields.1.into(),
                label: fields.2.into(),
            },
            seq2seq_prefix: Some(prefix.into()),
            label_aliases: aliases
                .iter()
                .map(|(a, t)| (a.to_string(), t.to_string()))
                .collect(),
        }
    }

    use TaskType::{Nli, Sts};
    let entail = &[("0", "entailment"), ("1", "not_entailment")];
    vec![
        (
            "mnli",
            cfg(
                "MNLI",
                Nli,
                ("Premise", "Hypothesis"),
                &["entailment", "neutral", "contradiction"],
                ("sentence1", "sentence2", "gold_label"),
                &[("0", "entailment"), ("1", "neutral"), ("2", "contradiction")],
                "mnli",
            ),
        ),
        (
            "qnli",
            cfg(
                "QNLI",
                Nli,
                ("Question", "Sentence"),
                &["entailment", "not_entailment"],
                ("question", "sentence", "label"),
                entail,
                "qnli",
            ),
        ),
        (
            "rte",
            cfg(
                "RTE",
                Nli,
                ("Sentence1", "Sentence2"),
                &["entailment", "not_entailment"],
                ("sentence1", "sentence2", "label"),
                entail,
                "rte",
            ),
        ),
        (
            "qqp",
            cfg(
                "QQP",
                Sts,
                ("Question1", "Question2"),
                &["equivalent", "not_equivalent"],
                ("question1", "question2", "is_duplicate"),
                &[
                    ("1", "equivalent"),
                    ("0", "not_equivalent"),
                    ("duplicate", "equivalent"),
                    ("not_duplicate", "not_equivalent"),
                ],
                "qqp",
            ),
        ),
        (
            "mrpc",
            cfg(
                "MRPC",
                Sts,
                ("Sentence1", "Sentence2"),
                &["equivalent", "not_equivalent"],
                ("#1 String", "#2 String", "Quality"),
                &[("1", "equivalent"), ("0", "not_equivalent")],
                "mrpc",
            ),
        ),
    ]
}
