//! Deterministic generated corpora: a small multi-task benchmark for the
//! reference model and a mixed-script sentence-pair fixture.
//!
//! The benchmark has a 3-class main task and two paraphrase tasks sharing
//! one vocabulary. Every main example carries one keyword whose latent
//! class (one of three) is the label. The main training split only uses a
//! subset of the keywords. Paraphrase pairs draw both keywords from one
//! class, and paraphrase task `i` is positive exactly for class `i`, so the
//! two tasks together cover every keyword's class. The last word of the
//! first segment is a label-correlated filler, which a bag-of-n-grams model
//! can only see in order through the bigram spanning the segment boundary.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, Dataset, Example, Split, TaskConfig, TaskRegistry, TaskSpec, TaskType};
use crate::rng::Rng;

pub const MAIN_TASK: &str = "synth-nli";
pub const PARA_TASKS: [&str; 2] = ["synth-qp", "synth-pp"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub main_train: usize,
    pub main_val: usize,
    pub main_test: usize,
    pub aux_train: usize,
    pub aux_val: usize,
    /// Keywords per class.
    pub keywords_per_class: usize,
    /// Fraction of keywords per class that occur in main-task training data.
    pub main_keyword_fraction: f64,
    pub distractors: usize,
    pub fillers: usize,
    /// Probability that the first segment ends with its label's cue filler.
    pub cue_rate: f64,
    /// Probability that a main training label is replaced by a uniform one.
    pub label_noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            main_train: 2000,
            main_val: 500,
            main_test: 1000,
            aux_train: 2000,
            aux_val: 200,
            keywords_per_class: 40,
            main_keyword_fraction: 0.25,
            distractors: 60,
            fillers: 12,
            cue_rate: 0.7,
            label_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub registry: TaskRegistry,
    pub main_train: Dataset,
    pub main_val: Dataset,
    pub main_test: Dataset,
    /// Training split per paraphrase task, in registry order.
    pub aux_train: Vec<Dataset>,
    pub aux_val: Vec<Dataset>,
}

pub fn synthetic_registry() -> TaskRegistry {
    let mut reg = TaskRegistry::empty();
    let entries = [
        (MAIN_TASK, TaskType::Nli, "Premise", "Hypothesis", vec!["entailment", "neutral", "contradiction"]),
        (PARA_TASKS[0], TaskType::Sts, "Question1", "Question2", vec!["duplicate", "not_duplicate"]),
        (PARA_TASKS[1], TaskType::Sts, "Sentence1", "Sentence2", vec!["equivalent", "not_equivalent"]),
    ];
    for (id, task_type, a, b, labels) in entries {
        let cfg = TaskConfig {
            display_name: None,
            task_type,
            indicator_a: a.into(),
            indicator_b: b.into(),
            labels: labels.into_iter().map(String::from).collect(),
            fields: Default::default(),
            seq2seq_prefix: Some(id.into()),
            label_aliases: Default::default(),
        };
        reg.insert(TaskSpec::from_config(id, cfg).expect("valid builtin"));
    }
    reg
}

struct Vocab {
    keywords: Vec<Vec<String>>,
    distractors: Vec<String>,
    fillers: Vec<String>,
}

fn pseudo_words(rng: &mut Rng, n: usize, seen: &mut HashSet<String>) -> Vec<String> {
    const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sh", "tr"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = 2 + rng.below(2);
        let word: String = (0..syllables)
            .map(|_| format!("{}{}", ONSETS[rng.below(ONSETS.len())], VOWELS[rng.below(VOWELS.len())]))
            .collect();
        if seen.insert(word.clone()) {
            out.push(word);
        }
    }
    out
}

impl Vocab {
    fn new(cfg: &SyntheticConfig) -> Vocab {
        let mut rng = Rng::derived(cfg.seed, "synthetic:vocab");
        let mut seen = HashSet::new();
        let keywords = (0..3).map(|_| pseudo_words(&mut rng, cfg.keywords_per_class, &mut seen)).collect();
        let distractors = pseudo_words(&mut rng, cfg.distractors, &mut seen);
        let fillers = pseudo_words(&mut rng, cfg.fillers.max(3), &mut seen);
        Vocab {
            keywords,
            distractors,
            fillers,
        }
    }

    fn main_keywords(&self, class: usize, fraction: f64) -> &[String] {
        let all = &self.keywords[class];
        let n = ((all.len() as f64 * fraction).round() as usize).clamp(1, all.len());
        &all[..n]
    }

    fn segment(&self, rng: &mut Rng, keyword: Option<&str>, filler: &str) -> String {
        let n = 3 + rng.below(4);
        let mut words: Vec<&str> = (0..n).map(|_| self.distractors[rng.below(self.distractors.len())].as_str()).collect();
        if let Some(k) = keyword {
            let at = rng.below(words.len() + 1);
            words.insert(at, k);
        }
        words.push(filler);
        words.join(" ")
    }

    fn uniform_filler(&self, rng: &mut Rng) -> &str {
        &self.fillers[rng.below(self.fillers.len())]
    }
}

fn main_split(vocab: &Vocab, cfg: &SyntheticConfig, task: &TaskSpec, split: Split, n: usize) -> Dataset {
    let mut rng = Rng::derived(cfg.seed, &format!("synthetic:{MAIN_TASK}:{split}"));
    let examples = (0..n)
        .map(|i| {
            let class = rng.below(3);
            let pool: &[String] = if split == Split::Train {
                vocab.main_keywords(class, cfg.main_keyword_fraction)
            } else {
                &vocab.keywords[class]
            };
            let keyword = &pool[rng.below(pool.len())];
            let cue = if rng.unit_f64() < cfg.cue_rate {
                vocab.fillers[class].as_str()
            } else {
                vocab.uniform_filler(&mut rng)
            };
            let a = vocab.segment(&mut rng, None, cue);
            let filler_b = vocab.uniform_filler(&mut rng).to_string();
            let b = vocab.segment(&mut rng, Some(keyword), &filler_b);
            let mut label = class;
            if split == Split::Train && rng.unit_f64() < cfg.label_noise {
                label = rng.below(3);
            }
            Example::new(format!("{split}-{i}"), a, b, Some(task.labels[label].clone())).expect("generated text is valid")
        })
        .collect();
    Dataset::new(task.clone(), split, examples).expect("generated ids are unique")
}

fn para_split(vocab: &Vocab, cfg: &SyntheticConfig, task: &TaskSpec, positive_class: usize, split: Split, n: usize) -> Dataset {
    let mut rng = Rng::derived(cfg.seed, &format!("synthetic:{}:{split}", task.task_id));
    let examples = (0..n)
        .map(|i| {
            let class = rng.below(3);
            let pool = &vocab.keywords[class];
            let k1 = &pool[rng.below(pool.len())];
            let k2 = &pool[rng.below(pool.len())];
            let fa = vocab.uniform_filler(&mut rng).to_string();
            let a = vocab.segment(&mut rng, Some(k1), &fa);
            let fb = vocab.uniform_filler(&mut rng).to_string();
            let b = vocab.segment(&mut rng, Some(k2), &fb);
            let label = &task.labels[if class == positive_class { 0 } else { 1 }];
            Example::new(format!("{split}-{i}"), a, b, Some(label.clone())).expect("generated text is valid")
        })
        .collect();
    Dataset::new(task.clone(), split, examples).expect("generated ids are unique")
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticBenchmark {
    let registry = synthetic_registry();
    let vocab = Vocab::new(cfg);
    let main = registry.get(MAIN_TASK).expect("registered");
    let main_train = main_split(&vocab, cfg, main, Split::Train, cfg.main_train);
    let main_val = main_split(&vocab, cfg, main, Split::Validation, cfg.main_val);
    let main_test = main_split(&vocab, cfg, main, Split::Test, cfg.main_test);
    let mut aux_train = Vec::new();
    let mut aux_val = Vec::new();
    for (class, id) in PARA_TASKS.into_iter().enumerate() {
        let t = registry.get(id).expect("registered");
        aux_train.push(para_split(&vocab, cfg, t, class, Split::Train, cfg.aux_train));
        aux_val.push(para_split(&vocab, cfg, t, class, Split::Validation, cfg.aux_val));
    }
    SyntheticBenchmark {
        registry,
        main_train,
        main_val,
        main_test,
        aux_train,
        aux_val,
    }
}

const LATIN_WORDS: &[&str] = &[
    "the", "a", "river", "market", "quietly", "report", "seven", "green", "engineer", "walked", "city", "never", "book",
    "under", "bright", "music", "children", "storm", "paper", "old", "train", "window", "said", "cold", "garden",
];
const HANGUL_WORDS: &[&str] = &[
    "나는", "학교에", "갔다", "오늘", "날씨가", "좋다", "그", "사람은", "책을", "읽었다", "비가", "온다", "우리는", "집으로",
    "돌아왔다", "작은", "고양이가", "잔다", "회의는", "끝났다",
];

/// `n` sentence pairs for `task`, mixing Latin-script and Hangul
/// sentences, with gold labels drawn uniformly from the task's labels.
pub fn pair_fixture(task: &TaskSpec, n: usize, seed: u64) -> Result<Dataset, CorpusError> {
    let mut rng = Rng::derived(seed, "synthetic:pair-fixture");
    let sentence = |rng: &mut Rng| {
        let words = if rng.below(3) == 0 { HANGUL_WORDS } else { LATIN_WORDS };
        let len = 2 + rng.below(8);
        (0..len).map(|_| words[rng.below(words.len())]).collect::<Vec<_>>().join(" ")
    };
    let examples = (0..n)
        .map(|i| {
            let a = sentence(&mut rng);
            let b = sentence(&mut rng);
            let gold = task.labels[rng.below(task.labels.len())].clone();
            Example::new(i.to_string(), a, b, Some(gold)).expect("generated text is valid")
        })
        .collect();
    Dataset::new(task.clone(), Split::Test, examples)
}
