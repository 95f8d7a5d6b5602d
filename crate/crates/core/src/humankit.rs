//! Annotation packets for human baselines and scoring of the answers.
//!
//! A packet holds 30 validation examples, each rendered once as ORIGINAL
//! and once per requested perturbation. Items are shuffled so that two
//! renderings of the same example are at least [`MIN_SEPARATION`]
//! positions apart. Gold labels live only in the separate answer key.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{sample_split, CorpusError, Dataset, TaskSpec};
use crate::metrics::RunMetrics;
use crate::perturb::{render, Perturbation};
use crate::rng::Rng;

pub const PACKET_SIZE: usize = 30;
pub const MIN_SEPARATION: usize = 5;
pub const PACKET_FILE: &str = "packet.csv";
pub const KEY_FILE: &str = "key.csv";

#[derive(Debug, Error)]
pub enum HumanKitError {
    #[error("dataset has {len} examples; a packet needs {needed}")]
    DatasetTooSmall { len: usize, needed: usize },
    #[error("perturbation list must be non-empty and must not contain `original`")]
    BadPerturbations,
    #[error("could not place items {MIN_SEPARATION} apart")]
    Scheduling,
    #[error("no response for item `{0}`")]
    MissingResponse(String),
    #[error("response `{label}` for item `{item}` is not a label of the task")]
    BadLabel { item: String, label: String },
    #[error("response for unknown item `{0}`")]
    UnknownItem(String),
    #[error("duplicate entry for item `{0}`")]
    DuplicateItem(String),
    #[error("answer key has no `{0}` items to score")]
    IncompletePacket(Perturbation),
    #[error("malformed answer key: {0}")]
    BadKey(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What the annotator sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketItem {
    pub item_id: String,
    pub segment_a: String,
    pub segment_b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEntry {
    pub item_id: String,
    pub gold: String,
    pub source_example_id: String,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub packet_id: String,
    pub annotator_id: String,
    pub task_id: String,
    pub items: Vec<PacketItem>,
    /// Parallel to `items`. Never written to the packet file.
    pub answer_key: Vec<KeyEntry>,
}

/// Order of source indices: each of `n_sources` appears `copies` times and
/// equal indices are at least `MIN_SEPARATION` apart. Greedy: at each
/// position take an eligible source with the most copies left, breaking
/// ties at random.
fn schedule(n_sources: usize, copies: usize, rng: &mut Rng) -> Result<Vec<usize>, HumanKitError> {
    let mut left = vec![copies; n_sources];
    let mut last: Vec<Option<usize>> = vec![None; n_sources];
    let total = n_sources * copies;
    let mut order = Vec::with_capacity(total);
    for pos in 0..total {
        let eligible: Vec<usize> = (0..n_sources)
            .filter(|&s| left[s] > 0 && last[s].map_or(true, |p| pos - p >= MIN_SEPARATION))
            .collect();
        let most = eligible.iter().map(|&s| left[s]).max().ok_or(HumanKitError::Scheduling)?;
        let best: Vec<usize> = eligible.into_iter().filter(|&s| left[s] == most).collect();
        let s = best[rng.below(best.len())];
        left[s] -= 1;
        last[s] = Some(pos);
        order.push(s);
    }
    Ok(order)
}

pub fn build_packet(
    task: &TaskSpec,
    val: &Dataset,
    perturbations: &[Perturbation],
    annotator_id: &str,
    seed: u64,
) -> Result<Packet, HumanKitError> {
    let unique: HashSet<Perturbation> = perturbations.iter().copied().collect();
    if perturbations.is_empty() || unique.contains(&Perturbation::Original) || unique.len() != perturbations.len() {
        return Err(HumanKitError::BadPerturbations);
    }
    if val.len() < PACKET_SIZE {
        return Err(HumanKitError::DatasetTooSmall {
            len: val.len(),
            needed: PACKET_SIZE,
        });
    }
    let sources = sample_split(val, PACKET_SIZE, seed)?;
    let renderings: Vec<Perturbation> = std::iter::once(Perturbation::Original).chain(perturbations.iter().copied()).collect();

    let mut rng = Rng::derived(seed, "humankit:order");
    let order = schedule(PACKET_SIZE, renderings.len(), &mut rng)?;
    // Which rendering each source shows at each of its turns.
    let mut pending: Vec<Vec<Perturbation>> = (0..PACKET_SIZE)
        .map(|_| {
            let mut r = renderings.clone();
            rng.shuffle(&mut r);
            r
        })
        .collect();

    let packet_id = format!("{}-{annotator_id}-{seed}", task.task_id);
    let mut items = Vec::with_capacity(order.len());
    let mut answer_key = Vec::with_capacity(order.len());
    for (pos, s) in order.into_iter().enumerate() {
        let p = pending[s].pop().expect("one rendering per scheduled turn");
        let ex = &sources.examples()[s];
        let r = render(ex, task, p);
        let item_id = format!("{annotator_id}-{:03}", pos + 1);
        items.push(PacketItem {
            item_id: item_id.clone(),
            segment_a: r.segment_a,
            segment_b: r.segment_b,
        });
        answer_key.push(KeyEntry {
            item_id,
            gold: ex.gold.clone().expect("validation examples carry gold labels"),
            source_example_id: ex.id.clone(),
            perturbation: p,
        });
    }
    Ok(Packet {
        packet_id,
        annotator_id: annotator_id.to_string(),
        task_id: task.task_id.clone(),
        items,
        answer_key,
    })
}

fn write_records<T: Serialize>(out: impl Write, rows: &[T]) -> Result<(), HumanKitError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl Packet {
    pub fn write_items(&self, out: impl Write) -> Result<(), HumanKitError> {
        write_records(out, &self.items)
    }

    pub fn write_key(&self, out: impl Write) -> Result<(), HumanKitError> {
        write_records(out, &self.answer_key)
    }

    /// Writes [`PACKET_FILE`] and [`KEY_FILE`] into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), HumanKitError> {
        std::fs::create_dir_all(dir)?;
        self.write_items(std::fs::File::create(dir.join(PACKET_FILE))?)?;
        self.write_key(std::fs::File::create(dir.join(KEY_FILE))?)?;
        Ok(())
    }
}

pub fn read_key(input: impl Read) -> Result<Vec<KeyEntry>, HumanKitError> {
    let mut rows = Vec::new();
    for r in csv::Reader::from_reader(input).deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

/// Reads `item_id,label` rows.
pub fn read_responses(input: impl Read) -> Result<Vec<(String, String)>, HumanKitError> {
    #[derive(Deserialize)]
    struct Row {
        item_id: String,
        label: String,
    }
    let mut rows = Vec::new();
    for r in csv::Reader::from_reader(input).deserialize() {
        let r: Row = r?;
        rows.push((r.item_id, r.label));
    }
    Ok(rows)
}

/// Accuracy from ORIGINAL items against the key; C_R and C_S from the
/// annotator's agreement between the ORIGINAL and perturbed answers for
/// each source example. A perturbation absent from the key is an error.
pub fn score_responses(
    task: &TaskSpec,
    annotator_id: &str,
    key: &[KeyEntry],
    responses: &[(String, String)],
) -> Result<RunMetrics, HumanKitError> {
    let mut answers: HashMap<&str, &str> = HashMap::with_capacity(responses.len());
    let known: HashSet<&str> = key.iter().map(|k| k.item_id.as_str()).collect();
    for (item, label) in responses {
        if !known.contains(item.as_str()) {
            return Err(HumanKitError::UnknownItem(item.clone()));
        }
        let resolved = task.resolve_label(label).ok_or_else(|| HumanKitError::BadLabel {
            item: item.clone(),
            label: label.clone(),
        })?;
        if answers.insert(item, resolved).is_some() {
            return Err(HumanKitError::DuplicateItem(item.clone()));
        }
    }

    // source -> perturbation -> answer
    let mut by_source: BTreeMap<&str, HashMap<Perturbation, &str>> = BTreeMap::new();
    let mut gold: HashMap<&str, &str> = HashMap::new();
    for k in key {
        let answer = *answers
            .get(k.item_id.as_str())
            .ok_or_else(|| HumanKitError::MissingResponse(k.item_id.clone()))?;
        if by_source.entry(&k.source_example_id).or_default().insert(k.perturbation, answer).is_some() {
            return Err(HumanKitError::BadKey(format!(
                "`{}` has two {} items",
                k.source_example_id, k.perturbation
            )));
        }
        if k.perturbation == Perturbation::Original {
            gold.insert(&k.source_example_id, &k.gold);
        }
    }
    let n = by_source.len();
    let mut correct = 0usize;
    let mut agree = [0usize; 2];
    for (source, answers) in &by_source {
        let orig = *answers
            .get(&Perturbation::Original)
            .ok_or_else(|| HumanKitError::BadKey(format!("`{source}` has no original item")))?;
        if task.resolve_label(gold[source]) == Some(orig) {
            correct += 1;
        }
        for (slot, p) in [Perturbation::Reverse, Perturbation::Signal].into_iter().enumerate() {
            let other = answers.get(&p).ok_or(HumanKitError::IncompletePacket(p))?;
            if *other == orig {
                agree[slot] += 1;
            }
        }
    }
    if n == 0 {
        return Err(HumanKitError::IncompletePacket(Perturbation::Original));
    }
    let frac = |k: usize| k as f64 / n as f64;
    Ok(RunMetrics {
        model_name: format!("human:{annotator_id}"),
        task_id: task.task_id.clone(),
        run_index: 0,
        seed: None,
        acc_val: frac(correct),
        c_reverse: frac(agree[0]),
        c_signal: frac(agree[1]),
        n_unparseable: Perturbation::ALL.iter().map(|p| (p.as_str().to_string(), 0)).collect(),
    })
}
