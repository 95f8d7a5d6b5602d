//! Indicator-tagged rendering and the two meaning-preserving perturbations.
//!
//! Every sentence is prefixed with its task's sentence-type indicator. The
//! `Reverse` perturbation swaps the two tagged sentences (the indicators move
//! with them), and `Signal` swaps the `L: ` decoration for `[L] `. The
//! sentence text itself is never touched, which is what makes both
//! perturbations meaning-preserving.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Example, TaskSpec};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PerturbError {
    #[error("task `{0}` has no seq2seq prefix")]
    NoSeq2SeqPrefix(String),
    #[error("no indicator decoration recognised in `{0}`")]
    UnrecognizedDecoration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndicatorStyle {
    /// `L: `
    Colon,
    /// `[L] `
    Bracket,
}

impl IndicatorStyle {
    pub fn decorate(self, label: &str) -> String {
        match self {
            IndicatorStyle::Colon => format!("{label}: "),
            IndicatorStyle::Bracket => format!("[{label}] "),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perturbation {
    Original,
    Reverse,
    Signal,
}

impl Perturbation {
    pub const ALL: [Perturbation; 3] = [Perturbation::Original, Perturbation::Reverse, Perturbation::Signal];

    pub fn style(self) -> IndicatorStyle {
        match self {
            Perturbation::Signal => IndicatorStyle::Bracket,
            _ => IndicatorStyle::Colon,
        }
    }

    pub fn swaps_order(self) -> bool {
        self == Perturbation::Reverse
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Perturbation::Original => "original",
            Perturbation::Reverse => "reverse",
            Perturbation::Signal => "signal",
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Perturbation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(Perturbation::Original),
            "reverse" => Ok(Perturbation::Reverse),
            "signal" => Ok(Perturbation::Signal),
            other => Err(format!("unknown perturbation `{other}`")),
        }
    }
}

/// A tagged sentence pair ready to send to a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedInput {
    pub example_id: String,
    pub perturbation: Perturbation,
    pub segment_a: String,
    pub segment_b: String,
    /// `segment_a + " " + segment_b`
    pub joined: String,
}

impl RenderedInput {
    fn from_segments(example_id: &str, perturbation: Perturbation, segment_a: String, segment_b: String) -> Self {
        let joined = format!("{segment_a} {segment_b}");
        RenderedInput {
            example_id: example_id.to_string(),
            perturbation,
            segment_a,
            segment_b,
            joined,
        }
    }

    /// Swap the two segments, keeping each segment's decoration.
    pub fn swapped(&self) -> RenderedInput {
        let perturbation = match self.perturbation {
            Perturbation::Original => Perturbation::Reverse,
            Perturbation::Reverse => Perturbation::Original,
            Perturbation::Signal => Perturbation::Signal,
        };
        Self::from_segments(&self.example_id, perturbation, self.segment_b.clone(), self.segment_a.clone())
    }
}

pub fn render(example: &Example, task: &TaskSpec, perturbation: Perturbation) -> RenderedInput {
    let style = perturbation.style();
    let a = format!("{}{}", style.decorate(&task.indicator_a), example.sentence_a);
    let b = format!("{}{}", style.decorate(&task.indicator_b), example.sentence_b);
    let (first, second) = if perturbation.swaps_order() { (b, a) } else { (a, b) };
    RenderedInput::from_segments(&example.id, perturbation, first, second)
}

/// Single-string form for text-to-text models: `"{prefix} {a}: {sa} {b}: {sb}"`
/// with lowercased indicators.
pub fn render_seq2seq(example: &Example, task: &TaskSpec, perturbation: Perturbation) -> Result<String, PerturbError> {
    seq2seq_text(
        task,
        perturbation,
        (&task.indicator_a, &example.sentence_a),
        (&task.indicator_b, &example.sentence_b),
    )
}

/// The seq2seq string for an already rendered pair. Equal to
/// [`render_seq2seq`] on the source example.
pub fn seq2seq_from_rendered(rendered: &RenderedInput, task: &TaskSpec) -> Result<String, PerturbError> {
    let first = strip_segment(&rendered.segment_a, task)?;
    let second = strip_segment(&rendered.segment_b, task)?;
    let label = |which: Which| match which {
        Which::A => task.indicator_a.as_str(),
        Which::B => task.indicator_b.as_str(),
    };
    let prefix = task
        .seq2seq_prefix
        .as_deref()
        .ok_or_else(|| PerturbError::NoSeq2SeqPrefix(task.task_id.clone()))?;
    let block = |seg: &Stripped<'_>| {
        format!(
            "{}{}",
            seg.style.decorate(&label(seg.which).to_lowercase()),
            seg.sentence
        )
    };
    Ok(format!("{prefix} {} {}", block(&first), block(&second)))
}

fn seq2seq_text(
    task: &TaskSpec,
    perturbation: Perturbation,
    a: (&str, &str),
    b: (&str, &str),
) -> Result<String, PerturbError> {
    let prefix = task
        .seq2seq_prefix
        .as_deref()
        .ok_or_else(|| PerturbError::NoSeq2SeqPrefix(task.task_id.clone()))?;
    let style = perturbation.style();
    let block = |(label, sentence): (&str, &str)| format!("{}{}", style.decorate(&label.to_lowercase()), sentence);
    let (first, second) = if perturbation.swaps_order() { (b, a) } else { (a, b) };
    Ok(format!("{prefix} {} {}", block(first), block(second)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    A,
    B,
}

/// A segment split into its decoration and the verbatim sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stripped<'s> {
    pub which: Which,
    pub style: IndicatorStyle,
    pub sentence: &'s str,
}

/// Remove the indicator decoration from one rendered segment.
pub fn strip_segment<'s>(segment: &'s str, task: &TaskSpec) -> Result<Stripped<'s>, PerturbError> {
    strip_with(segment, &task.indicator_a, &task.indicator_b)
        .ok_or_else(|| PerturbError::UnrecognizedDecoration(segment.to_string()))
}

fn strip_with<'s>(segment: &'s str, a: &str, b: &str) -> Option<Stripped<'s>> {
    for style in [IndicatorStyle::Colon, IndicatorStyle::Bracket] {
        for (which, label) in [(Which::A, a), (Which::B, b)] {
            if let Some(rest) = segment.strip_prefix(style.decorate(label).as_str()) {
                return Some(Stripped {
                    which,
                    style,
                    sentence: rest,
                });
            }
        }
    }
    None
}

/// The two sentences of a rendered pair, in segment order.
pub fn strip_indicators(rendered: &RenderedInput, task: &TaskSpec) -> Result<(String, String), PerturbError> {
    let a = strip_segment(&rendered.segment_a, task)?;
    let b = strip_segment(&rendered.segment_b, task)?;
    Ok((a.sentence.to_string(), b.sentence.to_string()))
}

/// The two sentences of a seq2seq string, in textual order.
///
/// The second block is located at the first occurrence of its decoration
/// after the first block, so a first sentence that itself contains the text
/// `" sentence2: "` (say) is split early.
pub fn strip_seq2seq(text: &str, task: &TaskSpec) -> Result<(String, String), PerturbError> {
    let unrecognized = || PerturbError::UnrecognizedDecoration(text.to_string());
    let prefix = task
        .seq2seq_prefix
        .as_deref()
        .ok_or_else(|| PerturbError::NoSeq2SeqPrefix(task.task_id.clone()))?;
    let body = text
        .strip_prefix(prefix)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(unrecognized)?;
    let (a, b) = (task.indicator_a.to_lowercase(), task.indicator_b.to_lowercase());
    let first = strip_with(body, &a, &b).ok_or_else(unrecognized)?;
    let other = match first.which {
        Which::A => &b,
        Which::B => &a,
    };
    let marker = format!(" {}", first.style.decorate(other));
    let cut = first.sentence.find(&marker).ok_or_else(unrecognized)?;
    Ok((
        first.sentence[..cut].to_string(),
        first.sentence[cut + marker.len()..].to_string(),
    ))
}
