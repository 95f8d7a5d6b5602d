use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fnv1a64;
use crate::perturb::RenderedInput;

pub const DEFAULT_BUCKETS: usize = 1 << 18;

/// A sparse, index-sorted feature vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// N-grams over the joined string, so the bigram spanning the two
    /// segments is included.
    #[default]
    Joined,
    /// Counts from each segment separately, summed. Insensitive to segment
    /// order; used to build a model that is consistent by construction.
    SegmentSum,
}

/// Hashed unigram + bigram counts over whitespace tokens, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Featurizer {
    pub buckets: usize,
    pub mode: FeatureMode,
}

impl Default for Featurizer {
    fn default() -> Self {
        Featurizer {
            buckets: DEFAULT_BUCKETS,
            mode: FeatureMode::Joined,
        }
    }
}

impl Featurizer {
    pub fn new(buckets: usize, mode: FeatureMode) -> Self {
        assert!(buckets > 0 && buckets <= u32::MAX as usize);
        Featurizer { buckets, mode }
    }

    pub fn featurize(&self, input: &RenderedInput) -> SparseVec {
        let mut counts = BTreeMap::new();
        match self.mode {
            FeatureMode::Joined => self.count(&input.joined, &mut counts),
            FeatureMode::SegmentSum => {
                self.count(&input.segment_a, &mut counts);
                self.count(&input.segment_b, &mut counts);
            }
        }
        normalize(counts)
    }

    pub fn featurize_text(&self, text: &str) -> SparseVec {
        let mut counts = BTreeMap::new();
        self.count(text, &mut counts);
        normalize(counts)
    }

    fn bucket(&self, bytes: &[u8]) -> u32 {
        (fnv1a64(bytes) % self.buckets as u64) as u32
    }

    fn count(&self, text: &str, counts: &mut BTreeMap<u32, f64>) {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        for t in &tokens {
            *counts.entry(self.bucket(t.as_bytes())).or_default() += 1.0;
        }
        let mut buf = Vec::new();
        for pair in tokens.windows(2) {
            buf.clear();
            buf.extend_from_slice(pair[0].as_bytes());
            buf.push(b' ');
            buf.extend_from_slice(pair[1].as_bytes());
            *counts.entry(self.bucket(&buf)).or_default() += 1.0;
        }
    }
}

fn normalize(counts: BTreeMap<u32, f64>) -> SparseVec {
    let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return SparseVec::default();
    }
    let (indices, values) = counts.into_iter().map(|(i, c)| (i, c / norm)).unzip();
    SparseVec { indices, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Example, TaskRegistry};
    use crate::perturb::{render, Perturbation};

    #[test]
    fn unit_norm_and_sorted() {
        let f = Featurizer::default();
        let v = f.featurize_text("the cat sat on the mat");
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!(v.indices.windows(2).all(|w| w[0] < w[1]));
        assert!(v.indices.iter().all(|&i| (i as usize) < DEFAULT_BUCKETS));
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let v = Featurizer::default().featurize_text("   ");
        assert!(v.is_empty());
        assert_eq!(v.norm(), 0.0);
    }

    #[test]
    fn counts_before_normalizing() {
        // "a a": unigram a twice, bigram "a a" once (no collision in 2^18)
        let v = Featurizer::default().featurize_text("a a");
        let mut vals = v.values.clone();
        vals.sort_by(f64::total_cmp);
        let n = 5f64.sqrt();
        assert!((vals[0] - 1.0 / n).abs() < 1e-15);
        assert!((vals[1] - 2.0 / n).abs() < 1e-15);
    }

    #[test]
    fn bucket_is_fnv_mod() {
        let f = Featurizer::new(1000, FeatureMode::Joined);
        let v = f.featurize_text("x");
        assert_eq!(v.indices, [(fnv1a64(b"x") % 1000) as u32]);
    }

    #[test]
    fn segment_sum_ignores_order() {
        let t = TaskRegistry::builtin().get("mnli").unwrap().clone();
        let e = Example::new("1", "it rains", "it is wet", None).unwrap();
        let seg = Featurizer::new(DEFAULT_BUCKETS, FeatureMode::SegmentSum);
        let o = seg.featurize(&render(&e, &t, Perturbation::Original));
        let r = seg.featurize(&render(&e, &t, Perturbation::Reverse));
        assert_eq!(o, r);
        let joined = Featurizer::default();
        assert_ne!(
            joined.featurize(&render(&e, &t, Perturbation::Original)),
            joined.featurize(&render(&e, &t, Perturbation::Reverse))
        );
    }
}
