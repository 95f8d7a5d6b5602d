//! Hash-based stand-in predictors with known consistency behaviour.

use crate::corpus::TaskSpec;
use crate::fnv1a64;
use crate::perturb::{strip_indicators, RenderedInput};

use super::{Backend, BackendError, PredictionOutcome};

const SEP: u8 = 0x1f;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubKind {
    /// Hashes the indicator-stripped sentences in sorted order, so its
    /// prediction survives both perturbations.
    Symmetric,
    /// Hashes the full rendered text, decoration and order included.
    OrderSensitive,
}

#[derive(Debug, Clone, Copy)]
pub struct StubBackend {
    pub kind: StubKind,
    pub seed: u64,
}

impl StubBackend {
    pub fn new(kind: StubKind, seed: u64) -> Self {
        StubBackend { kind, seed }
    }

    pub fn predict(&self, task: &TaskSpec, input: &RenderedInput) -> Result<PredictionOutcome, BackendError> {
        let label = match self.kind {
            StubKind::Symmetric => {
                let (a, b) = strip_indicators(input, task)?;
                symmetric_label(task, self.seed, &a, &b)
            }
            StubKind::OrderSensitive => order_sensitive_label(task, self.seed, &input.joined),
        };
        Ok(PredictionOutcome::Label(label.to_string()))
    }
}

impl Backend for StubBackend {
    fn classify_batch(&self, task: &TaskSpec, inputs: &[RenderedInput]) -> Result<Vec<PredictionOutcome>, BackendError> {
        inputs.iter().map(|i| self.predict(task, i)).collect()
    }
}

/// Maps the hash onto a label index by multiply-shift, which reads the high
/// bits. FNV-1a's low bit is only the parity of the input bytes, so `h % 2`
/// would ignore order entirely.
fn pick(task: &TaskSpec, hash: u64) -> &str {
    let n = task.labels.len() as u128;
    &task.labels[((u128::from(hash) * n) >> 64) as usize]
}

/// Label picked from the FNV-1a-64 of
/// `min(a, b) 0x1F max(a, b) 0x1F seed_le`.
pub fn symmetric_label<'t>(task: &'t TaskSpec, seed: u64, a: &str, b: &str) -> &'t str {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let mut bytes = Vec::with_capacity(lo.len() + hi.len() + 10);
    bytes.extend_from_slice(lo.as_bytes());
    bytes.push(SEP);
    bytes.extend_from_slice(hi.as_bytes());
    bytes.push(SEP);
    bytes.extend_from_slice(&seed.to_le_bytes());
    pick(task, fnv1a64(&bytes))
}

/// Label picked from the FNV-1a-64 of `text 0x1F seed_le`.
pub fn order_sensitive_label<'t>(task: &'t TaskSpec, seed: u64, text: &str) -> &'t str {
    let mut bytes = Vec::with_capacity(text.len() + 9);
    bytes.extend_from_slice(text.as_bytes());
    bytes.push(SEP);
    bytes.extend_from_slice(&seed.to_le_bytes());
    pick(task, fnv1a64(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Example, TaskRegistry};
    use crate::perturb::{render, Perturbation};

    fn rte() -> TaskSpec {
        TaskRegistry::builtin().get("rte").unwrap().clone()
    }

    #[test]
    fn symmetric_survives_both_perturbations() {
        let t = rte();
        let stub = StubBackend::new(StubKind::Symmetric, 5);
        for i in 0..50 {
            let e = Example::new("x", format!("first {i}"), format!("second {}", i * 7), None).unwrap();
            let o = stub.predict(&t, &render(&e, &t, Perturbation::Original)).unwrap();
            assert_eq!(o, stub.predict(&t, &render(&e, &t, Perturbation::Reverse)).unwrap());
            assert_eq!(o, stub.predict(&t, &render(&e, &t, Perturbation::Signal)).unwrap());
        }
    }

    #[test]
    fn order_sensitive_is_deterministic() {
        let t = rte();
        let stub = StubBackend::new(StubKind::OrderSensitive, 1);
        let e = Example::new("x", "a", "b", None).unwrap();
        let r = render(&e, &t, Perturbation::Original);
        assert_eq!(stub.predict(&t, &r).unwrap(), stub.predict(&t, &r).unwrap());
    }

    // Frozen from tests/oracles/stub_labels.py.
    #[test]
    fn fixture_labels() {
        let t = rte();
        for (seed, sym, ab, ba) in GOLDEN {
            assert_eq!(symmetric_label(&t, seed, "a", "b"), sym, "seed {seed}");
            assert_eq!(symmetric_label(&t, seed, "b", "a"), sym, "seed {seed}");
            assert_eq!(order_sensitive_label(&t, seed, "Sentence1: a Sentence2: b"), ab, "seed {seed}");
            assert_eq!(order_sensitive_label(&t, seed, "Sentence2: b Sentence1: a"), ba, "seed {seed}");
        }
    }

    const GOLDEN: [(u64, &str, &str, &str); 4] = [
        (0, "not_entailment", "not_entailment", "not_entailment"),
        (1, "not_entailment", "not_entailment", "entailment"),
        (2, "not_entailment", "entailment", "entailment"),
        (3, "not_entailment", "entailment", "entailment"),
    ];
}
