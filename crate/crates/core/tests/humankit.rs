use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::PathBuf;

use calum_core::humankit::{build_packet, read_key, read_responses, score_responses, HumanKitError, PACKET_SIZE};
use calum_core::perturb::Perturbation;
use calum_core::synthetic::pair_fixture;
use calum_core::{Dataset, TaskRegistry, TaskSpec};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/humankit")
}

fn rte() -> TaskSpec {
    TaskRegistry::builtin().get("rte").unwrap().clone()
}

fn val() -> Dataset {
    pair_fixture(&rte(), 100, 1).unwrap()
}

const BOTH: [Perturbation; 2] = [Perturbation::Reverse, Perturbation::Signal];

#[test]
fn packet_bytes_are_frozen() {
    let p = build_packet(&rte(), &val(), &BOTH, "ann1", 11).unwrap();
    let (mut items, mut key) = (Vec::new(), Vec::new());
    p.write_items(&mut items).unwrap();
    p.write_key(&mut key).unwrap();
    assert_eq!(String::from_utf8(items).unwrap(), fs::read_to_string(dir().join("packet.csv")).unwrap());
    assert_eq!(String::from_utf8(key).unwrap(), fs::read_to_string(dir().join("key.csv")).unwrap());
}

#[test]
fn thirty_sources_and_no_gold_in_packet() {
    for seed in 0..20 {
        let p = build_packet(&rte(), &val(), &BOTH, "a", seed).unwrap();
        let sources: BTreeSet<_> = p.answer_key.iter().map(|k| k.source_example_id.as_str()).collect();
        assert_eq!(sources.len(), PACKET_SIZE);
        assert_eq!(p.items.len(), PACKET_SIZE * 3);
        let mut bytes = Vec::new();
        p.write_items(&mut bytes).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        for label in &rte().labels {
            assert!(!text.contains(label.as_str()), "seed {seed}");
        }
        assert_eq!(text.lines().next(), Some("item_id,segment_a,segment_b"));
    }
}

#[test]
fn different_seeds_give_different_packets() {
    let a = build_packet(&rte(), &val(), &BOTH, "a", 1).unwrap();
    let b = build_packet(&rte(), &val(), &BOTH, "a", 2).unwrap();
    assert_ne!(a.items, b.items);
}

// Frozen from tests/oracles/humankit_score.py.
#[test]
fn scoring_matches_counting_oracle() {
    let key = read_key(fs::File::open(dir().join("key.csv")).unwrap()).unwrap();
    let responses = read_responses(fs::File::open(dir().join("responses.csv")).unwrap()).unwrap();
    let m = score_responses(&rte(), "ann1", &key, &responses).unwrap();
    assert_eq!(m.model_name, "human:ann1");
    assert_eq!(m.acc_val, 0.7);
    assert_eq!(m.c_reverse, 0.6333333333333333);
    assert_eq!(m.c_signal, 0.7);
}

#[test]
fn scoring_rejects_incomplete_input() {
    let key = read_key(fs::File::open(dir().join("key.csv")).unwrap()).unwrap();
    let mut responses = read_responses(fs::File::open(dir().join("responses.csv")).unwrap()).unwrap();
    let dropped = responses.pop().unwrap();
    assert!(matches!(
        score_responses(&rte(), "ann1", &key, &responses),
        Err(HumanKitError::MissingResponse(id)) if id == dropped.0
    ));

    responses.push((dropped.0.clone(), "perhaps".into()));
    assert!(matches!(score_responses(&rte(), "ann1", &key, &responses), Err(HumanKitError::BadLabel { .. })));

    let only_reverse: Vec<_> = key.iter().filter(|k| k.perturbation != Perturbation::Signal).cloned().collect();
    let answers: HashMap<_, _> = read_responses(fs::File::open(dir().join("responses.csv")).unwrap())
        .unwrap()
        .into_iter()
        .collect();
    let subset: Vec<_> = only_reverse.iter().map(|k| (k.item_id.clone(), answers[&k.item_id].clone())).collect();
    assert!(matches!(
        score_responses(&rte(), "ann1", &only_reverse, &subset),
        Err(HumanKitError::IncompletePacket(Perturbation::Signal))
    ));
}
