use std::sync::Arc;

use calum_core::backend::{Backend, BackendError, BackendFactory};
use calum_core::corpus::{Dataset, Example, Split, TaskConfig, TaskRegistry, TaskSpec, TaskType};
use calum_core::metrics::{evaluate_model, EvalOptions};
use calum_core::perturb::{render, Perturbation};
use calum_core::refmodel::*;
use calum_core::rng::Rng;

fn two_class_task() -> TaskSpec {
    TaskRegistry::builtin().get("rte").unwrap().clone()
}

fn three_class_task() -> TaskSpec {
    TaskRegistry::builtin().get("mnli").unwrap().clone()
}

/// Class `c` sentences use only words from vocabulary `c`.
fn separable(task: &TaskSpec, split: Split, n: usize, seed: u64) -> Dataset {
    let vocab: Vec<Vec<String>> = (0..task.labels.len())
        .map(|c| (0..6).map(|i| format!("w{c}x{i}")).collect())
        .collect();
    let mut rng = Rng::new(seed);
    let ex = (0..n)
        .map(|i| {
            let c = i % task.labels.len();
            let mut sent = || (0..4).map(|_| vocab[c][rng.below(6)].as_str()).collect::<Vec<_>>().join(" ");
            let (a, b) = (sent(), sent());
            Example::new(format!("{split}{i}"), a, b, Some(task.labels[c].clone())).unwrap()
        })
        .collect();
    Dataset::new(task.clone(), split, ex).unwrap()
}

/// Overlapping vocabularies with a noisy majority rule.
fn three_class_toy(split: Split, n: usize, seed: u64) -> Dataset {
    let task = three_class_task();
    let mut rng = Rng::new(seed);
    let ex = (0..n)
        .map(|i| {
            let c = rng.below(3);
            let words: Vec<String> = (0..8)
                .map(|_| {
                    let cls = if rng.unit_f64() < 0.55 { c } else { rng.below(3) };
                    format!("t{cls}v{}", rng.below(10))
                })
                .collect();
            let (a, b) = words.split_at(4);
            Example::new(format!("{split}{i}"), a.join(" "), b.join(" "), Some(task.labels[c].clone())).unwrap()
        })
        .collect();
    Dataset::new(task, split, ex).unwrap()
}

fn small_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        batch_size: 8,
        buckets: 1 << 12,
        encoder_dim: 16,
        ..Default::default()
    }
}

fn model_bytes(m: &Model) -> Vec<u8> {
    let mut buf = Vec::new();
    m.write_to(&mut buf).unwrap();
    buf
}

fn random_sparse(rng: &mut Rng, buckets: usize) -> SparseVec {
    let nnz = 1 + rng.below(5);
    let mut idx: Vec<u32> = rng.sample_indices(buckets, nnz).into_iter().map(|i| i as u32).collect();
    idx.sort_unstable();
    let values = idx.iter().map(|_| rng.symmetric(1.0)).collect();
    SparseVec { indices: idx, values }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn gradients_match_central_differences() {
    const STEP: f64 = 1e-5;
    let mut rng = Rng::new(2024);
    let mut checked = 0;
    let mut instance = 0u64;
    while checked < 50 {
        instance += 1;
        let buckets = 32;
        let dim = 1 + rng.below(5);
        let task = if rng.below(2) == 0 { two_class_task() } else { three_class_task() };
        let mut model = Model::new(Featurizer::new(buckets, FeatureMode::Joined), dim, instance, &[&task]);
        // Larger weights than the default init so every parameter matters.
        for r in 0..buckets {
            for j in 0..dim {
                model.encoder.set_weight(r, j, rng.symmetric(1.0));
            }
        }
        let n = 1 + rng.below(4);
        let xs: Vec<SparseVec> = (0..n).map(|_| random_sparse(&mut rng, buckets)).collect();
        let ys: Vec<usize> = (0..n).map(|_| rng.below(task.labels.len())).collect();
        let batch: Vec<(&SparseVec, usize)> = xs.iter().zip(ys.iter().copied()).collect();
        // Skip instances with a pre-activation near the ReLU kink.
        if xs.iter().any(|x| model.encoder.pre_activation(x).iter().any(|z| z.abs() < 1e-3)) {
            continue;
        }
        let id = task.task_id.as_str();
        let (_, g) = model.gradients(id, &batch).unwrap();

        let fd = |m: &mut Model, get: &dyn Fn(&Model) -> f64, set: &dyn Fn(&mut Model, f64)| {
            let w = get(m);
            set(m, w + STEP);
            let up = m.loss(id, &batch).unwrap();
            set(m, w - STEP);
            let down = m.loss(id, &batch).unwrap();
            set(m, w);
            (up - down) / (2.0 * STEP)
        };
        for (&row, grad_row) in &g.encoder {
            for j in 0..dim {
                let r = row as usize;
                let num = fd(&mut model, &|m| m.encoder.weight(r, j), &|m, v| m.encoder.set_weight(r, j, v));
                assert!(rel_err(grad_row[j], num) < 1e-4, "encoder ({r},{j}): {} vs {num}", grad_row[j]);
            }
        }
        for k in 0..g.head_weight.len() {
            let num = fd(&mut model, &|m| m.heads[id].weight[k], &|m, v| m.heads[id].weight[k] = v);
            assert!(rel_err(g.head_weight[k], num) < 1e-4, "head weight {k}");
        }
        for k in 0..g.head_bias.len() {
            let num = fd(&mut model, &|m| m.heads[id].bias[k], &|m, v| m.heads[id].bias[k] = v);
            assert!(rel_err(g.head_bias[k], num) < 1e-4, "head bias {k}");
        }
        checked += 1;
    }
}

#[test]
fn training_is_bit_deterministic() {
    let task = three_class_task();
    let train = three_class_toy(Split::Train, 120, 1);
    let val = three_class_toy(Split::Validation, 40, 2);
    let a = train_single(&train, &val, &small_cfg(7)).unwrap();
    let b = train_single(&train, &val, &small_cfg(7)).unwrap();
    assert_eq!(model_bytes(&a.model), model_bytes(&b.model));
    assert_eq!(a.report.step_losses, b.report.step_losses);
    let c = train_single(&train, &val, &small_cfg(8)).unwrap();
    assert_ne!(model_bytes(&a.model), model_bytes(&c.model));
    assert!(a.model.heads.contains_key(&task.task_id));
}

#[test]
fn step_leaves_other_heads_untouched() {
    let (rte, mnli) = (two_class_task(), three_class_task());
    let mut model = Model::new(Featurizer::new(256, FeatureMode::Joined), 8, 3, &[&rte, &mnli]);
    let data = separable(&rte, Split::Train, 16, 0);
    let xs: Vec<SparseVec> = data
        .examples()
        .iter()
        .map(|e| model.featurizer.featurize(&render(e, &rte, Perturbation::Original)))
        .collect();
    let batch: Vec<(&SparseVec, usize)> = xs.iter().zip(data.examples()).map(|(x, e)| (x, rte.label_index(e.gold.as_deref().unwrap()).unwrap())).collect();
    let before_mnli = model.heads["mnli"].clone();
    let before_rte = model.heads["rte"].clone();
    let mut opt = Optimizer::new(1e-3, 1.0);
    for _ in 0..5 {
        opt.step(&mut model, "rte", &batch, 1e-2).unwrap();
    }
    let after = &model.heads["mnli"];
    assert!(after.weight.iter().zip(&before_mnli.weight).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(after.bias.iter().zip(&before_mnli.bias).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_ne!(model.heads["rte"], before_rte);
}

#[test]
fn separable_toy_is_learned() {
    let task = two_class_task();
    let train = separable(&task, Split::Train, 20, 1);
    let val = separable(&task, Split::Validation, 20, 2);
    let out = train_single(&train, &val, &TrainConfig { batch_size: 4, ..small_cfg(0) }).unwrap();
    assert_eq!(out.report.best_val_accuracy, 1.0);
}

#[test]
fn loss_falls_during_first_epoch() {
    let task = two_class_task();
    let train = separable(&task, Split::Train, 20, 1);
    let cfg = TrainConfig { batch_size: 4, ..small_cfg(0) };
    let featurizer = Featurizer::new(cfg.buckets, FeatureMode::Joined);
    let xs: Vec<SparseVec> = train
        .examples()
        .iter()
        .map(|e| featurizer.featurize(&render(e, &task, Perturbation::Original)))
        .collect();
    let all: Vec<(&SparseVec, usize)> = xs.iter().zip(train.examples()).map(|(x, e)| (x, task.label_index(e.gold.as_deref().unwrap()).unwrap())).collect();
    let mut model = Model::new(featurizer, cfg.encoder_dim, cfg.seed, &[&task]);
    let initial = model.loss("rte", &all).unwrap();
    let mut opt = Optimizer::new(cfg.weight_decay, 1.0);
    let mut losses = Vec::new();
    for chunk in all.chunks(cfg.batch_size) {
        opt.step(&mut model, "rte", chunk, cfg.learning_rate).unwrap();
        losses.push(model.loss("rte", &all).unwrap());
    }
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{initial} {losses:?}");
    assert!(*losses.last().unwrap() < initial);
}

fn aux_for(registry: &TaskRegistry, main: &str, mode: MultitaskMode, seed: u64) -> Vec<Dataset> {
    aux_tasks_for(registry, main, mode)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, t)| separable(t, Split::Train, 24, seed + i as u64))
        .collect()
}

#[test]
fn frozen_encoder_makes_aux_tasks_irrelevant() {
    let reg = TaskRegistry::builtin();
    let train = three_class_toy(Split::Train, 90, 3);
    let val = three_class_toy(Split::Validation, 30, 4);
    let test = three_class_toy(Split::Test, 60, 5);
    let cfg = TrainConfig {
        encoder_lr_scale: 0.0,
        ..small_cfg(11)
    };
    let single = train_single(&train, &val, &cfg).unwrap();
    let aux = aux_for(&reg, "mnli", MultitaskMode::Para, 9);
    let multi = train_multitask(&reg, &train, &val, &aux, &cfg, MultitaskMode::Para).unwrap();
    assert_eq!(multi.model.heads.len(), 3);
    let task = &train.task;
    for e in test.examples() {
        for p in Perturbation::ALL {
            let r = render(e, task, p);
            assert_eq!(single.model.predict(task, &r).unwrap(), multi.model.predict(task, &r).unwrap());
        }
    }
    assert_eq!(single.model.heads["mnli"], multi.model.heads["mnli"]);
}

#[test]
fn all_mode_builds_a_head_per_builtin_task() {
    let reg = TaskRegistry::builtin();
    let train = three_class_toy(Split::Train, 40, 3);
    let val = three_class_toy(Split::Validation, 20, 4);
    let aux = aux_for(&reg, "mnli", MultitaskMode::All, 1);
    assert_eq!(aux.len(), 4);
    let out = train_multitask(&reg, &train, &val, &aux, &TrainConfig { epochs: 1, ..small_cfg(0) }, MultitaskMode::All).unwrap();
    let heads: Vec<&str> = out.model.heads.keys().map(String::as_str).collect();
    assert_eq!(heads, ["mnli", "qnli", "rte", "qqp", "mrpc"]);
}

#[test]
fn multitask_rejects_wrong_aux_sets() {
    let reg = TaskRegistry::builtin();
    let train = three_class_toy(Split::Train, 20, 3);
    let val = three_class_toy(Split::Validation, 10, 4);
    let cfg = small_cfg(0);
    let mut aux = aux_for(&reg, "mnli", MultitaskMode::Para, 0);
    aux.pop();
    assert!(matches!(
        train_multitask(&reg, &train, &val, &aux, &cfg, MultitaskMode::Para),
        Err(TrainError::InvalidAuxTasks(_))
    ));
    let mut odd = TaskConfig {
        display_name: None,
        task_type: TaskType::Sts,
        indicator_a: "X".into(),
        indicator_b: "Y".into(),
        labels: vec!["yes".into(), "no".into()],
        fields: Default::default(),
        seq2seq_prefix: None,
        label_aliases: Default::default(),
    };
    odd.display_name = Some("odd".into());
    let stray = separable(&TaskSpec::from_config("odd", odd).unwrap(), Split::Train, 4, 0);
    let mut aux = aux_for(&reg, "mnli", MultitaskMode::Para, 0);
    aux.push(stray);
    assert!(matches!(
        train_multitask(&reg, &train, &val, &aux, &cfg, MultitaskMode::Para),
        Err(TrainError::UnknownTask(t)) if t == "odd"
    ));
}

#[test]
fn empty_splits_are_rejected() {
    let task = two_class_task();
    let empty = Dataset::new(task.clone(), Split::Train, vec![]).unwrap();
    let val = separable(&task, Split::Validation, 4, 0);
    assert!(matches!(train_single(&empty, &val, &small_cfg(0)), Err(TrainError::EmptySplit { .. })));
    let empty_val = Dataset::new(task.clone(), Split::Validation, vec![]).unwrap();
    assert!(matches!(
        train_single(&separable(&task, Split::Train, 4, 0), &empty_val, &small_cfg(0)),
        Err(TrainError::EmptySplit { .. })
    ));
}

#[test]
fn invalid_configs_are_rejected() {
    let task = two_class_task();
    let d = separable(&task, Split::Train, 4, 0);
    for cfg in [
        TrainConfig { epochs: 0, ..small_cfg(0) },
        TrainConfig { learning_rate: -1.0, ..small_cfg(0) },
        TrainConfig { warmup_fraction: 1.0, ..small_cfg(0) },
        TrainConfig { batch_size: 0, ..small_cfg(0) },
    ] {
        assert!(matches!(train_single(&d, &d, &cfg), Err(TrainError::InvalidConfig(_))));
    }
}

// Frozen from the reference training run below.
const GOLDEN_3CLASS_ACCURACY: f64 = 0.9666666666666667;
const GOLDEN_3CLASS_BEST_EPOCH: usize = 1;
const GOLDEN_PREDICTIONS: [&str; 4] = ["contradiction", "neutral", "neutral", "contradiction"];

#[test]
fn three_class_golden_run() {
    let train = three_class_toy(Split::Train, 300, 21);
    let val = three_class_toy(Split::Validation, 60, 22);
    let out = train_single(&train, &val, &small_cfg(0)).unwrap();
    let task = &train.task;
    let preds: Vec<String> = val.examples()[..4]
        .iter()
        .map(|e| out.model.predict(task, &render(e, task, Perturbation::Original)).unwrap().label().unwrap().to_string())
        .collect();
    println!("accuracy {:?} best epoch {} predictions {preds:?}", out.report.best_val_accuracy, out.report.best_epoch);
    assert_eq!(out.report.best_val_accuracy, GOLDEN_3CLASS_ACCURACY);
    assert_eq!(out.report.best_epoch, GOLDEN_3CLASS_BEST_EPOCH);
    assert_eq!(preds, GOLDEN_PREDICTIONS);
}

#[test]
fn saved_model_predicts_identically() {
    let train = three_class_toy(Split::Train, 60, 1);
    let val = three_class_toy(Split::Validation, 30, 2);
    let out = train_single(&train, &val, &TrainConfig { epochs: 2, ..small_cfg(5) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.calm");
    out.model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    let task = &train.task;
    for e in val.examples() {
        for p in Perturbation::ALL {
            let r = render(e, task, p);
            assert_eq!(out.model.predict(task, &r).unwrap(), back.predict(task, &r).unwrap());
        }
    }
    assert_eq!(model_bytes(&back), model_bytes(&out.model));
}

#[test]
fn prediction_needs_a_matching_head() {
    let m = Model::new(Featurizer::new(64, FeatureMode::Joined), 4, 0, &[&two_class_task()]);
    let e = Example::new("1", "a", "b", None).unwrap();
    let mnli = three_class_task();
    assert!(matches!(m.predict(&mnli, &render(&e, &mnli, Perturbation::Original)), Err(ModelError::NoHeadForTask(_))));
}

struct InMemory(Arc<Model>);

impl BackendFactory for InMemory {
    fn model_name(&self) -> &str {
        "refmodel"
    }

    fn open(&self, _run_seed: u64) -> Result<Box<dyn Backend>, BackendError> {
        Ok(Box::new(RefModelBackend::new(self.0.clone())))
    }
}

#[test]
fn order_free_features_give_full_reverse_consistency() {
    let train = three_class_toy(Split::Train, 90, 1);
    let val = three_class_toy(Split::Validation, 30, 2);
    let test = three_class_toy(Split::Test, 80, 3);
    let cfg = TrainConfig {
        feature_mode: FeatureMode::SegmentSum,
        ..small_cfg(4)
    };
    let out = train_single(&train, &val, &cfg).unwrap();
    let runs = evaluate_model(&InMemory(Arc::new(out.model)), &train.task, &test, &val, &[0], &EvalOptions::default()).unwrap();
    assert_eq!(runs[0].c_reverse, 1.0);
}
