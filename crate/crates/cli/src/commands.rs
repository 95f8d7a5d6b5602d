use std::fs;
use std::net::SocketAddr;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use calum_core::backend::server::{router, serve_forever, StubService};
use calum_core::backend::BatchOptions;
use calum_core::humankit::{build_packet, read_key, read_responses, score_responses};
use calum_core::metrics::{evaluate_model, welch_t_test, EvalError, EvalOptions};
use calum_core::perturb::{render, Perturbation};
use calum_core::refmodel::{aux_tasks_for, train_multitask, train_single};
use calum_core::report::{emit_comparison_table, emit_results_table, write_tsv, ComparisonFamily};
use calum_core::synthetic::{self, pair_fixture, SyntheticConfig};
use calum_core::{AggregateMetrics, BackendDescriptor, Dataset, MetricsReport, Split, TaskRegistry, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::io::{emit, load_dataset, read_json};
use crate::{
    Command, EvaluateArgs, GenPairsArgs, GenSyntheticArgs, HumanPacketArgs, HumanScoreArgs, PerturbArgs, ReportArgs,
    ServeStubArgs, TrainRefArgs, TtestArgs,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Perturb(a) => perturb(a),
        Command::Evaluate(a) => evaluate(a),
        Command::TrainRef(a) => train_ref(a),
        Command::ServeStub(a) => serve_stub(a),
        Command::Ttest(a) => ttest(a),
        Command::HumanPacket(a) => human_packet(a),
        Command::HumanScore(a) => human_score(a),
        Command::Report(a) => report(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::GenPairs(a) => gen_pairs(a),
    }
}

fn registry() -> Result<TaskRegistry> {
    TaskRegistry::from_env().context("loading the task registry")
}

#[derive(Serialize)]
struct PerturbRow<'a> {
    example_id: &'a str,
    segment_a: &'a str,
    segment_b: &'a str,
    joined: &'a str,
}

fn perturb(a: PerturbArgs) -> Result<()> {
    let reg = registry()?;
    let task = reg.require(&a.task)?;
    let data = load_dataset(&a.input, task, a.split.into())?;
    let p: Perturbation = a.perturbation.into();
    let mut out = String::new();
    for e in data.examples() {
        let r = render(e, task, p);
        let row = PerturbRow {
            example_id: &r.example_id,
            segment_a: &r.segment_a,
            segment_b: &r.segment_b,
            joined: &r.joined,
        };
        out.push_str(&serde_json::to_string(&row)?);
        out.push('\n');
    }
    emit(a.out.as_deref(), &out)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    if a.runs == 0 {
        bail!("--runs must be at least 1");
    }
    let reg = registry()?;
    let task = reg.require(&a.task)?;
    let backend: BackendDescriptor = a.backend.parse()?;
    let test = load_dataset(&a.test, task, Split::Test)?;
    let val = load_dataset(&a.val, task, Split::Validation)?;
    let base = backend.base_seed();
    let seeds: Vec<u64> = (0..a.runs as u64).map(|i| base + i).collect();
    let opts = EvalOptions {
        batch: BatchOptions {
            batch_size: a.batch_size.max(1),
            in_flight: a.in_flight.max(1),
        },
    };
    let runs = match evaluate_model(&backend, task, &test, &val, &seeds, &opts) {
        Ok(r) => r,
        Err(e @ EvalError::Backend { .. }) => {
            log::warn!("{} run(s) finished before the failure", e.completed().len());
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    let report = MetricsReport::from_runs(runs)?;
    let agg = &report.aggregate;
    eprintln!(
        "{} on {}: acc_val {:.4}  C_R {:.4}  C_S {:.4}  ({} runs)",
        agg.model, agg.task, agg.acc_val.mean, agg.c_reverse.mean, agg.c_signal.mean, agg.runs
    );
    emit(a.out.as_deref(), &report.to_json())
}

fn train_ref(a: TrainRefArgs) -> Result<()> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    let seeds = if a.seeds.is_empty() { vec![cfg.seed] } else { a.seeds.clone() };
    if seeds.len() > 1 && !a.out.contains("{seed}") {
        bail!("--out must contain `{{seed}}` when training several seeds");
    }

    let (reg, train, val, aux) = if a.synthetic {
        let main = a.main_task.as_deref().unwrap_or(synthetic::MAIN_TASK);
        if main != synthetic::MAIN_TASK {
            bail!("the synthetic benchmark's main task is `{}`", synthetic::MAIN_TASK);
        }
        let bench = synthetic::generate(&SyntheticConfig::default());
        (bench.registry, bench.main_train, bench.main_val, bench.aux_train)
    } else {
        let dir = a.data.as_deref().ok_or_else(|| anyhow!("one of --data or --synthetic is required"))?;
        let main = a.main_task.as_deref().ok_or_else(|| anyhow!("--main-task is required with --data"))?;
        load_training_dir(dir, main)?
    };

    let aux = match a.mode.multitask() {
        None => Vec::new(),
        Some(mode) => {
            let wanted = aux_tasks_for(&reg, &train.task.task_id, mode)?;
            aux.into_iter()
                .filter(|d| wanted.iter().any(|t| t.task_id == d.task.task_id))
                .collect()
        }
    };
    for seed in seeds {
        cfg.seed = seed;
        let outcome = match a.mode.multitask() {
            None => train_single(&train, &val, &cfg)?,
            Some(mode) => train_multitask(&reg, &train, &val, &aux, &cfg, mode)?,
        };
        let path = a.out.replace("{seed}", &seed.to_string());
        if let Some(dir) = Path::new(&path).parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        outcome.model.save(&path).with_context(|| format!("writing {path}"))?;
        if let Some(r) = &a.report {
            let rp = r.replace("{seed}", &seed.to_string());
            emit(Some(Path::new(&rp)), &(serde_json::to_string_pretty(&outcome.report)? + "\n"))?;
        }
        eprintln!(
            "seed {seed}: best validation accuracy {:.4} at epoch {} -> {path}",
            outcome.report.best_val_accuracy, outcome.report.best_epoch
        );
    }
    Ok(())
}

type TrainingData = (TaskRegistry, Dataset, Dataset, Vec<Dataset>);

/// Main task splits plus a training split for every registered task with a
/// `{task}.train.tsv` in `dir`. The returned registry holds just those tasks.
fn load_training_dir(dir: &Path, main: &str) -> Result<TrainingData> {
    let full = registry()?;
    let main_spec = full.require(main)?.clone();
    let file = |task: &str, split: Split| dir.join(format!("{task}.{split}.tsv"));
    let train = load_dataset(&file(main, Split::Train), &main_spec, Split::Train)?;
    let val = load_dataset(&file(main, Split::Validation), &main_spec, Split::Validation)?;
    let mut reg = TaskRegistry::empty();
    reg.insert(main_spec);
    let mut aux = Vec::new();
    for t in full.iter().filter(|t| t.task_id != main) {
        let path = file(&t.task_id, Split::Train);
        if path.exists() {
            aux.push(load_dataset(&path, t, Split::Train)?);
            reg.insert(t.clone());
        }
    }
    Ok((reg, train, val, aux))
}

fn serve_stub(a: ServeStubArgs) -> Result<()> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .with_context(|| format!("bad address {}:{}", a.host, a.port))?;
    let service = StubService {
        kind: a.kind.into(),
        seed: a.seed,
        model: a.model,
        registry: registry()?,
    };
    eprintln!("serving on http://{addr}");
    serve_forever(router(service), addr).with_context(|| format!("serving on {addr}"))
}

fn read_group(path: &Path, metric: &str) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(report) = serde_json::from_str::<MetricsReport>(&text) {
        return report
            .runs
            .iter()
            .map(|r| {
                serde_json::to_value(r)?[metric]
                    .as_f64()
                    .ok_or_else(|| anyhow!("{}: runs have no numeric `{metric}`", path.display()))
            })
            .collect();
    }
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.parse::<f64>()
                .with_context(|| format!("{}:{}: not a number: `{l}`", path.display(), i + 1))
        })
        .collect()
}

fn ttest(a: TtestArgs) -> Result<()> {
    let ga = read_group(&a.group_a, &a.metric)?;
    let gb = read_group(&a.group_b, &a.metric)?;
    let r = welch_t_test(&ga, &gb)?;
    emit(None, &(serde_json::to_string_pretty(&r)? + "\n"))
}

fn human_packet(a: HumanPacketArgs) -> Result<()> {
    let reg = registry()?;
    let task = reg.require(&a.task)?;
    let val = load_dataset(&a.val, task, Split::Validation)?;
    let perturbations: Vec<Perturbation> = a.perturbations.iter().map(|&p| p.into()).collect();
    let packet = build_packet(task, &val, &perturbations, &a.annotator, a.seed)?;
    packet.write_to_dir(&a.out)?;
    eprintln!("{} items for {} -> {}", packet.items.len(), a.annotator, a.out.display());
    Ok(())
}

fn human_score(a: HumanScoreArgs) -> Result<()> {
    let reg = registry()?;
    let task = reg.require(&a.task)?;
    let open = |p: &Path| fs::File::open(p).with_context(|| format!("opening {}", p.display()));
    let key = read_key(open(&a.key)?)?;
    let responses = read_responses(open(&a.responses)?)?;
    let run = score_responses(task, &a.annotator, &key, &responses)?;
    let report = MetricsReport::from_runs(vec![run])?;
    emit(a.out.as_deref(), &report.to_json())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ReportInput {
    Report(Box<MetricsReport>),
    Cells(Vec<AggregateMetrics>),
}

fn report(a: ReportArgs) -> Result<()> {
    let text = if a.comparison {
        let mut families = Vec::new();
        for p in &a.inputs {
            families.extend(read_json::<Vec<ComparisonFamily>>(p)?);
        }
        emit_comparison_table(&families, a.format.into())?
    } else {
        let mut cells = Vec::new();
        for p in &a.inputs {
            match read_json::<ReportInput>(p)? {
                ReportInput::Report(r) => cells.push(r.aggregate),
                ReportInput::Cells(c) => cells.extend(c),
            }
        }
        emit_results_table(&cells, a.format.into())?
    };
    emit(a.out.as_deref(), &text)
}

fn gen_synthetic(a: GenSyntheticArgs) -> Result<()> {
    let mut cfg: SyntheticConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SyntheticConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let bench = synthetic::generate(&cfg);
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let splits = [&bench.main_train, &bench.main_val, &bench.main_test]
        .into_iter()
        .chain(&bench.aux_train)
        .chain(&bench.aux_val);
    for d in splits {
        write_tsv(d, a.out.join(format!("{}.{}.tsv", d.task.task_id, d.split)))?;
    }
    emit(Some(&a.out.join("registry.json")), &bench.registry.to_config_json())?;
    eprintln!("wrote the synthetic benchmark to {}; set CALUM_CONFIG to its registry.json", a.out.display());
    Ok(())
}

fn gen_pairs(a: GenPairsArgs) -> Result<()> {
    let reg = registry()?;
    let task = reg.require(&a.task)?;
    let d = pair_fixture(task, a.n, a.seed)?;
    write_tsv(&d, &a.out)?;
    Ok(())
}
