use std::path::PathBuf;
use std::process::ExitCode;

use calum_core::backend::StubKind;
use calum_core::metrics::EvalError;
use calum_core::perturb::Perturbation;
use calum_core::refmodel::MultitaskMode;
use calum_core::report::TableFormat;
use calum_core::{BackendError, Split};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod io;

/// Consistency evaluation of sentence-pair classifiers under
/// meaning-preserving input perturbations.
#[derive(Debug, Parser)]
#[command(name = "calum", version)]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a dataset under one perturbation as JSONL.
    Perturb(PerturbArgs),
    /// Score a backend: accuracy on --val, consistency on --test.
    Evaluate(EvaluateArgs),
    /// Train the reference model (single-task or multi-task).
    TrainRef(TrainRefArgs),
    /// Serve the HTTP prediction protocol over a stub predictor.
    ServeStub(ServeStubArgs),
    /// Welch's t-test between two groups of values.
    Ttest(TtestArgs),
    /// Build an annotation packet and its answer key.
    HumanPacket(HumanPacketArgs),
    /// Score annotator responses against an answer key.
    HumanScore(HumanScoreArgs),
    /// Render metrics files as a results table.
    Report(ReportArgs),
    /// Write the synthetic multi-task benchmark as TSV files.
    GenSynthetic(GenSyntheticArgs),
    /// Write random sentence pairs for a task as TSV.
    GenPairs(GenPairsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PerturbationArg {
    Original,
    Reverse,
    Signal,
}

impl From<PerturbationArg> for Perturbation {
    fn from(p: PerturbationArg) -> Perturbation {
        match p {
            PerturbationArg::Original => Perturbation::Original,
            PerturbationArg::Reverse => Perturbation::Reverse,
            PerturbationArg::Signal => Perturbation::Signal,
        }
    }
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[arg(long)]
    task: String,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_enum)]
    perturbation: PerturbationArg,
    /// TSV, or JSONL when the name ends in `.jsonl`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    task: String,
    /// e.g. `kind=http-classifier,endpoint=http://127.0.0.1:8080,model=roberta-base`
    #[arg(long)]
    backend: String,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    val: PathBuf,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    in_flight: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Single,
    Para,
    All,
}

impl ModeArg {
    fn multitask(self) -> Option<MultitaskMode> {
        match self {
            ModeArg::Single => None,
            ModeArg::Para => Some(MultitaskMode::Para),
            ModeArg::All => Some(MultitaskMode::All),
        }
    }
}

#[derive(Debug, Args)]
struct TrainRefArgs {
    #[arg(long, value_enum, default_value = "single")]
    mode: ModeArg,
    #[arg(long)]
    main_task: Option<String>,
    /// Training configuration (JSON); missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding `{task}.train.tsv` and `{task}.validation.tsv`.
    /// Auxiliary tasks are the registered tasks with a training file there.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Train on the built-in synthetic benchmark instead of files.
    #[arg(long)]
    synthetic: bool,
    /// Overrides the config seed; several seeds train several models.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Model path; `{seed}` is replaced by the seed.
    #[arg(long)]
    out: String,
    /// Also write the training report(s) as JSON; `{seed}` is replaced.
    #[arg(long)]
    report: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StubKindArg {
    Symmetric,
    OrderSensitive,
}

impl From<StubKindArg> for StubKind {
    fn from(k: StubKindArg) -> StubKind {
        match k {
            StubKindArg::Symmetric => StubKind::Symmetric,
            StubKindArg::OrderSensitive => StubKind::OrderSensitive,
        }
    }
}

#[derive(Debug, Args)]
struct ServeStubArgs {
    #[arg(long, value_enum)]
    kind: StubKindArg,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Name reported by `/v1/health`.
    #[arg(long, default_value = "stub")]
    model: String,
}

#[derive(Debug, Args)]
struct TtestArgs {
    /// One value per line, or a metrics JSON file.
    #[arg(long)]
    group_a: PathBuf,
    #[arg(long)]
    group_b: PathBuf,
    /// Field taken from each run when a group is a metrics file.
    #[arg(long, default_value = "c_reverse")]
    metric: String,
}

#[derive(Debug, Args)]
struct HumanPacketArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    val: PathBuf,
    #[arg(long)]
    annotator: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "reverse,signal")]
    perturbations: Vec<PerturbationArg>,
    /// Directory for packet.csv and key.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HumanScoreArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    responses: PathBuf,
    #[arg(long)]
    annotator: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Md,
    Csv,
}

impl From<FormatArg> for TableFormat {
    fn from(f: FormatArg) -> TableFormat {
        match f {
            FormatArg::Md => TableFormat::Markdown,
            FormatArg::Csv => TableFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Metrics files from `evaluate`, or JSON arrays of aggregates.
    /// With --comparison, JSON arrays of model families.
    #[arg(long = "in", num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "md")]
    format: FormatArg,
    /// Single / Para / All comparison layout.
    #[arg(long)]
    comparison: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenSyntheticArgs {
    #[arg(long)]
    out: PathBuf,
    /// Generator settings (JSON); missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct GenPairsArgs {
    #[arg(long)]
    task: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn is_transport(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<BackendError>().is_some_and(BackendError::is_transport)
            || e.downcast_ref::<EvalError>().is_some_and(EvalError::is_transport)
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_transport(&e) { 2 } else { 1 })
        }
    }
}
