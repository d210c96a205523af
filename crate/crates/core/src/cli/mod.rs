//! Command-line front end: dataset generation, training, evaluation,
//! gradient checking and norm histograms.

mod checkpoint;
mod config;
mod train;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{RunArgs, RunConfig, DEFAULT_DIM, DEFAULT_EPOCHS, DEFAULT_LR, DEFAULT_NEGATIVES};
pub use train::{
    evaluate_model, fit_threshold, predictions, scores, train, EncodedSplit, EpochRecord, Phase, TrainOutcome,
};

use crate::data::{
    gen_adjnoun, gen_numbers, load_dataset, write_samples, AdjNounConfig, DataFormat, DatasetSplit, LoadedFile,
    NumbersConfig, RawSample,
};
use crate::error::{Error, Result};
use crate::gradcheck::{all_cases, run_gradcheck, GradcheckConfig};
use crate::metrics::{histogram_csv, norm_histogram, MetricsReport};
use crate::model::Architecture;

#[derive(Debug, Parser)]
#[command(
    name = "mobius-nli",
    version,
    about = "Hyperbolic sentence embeddings for textual entailment"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the adjective-noun toy dataset
    GenAdjnoun(GenAdjNounArgs),
    /// Write the 4-digit numbers toy dataset
    GenNumbers(GenNumbersArgs),
    /// Train a model and save the best checkpoint by validation accuracy
    Train(Box<TrainArgs>),
    /// Evaluate a checkpoint on a data file and print a JSON report
    Eval(EvalArgs),
    /// Compare analytic gradients with central finite differences
    Gradcheck(GradcheckArgs),
    /// Write the word-embedding norm histogram of a checkpoint as CSV
    Norms(NormsArgs),
}

#[derive(Debug, Args)]
pub struct GenAdjNounArgs {
    /// Words in the vocabulary; the first half are adjectives
    #[arg(long, default_value_t = 1000)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 2000)]
    pub train: usize,
    #[arg(long, default_value_t = 20000)]
    pub val: usize,
    #[arg(long, default_value_t = 20000)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "tsv")]
    pub format: DataFormat,
    /// Output directory for train/val/test files
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenNumbersArgs {
    #[arg(long, default_value_t = 1000)]
    pub lo: u32,
    #[arg(long, default_value_t = 9999)]
    pub hi: u32,
    #[arg(long, default_value_t = 8000)]
    pub train: usize,
    #[arg(long, default_value_t = 1000)]
    pub val: usize,
    #[arg(long, default_value_t = 1000)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "tsv")]
    pub format: DataFormat,
    /// Output directory for train/val/test files
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// key=value file supplying any of the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// jsonl or tsv [default: from the file extension]
    #[arg(long)]
    pub format: Option<DataFormat>,
    /// Expected embedding dimension; must match the checkpoint
    #[arg(long)]
    pub dim: Option<usize>,
    /// Run configuration to check the checkpoint against
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report path [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random configurations per case
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest embedding dimension drawn (at most 10)
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    /// Largest sentence length drawn (at most 7)
    #[arg(long, default_value_t = 7)]
    pub max_leaves: usize,
    /// Only check cases of this architecture
    #[arg(long)]
    pub model: Option<Architecture>,
    /// Report path [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Perturb every analytic gradient before comparing (harness self-test)
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

#[derive(Debug, Args)]
pub struct NormsArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// CSV path [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// How a command that ran to completion ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    /// The command ran but its numerical check failed.
    NumericalFailure,
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;

/// Exit status for an error: numerical failures get their own code.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFinite(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command and maps the result
/// to an exit status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::NumericalFailure) => ExitCode::from(EXIT_NUMERICAL),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

pub fn run(command: Command) -> Result<Status> {
    match command {
        Command::GenAdjnoun(a) => gen_adjnoun_command(&a),
        Command::GenNumbers(a) => gen_numbers_command(&a),
        Command::Train(a) => train_command(&a).map(|_| Status::Success),
        Command::Eval(a) => eval_command(&a).map(|_| Status::Success),
        Command::Gradcheck(a) => gradcheck_command(&a),
        Command::Norms(a) => norms_command(&a),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn to_json_line<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn split_file_name(part: &str, format: DataFormat) -> String {
    let ext = match format {
        DataFormat::Jsonl => "jsonl",
        DataFormat::Tsv => "tsv",
    };
    format!("{part}.{ext}")
}

/// Writes `train`, `val` and `test` files of `split` into `dir`.
pub fn write_split(dir: &Path, format: DataFormat, split: &DatasetSplit) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (part, samples) in [
        ("train", &split.train),
        ("val", &split.validation),
        ("test", &split.test),
    ] {
        write_samples(&dir.join(split_file_name(part, format)), format, samples)?;
    }
    let share = |s: &[RawSample]| s.iter().filter(|x| x.label.is_entailment()).count() as f64 / s.len().max(1) as f64;
    info!(
        "wrote {} / {} / {} samples to {} (entailment share {:.4} / {:.4} / {:.4})",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        dir.display(),
        share(&split.train),
        share(&split.validation),
        share(&split.test)
    );
    Ok(())
}

fn gen_adjnoun_command(a: &GenAdjNounArgs) -> Result<Status> {
    let split = gen_adjnoun(&AdjNounConfig {
        vocab_size: a.vocab_size,
        train: a.train,
        validation: a.val,
        test: a.test,
        seed: a.seed,
    })?;
    write_split(&a.out, a.format, &split)?;
    Ok(Status::Success)
}

fn gen_numbers_command(a: &GenNumbersArgs) -> Result<Status> {
    let split = gen_numbers(&NumbersConfig {
        lo: a.lo,
        hi: a.hi,
        train: a.train,
        validation: a.val,
        test: a.test,
        seed: a.seed,
    })?;
    write_split(&a.out, a.format, &split)?;
    Ok(Status::Success)
}

fn load_file(path: &Path, format: DataFormat) -> Result<Vec<RawSample>> {
    let LoadedFile { samples, skipped } = load_dataset(path, format)?;
    if skipped > 0 {
        info!("{}: skipped {skipped} samples without a gold label", path.display());
    }
    Ok(samples)
}

/// Loads the files named in `cfg` into a split with a training vocabulary.
pub fn load_split(cfg: &RunConfig) -> Result<DatasetSplit> {
    let train_path = cfg
        .train
        .as_ref()
        .ok_or_else(|| Error::Config("no training file given (use --train)".into()))?;
    let train = load_file(train_path, cfg.data_format(train_path)?)?;
    let validation = match &cfg.val {
        Some(p) => Some(load_file(p, cfg.data_format(p)?)?),
        None => None,
    };
    let test = match &cfg.test {
        Some(p) => load_file(p, cfg.data_format(p)?)?,
        None => Vec::new(),
    };
    DatasetSplit::from_parts(train, validation, test, cfg.val_fraction, cfg.seed)
}

#[derive(Debug, Serialize)]
struct TrainSummary<'a> {
    checkpoint: &'a Path,
    log: &'a Path,
    best_epoch: usize,
    violations: usize,
    validation: Option<&'a MetricsReport>,
    test: Option<&'a MetricsReport>,
}

/// Trains per `cfg`, writes the per-epoch log and the best checkpoint.
pub fn train_with_config(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let split = load_split(cfg)?;
    let data = EncodedSplit::new(&split);
    let log_path = cfg.log_path();
    let mut log = BufWriter::new(File::create(&log_path)?);
    let outcome = train(cfg, &data, split.vocab.len(), |record| {
        serde_json::to_writer(&mut log, record)?;
        writeln!(log)?;
        log.flush()?;
        Ok(())
    })?;
    Checkpoint::new(
        cfg.clone(),
        outcome.best_epoch,
        split.vocab.clone(),
        &outcome.model,
        outcome.threshold,
    )
    .save(&cfg.out)?;
    if outcome.violations > 0 {
        warn!("{} embeddings left the ball during training", outcome.violations);
    }
    Ok(outcome)
}

fn train_command(a: &TrainArgs) -> Result<TrainOutcome> {
    let base = match &a.config {
        Some(p) => RunArgs::from_config_file(p)?,
        None => RunArgs::default(),
    };
    let cfg = a.run.clone().over(base).resolve()?;
    let outcome = train_with_config(&cfg)?;
    let best = outcome.best_record();
    let summary = TrainSummary {
        checkpoint: &cfg.out,
        log: &cfg.log_path(),
        best_epoch: outcome.best_epoch,
        violations: outcome.violations,
        validation: best.validation.as_ref(),
        test: best.test.as_ref(),
    };
    write_output(None, &to_json_line(&summary)?)?;
    Ok(outcome)
}

/// Metrics of a saved checkpoint on one data file.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, data: &Path, format: DataFormat) -> Result<MetricsReport> {
    let model = ckpt.model()?;
    let samples = load_file(data, format)?;
    if samples.is_empty() {
        return Err(Error::Config(format!("{} has no labelled samples", data.display())));
    }
    let encoded = DatasetSplit::encode(&samples, &ckpt.vocab);
    evaluate_model(&model, &encoded, ckpt.threshold)
}

fn eval_command(a: &EvalArgs) -> Result<MetricsReport> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let from_file = match &a.config {
        Some(p) => RunArgs::from_config_file(p)?,
        None => RunArgs::default(),
    };
    let expected = RunArgs {
        dim: a.dim,
        ..Default::default()
    }
    .over(from_file);
    if let Some(dim) = expected.dim {
        if dim != ckpt.config.dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: ckpt.config.dim,
            });
        }
    }
    if let Some(model) = expected.model {
        if model != ckpt.config.model {
            return Err(Error::Config(format!(
                "checkpoint holds a {} model, configuration asks for {model}",
                ckpt.config.model
            )));
        }
    }
    let format = a.format.unwrap_or_else(|| DataFormat::from_path(&a.data));
    let report = evaluate_checkpoint(&ckpt, &a.data, format)?;
    write_output(a.out.as_deref(), &to_json_line(&report)?)?;
    Ok(report)
}

fn gradcheck_command(a: &GradcheckArgs) -> Result<Status> {
    let cfg = GradcheckConfig {
        trials: a.trials,
        max_dim: a.dim,
        max_leaves: a.max_leaves,
        seed: a.seed,
        corrupt_gradient: a.corrupt_gradient,
        ..Default::default()
    };
    let cases: Vec<_> = all_cases()
        .into_iter()
        .filter(|c| a.model.is_none_or(|m| c.arch == m))
        .collect();
    let report = run_gradcheck(&cases, &cfg)?;
    for case in &report.cases {
        info!("{:<40} max relative error {:.3e}", case.case, case.max_error);
    }
    write_output(a.out.as_deref(), &to_json_line(&report)?)?;
    if report.passed {
        Ok(Status::Success)
    } else {
        warn!(
            "max relative error {:.3e} is not below {:.0e}",
            report.max_error, report.tolerance
        );
        Ok(Status::NumericalFailure)
    }
}

fn norms_command(a: &NormsArgs) -> Result<Status> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let model = ckpt.model()?;
    let bins = norm_histogram(&model.params.embeddings, a.bins, &model.space)?;
    write_output(a.out.as_deref(), &histogram_csv(&bins))?;
    Ok(Status::Success)
}
