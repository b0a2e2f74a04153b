use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use afres::data::{self, BatchOptions, Dataset};
use afres::eval::{self, ReportMeta};
use afres::model::{self, table::REFERENCE_TABLE, ModelSpec};
use afres::pipeline::{self, ExperimentOptions, TrainSpec};
use afres::Error;

#[derive(Parser)]
#[command(name = "afres", version, about = "Configurable 1D ResNets for AF detection in single-lead ECG")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the parameter count of a configuration, or check the reference table.
    Params(ParamsArgs),
    /// Generate a synthetic pseudo-ECG dataset.
    Synth(SynthArgs),
    /// Train one configuration and score it on a held-out split.
    Train(TrainArgs),
    /// Score a saved checkpoint on a dataset.
    Eval(EvalArgs),
    /// Train every grid configuration with several seeds.
    Bench(BenchArgs),
    /// Aggregate a results file into the table and figure data.
    Report(ReportArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ParamsArgs {
    /// Configuration string or preset name.
    #[arg(long)]
    config: Option<String>,
    /// Check all 30 reference configurations.
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 0.25)]
    af_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct TrainingFlags {
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 3000)]
    crop_len: usize,
    /// Crops per AF record per epoch.
    #[arg(long, default_value_t = 3)]
    oversample: usize,
    /// Disable resampling augmentation.
    #[arg(long)]
    no_augment: bool,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Fraction of records used for training; the rest is validation.
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
}

impl TrainingFlags {
    fn spec(&self, model: ModelSpec, seed: u64) -> TrainSpec {
        let mut s = TrainSpec::new(model);
        s.epochs = self.epochs;
        s.seed = seed;
        s.batch = BatchOptions {
            batch_size: self.batch,
            crop_len: self.crop_len,
            oversample_af: self.oversample,
            augment: !self.no_augment,
            ..BatchOptions::default()
        };
        s.adam.lr = self.lr;
        s
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: String,
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    training: TrainingFlags,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitChoice {
    All,
    Train,
    Valid,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Records to score; train/valid reproduce the split used by `train`.
    #[arg(long, value_enum, default_value = "all")]
    split: SplitChoice,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    /// Seed of the split when --split is train or valid.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3000)]
    crop_len: usize,
    /// Output directory; defaults to the checkpoint's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// File with one configuration per line.
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Base seed; run k uses seed + k. Also seeds the split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Write 0 instead of the measured wall time, for byte-identical results.
    #[arg(long)]
    no_wall_time: bool,
    /// Also record F1 of the non-AF class.
    #[arg(long)]
    both_classes: bool,
    #[command(flatten)]
    training: TrainingFlags,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Crop length the results were produced with, recorded in the metadata.
    #[arg(long, default_value_t = 3000)]
    crop_len: usize,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Parse(_) | Error::Validation(_) | Error::UnknownPreset(_) | Error::Parameter(_)) => EXIT_USAGE,
        Some(Error::Numeric(_) | Error::Diverged { .. }) => EXIT_NUMERIC,
        Some(_) => EXIT_DATA,
        None => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Params(a) => cmd_params(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Echo the effective configuration to stderr and `<out>/<command>_config.txt`.
fn announce(out: &Path, command: &str, lines: &[(&str, String)]) -> anyhow::Result<()> {
    let text: String = lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    eprint!("{text}");
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let path = out.join(format!("{command}_config.txt"));
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(())
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn load(manifest: &Path) -> anyhow::Result<Dataset> {
    let ds = data::preprocess(data::load_dataset(manifest)?);
    if ds.is_empty() {
        return Err(Error::Data(format!("{}: no usable records", manifest.display())).into());
    }
    Ok(ds)
}

fn cmd_params(a: ParamsArgs) -> anyhow::Result<()> {
    if let Some(text) = a.config {
        let spec = ModelSpec::parse(&text)?;
        eprintln!("config={spec}");
        println!("{}", spec.architecture()?.param_count());
        return Ok(());
    }
    let mut failed = 0;
    for row in &REFERENCE_TABLE {
        let spec = ModelSpec::parse(row.config)?;
        let analytic = spec.architecture()?.param_count();
        let structural = model::count_parameters(&afres::model::Network::new(&spec, 0)?);
        let ok = analytic == row.params && structural == row.params;
        if !ok {
            failed += 1;
        }
        println!(
            "{} row {:2}  {:>9}  expected {:>9}  {}",
            if ok { "PASS" } else { "FAIL" },
            row.index,
            analytic,
            row.params,
            row.config
        );
    }
    if failed > 0 {
        bail!(Error::Numeric(format!("{failed} parameter counts differ from the reference table")));
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> anyhow::Result<()> {
    if !(0.0..=1.0).contains(&a.af_frac) {
        bail!(Error::Parameter(format!("--af-frac must be in [0, 1], got {}", a.af_frac)));
    }
    announce(
        &a.out,
        "synth",
        &[("seed", a.seed.to_string()), ("n", a.n.to_string()), ("af_frac", a.af_frac.to_string())],
    )?;
    let records = data::generate_synthetic(a.n, a.af_frac, a.seed);
    let manifest = data::write_dataset(&records, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let model = ModelSpec::parse(&a.config)?;
    let mut spec = a.training.spec(model, a.seed);
    spec.checkpoint = Some(a.out.join("model.rsb"));
    announce(
        &a.out,
        "train",
        &[
            ("data", a.data.display().to_string()),
            ("train_frac", a.training.train_frac.to_string()),
            ("spec", format!("\n{spec}")),
        ],
    )?;
    if spec.epochs == 0 {
        bail!(Error::Parameter("--epochs must be ≥ 1".into()));
    }
    let ds = load(&a.data)?;
    let (train, valid) = data::split(&ds, a.training.train_frac, a.seed)?;
    let (_, res) = pipeline::train(&spec, &train, &valid)?;

    let losses = a.out.join("losses.csv");
    let text: String = std::iter::once("epoch,loss\n".to_string())
        .chain(res.epoch_losses.iter().enumerate().map(|(i, l)| format!("{},{l}\n", i + 1)))
        .collect();
    fs::write(&losses, text).map_err(|e| io_err(&losses, e))?;
    println!("n_params={}", res.n_params);
    println!("f1={}", eval::fmt_sig6(res.f1_af));
    println!("f1_non_af={}", eval::fmt_sig6(res.f1_non_af));
    println!("checkpoint={}", a.out.join("model.rsb").display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let out = a.out.clone().unwrap_or_else(|| a.model.parent().map(Path::to_path_buf).unwrap_or_default());
    let out = if out.as_os_str().is_empty() { PathBuf::from(".") } else { out };
    let net = model::load_checkpoint(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let split_name = match a.split {
        SplitChoice::All => "all",
        SplitChoice::Train => "train",
        SplitChoice::Valid => "valid",
    };
    announce(
        &out,
        "eval",
        &[
            ("seed", a.seed.to_string()),
            ("config", net.spec().to_string()),
            ("model", a.model.display().to_string()),
            ("data", a.data.display().to_string()),
            ("split", split_name.into()),
            ("crop_len", a.crop_len.to_string()),
        ],
    )?;
    let ds = load(&a.data)?;
    let ds = match a.split {
        SplitChoice::All => ds,
        SplitChoice::Train => data::split(&ds, a.train_frac, a.seed)?.0,
        SplitChoice::Valid => data::split(&ds, a.train_frac, a.seed)?.1,
    };
    let ev = eval::evaluate(&net, &ds, a.crop_len)?;

    let pred_path = out.join("predictions.csv");
    let mut w = csv::Writer::from_path(&pred_path).map_err(Error::from)?;
    w.write_record(["record_id", "label", "p_af", "prediction"]).map_err(Error::from)?;
    let name = |r: data::Rhythm| if r == data::Rhythm::Af { "A" } else { "NO" };
    for (((r, label), p), &pred) in ds.iter().zip(&ev.probabilities).zip(&ev.predictions) {
        w.write_record([r.id.as_str(), name(label), &p.to_string(), name(pred)]).map_err(Error::from)?;
    }
    w.flush().map_err(|e| io_err(&pred_path, e))?;
    println!("records={}", ds.len());
    println!("f1={}", eval::fmt_sig6(ev.f1_af));
    println!("f1_non_af={}", eval::fmt_sig6(ev.f1_non_af));
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> anyhow::Result<()> {
    let grid = pipeline::read_grid(&a.grid)?;
    if a.repeats == 0 {
        bail!(Error::Parameter("--repeats must be ≥ 1".into()));
    }
    if a.training.epochs == 0 {
        bail!(Error::Parameter("--epochs must be ≥ 1".into()));
    }
    let Some(first) = grid.first() else {
        bail!(Error::Data(format!("{}: grid is empty", a.grid.display())));
    };
    let template = a.training.spec(first.spec.clone(), a.seed);
    let configs: String = grid.iter().map(|e| format!("\n  {} {}", e.id, e.spec)).collect();
    announce(
        &a.out,
        "bench",
        &[
            ("seed", a.seed.to_string()),
            ("grid", a.grid.display().to_string()),
            ("configs", configs),
            ("data", a.data.display().to_string()),
            ("repeats", a.repeats.to_string()),
            ("workers", a.workers.to_string()),
            ("train_frac", a.training.train_frac.to_string()),
            ("record_wall_time", (!a.no_wall_time).to_string()),
            ("both_classes", a.both_classes.to_string()),
            ("template", format!("\n{template}")),
        ],
    )?;
    let ds = load(&a.data)?;
    let (train, valid) = data::split(&ds, a.training.train_frac, a.seed)?;
    let mut opts = ExperimentOptions::new(template, &a.out);
    opts.workers = a.workers;
    opts.record_wall_time = !a.no_wall_time;
    opts.both_classes = a.both_classes;
    let outcome = pipeline::run_experiment(&grid, a.repeats, a.seed, &train, &valid, &opts)?;
    println!("executed={}", outcome.executed);
    println!("skipped={}", outcome.skipped);
    println!("failed={}", outcome.failures.len());
    println!("results={}", a.out.join(pipeline::RESULTS_FILE).display());
    if !outcome.failures.is_empty() {
        let numeric = outcome.failures.iter().all(|f| f.error.contains("diverged") || f.error.contains("numeric"));
        let msg = format!("{} runs failed; see {}", outcome.failures.len(), pipeline::FAILURES_FILE);
        bail!(if numeric { Error::Numeric(msg) } else { Error::Data(msg) });
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> anyhow::Result<()> {
    announce(
        &a.out,
        "report",
        &[("seed", "0".into()), ("results", a.results.display().to_string()), ("crop_len", a.crop_len.to_string())],
    )?;
    let rows = eval::read_results(&a.results)?;
    let aggs = eval::aggregate(&rows);
    let meta = ReportMeta { crop_len: a.crop_len, ..ReportMeta::default() };
    for p in eval::emit_report(&aggs, &a.out, &meta)? {
        println!("{}", p.display());
    }
    Ok(())
}
