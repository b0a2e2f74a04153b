//! Training runs and the resumable configuration × seed benchmark.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use crate::data::{make_batches, stream_rng, BatchOptions, Dataset, EPOCH_STREAM_BASE};
use crate::error::{Error, Result};
use crate::eval::{evaluate, read_results, results_header, write_results, ResultRow};
use crate::model::{count_parameters, save_checkpoint, ModelSpec, Network};
use crate::nn::{AdamConfig, AdamState, Mode};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub model: ModelSpec,
    pub epochs: usize,
    pub batch: BatchOptions,
    pub adam: AdamConfig,
    /// Seeds weight initialisation and every epoch's batch stream.
    pub seed: u64,
    /// Where the final weights are saved, if anywhere.
    pub checkpoint: Option<PathBuf>,
}

impl TrainSpec {
    pub fn new(model: ModelSpec) -> Self {
        TrainSpec {
            model,
            epochs: 300,
            batch: BatchOptions::default(),
            adam: AdamConfig::default(),
            seed: 0,
            checkpoint: None,
        }
    }

    fn check(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be ≥ 1".into()));
        }
        if self.batch.batch_size == 0 || self.batch.crop_len == 0 || self.batch.oversample_af == 0 {
            return Err(Error::Parameter(format!("invalid batch options {:?}", self.batch)));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Parameter("learning rate must be > 0".into()));
        }
        Ok(())
    }
}

impl fmt::Display for TrainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.batch;
        let a = &self.adam;
        writeln!(f, "model={}", self.model)?;
        writeln!(f, "seed={}", self.seed)?;
        writeln!(f, "epochs={}", self.epochs)?;
        writeln!(f, "batch_size={}", b.batch_size)?;
        writeln!(f, "crop_len={}", b.crop_len)?;
        writeln!(f, "oversample_af={}", b.oversample_af)?;
        writeln!(f, "augment={}", b.augment)?;
        writeln!(f, "resample_range={}", b.resample_range)?;
        writeln!(f, "lr={}", a.lr)?;
        writeln!(f, "beta1={}", a.beta1)?;
        writeln!(f, "beta2={}", a.beta2)?;
        write!(f, "epsilon={}", a.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: String,
    pub seed: u64,
    pub n_params: usize,
    /// Mean training loss of every epoch.
    pub epoch_losses: Vec<f64>,
    pub f1_af: f64,
    pub f1_non_af: f64,
    pub wall_seconds: f64,
    pub checkpoint: Option<PathBuf>,
}

fn diverged(epoch: usize, step: usize, e: Error) -> Error {
    match e {
        Error::Numeric(reason) => Error::Diverged { epoch, step, reason },
        other => other,
    }
}

/// Train one model and score it on `valid`. The returned network is in eval
/// mode.
pub fn train(spec: &TrainSpec, train: &Dataset, valid: &Dataset) -> Result<(Network, RunResult)> {
    spec.check()?;
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Data("training and validation sets must be non-empty".into()));
    }
    let start = Instant::now();
    let mut net = Network::new(&spec.model, spec.seed)?;
    net.pre_pool_length(spec.batch.crop_len)?;
    net.set_mode(Mode::Train);
    let mut adam = AdamState::new(spec.adam);
    let mut epoch_losses = Vec::with_capacity(spec.epochs);

    for epoch in 0..spec.epochs {
        let rng = stream_rng(spec.seed, EPOCH_STREAM_BASE + epoch as u64);
        let (mut sum, mut seen) = (0.0, 0usize);
        for (step, batch) in make_batches(train, spec.batch, rng)?.enumerate() {
            let loss = net.train_step(&batch.inputs, &batch.labels).map_err(|e| diverged(epoch, step, e))?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, step, reason: format!("loss is {loss}") });
            }
            adam.step(net.params_mut()).map_err(|e| diverged(epoch, step, e))?;
            sum += loss * batch.labels.len() as f64;
            seen += batch.labels.len();
        }
        let mean = sum / seen as f64;
        log::debug!("{} seed {} epoch {}: loss {mean:.6}", spec.model, spec.seed, epoch + 1);
        epoch_losses.push(mean);
    }

    net.set_mode(Mode::Eval);
    let ev = evaluate(&net, valid, spec.batch.crop_len)?;
    if let Some(path) = &spec.checkpoint {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        save_checkpoint(&net, path)?;
    }
    let result = RunResult {
        config: spec.model.to_string(),
        seed: spec.seed,
        n_params: count_parameters(&net),
        epoch_losses,
        f1_af: ev.f1_af,
        f1_non_af: ev.f1_non_af,
        wall_seconds: start.elapsed().as_secs_f64(),
        checkpoint: spec.checkpoint.clone(),
    };
    log::info!(
        "{} seed {}: F1(AF) {:.4}, F1(non-AF) {:.4}, {:.1}s",
        result.config,
        result.seed,
        result.f1_af,
        result.f1_non_af,
        result.wall_seconds
    );
    Ok((net, result))
}

/// One numbered entry of a benchmark grid; ids start at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GridEntry {
    pub id: usize,
    pub spec: ModelSpec,
}

/// Number the non-blank, non-comment lines of a grid file from 1.
pub fn parse_grid(text: &str) -> Result<Vec<GridEntry>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .enumerate()
        .map(|(i, l)| {
            ModelSpec::parse(l).map(|spec| GridEntry { id: i + 1, spec }).map_err(|e| match e {
                Error::Parse(p) => Error::Data(format!("grid entry {}: {p}", i + 1)),
                other => Error::Data(format!("grid entry {}: {other}", i + 1)),
            })
        })
        .collect()
}

pub fn read_grid(path: &Path) -> Result<Vec<GridEntry>> {
    parse_grid(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    /// Template for every run; `model` and `seed` are replaced per run.
    pub train: TrainSpec,
    pub out_dir: PathBuf,
    pub workers: usize,
    /// When false, `wall_seconds` is written as 0 so that repeated runs
    /// produce byte-identical results files.
    pub record_wall_time: bool,
    /// Also record F1 of the non-AF class.
    pub both_classes: bool,
    pub save_checkpoints: bool,
}

impl ExperimentOptions {
    pub fn new(train: TrainSpec, out_dir: impl Into<PathBuf>) -> Self {
        ExperimentOptions {
            train,
            out_dir: out_dir.into(),
            workers: 1,
            record_wall_time: true,
            both_classes: false,
            save_checkpoints: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub config_id: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    /// Every row of the final results file, in grid order then seed order.
    pub rows: Vec<ResultRow>,
    pub executed: usize,
    pub skipped: usize,
    pub failures: Vec<RunFailure>,
}

pub const RESULTS_FILE: &str = "results.csv";
pub const FAILURES_FILE: &str = "failures.csv";

pub fn checkpoint_name(config_id: usize, seed: u64) -> String {
    format!("checkpoints/config{config_id:02}_seed{seed}.rsb")
}

/// Drop a trailing partial line left by an interrupted write.
fn repair_results(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        log::warn!("{}: dropping incomplete last line", path.display());
        fs::write(path, &text[..keep]).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

struct Sink {
    file: fs::File,
    both: bool,
    path: PathBuf,
}

impl Sink {
    fn append(&mut self, row: &ResultRow) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(row.fields(self.both))?;
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        self.file.write_all(&bytes).and_then(|_| self.file.flush()).map_err(|e| Error::io(&self.path, e))
    }
}

fn open_sink(path: &Path, both_requested: bool) -> Result<(Sink, Vec<ResultRow>)> {
    let existing = if path.exists() && fs::metadata(path).map_err(|e| Error::io(path, e))?.len() > 0 {
        repair_results(path)?;
        let header = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let both = header.lines().next().is_some_and(|h| h.split(',').any(|c| c == "f1_non_af"));
        Some((read_results(path)?, both))
    } else {
        None
    };
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let (rows, both, fresh) = match existing {
        Some((rows, both)) => (rows, both, false),
        None => (Vec::new(), both_requested, true),
    };
    let mut sink = Sink { file, both, path: path.to_path_buf() };
    if fresh {
        let header = results_header(both).join(",") + "\n";
        sink.file.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    Ok((sink, rows))
}

/// Train every grid entry with seeds `base_seed + k`, `k < repeats`.
///
/// Rows are appended to `out_dir/results.csv` as runs finish. Pairs already
/// present are skipped, so an interrupted benchmark resumes where it stopped.
/// Failed runs are written to `out_dir/failures.csv` and retried next time.
/// When every run is done the results file is rewritten in grid order.
pub fn run_experiment(
    grid: &[GridEntry],
    repeats: usize,
    base_seed: u64,
    train_set: &Dataset,
    valid_set: &Dataset,
    opts: &ExperimentOptions,
) -> Result<ExperimentOutcome> {
    if repeats == 0 {
        return Err(Error::Parameter("repeats must be ≥ 1".into()));
    }
    opts.train.check()?;
    let out = &opts.out_dir;
    fs::create_dir_all(out.join("checkpoints")).map_err(|e| Error::io(out, e))?;
    let results_path = out.join(RESULTS_FILE);
    let (sink, previous) = open_sink(&results_path, opts.both_classes)?;
    let both = sink.both;

    let done: HashSet<(usize, u64)> = previous.iter().map(|r| (r.config_id, r.seed)).collect();
    let jobs: Vec<(&GridEntry, u64)> = grid
        .iter()
        .flat_map(|e| (0..repeats as u64).map(move |k| (e, base_seed + k)))
        .filter(|(e, s)| !done.contains(&(e.id, *s)))
        .collect();
    let skipped = grid.len() * repeats - jobs.len();
    log::info!("{} runs to execute, {skipped} already recorded", jobs.len());

    let sink = Mutex::new(sink);
    let new_rows = Mutex::new(Vec::new());
    let failures = Mutex::new(Vec::new());
    let run_one = |entry: &GridEntry, seed: u64| -> Result<ResultRow> {
        let rel = checkpoint_name(entry.id, seed);
        let spec = TrainSpec {
            model: entry.spec.clone(),
            seed,
            checkpoint: opts.save_checkpoints.then(|| out.join(&rel)),
            ..opts.train.clone()
        };
        let (_, res) = train(&spec, train_set, valid_set)?;
        let checkpoint = if opts.save_checkpoints { rel } else { String::new() };
        Ok(ResultRow {
            config_id: entry.id,
            config_string: res.config,
            seed,
            n_params: res.n_params,
            f1: res.f1_af,
            wall_seconds: if opts.record_wall_time { res.wall_seconds } else { 0.0 },
            checkpoint,
            f1_non_af: both.then_some(res.f1_non_af),
        })
    };
    let execute = |&(entry, seed): &(&GridEntry, u64)| -> Result<()> {
        match run_one(entry, seed) {
            Ok(row) => {
                sink.lock().expect("sink lock").append(&row)?;
                new_rows.lock().expect("rows lock").push(row);
            }
            Err(e) => {
                log::error!("config {} seed {seed} failed: {e}", entry.id);
                failures.lock().expect("failures lock").push(RunFailure {
                    config_id: entry.id,
                    seed,
                    error: e.to_string(),
                });
            }
        }
        Ok(())
    };

    let workers = opts.workers.max(1);
    if workers == 1 {
        jobs.iter().try_for_each(execute)?;
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| jobs.par_iter().try_for_each(execute))?;
    }
    drop(sink);

    let executed = new_rows.lock().expect("rows lock").len();
    let mut rows = previous;
    rows.extend(new_rows.into_inner().expect("rows lock"));
    let position = |id: usize| grid.iter().position(|e| e.id == id).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (position(r.config_id), r.config_id, r.seed));
    write_results(&results_path, &rows)?;

    let failures = failures.into_inner().expect("failures lock");
    let fail_path = out.join(FAILURES_FILE);
    if failures.is_empty() {
        if fail_path.exists() {
            fs::remove_file(&fail_path).map_err(|e| Error::io(&fail_path, e))?;
        }
    } else {
        let mut w = csv::Writer::from_path(&fail_path)?;
        w.write_record(["config_id", "seed", "error"])?;
        for f in &failures {
            w.write_record([f.config_id.to_string(), f.seed.to_string(), f.error.clone()])?;
        }
        w.flush().map_err(|e| Error::io(&fail_path, e))?;
    }
    Ok(ExperimentOutcome { rows, executed, skipped, failures })
}
