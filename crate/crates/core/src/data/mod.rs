//! ECG records, binary relabelling, orientation correction, splitting and
//! the crop/resample augmentation used to feed training.

mod augment;
mod io;
mod synth;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use augment::{make_batches, resample, sample_crop, tile_to, Batch, BatchOptions, BatchStream};
pub use io::{load_dataset, write_dataset, ManifestRow};
pub use synth::{generate_detailed, generate_synthetic, generate_synthetic_with, SynthOptions, SynthRecord, SYNTH_FS};

use crate::error::{Error, Result};

/// Rhythm class as annotated in the source data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RawLabel {
    /// Atrial fibrillation.
    A,
    /// Normal rhythm.
    N,
    /// Other rhythm.
    O,
    /// Too noisy to classify (`~`).
    Noisy,
}

impl RawLabel {
    pub fn token(self) -> &'static str {
        match self {
            RawLabel::A => "A",
            RawLabel::N => "N",
            RawLabel::O => "O",
            RawLabel::Noisy => "~",
        }
    }

    /// Binary label, `None` for noisy records.
    pub fn rhythm(self) -> Option<Rhythm> {
        match self {
            RawLabel::A => Some(Rhythm::Af),
            RawLabel::N | RawLabel::O => Some(Rhythm::NonAf),
            RawLabel::Noisy => None,
        }
    }
}

impl FromStr for RawLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" => Ok(RawLabel::A),
            "N" => Ok(RawLabel::N),
            "O" => Ok(RawLabel::O),
            "~" => Ok(RawLabel::Noisy),
            other => Err(Error::Data(format!("bad label token '{other}'"))),
        }
    }
}

impl fmt::Display for RawLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Binary target: AF (class index 1) versus everything else (index 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rhythm {
    NonAf,
    Af,
}

impl Rhythm {
    pub fn class_index(self) -> usize {
        match self {
            Rhythm::NonAf => 0,
            Rhythm::Af => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Self {
        if i == 1 {
            Rhythm::Af
        } else {
            Rhythm::NonAf
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub signal: Vec<f64>,
    /// Sampling rate in Hz.
    pub fs: f64,
    pub label: RawLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Valid,
}

/// Preprocessed, binary-labelled collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub labels: Vec<Rhythm>,
    pub split: Option<Split>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, rhythm: Rhythm) -> usize {
        self.labels.iter().filter(|&&l| l == rhythm).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Record, Rhythm)> {
        self.records.iter().zip(self.labels.iter().copied())
    }
}

/// Per-class record counts in A/N/O/~ order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClassCounts {
    pub a: usize,
    pub n: usize,
    pub o: usize,
    pub noisy: usize,
}

impl ClassCounts {
    pub fn of(records: &[Record]) -> Self {
        let mut c = ClassCounts::default();
        for r in records {
            match r.label {
                RawLabel::A => c.a += 1,
                RawLabel::N => c.n += 1,
                RawLabel::O => c.o += 1,
                RawLabel::Noisy => c.noisy += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.a + self.n + self.o + self.noisy
    }
}

impl fmt::Display for ClassCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A={} N={} O={} ~={}", self.a, self.n, self.o, self.noisy)
    }
}

/// Deterministic RNG for a (seed, stream) pair, so that independent
/// consumers never share a sequence.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sample skewness of the mean-removed signal; 0 for constant signals.
pub fn orientation_statistic(signal: &[f64]) -> f64 {
    let n = signal.len() as f64;
    if signal.is_empty() {
        return 0.0;
    }
    let mean = signal.iter().sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &x in signal {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    if m2 <= 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Negate signals whose dominant peaks point downwards. A statistic of
/// exactly zero counts as upright.
pub fn flip_if_inverted(signal: &[f64]) -> Vec<f64> {
    if orientation_statistic(signal) < 0.0 {
        signal.iter().map(|v| -v).collect()
    } else {
        signal.to_vec()
    }
}

/// Drop noisy records, merge N and O into the non-AF class and correct the
/// orientation of inverted recordings.
pub fn preprocess(records: Vec<Record>) -> Dataset {
    let mut out = Dataset { records: Vec::new(), labels: Vec::new(), split: None };
    let mut flipped = 0;
    for mut r in records {
        let Some(label) = r.label.rhythm() else { continue };
        if orientation_statistic(&r.signal) < 0.0 {
            r.signal.iter_mut().for_each(|v| *v = -*v);
            flipped += 1;
        }
        out.records.push(r);
        out.labels.push(label);
    }
    if out.is_empty() {
        log::warn!("preprocessing left no records (all inputs were noisy or none were given)");
    } else {
        log::info!(
            "preprocessed {} records: {} AF, {} non-AF, {} flipped",
            out.len(),
            out.count(Rhythm::Af),
            out.count(Rhythm::NonAf),
            flipped
        );
    }
    out
}

/// Random partition into `floor(train_fraction · n)` training records and
/// the rest for validation. Records keep their original relative order.
pub fn split(dataset: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Data(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let n = dataset.len();
    let n_train = (train_fraction * n as f64).floor() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, SPLIT_STREAM));
    let (train_idx, valid_idx) = idx.split_at(n_train);
    let take = |ids: &[usize], split| {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        Dataset {
            records: ids.iter().map(|&i| dataset.records[i].clone()).collect(),
            labels: ids.iter().map(|&i| dataset.labels[i]).collect(),
            split: Some(split),
        }
    };
    Ok((take(train_idx, Split::Train), take(valid_idx, Split::Valid)))
}

pub const SPLIT_STREAM: u64 = 1;
pub const SYNTH_STREAM: u64 = 2;
pub const EPOCH_STREAM_BASE: u64 = 1 << 32;
