//! Pseudo-ECG generator used when the real recordings are not available.
//!
//! Non-AF records beat regularly and carry a P wave before every QRS
//! complex; AF records draw every RR interval independently and have no P
//! wave. Both get additive white noise, and a fraction of records is
//! emitted upside down.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{stream_rng, RawLabel, Record, SYNTH_STREAM};

pub const SYNTH_FS: f64 = 300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub fs: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub regular_rr_mean: f64,
    pub regular_rr_std: f64,
    pub af_rr_range: (f64, f64),
    pub qrs_amplitude: f64,
    /// Gaussian σ of the QRS bump, seconds.
    pub qrs_width: f64,
    pub p_amplitude: f64,
    /// Lead of the P wave ahead of the R peak, seconds.
    pub p_offset: f64,
    pub p_width: f64,
    pub noise_std: f64,
    pub inverted_fraction: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            fs: SYNTH_FS,
            min_seconds: 9.0,
            max_seconds: 61.0,
            regular_rr_mean: 0.8,
            regular_rr_std: 0.02,
            af_rr_range: (0.4, 1.2),
            qrs_amplitude: 1.0,
            qrs_width: 0.012,
            p_amplitude: 0.15,
            p_offset: 0.16,
            p_width: 0.025,
            noise_std: 0.05,
            inverted_fraction: 0.3,
        }
    }
}

pub struct SynthRecord {
    pub record: Record,
    /// R-peak times in seconds.
    pub beats: Vec<f64>,
    pub inverted: bool,
}

fn add_bump(signal: &mut [f64], fs: f64, center: f64, width: f64, amplitude: f64) {
    let c = center * fs;
    let w = width * fs;
    let lo = (c - 5.0 * w).floor().max(0.0) as usize;
    let hi = ((c + 5.0 * w).ceil() as usize).min(signal.len());
    for (i, s) in signal.iter_mut().enumerate().take(hi).skip(lo) {
        let z = (i as f64 - c) / w;
        *s += amplitude * (-0.5 * z * z).exp();
    }
}

fn synth_one<R: Rng>(id: String, af: bool, opts: &SynthOptions, rng: &mut R) -> SynthRecord {
    let seconds = rng.gen_range(opts.min_seconds..=opts.max_seconds);
    let len = (seconds * opts.fs).round() as usize;
    let duration = len as f64 / opts.fs;
    let regular = Normal::new(opts.regular_rr_mean, opts.regular_rr_std).expect("valid normal");

    let mut beats = Vec::new();
    let mut t = rng.gen_range(0.0..opts.regular_rr_mean);
    while t < duration {
        beats.push(t);
        t += if af { rng.gen_range(opts.af_rr_range.0..opts.af_rr_range.1) } else { regular.sample(rng).max(0.2) };
    }

    let mut signal = vec![0.0; len];
    for &b in &beats {
        add_bump(&mut signal, opts.fs, b, opts.qrs_width, opts.qrs_amplitude);
        if !af {
            add_bump(&mut signal, opts.fs, b - opts.p_offset, opts.p_width, opts.p_amplitude);
        }
    }
    let noise = Normal::new(0.0, opts.noise_std).expect("valid normal");
    for s in signal.iter_mut() {
        *s += noise.sample(rng);
    }
    let inverted = rng.gen_bool(opts.inverted_fraction);
    if inverted {
        signal.iter_mut().for_each(|v| *v = -*v);
    }
    let label = if af {
        RawLabel::A
    } else if rng.gen_bool(0.5) {
        RawLabel::N
    } else {
        RawLabel::O
    };
    SynthRecord { record: Record { id, signal, fs: opts.fs, label }, beats, inverted }
}

pub fn generate_detailed(n: usize, af_fraction: f64, seed: u64, opts: &SynthOptions) -> Vec<SynthRecord> {
    let mut rng = stream_rng(seed, SYNTH_STREAM);
    let n_af = (n as f64 * af_fraction.clamp(0.0, 1.0)).round() as usize;
    let mut is_af: Vec<bool> = (0..n).map(|i| i < n_af).collect();
    is_af.shuffle(&mut rng);
    is_af.into_iter().enumerate().map(|(i, af)| synth_one(format!("S{:05}", i + 1), af, opts, &mut rng)).collect()
}

/// `n` pseudo-ECG records at 300 Hz, `round(n · af_fraction)` of them AF.
pub fn generate_synthetic(n: usize, af_fraction: f64, seed: u64) -> Vec<Record> {
    generate_synthetic_with(n, af_fraction, seed, &SynthOptions::default())
}

pub fn generate_synthetic_with(n: usize, af_fraction: f64, seed: u64, opts: &SynthOptions) -> Vec<Record> {
    generate_detailed(n, af_fraction, seed, opts).into_iter().map(|s| s.record).collect()
}
