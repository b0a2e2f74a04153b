use rand::seq::SliceRandom;
use rand::Rng;

use super::{Dataset, Rhythm};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Repeat `signal` end to end until it is `len` samples long (truncating
/// the last repetition).
pub fn tile_to(signal: &[f64], len: usize) -> Vec<f64> {
    assert!(!signal.is_empty(), "cannot tile an empty signal");
    signal.iter().copied().cycle().take(len).collect()
}

/// A `crop_len`-sample window starting uniformly at random; signals shorter
/// than `crop_len` are tiled instead.
pub fn sample_crop<R: Rng + ?Sized>(signal: &[f64], crop_len: usize, rng: &mut R) -> Vec<f64> {
    if signal.len() < crop_len {
        return tile_to(signal, crop_len);
    }
    let start = rng.gen_range(0..=signal.len() - crop_len);
    signal[start..start + crop_len].to_vec()
}

/// Linear interpolation onto `round(len · new_fs / fs)` uniformly spaced
/// points spanning the original first and last sample.
pub fn resample(signal: &[f64], fs: f64, new_fs: f64) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let n_out = ((n as f64 * new_fs / fs).round() as usize).max(1);
    if n_out == n {
        return signal.to_vec();
    }
    if n == 1 || n_out == 1 {
        return vec![signal[0]; n_out];
    }
    let step = (n - 1) as f64 / (n_out - 1) as f64;
    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let pos = j as f64 * step;
        let i = (pos.floor() as usize).min(n - 2);
        let frac = pos - i as f64;
        out.push(signal[i] + (signal[i + 1] - signal[i]) * frac);
    }
    *out.last_mut().unwrap() = signal[n - 1];
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchOptions {
    pub batch_size: usize,
    pub crop_len: usize,
    /// Crops drawn per AF record per epoch; non-AF records contribute one.
    pub oversample_af: usize,
    /// Resample each source signal to a rate drawn from ±`resample_range`
    /// around its own before cropping.
    pub augment: bool,
    pub resample_range: f64,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions { batch_size: 32, crop_len: 3000, oversample_af: 3, augment: true, resample_range: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// `[B, 1, crop_len]`
    pub inputs: Tensor,
    /// Class indices (1 = AF).
    pub labels: Vec<usize>,
    /// Index of the source record of each crop.
    pub sources: Vec<usize>,
}

/// Lazily generated epoch of training batches.
pub struct BatchStream<'d, R> {
    data: &'d Dataset,
    order: Vec<usize>,
    next: usize,
    opts: BatchOptions,
    rng: R,
}

impl<R> BatchStream<'_, R> {
    /// Total number of crops in the epoch.
    pub fn crops(&self) -> usize {
        self.order.len()
    }

    pub fn batches(&self) -> usize {
        self.order.len().div_ceil(self.opts.batch_size)
    }

    /// Source record index of every crop, in emission order.
    pub fn plan(&self) -> &[usize] {
        &self.order
    }
}

/// One epoch of shuffled crops: every non-AF record once, every AF record
/// `oversample_af` times.
pub fn make_batches<'d, R: Rng>(data: &'d Dataset, opts: BatchOptions, mut rng: R) -> Result<BatchStream<'d, R>> {
    if data.is_empty() {
        return Err(Error::Data("cannot batch an empty training set".into()));
    }
    if opts.batch_size == 0 || opts.crop_len == 0 || opts.oversample_af == 0 {
        return Err(Error::Data(format!("invalid batch options {opts:?}")));
    }
    let mut order = Vec::new();
    for (i, &label) in data.labels.iter().enumerate() {
        let reps = if label == Rhythm::Af { opts.oversample_af } else { 1 };
        order.extend(std::iter::repeat(i).take(reps));
    }
    order.shuffle(&mut rng);
    Ok(BatchStream { data, order, next: 0, opts, rng })
}

impl<R: Rng> Iterator for BatchStream<'_, R> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.next >= self.order.len() {
            return None;
        }
        let end = (self.next + self.opts.batch_size).min(self.order.len());
        let sources = self.order[self.next..end].to_vec();
        self.next = end;
        let crop_len = self.opts.crop_len;
        let mut inputs = Vec::with_capacity(sources.len() * crop_len);
        let mut labels = Vec::with_capacity(sources.len());
        for &i in &sources {
            let rec = &self.data.records[i];
            let crop = if self.opts.augment {
                let r = self.opts.resample_range;
                let new_fs = rec.fs * self.rng.gen_range(1.0 - r..=1.0 + r);
                sample_crop(&resample(&rec.signal, rec.fs, new_fs), crop_len, &mut self.rng)
            } else {
                sample_crop(&rec.signal, crop_len, &mut self.rng)
            };
            inputs.extend_from_slice(&crop);
            labels.push(self.data.labels[i].class_index());
        }
        let inputs = Tensor::from_vec(&[sources.len(), 1, crop_len], inputs).expect("crop length fixed");
        Some(Batch { inputs, labels, sources })
    }
}
