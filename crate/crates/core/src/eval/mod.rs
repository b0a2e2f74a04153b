//! Whole-record inference, F1 scoring and cross-run aggregation.
//!
//! A record is scored by cutting it into consecutive non-overlapping windows
//! of `crop_len` samples, averaging the per-window AF probability and
//! comparing the mean against a strict threshold. The final partial window is
//! tiled up to `crop_len`, like a short training crop, so every sample is
//! scored.

mod report;

pub(crate) use report::results_header;
pub use report::{
    aggregate, emit_report, fmt_sig6, read_results, read_table, write_results, AggregateResult, ReportMeta, ResultRow,
    TableRow, RESULTS_HEADER,
};

use crate::data::{tile_to, Dataset, Record, Rhythm};
use crate::error::{Error, Result};
use crate::model::Network;
use crate::nn::Tensor;

pub const THRESHOLD: f64 = 0.5;

/// Largest number of windows sent through the network at once.
const WINDOW_BATCH: usize = 32;

/// Anything that maps a batch of crops `[B, 1, L]` to AF probabilities.
pub trait CropScorer {
    fn af_probabilities(&self, crops: &Tensor) -> Result<Vec<f64>>;
}

impl CropScorer for Network {
    fn af_probabilities(&self, crops: &Tensor) -> Result<Vec<f64>> {
        let p = self.predict_proba(crops)?;
        Ok(p.data().chunks(2).map(|row| row[Rhythm::Af.class_index()]).collect())
    }
}

/// Non-overlapping inference windows; the last partial window (or a signal
/// shorter than `crop_len`) is tiled to full length.
pub fn inference_windows(signal: &[f64], crop_len: usize) -> Vec<Vec<f64>> {
    signal.chunks(crop_len).map(|w| if w.len() == crop_len { w.to_vec() } else { tile_to(w, crop_len) }).collect()
}

/// Mean AF probability over all inference windows of `record`.
pub fn predict_record<M: CropScorer + ?Sized>(model: &M, record: &Record, crop_len: usize) -> Result<f64> {
    if record.signal.is_empty() {
        return Err(Error::Data(format!("record '{}' has an empty signal", record.id)));
    }
    if crop_len == 0 {
        return Err(Error::Data("crop length must be ≥ 1".into()));
    }
    let windows = inference_windows(&record.signal, crop_len);
    let mut probs = Vec::with_capacity(windows.len());
    for group in windows.chunks(WINDOW_BATCH) {
        let data: Vec<f64> = group.concat();
        let batch = Tensor::from_vec(&[group.len(), 1, crop_len], data)?;
        probs.extend(model.af_probabilities(&batch)?);
    }
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}

/// AF iff `p > threshold`; a tie goes to non-AF.
pub fn classify(p: f64, threshold: f64) -> Rhythm {
    if p > threshold {
        Rhythm::Af
    } else {
        Rhythm::NonAf
    }
}

/// `2TP / (2TP + FP + FN)` for `positive`; 0 when the denominator is 0.
pub fn f1_score(predictions: &[Rhythm], labels: &[Rhythm], positive: Rhythm) -> f64 {
    assert_eq!(predictions.len(), labels.len(), "prediction/label length mismatch");
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p == positive, y == positive) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub probabilities: Vec<f64>,
    pub predictions: Vec<Rhythm>,
    pub f1_af: f64,
    pub f1_non_af: f64,
}

/// Score every record of a dataset with the windowed protocol.
pub fn evaluate<M: CropScorer + ?Sized>(model: &M, data: &Dataset, crop_len: usize) -> Result<Evaluation> {
    let probabilities = data.records.iter().map(|r| predict_record(model, r, crop_len)).collect::<Result<Vec<_>>>()?;
    let predictions: Vec<Rhythm> = probabilities.iter().map(|&p| classify(p, THRESHOLD)).collect();
    Ok(Evaluation {
        f1_af: f1_score(&predictions, &data.labels, Rhythm::Af),
        f1_non_af: f1_score(&predictions, &data.labels, Rhythm::NonAf),
        probabilities,
        predictions,
    })
}
