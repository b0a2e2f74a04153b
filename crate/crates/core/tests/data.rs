use std::f64::consts::PI;

use afres::data::{
    flip_if_inverted, generate_synthetic, make_batches, orientation_statistic, preprocess, resample, sample_crop,
    split, stream_rng, BatchOptions, Dataset, RawLabel, Record, Rhythm,
};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn crop_starts_are_uniform() {
    let signal: Vec<f64> = (0..18000).map(|i| i as f64).collect();
    let mut rng = stream_rng(2024, 5);
    let bins = 20;
    let max_start = 15000.0;
    let draws = 10_000;
    let mut counts = vec![0usize; bins];
    for _ in 0..draws {
        let crop = sample_crop(&signal, 3000, &mut rng);
        let start = crop[0];
        assert!((0.0..=max_start).contains(&start));
        assert_eq!(crop[2999], start + 2999.0);
        let b = ((start / (max_start + 1.0)) * bins as f64) as usize;
        counts[b] += 1;
    }
    // 15001 start values do not split evenly into 20 bins
    let expected: Vec<f64> = (0..bins)
        .map(|b| {
            let lo = (b as f64 * (max_start + 1.0) / bins as f64).ceil();
            let hi = ((b + 1) as f64 * (max_start + 1.0) / bins as f64).ceil();
            draws as f64 * (hi - lo) / (max_start + 1.0)
        })
        .collect();
    let chi2: f64 = counts.iter().zip(&expected).map(|(&o, &e)| (o as f64 - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2:.2}, p {p:.4}");
}

fn tone(len: usize, fs: f64, f: f64) -> Vec<f64> {
    (0..len).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
}

/// Max error of `resample` against the analytic tone at the output grid.
fn tone_error(len: usize) -> f64 {
    let (fs, f) = (300.0, 5.0);
    let x = tone(len, fs, f);
    let y = resample(&x, fs, 150.0);
    assert_eq!(y.len(), (len as f64 / 2.0).round() as usize);
    let step = (len - 1) as f64 / (y.len() - 1) as f64;
    y.iter().enumerate().map(|(j, v)| (v - (2.0 * PI * f * j as f64 * step / fs).sin()).abs()).fold(0.0, f64::max)
}

#[test]
fn halving_rate_of_tone_on_aligned_grid() {
    // odd length: the output grid falls on input samples
    assert!(tone_error(3001) < 1e-3);
}

#[test]
fn halving_rate_of_tone_within_interpolation_bound() {
    // |f''| h² / 8 with h = 1/300 s
    let bound = (2.0 * PI * 5.0_f64).powi(2) / (8.0 * 300.0 * 300.0);
    for len in [3000, 2999, 4500, 9000] {
        let e = tone_error(len);
        assert!(e <= bound + 1e-12, "len {len}: {e} > {bound}");
    }
}

#[test]
fn short_records_are_tiled() {
    let signal: Vec<f64> = (0..2700).map(|i| i as f64).collect();
    let mut rng = stream_rng(0, 0);
    let crop = sample_crop(&signal, 3000, &mut rng);
    assert_eq!(&crop[..2700], &signal[..]);
    assert_eq!(&crop[2700..], &signal[..300]);
}

fn labeled(n_af: usize, n_non: usize) -> Dataset {
    let mut records = Vec::new();
    for i in 0..n_af + n_non {
        let label = if i < n_af {
            RawLabel::A
        } else if i % 2 == 0 {
            RawLabel::N
        } else {
            RawLabel::O
        };
        records.push(Record { id: format!("r{i}"), signal: vec![0.1 * i as f64; 100 + i], fs: 300.0, label });
    }
    preprocess(records)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn oversampling_ratio_is_exact(n_af in 0usize..12, n_non in 1usize..12, factor in 1usize..5, seed in any::<u64>()) {
        let ds = labeled(n_af, n_non);
        let opts = BatchOptions { batch_size: 7, crop_len: 50, oversample_af: factor, ..BatchOptions::default() };
        let mut af = 0;
        let mut non = 0;
        for b in make_batches(&ds, opts, stream_rng(seed, 3)).unwrap() {
            for (&l, &src) in b.labels.iter().zip(&b.sources) {
                prop_assert_eq!(l, ds.labels[src].class_index());
                if l == Rhythm::Af.class_index() { af += 1 } else { non += 1 }
            }
        }
        // af / non == factor · |A| / |NO|, compared without division
        prop_assert_eq!(af * n_non, factor * n_af * non);
        prop_assert_eq!(af + non, factor * n_af + n_non);
    }

    #[test]
    fn split_partitions(n in 2usize..80, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let ds = labeled(n / 3, n - n / 3);
        let (tr, va) = split(&ds, frac, seed).unwrap();
        prop_assert_eq!(tr.len(), (frac * n as f64).floor() as usize);
        prop_assert_eq!(tr.len() + va.len(), n);
        let mut ids: Vec<&str> = tr.records.iter().chain(&va.records).map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
        let (tr2, _) = split(&ds, frac, seed).unwrap();
        prop_assert_eq!(tr.records, tr2.records);
    }

    #[test]
    fn flip_is_idempotent(values in proptest::collection::vec(-5.0f64..5.0, 1..200)) {
        let once = flip_if_inverted(&values);
        prop_assert_eq!(flip_if_inverted(&once), once.clone());
        prop_assert!(orientation_statistic(&once) >= 0.0);
    }

    #[test]
    fn ramp_stays_linear(len in 2usize..400, ratio in 0.5f64..2.0, a in -3.0f64..3.0, b in -1.0f64..1.0) {
        let x: Vec<f64> = (0..len).map(|i| a + b * i as f64).collect();
        let y = resample(&x, 300.0, 300.0 * ratio);
        if y.len() > 1 {
            let step = (len - 1) as f64 / (y.len() - 1) as f64;
            for (j, v) in y.iter().enumerate() {
                prop_assert!((v - (a + b * j as f64 * step)).abs() < 1e-12);
            }
        }
        prop_assert_eq!(y[0], x[0]);
    }
}

#[test]
fn preprocessing_drops_noise_and_merges_classes() {
    let recs = vec![
        Record { id: "a".into(), signal: vec![0.0, 1.0, 0.0], fs: 300.0, label: RawLabel::A },
        Record { id: "n".into(), signal: vec![0.0, 1.0, 0.0], fs: 300.0, label: RawLabel::N },
        Record { id: "o".into(), signal: vec![0.0, 1.0, 0.0], fs: 300.0, label: RawLabel::O },
        Record { id: "z".into(), signal: vec![0.0, 1.0, 0.0], fs: 300.0, label: RawLabel::Noisy },
    ];
    let ds = preprocess(recs);
    assert_eq!(ds.labels, vec![Rhythm::Af, Rhythm::NonAf, Rhythm::NonAf]);
    let only_noise = vec![Record { id: "z".into(), signal: vec![1.0], fs: 300.0, label: RawLabel::Noisy }];
    assert!(preprocess(only_noise).is_empty());
}

#[test]
fn synthetic_records_come_out_upright() {
    let ds = preprocess(generate_synthetic(50, 0.4, 8));
    assert_eq!(ds.count(Rhythm::Af), 20);
    for r in &ds.records {
        assert!(orientation_statistic(&r.signal) >= 0.0, "{}", r.id);
    }
}
