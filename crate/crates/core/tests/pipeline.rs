use std::fs;
use std::path::Path;

use afres::data::{generate_synthetic, preprocess, split, Dataset};
use afres::eval::{aggregate, emit_report, read_results, read_table, AggregateResult, ReportMeta, ResultRow};
use afres::model::{self, table::REFERENCE_TABLE, ModelSpec};
use afres::pipeline::{
    parse_grid, run_experiment, ExperimentOptions, GridEntry, TrainSpec, FAILURES_FILE, RESULTS_FILE,
};

fn data() -> (Dataset, Dataset) {
    split(&preprocess(generate_synthetic(20, 0.5, 4)), 0.75, 0).unwrap()
}

fn grid(configs: &[&str]) -> Vec<GridEntry> {
    parse_grid(&configs.join("\n")).unwrap()
}

fn options(out: &Path) -> ExperimentOptions {
    let mut t = TrainSpec::new(ModelSpec::parse("4; cna; [4]; [1]").unwrap());
    t.epochs = 1;
    t.batch.batch_size = 8;
    t.batch.crop_len = 400;
    let mut o = ExperimentOptions::new(t, out);
    o.record_wall_time = false;
    o
}

const TWO: [&str; 2] = ["4; cna; [4]; [1]", "2; cn; [3, 3]; [1, 1]"];

#[test]
fn two_configs_five_repeats() {
    let (tr, va) = data();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&grid(&TWO), 5, 10, &tr, &va, &options(dir.path())).unwrap();
    assert_eq!(out.rows.len(), 10);
    assert_eq!(out.executed, 10);
    let pairs: Vec<(usize, u64)> = out.rows.iter().map(|r| (r.config_id, r.seed)).collect();
    let expect: Vec<(usize, u64)> = (1..=2).flat_map(|c| (10..15).map(move |s| (c, s))).collect();
    assert_eq!(pairs, expect);
    for r in &out.rows {
        assert!((0.0..=1.0).contains(&r.f1));
        assert!(dir.path().join(&r.checkpoint).exists());
    }
    assert_eq!(read_results(&dir.path().join(RESULTS_FILE)).unwrap(), out.rows);
}

#[test]
fn resume_runs_only_missing_pairs() {
    let (tr, va) = data();
    let dir = tempfile::tempdir().unwrap();
    let opts = options(dir.path());
    let g = grid(&TWO);
    let full = run_experiment(&g, 5, 0, &tr, &va, &opts).unwrap();
    let path = dir.path().join(RESULTS_FILE);
    let complete = fs::read_to_string(&path).unwrap();

    // as if killed after the 7th run, mid-way through writing the 8th
    let lines: Vec<&str> = complete.lines().collect();
    let mut partial = lines[..8].join("\n") + "\n";
    partial.push_str(&lines[8][..5]);
    fs::write(&path, partial).unwrap();

    let resumed = run_experiment(&g, 5, 0, &tr, &va, &opts).unwrap();
    assert_eq!(resumed.executed, 3);
    assert_eq!(resumed.skipped, 7);
    assert_eq!(resumed.rows, full.rows);
    assert_eq!(fs::read_to_string(&path).unwrap(), complete);

    let again = run_experiment(&g, 5, 0, &tr, &va, &opts).unwrap();
    assert_eq!(again.executed, 0);
}

#[test]
fn results_are_byte_identical_across_runs_and_workers() {
    let (tr, va) = data();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&grid(&TWO), 2, 3, &tr, &va, &options(a.path())).unwrap();
    let mut opts = options(b.path());
    opts.workers = 3;
    run_experiment(&grid(&TWO), 2, 3, &tr, &va, &opts).unwrap();
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(a.path(), RESULTS_FILE), read(b.path(), RESULTS_FILE));
    for row in read_results(&a.path().join(RESULTS_FILE)).unwrap() {
        assert_eq!(read(a.path(), &row.checkpoint), read(b.path(), &row.checkpoint));
    }
}

#[test]
fn failed_runs_are_recorded_and_retried() {
    let (tr, va) = data();
    let dir = tempfile::tempdir().unwrap();
    // nine strided stages collapse a 400-sample crop
    let g = grid(&["4; cna; [4]; [1]", "2; c; [2, 2, 2, 2, 2, 2, 2, 2, 2]; [1, 1, 1, 1, 1, 1, 1, 1, 1]"]);
    let out = run_experiment(&g, 2, 0, &tr, &va, &options(dir.path())).unwrap();
    assert_eq!(out.rows.len(), 2);
    assert_eq!(out.failures.len(), 2);
    assert!(out.failures.iter().all(|f| f.config_id == 2 && f.error.contains("collapses")));
    let failures = fs::read_to_string(dir.path().join(FAILURES_FILE)).unwrap();
    assert_eq!(failures.lines().count(), 3);

    let again = run_experiment(&g, 2, 0, &tr, &va, &options(dir.path())).unwrap();
    assert_eq!(again.executed, 0);
    assert_eq!(again.failures.len(), 2);
}

#[test]
fn zero_repeats_rejected() {
    let (tr, va) = data();
    let dir = tempfile::tempdir().unwrap();
    assert!(run_experiment(&grid(&TWO), 0, 0, &tr, &va, &options(dir.path())).is_err());
}

fn reference_rows() -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for row in &REFERENCE_TABLE {
        let spec = ModelSpec::parse(row.config).unwrap();
        for seed in 0..5u64 {
            rows.push(ResultRow {
                config_id: row.index,
                config_string: spec.to_string(),
                seed,
                n_params: spec.architecture().unwrap().param_count(),
                f1: row.f1_median + 0.001 * (seed as f64 - 2.0),
                wall_seconds: 0.0,
                checkpoint: String::new(),
                f1_non_af: None,
            });
        }
    }
    rows
}

#[test]
fn report_for_all_thirty_configs() {
    let aggs = aggregate(&reference_rows());
    assert_eq!(aggs.len(), 30);
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&aggs, dir.path(), &ReportMeta::default()).unwrap();
    assert_eq!(files.len(), 7);

    let table = read_table(&dir.path().join("table_a1.csv")).unwrap();
    let counts: Vec<usize> = table.iter().map(|r| r.n_params).collect();
    assert_eq!(counts.first(), Some(&3658));
    assert_eq!(counts.last(), Some(&7217474));
    assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    for r in &table {
        assert!((r.f1_median - REFERENCE_TABLE[r.index - 1].f1_median).abs() < 1e-9);
    }
    let mut by_id = table.clone();
    by_id.sort_by_key(|r| r.index);
    assert_eq!(by_id, aggs.iter().map(AggregateResult::table_row).collect::<Vec<_>>());

    for name in ["fig_params_vs_f1", "fig_input_filters", "fig_layout", "fig_filters", "fig_blocks"] {
        let text = fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 31, "{name}");
    }
    let meta = fs::read_to_string(dir.path().join("report_meta.txt")).unwrap();
    assert!(meta.contains("threshold=0.5") && meta.contains("f1_std=population"));
}

#[test]
fn layout_sweep_pairs_configs() {
    let aggs = aggregate(&reference_rows());
    let dir = tempfile::tempdir().unwrap();
    emit_report(&aggs, dir.path(), &ReportMeta::default()).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("fig_layout.csv")).unwrap();
    let group = "8; x; [4, 8, 16, 32, 64, 128, 256]; [1, 1, 1, 1, 1, 1, 1]";
    let layouts: Vec<String> =
        reader.records().map(|r| r.unwrap()).filter(|r| &r[0] == group).map(|r| r[1].to_string()).collect();
    assert_eq!(layouts.len(), 2, "{layouts:?}");
    assert_ne!(layouts[0], layouts[1]);
}

#[test]
fn single_config_single_row() {
    let rows: Vec<ResultRow> = reference_rows().into_iter().filter(|r| r.config_id == 7).collect();
    let aggs = aggregate(&rows);
    let dir = tempfile::tempdir().unwrap();
    emit_report(&aggs, dir.path(), &ReportMeta::default()).unwrap();
    assert_eq!(read_table(&dir.path().join("table_a1.csv")).unwrap().len(), 1);
    assert!(emit_report(&[], dir.path(), &ReportMeta::default()).is_err());
}

#[test]
fn checkpoint_loads_as_same_model() {
    let (tr, va) = data();
    let dir = tempfile::tempdir().unwrap();
    let mut spec = options(dir.path()).train;
    spec.checkpoint = Some(dir.path().join("m.rsb"));
    let (net, res) = afres::pipeline::train(&spec, &tr, &va).unwrap();
    let loaded = model::load_checkpoint(&dir.path().join("m.rsb")).unwrap();
    let probe = &va.records[0];
    let p1 = afres::eval::predict_record(&net, probe, 400).unwrap();
    let p2 = afres::eval::predict_record(&loaded, probe, 400).unwrap();
    assert_eq!(p1.to_bits(), p2.to_bits());
    assert_eq!(res.checkpoint.as_deref(), Some(dir.path().join("m.rsb").as_path()));
}
