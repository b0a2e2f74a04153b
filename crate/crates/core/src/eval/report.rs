//! Per-run results files, aggregation across seeds and report emission.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

pub const RESULTS_HEADER: [&str; 7] =
    ["config_id", "config_string", "seed", "n_params", "f1", "wall_seconds", "checkpoint"];
const NON_AF_COLUMN: &str = "f1_non_af";

/// One line of a results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub config_id: usize,
    pub config_string: String,
    pub seed: u64,
    pub n_params: usize,
    /// F1 of the AF class.
    pub f1: f64,
    pub wall_seconds: f64,
    /// Relative to the results file's directory.
    pub checkpoint: String,
    pub f1_non_af: Option<f64>,
}

impl ResultRow {
    pub(crate) fn fields(&self, with_non_af: bool) -> Vec<String> {
        let mut v = vec![
            self.config_id.to_string(),
            self.config_string.clone(),
            self.seed.to_string(),
            self.n_params.to_string(),
            self.f1.to_string(),
            self.wall_seconds.to_string(),
            self.checkpoint.clone(),
        ];
        if with_non_af {
            v.push(self.f1_non_af.map(|f| f.to_string()).unwrap_or_default());
        }
        v
    }
}

pub(crate) fn results_header(with_non_af: bool) -> Vec<&'static str> {
    let mut h = RESULTS_HEADER.to_vec();
    if with_non_af {
        h.push(NON_AF_COLUMN);
    }
    h
}

/// Write a complete results file. The non-AF column is added when any row
/// carries it.
pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let both = rows.iter().any(|r| r.f1_non_af.is_some());
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(results_header(both))?;
    for r in rows {
        w.write_record(r.fields(both))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Format(format!("{}: missing column '{name}'", path.display())))
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64, path: &Path) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::Format(format!("{}: line {line}: cannot parse '{raw}'", path.display())))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx: Vec<usize> = RESULTS_HEADER.iter().map(|h| column(&headers, h, path)).collect::<Result<_>>()?;
    let non_af = headers.iter().position(|h| h == NON_AF_COLUMN);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push(ResultRow {
            config_id: parse_field(&rec, idx[0], line, path)?,
            config_string: rec.get(idx[1]).unwrap_or("").to_string(),
            seed: parse_field(&rec, idx[2], line, path)?,
            n_params: parse_field(&rec, idx[3], line, path)?,
            f1: parse_field(&rec, idx[4], line, path)?,
            wall_seconds: parse_field(&rec, idx[5], line, path)?,
            checkpoint: rec.get(idx[6]).unwrap_or("").to_string(),
            f1_non_af: match non_af.and_then(|i| rec.get(i)).filter(|s| !s.is_empty()) {
                Some(s) => Some(parse_field(&csv::StringRecord::from(vec![s]), 0, line, path)?),
                None => None,
            },
        });
    }
    Ok(rows)
}

/// Median and population standard deviation of F1 over the seeds of one
/// configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub config_id: usize,
    pub config: String,
    pub n_params: usize,
    pub repeats: usize,
    pub f1_median: f64,
    pub f1_std: f64,
    /// Same statistics for the non-AF class, when recorded.
    pub f1_non_af: Option<(f64, f64)>,
}

impl AggregateResult {
    /// The row written to `table_a1.csv`, floats rounded as written.
    pub fn table_row(&self) -> TableRow {
        let r = |v: f64| fmt_sig6(v).parse::<f64>().expect("formatted float");
        TableRow {
            index: self.config_id,
            config: self.config.clone(),
            n_params: self.n_params,
            f1_median: r(self.f1_median),
            f1_std: r(self.f1_std),
            f1_non_af: self.f1_non_af.map(|(m, s)| (r(m), r(s))),
        }
    }
}

/// One line of `table_a1.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub index: usize,
    pub config: String,
    pub n_params: usize,
    pub f1_median: f64,
    pub f1_std: f64,
    pub f1_non_af: Option<(f64, f64)>,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Group rows by configuration id, ordered by id.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateResult> {
    let mut groups: BTreeMap<usize, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.config_id).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(id, rs)| {
            let f1: Vec<f64> = rs.iter().map(|r| r.f1).collect();
            let non_af: Vec<f64> = rs.iter().filter_map(|r| r.f1_non_af).collect();
            AggregateResult {
                config_id: id,
                config: rs[0].config_string.clone(),
                n_params: rs[0].n_params,
                repeats: rs.len(),
                f1_median: median(&f1),
                f1_std: population_std(&f1),
                f1_non_af: (non_af.len() == rs.len()).then(|| (median(&non_af), population_std(&non_af))),
            }
        })
        .collect()
}

/// Six significant digits, shortest decimal form.
pub fn fmt_sig6(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let r: f64 = format!("{v:.5e}").parse().expect("scientific float");
    r.to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub crop_len: usize,
    pub threshold: f64,
    pub positive_class: String,
}

impl Default for ReportMeta {
    fn default() -> Self {
        ReportMeta { crop_len: 3000, threshold: super::THRESHOLD, positive_class: "A".into() }
    }
}

const TABLE_HEADER: [&str; 5] = ["index", "config", "n_params", "f1_median", "f1_std"];

fn table_rows(aggs: &[AggregateResult]) -> Vec<&AggregateResult> {
    let mut sorted: Vec<&AggregateResult> = aggs.iter().collect();
    sorted.sort_by_key(|a| (a.n_params, a.config_id));
    sorted
}

fn write_table(path: &Path, aggs: &[AggregateResult]) -> Result<()> {
    let both = aggs.iter().all(|a| a.f1_non_af.is_some()) && !aggs.is_empty();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = TABLE_HEADER.to_vec();
    if both {
        header.extend(["f1_non_af_median", "f1_non_af_std"]);
    }
    w.write_record(&header)?;
    for a in table_rows(aggs) {
        let mut rec = vec![
            a.config_id.to_string(),
            a.config.clone(),
            a.n_params.to_string(),
            fmt_sig6(a.f1_median),
            fmt_sig6(a.f1_std),
        ];
        if let (true, Some((m, s))) = (both, a.f1_non_af) {
            rec.extend([fmt_sig6(m), fmt_sig6(s)]);
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a `table_a1.csv` written by [`emit_report`], in file order.
pub fn read_table(path: &Path) -> Result<Vec<TableRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx: Vec<usize> = TABLE_HEADER.iter().map(|h| column(&headers, h, path)).collect::<Result<_>>()?;
    let non_af =
        (headers.iter().position(|h| h == "f1_non_af_median"), headers.iter().position(|h| h == "f1_non_af_std"));
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push(TableRow {
            index: parse_field(&rec, idx[0], line, path)?,
            config: rec.get(idx[1]).unwrap_or("").to_string(),
            n_params: parse_field(&rec, idx[2], line, path)?,
            f1_median: parse_field(&rec, idx[3], line, path)?,
            f1_std: parse_field(&rec, idx[4], line, path)?,
            f1_non_af: match non_af {
                (Some(m), Some(s)) => Some((parse_field(&rec, m, line, path)?, parse_field(&rec, s, line, path)?)),
                _ => None,
            },
        });
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum Field {
    InputFilters,
    Layout,
    Filters,
    Blocks,
}

impl Field {
    const ALL: [Field; 4] = [Field::InputFilters, Field::Layout, Field::Filters, Field::Blocks];

    fn name(self) -> &'static str {
        match self {
            Field::InputFilters => "input_filters",
            Field::Layout => "layout",
            Field::Filters => "filters",
            Field::Blocks => "blocks",
        }
    }
}

fn list(v: &[usize]) -> String {
    format!("[{}]", v.iter().map(usize::to_string).collect::<Vec<_>>().join(", "))
}

/// `(group key with the varied field replaced by x, varied value)`.
fn sweep_key(config: &str, field: Field) -> Result<(String, String)> {
    let c = ModelSpec::parse(config)?.fields();
    let parts = [c.input_filters.to_string(), c.layout.clone(), list(&c.filters), list(&c.blocks)];
    let i = field as usize;
    let value = parts[i].clone();
    let mut key = parts.to_vec();
    key[i] = "x".into();
    Ok((key.join("; "), value))
}

fn write_sweep(path: &Path, aggs: &[AggregateResult], field: Field) -> Result<()> {
    let mut rows = Vec::new();
    for a in aggs {
        let (group, value) = sweep_key(&a.config, field)?;
        rows.push((group, a.n_params, a.config_id, value, a));
    }
    rows.sort_by(|x, y| (&x.0, x.1, x.2).cmp(&(&y.0, y.1, y.2)));
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["group", field.name(), "n_params", "f1_median", "f1_std", "config_index"])?;
    for (group, n, id, value, a) in rows {
        w.write_record([group, value, n.to_string(), fmt_sig6(a.f1_median), fmt_sig6(a.f1_std), id.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write the results table, the figure data files and a metadata file into
/// `out_dir`. Returns the written paths.
pub fn emit_report(aggs: &[AggregateResult], out_dir: &Path, meta: &ReportMeta) -> Result<Vec<PathBuf>> {
    if aggs.is_empty() {
        return Err(Error::Data("no aggregates to report".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let table = out_dir.join("table_a1.csv");
    write_table(&table, aggs)?;
    written.push(table);

    let scatter = out_dir.join("fig_params_vs_f1.csv");
    let mut w = csv::Writer::from_path(&scatter)?;
    w.write_record(["n_params", "f1_median", "f1_std", "config_index"])?;
    for a in table_rows(aggs) {
        w.write_record([a.n_params.to_string(), fmt_sig6(a.f1_median), fmt_sig6(a.f1_std), a.config_id.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&scatter, e))?;
    written.push(scatter);

    for field in Field::ALL {
        let p = out_dir.join(format!("fig_{}.csv", field.name()));
        write_sweep(&p, aggs, field)?;
        written.push(p);
    }

    let meta_path = out_dir.join("report_meta.txt");
    let text = format!(
        "crop_len={}\nthreshold={}\npositive_class={}\nf1_std=population\nf1_center=median\nconfigs={}\nversion={}\n",
        meta.crop_len,
        meta.threshold,
        meta.positive_class,
        aggs.len(),
        env!("CARGO_PKG_VERSION"),
    );
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    written.push(meta_path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: usize, seed: u64, f1: f64) -> ResultRow {
        ResultRow {
            config_id: id,
            config_string: "8; cna; [4, 8]; [1, 1]".into(),
            seed,
            n_params: 100 * id,
            f1,
            wall_seconds: 1.5,
            checkpoint: format!("checkpoints/c{id}_s{seed}.rsb"),
            f1_non_af: None,
        }
    }

    #[test]
    fn median_and_std() {
        let rows = [row(1, 0, 0.8), row(1, 1, 0.9), row(1, 2, 0.7), row(1, 3, 1.0), row(2, 0, 0.5)];
        let a = aggregate(&rows);
        assert_eq!(a.len(), 2);
        assert!((a[0].f1_median - 0.85).abs() < 1e-15);
        // population std of {0.7,0.8,0.9,1.0}
        assert!((a[0].f1_std - 0.0125f64.sqrt()).abs() < 1e-12);
        assert_eq!(a[1].f1_std, 0.0);
        assert_eq!(a[0].repeats, 4);
        assert_eq!(a[0].f1_non_af, None);
    }

    #[test]
    fn table_round_trip() {
        let rows = [row(2, 0, 0.123456789), row(2, 1, 0.9), row(1, 0, 2.0 / 3.0)];
        let aggs = aggregate(&rows);
        let dir = tempfile::tempdir().unwrap();
        emit_report(&aggs, dir.path(), &ReportMeta::default()).unwrap();
        let text = fs::read_to_string(dir.path().join("table_a1.csv")).unwrap();
        assert!(text.starts_with("index,config,n_params,f1_median,f1_std\n"));
        let back = read_table(&dir.path().join("table_a1.csv")).unwrap();
        assert_eq!(back, aggs.iter().map(AggregateResult::table_row).collect::<Vec<_>>());
    }

    #[test]
    fn sig6() {
        assert_eq!(fmt_sig6(0.123456789), "0.123457");
        assert_eq!(fmt_sig6(1.0), "1");
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(123456789.0), "123457000");
    }

    #[test]
    fn results_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("results.csv");
        let rows = vec![row(1, 0, 0.75), row(2, 3, 1.0 / 3.0)];
        write_results(&p, &rows).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("config_id,config_string,seed,n_params,f1,wall_seconds,checkpoint\n"));
        assert_eq!(read_results(&p).unwrap(), rows);

        let mut both = rows.clone();
        both[0].f1_non_af = Some(0.9);
        both[1].f1_non_af = Some(0.1);
        write_results(&p, &both).unwrap();
        assert_eq!(read_results(&p).unwrap(), both);
    }

    #[test]
    fn sweep_keys() {
        let (g, v) = sweep_key("32; cna; [4, 8]; [1, 2]", Field::Layout).unwrap();
        assert_eq!(g, "32; x; [4, 8]; [1, 2]");
        assert_eq!(v, "cna");
        let (g, v) = sweep_key("ResNet18", Field::Blocks).unwrap();
        assert_eq!(g, "64; cnacna; [64, 128, 256, 512]; x");
        assert_eq!(v, "[2, 2, 2, 2]");
    }
}
