//! Metric tables, method comparison and the summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use budgetqa_core::metrics::MetricRow;
use budgetqa_core::stats::{compare_methods, ComparisonResult, Direction, MetricMatrix};
use serde::{Deserialize, Serialize};

use crate::bundle::{
    read_json, write_json, BundleIndex, BUNDLE_JSON, METRICS_CSV, STATS_JSON, SUMMARY_CSV,
    SUMMARY_MD,
};

/// Which summary table a metric belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Table {
    /// Segmentation quality and calibration.
    Calibration,
    /// Budget-curve areas.
    BudgetAuc,
    /// Values at fixed budgets.
    PointBudgets,
}

impl Table {
    fn title(self) -> &'static str {
        match self {
            Table::Calibration => "Segmentation and calibration",
            Table::BudgetAuc => "Uncertainty-error overlap and coverage, area under the budget curve",
            Table::PointBudgets => "Uncertainty-error overlap and coverage at fixed budgets",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricColumn {
    /// CSV header key, e.g. `dsc` or `covfp@0.5`.
    pub key: String,
    /// Human-readable table header.
    pub label: String,
    pub direction: Direction,
    pub table: Table,
}

impl MetricColumn {
    pub fn from_key(key: &str) -> Result<Self> {
        use Direction::{HigherBetter as H, LowerBetter as L};
        let fixed = |label: &str, d, t| MetricColumn {
            key: key.to_string(),
            label: label.to_string(),
            direction: d,
            table: t,
        };
        Ok(match key {
            "dsc" => fixed("DSC", H, Table::Calibration),
            "ece" => fixed("ECE", L, Table::Calibration),
            "bs" => fixed("BS", L, Table::Calibration),
            "ueo_auc" => fixed("UEO AUC", H, Table::BudgetAuc),
            "fp_tp_auc" => fixed("(Cov FP - Cov TP) AUC", H, Table::BudgetAuc),
            "fn_tn_auc" => fixed("(Cov FN - Cov TN) AUC", H, Table::BudgetAuc),
            _ => {
                let (name, b) = key
                    .split_once('@')
                    .ok_or_else(|| anyhow!("unknown metric column {key:?}"))?;
                let b: f64 = b
                    .parse()
                    .map_err(|_| anyhow!("bad budget in metric column {key:?}"))?;
                let label = match name {
                    "ueo" => "UEO",
                    "covfp" => "Cov FP",
                    "covfn" => "Cov FN",
                    _ => bail!("unknown metric column {key:?}"),
                };
                fixed(&format!("{label} @{b}%"), H, Table::PointBudgets)
            }
        })
    }
}

/// Columns of `metrics.csv` for the given point budgets, in file order.
pub fn metric_columns(point_budgets: &[f64]) -> Vec<MetricColumn> {
    let mut keys: Vec<String> = ["dsc", "ece", "bs", "ueo_auc", "fp_tp_auc", "fn_tn_auc"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["ueo", "covfp", "covfn"] {
        keys.extend(point_budgets.iter().map(|b| format!("{prefix}@{b}")));
    }
    keys.iter()
        .map(|k| MetricColumn::from_key(k).expect("known key"))
        .collect()
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub case_id: String,
    pub method_id: String,
    /// Aligned with the metric columns.
    pub values: Vec<f64>,
    pub flags: String,
}

impl MetricsRecord {
    pub fn from_row(case_id: &str, method_id: &str, row: &MetricRow) -> Self {
        let mut values = vec![row.dsc, row.ece, row.bs, row.ueo_auc, row.fp_tp_auc, row.fn_tn_auc];
        values.extend(row.points.iter().map(|p| p.ueo));
        values.extend(row.points.iter().map(|p| p.cov_fp));
        values.extend(row.points.iter().map(|p| p.cov_fn));
        MetricsRecord {
            case_id: case_id.to_string(),
            method_id: method_id.to_string(),
            values,
            flags: row.flags.summary(),
        }
    }

    pub fn as_map(&self, columns: &[MetricColumn]) -> BTreeMap<String, f64> {
        columns
            .iter()
            .zip(&self.values)
            .map(|(c, v)| (c.key.clone(), *v))
            .collect()
    }
}

pub fn write_metrics_csv(path: &Path, columns: &[MetricColumn], rows: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["case_id".to_string(), "method_id".to_string()];
    header.extend(columns.iter().map(|c| c.key.clone()));
    header.push("flags".into());
    w.write_record(&header)?;
    for r in rows {
        ensure!(r.values.len() == columns.len(), "row width mismatch");
        let mut rec = vec![r.case_id.clone(), r.method_id.clone()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        rec.push(r.flags.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<(Vec<MetricColumn>, Vec<MetricsRecord>)> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = rd.headers()?.clone();
    let n = header.len();
    ensure!(
        n >= 3 && &header[0] == "case_id" && &header[1] == "method_id" && &header[n - 1] == "flags",
        "{}: unexpected header",
        path.display()
    );
    let columns = (2..n - 1)
        .map(|i| MetricColumn::from_key(&header[i]))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let values = (2..n - 1)
            .map(|i| {
                rec[i].parse::<f64>().map_err(|_| {
                    anyhow!("{}: row {}: bad number {:?}", path.display(), line + 2, &rec[i])
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(MetricsRecord {
            case_id: rec[0].to_string(),
            method_id: rec[1].to_string(),
            values,
            flags: rec[n - 1].to_string(),
        });
    }
    Ok((columns, rows))
}

fn first_seen<'a>(it: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in it {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedMetric {
    pub metric: String,
    pub reason: String,
}

/// Contents of `stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub alpha: f64,
    pub patients: Vec<String>,
    pub methods: Vec<String>,
    pub comparisons: Vec<ComparisonResult>,
    pub skipped: Vec<SkippedMetric>,
    /// Pairs with fewer nonzero differences than the test needs, as
    /// `metric: a vs b`.
    pub insufficient_pairs: Vec<String>,
}

impl StatsReport {
    pub fn comparison(&self, metric: &str) -> Option<&ComparisonResult> {
        self.comparisons.iter().find(|c| c.metric == metric)
    }
}

/// Patient-by-method matrix of one metric. Rows follow first appearance.
pub fn metric_matrix(
    columns: &[MetricColumn],
    rows: &[MetricsRecord],
    col: usize,
) -> Result<MetricMatrix> {
    let patients = first_seen(rows.iter().map(|r| r.case_id.as_str()));
    let methods = first_seen(rows.iter().map(|r| r.method_id.as_str()));
    let mut values = vec![vec![f64::NAN; methods.len()]; patients.len()];
    let mut filled = vec![vec![false; methods.len()]; patients.len()];
    for r in rows {
        let i = patients.iter().position(|p| *p == r.case_id).expect("seen");
        let j = methods.iter().position(|m| *m == r.method_id).expect("seen");
        ensure!(!filled[i][j], "duplicate row for {} / {}", r.case_id, r.method_id);
        filled[i][j] = true;
        values[i][j] = r.values[col];
    }
    for (i, row) in filled.iter().enumerate() {
        if let Some(j) = row.iter().position(|f| !f) {
            bail!("no metrics for case {} under method {}", patients[i], methods[j]);
        }
    }
    Ok(MetricMatrix::new(
        columns[col].key.clone(),
        patients,
        methods,
        values,
        columns[col].direction,
    )?)
}

pub fn compare_all(columns: &[MetricColumn], rows: &[MetricsRecord], alpha: f64) -> Result<StatsReport> {
    let patients = first_seen(rows.iter().map(|r| r.case_id.as_str()));
    let methods = first_seen(rows.iter().map(|r| r.method_id.as_str()));
    let mut report = StatsReport {
        alpha,
        patients: patients.clone(),
        methods: methods.clone(),
        comparisons: Vec::new(),
        skipped: Vec::new(),
        insufficient_pairs: Vec::new(),
    };
    for (c, col) in columns.iter().enumerate() {
        if patients.len() < 2 || methods.len() < 2 {
            report.skipped.push(SkippedMetric {
                metric: col.key.clone(),
                reason: format!(
                    "{} patients and {} methods; comparison needs at least 2 of each",
                    patients.len(),
                    methods.len()
                ),
            });
            continue;
        }
        let matrix = metric_matrix(columns, rows, c)?;
        let res = compare_methods(&matrix, alpha)?;
        report.insufficient_pairs.extend(
            res.insufficient_pairs()
                .map(|p| format!("{}: {} vs {}", col.key, p.method_a, p.method_b)),
        );
        report.comparisons.push(res);
    }
    Ok(report)
}

/// Mean and sample standard deviation (n - 1; 0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// One cell of the summary: `mean ± std`, starred when the method differs
/// significantly from the best one.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryCell {
    pub mean: f64,
    pub std: f64,
    pub starred: bool,
    pub best: bool,
}

impl SummaryCell {
    pub fn text(&self) -> String {
        format!(
            "{:.4} ± {:.4}{}",
            self.mean,
            self.std,
            if self.starred { "*" } else { "" }
        )
    }
}

/// Cells indexed `[method][column]`.
pub fn summary_cells(
    columns: &[MetricColumn],
    rows: &[MetricsRecord],
    stats: &StatsReport,
) -> Vec<Vec<SummaryCell>> {
    stats
        .methods
        .iter()
        .map(|m| {
            columns
                .iter()
                .enumerate()
                .map(|(c, col)| {
                    let vals: Vec<f64> = rows
                        .iter()
                        .filter(|r| &r.method_id == m)
                        .map(|r| r.values[c])
                        .collect();
                    let (mean, std) = mean_std(&vals);
                    let cmp = stats.comparison(&col.key);
                    SummaryCell {
                        mean,
                        std,
                        starred: cmp.is_some_and(|r| r.is_starred(m)),
                        best: cmp.is_some_and(|r| &r.best_method == m),
                    }
                })
                .collect()
        })
        .collect()
}

pub fn write_summary_csv(
    path: &Path,
    columns: &[MetricColumn],
    stats: &StatsReport,
    cells: &[Vec<SummaryCell>],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["method_id".to_string()];
    header.extend(columns.iter().map(|c| c.label.clone()));
    w.write_record(&header)?;
    for (m, row) in stats.methods.iter().zip(cells) {
        let mut rec = vec![m.clone()];
        rec.extend(row.iter().map(SummaryCell::text));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Markdown rendering: one table per metric family, methods as rows.
pub fn summary_markdown(columns: &[MetricColumn], stats: &StatsReport, cells: &[Vec<SummaryCell>]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# Method comparison\n\n{} cases, {} methods. Mean ± sample standard deviation over cases; \
         `*` marks a significant difference from the best method (Wilcoxon signed-rank, \
         Benjamini-Hochberg adjusted p < {}); the best method is in bold.\n",
        stats.patients.len(),
        stats.methods.len(),
        stats.alpha
    );
    let mut tables: Vec<Table> = columns.iter().map(|c| c.table).collect();
    tables.dedup();
    for (ti, table) in tables.iter().enumerate() {
        let idx: Vec<usize> = (0..columns.len()).filter(|&c| columns[c].table == *table).collect();
        let _ = writeln!(out, "## Table {}: {}\n", roman(ti + 1), table.title());
        let arrows: Vec<String> = idx
            .iter()
            .map(|&c| {
                let a = match columns[c].direction {
                    Direction::HigherBetter => "↑",
                    Direction::LowerBetter => "↓",
                };
                format!("{} {a}", columns[c].label)
            })
            .collect();
        let _ = writeln!(out, "| Method | {} |", arrows.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(idx.len()));
        for (m, row) in stats.methods.iter().zip(cells) {
            let texts: Vec<String> = idx
                .iter()
                .map(|&c| {
                    let cell = &row[c];
                    if cell.best {
                        format!("**{}**", cell.text())
                    } else {
                        cell.text()
                    }
                })
                .collect();
            let _ = writeln!(out, "| {m} | {} |", texts.join(" | "));
        }
        out.push('\n');
    }
    for c in &stats.comparisons {
        let _ = writeln!(
            out,
            "- {}: Friedman chi2 = {:.4}, p = {:.4e}",
            c.metric, c.friedman_stat, c.friedman_p
        );
    }
    for s in &stats.skipped {
        let _ = writeln!(out, "- {}: not compared ({})", s.metric, s.reason);
    }
    if !stats.insufficient_pairs.is_empty() {
        let _ = writeln!(
            out,
            "\nPairs with fewer than five nonzero differences (reported as p = 1):\n"
        );
        for p in &stats.insufficient_pairs {
            let _ = writeln!(out, "- {p}");
        }
    }
    out
}

fn roman(n: usize) -> &'static str {
    ["I", "II", "III", "IV", "V"].get(n - 1).copied().unwrap_or("?")
}

/// Writes `stats.json`, `summary.csv` and `summary.md` from metric rows.
pub fn write_reports(
    dir: &Path,
    columns: &[MetricColumn],
    rows: &[MetricsRecord],
    alpha: f64,
) -> Result<StatsReport> {
    let stats = compare_all(columns, rows, alpha)?;
    let cells = summary_cells(columns, rows, &stats);
    write_json(&dir.join(STATS_JSON), &stats)?;
    write_summary_csv(&dir.join(SUMMARY_CSV), columns, &stats, &cells)?;
    fs::write(dir.join(SUMMARY_MD), summary_markdown(columns, &stats, &cells))
        .with_context(|| format!("writing {}", dir.join(SUMMARY_MD).display()))?;
    Ok(stats)
}

/// Recomputes the statistics and summaries of an existing bundle, optionally
/// at a different significance level.
pub fn rebuild_reports(dir: &Path, alpha: Option<f64>) -> Result<StatsReport> {
    let index: BundleIndex = read_json(&dir.join(BUNDLE_JSON))?;
    let alpha = alpha.unwrap_or(index.alpha);
    ensure!(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
    let (columns, rows) = read_metrics_csv(&dir.join(METRICS_CSV))?;
    write_reports(dir, &columns, &rows, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_keys_round_trip() {
        let cols = metric_columns(&[0.5, 1.0, 2.0, 5.0]);
        let keys: Vec<&str> = cols.iter().map(|c| c.key.as_str()).collect();
        assert_eq!(&keys[..7], &["dsc", "ece", "bs", "ueo_auc", "fp_tp_auc", "fn_tn_auc", "ueo@0.5"]);
        assert_eq!(keys[7], "ueo@1");
        assert_eq!(keys[10], "covfp@0.5");
        assert_eq!(keys.len(), 18);
        for c in &cols {
            assert_eq!(&MetricColumn::from_key(&c.key).unwrap(), c);
        }
        assert_eq!(cols[1].direction, Direction::LowerBetter);
        assert!(MetricColumn::from_key("foo@1").is_err());
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cols = metric_columns(&[0.5]);
        let vals = |s: f64| (0..cols.len()).map(|i| s / (i as f64 + 3.0)).collect::<Vec<_>>();
        let rows = vec![
            MetricsRecord { case_id: "a".into(), method_id: "M".into(), values: vals(0.1), flags: "".into() },
            MetricsRecord { case_id: "a".into(), method_id: "N".into(), values: vals(1e-9), flags: "no_fp;empty_errors".into() },
        ];
        let p = dir.path().join("m.csv");
        write_metrics_csv(&p, &cols, &rows).unwrap();
        let (c2, r2) = read_metrics_csv(&p).unwrap();
        assert_eq!(c2, cols);
        assert_eq!(r2, rows);
    }

    #[test]
    fn incomplete_matrix_is_reported() {
        let cols = metric_columns(&[]);
        let rec = |c: &str, m: &str| MetricsRecord {
            case_id: c.into(),
            method_id: m.into(),
            values: vec![0.5; cols.len()],
            flags: String::new(),
        };
        let rows = vec![rec("a", "M"), rec("a", "N"), rec("b", "M")];
        let err = metric_matrix(&cols, &rows, 0).unwrap_err().to_string();
        assert!(err.contains("case b under method N"), "{err}");
        let single = compare_all(&cols, &rows[..2], 0.05).unwrap();
        assert_eq!(single.skipped.len(), cols.len());
    }
}
