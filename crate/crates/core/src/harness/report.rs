//! Report rendering: JSON, per-run CSV, and the plain-text table layouts
//! used for confusion matrices, run summaries and model comparisons.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, RunReport};
use crate::dataset::parse_dataset_name;
use crate::network::EvalResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// Chosen by file extension; anything but `.csv` is JSON.
    pub fn for_path(path: &Path) -> ReportFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

/// `0.925925…` → `"92.6%"`, `1.0` → `"100%"`.
pub fn format_percent(fraction: f64) -> String {
    let s = format!("{:.1}", fraction * 100.0);
    format!("{}%", s.strip_suffix(".0").unwrap_or(&s))
}

fn format_signed_percent(fraction: f64) -> String {
    let p = format_percent(fraction.abs());
    if p == "0%" {
        p
    } else if fraction > 0.0 {
        format!("+{p}")
    } else {
        format!("-{p}")
    }
}

pub fn render_json(report: &RunReport) -> Result<String, HarnessError> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    run: usize,
    seed: u64,
    accuracy: Option<f64>,
    suspicious_accuracy: Option<f64>,
    normal_accuracy: Option<f64>,
    true_positive: Option<u64>,
    false_negative: Option<u64>,
    false_positive: Option<u64>,
    true_negative: Option<u64>,
    final_loss: Option<f64>,
    error: Option<String>,
}

/// One row per run. Failed runs leave the metric columns empty.
pub fn render_csv(report: &RunReport) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.records {
        let m = r.result.map(|x| x.confusion);
        w.serialize(CsvRow {
            run: r.run,
            seed: r.seed,
            accuracy: r.accuracy(),
            suspicious_accuracy: r.result.and_then(|x| x.suspicious_accuracy),
            normal_accuracy: r.result.and_then(|x| x.normal_accuracy),
            true_positive: m.map(|m| m.true_positive),
            false_negative: m.map(|m| m.false_negative),
            false_positive: m.map(|m| m.false_positive),
            true_negative: m.map(|m| m.true_negative),
            final_loss: r.final_loss,
            error: r.error.clone(),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Invalid(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}

pub fn emit_report(report: &RunReport, format: ReportFormat, path: &Path) -> Result<(), HarnessError> {
    let text = match format {
        ReportFormat::Json => render_json(report)?,
        ReportFormat::Csv => render_csv(report)?,
    };
    fs::write(path, text).map_err(HarnessError::io(path))
}

/// One confusion matrix laid out with per-class accuracy:
///
/// ```text
/// Dataset: unb_60s120n_30t_10f_80x60
/// Accuracy: 92.6%
///             Suspicious  Normal  Accuracy
/// Suspicious  18          0       100%
/// Normal      4           32      88.9%
/// ```
pub fn confusion_table(dataset: &str, result: &EvalResult) -> String {
    let m = &result.confusion;
    let class = |a: Option<f64>| a.map_or("-".to_string(), format_percent);
    let rows = [
        ["".to_string(), "Suspicious".into(), "Normal".into(), "Accuracy".into()],
        [
            "Suspicious".into(),
            m.true_positive.to_string(),
            m.false_negative.to_string(),
            class(result.suspicious_accuracy),
        ],
        ["Normal".into(), m.false_positive.to_string(), m.true_negative.to_string(), class(result.normal_accuracy)],
    ];
    let mut out = format!("Dataset: {dataset}\nAccuracy: {}\n", format_percent(result.accuracy));
    for row in rows {
        out.push_str(&pad_row(&row, &[12, 12, 8]));
    }
    out
}

fn pad_row<S: AsRef<str>>(cells: &[S], widths: &[usize]) -> String {
    let mut line = String::new();
    for (i, cell) in cells.iter().enumerate() {
        let cell = cell.as_ref();
        match widths.get(i) {
            Some(&w) => line.push_str(&format!("{cell:<w$}")),
            None => line.push_str(cell),
        }
    }
    line.trim_end().to_string() + "\n"
}

/// Short dataset label with the resolution split off, e.g.
/// `("80x60", "unb_60s120n_30t_10f")`.
fn resolution_and_row(dataset: &str) -> (String, String) {
    match parse_dataset_name(dataset) {
        Ok(spec) => {
            let res = spec.resolution.map(|r| r.to_string()).unwrap_or_default();
            let row = crate::dataset::DatasetSpec { resolution: None, ..spec }.short_name();
            (res, row)
        }
        Err(_) => (String::new(), dataset.to_string()),
    }
}

/// Mean accuracy and standard deviation per experiment, one line each:
/// resolution, dataset, avg accuracy, std deviation.
pub fn summary_table(reports: &[RunReport]) -> String {
    let mut rows = vec![["Resolution".to_string(), "Dataset".into(), "Avg Accuracy".into(), "Std Deviation".into()]];
    for r in reports {
        let (res, name) = resolution_and_row(&r.dataset);
        let (avg, std) = match r.summary {
            Some(s) => (format_percent(s.mean_accuracy), format!("{:.4}", s.std_accuracy)),
            None => ("failed".into(), "-".into()),
        };
        rows.push([res, name, avg, std]);
    }
    let name_width = rows.iter().map(|r| r[1].len()).max().unwrap_or(0) + 2;
    rows.iter().map(|r| pad_row(r, &[12, name_width, 14])).collect()
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    dataset: &'a str,
    runs: usize,
    folds: usize,
    completed: usize,
    failed: usize,
    mean_accuracy: Option<f64>,
    std_accuracy: Option<f64>,
    best_accuracy: Option<f64>,
    best_run: Option<usize>,
}

/// One row per experiment with its aggregate.
pub fn summary_csv(reports: &[RunReport]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        let s = r.summary;
        w.serialize(SummaryRow {
            dataset: &r.dataset,
            runs: r.runs,
            folds: r.folds,
            completed: s.map_or(0, |s| s.completed),
            failed: s.map_or(r.records.len(), |s| s.failed),
            mean_accuracy: s.map(|s| s.mean_accuracy),
            std_accuracy: s.map(|s| s.std_accuracy),
            best_accuracy: s.map(|s| s.best_accuracy),
            best_run: s.map(|s| s.best_run),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Invalid(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub base_mean: f64,
    pub base_std: f64,
    pub base_best: f64,
    pub proposed_mean: f64,
    pub proposed_std: f64,
    pub proposed_best: f64,
    /// `proposed_mean − base_mean`.
    pub delta: f64,
}

pub fn compare_models(base: &RunReport, proposed: &RunReport) -> Result<ModelComparison, HarnessError> {
    let summary = |r: &RunReport| {
        r.summary.ok_or_else(|| HarnessError::Invalid(format!("{} has no completed runs to compare", r.dataset)))
    };
    let (b, p) = (summary(base)?, summary(proposed)?);
    Ok(ModelComparison {
        base_mean: b.mean_accuracy,
        base_std: b.std_accuracy,
        base_best: b.best_accuracy,
        proposed_mean: p.mean_accuracy,
        proposed_std: p.std_accuracy,
        proposed_best: p.best_accuracy,
        delta: p.mean_accuracy - b.mean_accuracy,
    })
}

impl fmt::Display for ModelComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths = [13, 12];
        let rows = [
            ["".to_string(), "Base model".into(), "Proposed".into()],
            ["Avg Acc".into(), format_percent(self.base_mean), format_percent(self.proposed_mean)],
            ["Std Dev".into(), format!("{:.2}", self.base_std), format!("{:.2}", self.proposed_std)],
            ["Best Result".into(), format_percent(self.base_best), format_percent(self.proposed_best)],
            ["Delta".into(), format_signed_percent(self.delta), String::new()],
        ];
        for row in rows {
            f.write_str(&pad_row(&row, &widths))?;
        }
        Ok(())
    }
}
