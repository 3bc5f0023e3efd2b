//! Summary rows in the layout of a model-comparison table: model, weight
//! scheme, accuracy, F1 (means and standard deviations over runs), time.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::train::TrainReport;
use crate::format;

const KIND: &str = "train-report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub scheme: String,
    pub runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub time_mean_s: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates repeated runs (population standard deviation).
pub fn summarize(model: &str, scheme: &str, reports: &[TrainReport]) -> ReportRow {
    assert!(!reports.is_empty(), "summarize needs at least one run");
    let acc: Vec<f64> = reports.iter().map(|r| r.test.accuracy).collect();
    let f1: Vec<f64> = reports.iter().map(|r| r.test.macro_f1).collect();
    let time: Vec<f64> = reports.iter().map(|r| r.wall_time_s).collect();
    let (accuracy_mean, accuracy_std) = mean_std(&acc);
    let (f1_mean, f1_std) = mean_std(&f1);
    ReportRow {
        model: model.to_string(),
        scheme: scheme.to_string(),
        runs: reports.len(),
        accuracy_mean,
        accuracy_std,
        f1_mean,
        f1_std,
        time_mean_s: mean_std(&time).0,
    }
}

/// Machine-readable rows. Timing is left out so that reruns compare equal.
pub fn format_rows(rows: &[ReportRow]) -> String {
    let mut out = format::header_line(KIND);
    out.push_str("model\tscheme\truns\taccuracy\taccuracy_std\tf1\tf1_std\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.model, r.scheme, r.runs, r.accuracy_mean, r.accuracy_std, r.f1_mean, r.f1_std
        );
    }
    out
}

/// Aligned plain-text table for terminals, including mean wall time.
pub fn format_table(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:<10} {:>14} {:>14} {:>9}",
        "Model", "Weights", "Accuracy", "F1", "Time(s)"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:<10} {:>6.3} ± {:<5.3} {:>6.3} ± {:<5.3} {:>9.2}",
            r.model, r.scheme, r.accuracy_mean, r.accuracy_std, r.f1_mean, r.f1_std, r.time_mean_s
        );
    }
    out
}
