use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

use super::{CoverageReport, CoverageRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Table,
    Csv,
    JsonLines,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json-lines" | "jsonl" => Ok(ReportFormat::JsonLines),
            _ => Err(Error::invalid(format!("unknown format '{s}' (expected table, csv or json-lines)"))),
        }
    }
}

/// `v` rounded to 6 significant digits, in the shortest form that reads back
/// to the rounded value.
pub fn format_sig(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    format!("{r}")
}

fn opt_sig(v: Option<f64>) -> String {
    v.map(format_sig).unwrap_or_default()
}

#[derive(Serialize)]
struct Record {
    sweep_param: String,
    sweep_value: String,
    method: String,
    statistic: String,
    below: String,
    covered: String,
    above: String,
    avg_length: String,
    n_fail: u64,
    seed: u64,
    avg_length_ratio_vs_delta: String,
}

impl Record {
    fn new(r: &CoverageRow) -> Self {
        Record {
            sweep_param: r.sweep_param.map(|a| a.tag().to_string()).unwrap_or_else(|| "none".into()),
            sweep_value: opt_sig(r.sweep_value),
            method: r.method.tag().into(),
            statistic: r.statistic.map(|s| s.tag().to_string()).unwrap_or_default(),
            below: format_sig(r.below_rate()),
            covered: format_sig(r.covered_rate()),
            above: format_sig(r.above_rate()),
            avg_length: format_sig(r.avg_length),
            n_fail: r.n_fail,
            seed: r.seed,
            avg_length_ratio_vs_delta: opt_sig(r.avg_length_ratio_vs_delta),
        }
    }
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    sweep_param: Option<&'a str>,
    sweep_value: Option<f64>,
    method: &'a str,
    statistic: Option<&'a str>,
    truth: f64,
    below: f64,
    covered: f64,
    above: f64,
    n_below: u64,
    n_covered: u64,
    n_above: u64,
    n_fail: u64,
    avg_length: f64,
    avg_length_ratio_vs_delta: Option<f64>,
    seed: u64,
}

fn round6(v: f64) -> f64 {
    if v.is_finite() {
        format_sig(v).parse().unwrap_or(v)
    } else {
        v
    }
}

/// Renders the report. CSV and JSON lines carry one record per grid point and method.
pub fn render_report(report: &CoverageReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &report.rows {
                w.serialize(Record::new(row)).map_err(|e| Error::Io(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::JsonLines => {
            let mut out = String::new();
            for r in &report.rows {
                let rec = JsonRecord {
                    sweep_param: r.sweep_param.map(|a| a.tag()),
                    sweep_value: r.sweep_value.map(round6),
                    method: r.method.tag(),
                    statistic: r.statistic.map(|s| s.tag()),
                    truth: round6(r.truth),
                    below: round6(r.below_rate()),
                    covered: round6(r.covered_rate()),
                    above: round6(r.above_rate()),
                    n_below: r.n_below,
                    n_covered: r.n_covered,
                    n_above: r.n_above,
                    n_fail: r.n_fail,
                    avg_length: round6(r.avg_length),
                    avg_length_ratio_vs_delta: r.avg_length_ratio_vs_delta.map(round6),
                    seed: r.seed,
                };
                out.push_str(&serde_json::to_string(&rec).map_err(|e| Error::Io(e.to_string()))?);
                out.push('\n');
            }
            Ok(out)
        }
        ReportFormat::Table => {
            let mut out = String::new();
            let _ = writeln!(out, "reps = {}, alpha = {}, seed = {}", report.reps, report.alpha, report.seed);
            let _ = writeln!(
                out,
                "{:<6} {:>10} {:<10} {:<12} {:>9} {:>9} {:>9} {:>10} {:>7} {:>6}",
                "sweep", "value", "method", "statistic", "below", "covered", "above", "length", "ratio", "fail"
            );
            for r in &report.rows {
                let rec = Record::new(r);
                let _ = writeln!(
                    out,
                    "{:<6} {:>10} {:<10} {:<12} {:>9.4} {:>9.4} {:>9.4} {:>10.5} {:>7} {:>6}",
                    rec.sweep_param,
                    rec.sweep_value,
                    rec.method,
                    rec.statistic,
                    r.below_rate(),
                    r.covered_rate(),
                    r.above_rate(),
                    r.avg_length,
                    r.avg_length_ratio_vs_delta.map(|v| format!("{v:.3}")).unwrap_or_default(),
                    r.n_fail
                );
            }
            Ok(out)
        }
    }
}

/// Writes the rendered report to `path`.
pub fn emit_report(report: &CoverageReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = render_report(report, format)?;
    std::fs::write(path, text).map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))
}
