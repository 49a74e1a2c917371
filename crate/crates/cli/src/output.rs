use std::fs;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use khessian::stability::{SweepRecord, CSV_COLUMNS};
use serde::Serialize;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(records: &[SweepRecord], path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        let mut row = vec![r.shape_id.clone()];
        for (name, v) in CSV_COLUMNS[1..].iter().zip(r.numeric_columns()) {
            row.push(if *name == "k" { r.k.to_string() } else { format_float(v) });
        }
        w.write_record(&row)?;
    }
    w.flush()
}

/// One parsed CSV row: the shape id and the numeric columns in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub shape_id: String,
    pub values: Vec<f64>,
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>, Box<dyn std::error::Error>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != CSV_COLUMNS {
        return Err(format!("unexpected CSV header {header:?}").into());
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let values = rec.iter().skip(1).map(str::parse::<f64>).collect::<Result<Vec<_>, _>>()?;
        out.push(CsvRow { shape_id: rec[0].to_string(), values });
    }
    Ok(out)
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    timestamp: String,
}

#[derive(Serialize)]
struct Artifact<'a, T> {
    metadata: Metadata<'a>,
    report: &'a T,
}

/// Writes `{"metadata": {...}, "report": ...}`. The timestamp is the only
/// field that changes between identical runs.
pub fn write_json<T: Serialize>(report: &T, command: &str, path: &Path) -> std::io::Result<()> {
    write_artifact(report, command, path, true)
}

/// Same envelope on a single line, for large arrays.
pub fn write_json_compact<T: Serialize>(report: &T, command: &str, path: &Path) -> std::io::Result<()> {
    write_artifact(report, command, path, false)
}

fn write_artifact<T: Serialize>(report: &T, command: &str, path: &Path, pretty: bool) -> std::io::Result<()> {
    let a = Artifact {
        metadata: Metadata {
            tool: "khessian",
            version: env!("CARGO_PKG_VERSION"),
            command,
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        },
        report,
    };
    let mut text = if pretty { serde_json::to_string_pretty(&a) } else { serde_json::to_string(&a) }
        .map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}
