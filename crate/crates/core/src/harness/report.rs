//! Writing metric reports to disk.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::metrics::{EvaluationRecord, MetricsReport};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::validation(format!("unknown report format {other:?}"))),
        }
    }
}

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const RECORDS: &str = "records.jsonl";
pub const TRANSITIONS: &str = "transitions.json";

/// Write `report.json` or `report.csv` into `dir`, plus `records.jsonl` when
/// records are given. Returns the written paths.
pub fn emit_report(
    report: &MetricsReport,
    records: Option<&[EvaluationRecord]>,
    format: ReportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    match format {
        ReportFormat::Json => {
            let path = dir.join(REPORT_JSON);
            jsonl::write_json(&path, report)?;
            written.push(path);
        }
        ReportFormat::Csv => {
            let path = dir.join(REPORT_CSV);
            write_csv(&path, report)?;
            written.push(path);
        }
    }
    if let Some(records) = records {
        let path = dir.join(RECORDS);
        jsonl::write_jsonl(&path, records)?;
        written.push(path);
    }
    Ok(written)
}

fn write_csv(path: &Path, report: &MetricsReport) -> Result<()> {
    jsonl::ensure_parent(path)?;
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["name", "value"]).map_err(io)?;
    for (name, value) in report.scalar_rows() {
        w.write_record([name, value.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
