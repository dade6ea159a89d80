//! Evaluation reports as `report.json` (machine) plus `report.txt` (aligned table).

use std::fs;
use std::path::Path;

use trajprompt_core::EvalReport;

use crate::error::{Error, IoContext, Result};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    fs::create_dir_all(dir).at(dir)?;
    let json = dir.join(REPORT_JSON);
    let mut bytes = serde_json::to_vec_pretty(report).map_err(|e| Error::Format { path: json.clone(), msg: e.to_string() })?;
    bytes.push(b'\n');
    fs::write(&json, bytes).at(&json)?;
    let txt = dir.join(REPORT_TXT);
    fs::write(&txt, report.to_table()).at(&txt)
}

/// Accepts either a report directory or the JSON file itself.
pub fn read_report(path: &Path) -> Result<EvalReport> {
    let file = if path.is_dir() { path.join(REPORT_JSON) } else { path.to_path_buf() };
    let bytes = fs::read(&file).at(&file)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format { path: file, msg: e.to_string() })
}
