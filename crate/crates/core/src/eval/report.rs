use std::fs::{self, File};
use std::path::Path;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{EvalError, EvalReport, LatencyStats, Result};

pub const CSV_HEADER: [&str; 5] = ["origin", "timestamp", "step", "actual", "predicted"];

/// The unit uploaded from the edge: accuracy plus optional latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsightDocument {
    pub eval: EvalReport,
    pub latency: Option<LatencyStats>,
}

/// Writes the JSON document and a long-format CSV with one row per origin and step.
pub fn export_report(doc: &InsightDocument, json_path: &Path, csv_path: &Path) -> Result<()> {
    for p in [json_path, csv_path] {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(json_path, serde_json::to_string_pretty(doc).expect("report serializes"))?;
    let mut w = csv::Writer::from_writer(File::create(csv_path)?);
    let fail = |e: csv::Error| EvalError::Format(e.to_string());
    w.write_record(CSV_HEADER).map_err(fail)?;
    for o in &doc.eval.per_origin {
        let origin = o.origin.to_rfc3339();
        for (step, (a, p)) in o.actual.iter().zip(&o.predicted).enumerate() {
            let ts = o.origin + Duration::hours(step as i64);
            w.write_record([
                origin.clone(),
                ts.to_rfc3339(),
                step.to_string(),
                a.to_string(),
                p.to_string(),
            ])
            .map_err(fail)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(json_path: &Path) -> Result<InsightDocument> {
    let text = fs::read_to_string(json_path)?;
    serde_json::from_str(&text).map_err(|e| EvalError::Format(e.to_string()))
}
