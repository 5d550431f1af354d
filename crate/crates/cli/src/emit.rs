//! File emission for run outputs.

use std::path::Path;

use grawa_core::{Result, RunRecord};

/// Write `trajectory.csv`, `summary.json` and, when parameter tracing was
/// on, `positions.csv` into the run directory.
pub fn write_run_outputs(dir: &Path, record: &RunRecord) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    record.write_csv(&dir.join("trajectory.csv"))?;
    record.write_summary_json(&dir.join("summary.json"))?;
    if !record.param_trace.is_empty() {
        write_positions_csv(&dir.join("positions.csv"), record)?;
    }
    Ok(())
}

/// Per-step worker positions (step, worker_id, x0..x{d-1}); the file that
/// contour overlays are plotted from.
pub fn write_positions_csv(path: &Path, record: &RunRecord) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let dim = record
        .param_trace
        .first()
        .map(|t| t.values.len())
        .unwrap_or(0);
    let mut header = vec!["step".to_string(), "worker_id".to_string()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for t in &record.param_trace {
        let mut rec = vec![t.step.to_string(), t.worker_id.to_string()];
        rec.extend(t.values.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Serialize any report as pretty JSON.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
