//! Experiment front end: config parsing, canned protocols, file emission.

pub mod config;
pub mod emit;
pub mod protocols;

use std::path::Path;

use grawa_core::{Error, Result, RunRecord};

pub use config::RunConfig;

/// Execute a config file end to end and write its outputs. Returns the
/// record so callers can inspect it.
pub fn cmd_run(config: &RunConfig, out: &Path) -> Result<RunRecord> {
    let (_, record) = config.execute()?;
    emit::write_run_outputs(out, &record)?;
    match record.status() {
        grawa_core::RunStatus::Completed => Ok(record),
        grawa_core::RunStatus::AbortedNumeric { at_step, reason } => Err(Error::Numeric(format!(
            "run aborted at step {at_step}: {reason} (partial record written to {})",
            out.display()
        ))),
    }
}
