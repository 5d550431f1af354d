//! Run records: per-step rows, communication ledger, summary, CSV/JSON IO.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::center_policy::Provenance;
use crate::error::{Error, Result};
use crate::tensor::LayeredParams;

/// One per-step observation. `loss` and `grad_norm` refer to the worker's
/// drawn batch at the parameters *before* the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: u64,
    pub worker_id: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub event: String,
}

/// Affine per-round communication cost model `a + b * total_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommCost {
    pub a: f64,
    pub b: f64,
}

impl Default for CommCost {
    fn default() -> Self {
        // Defaults reproduce round counts only.
        Self { a: 1.0, b: 0.0 }
    }
}

impl CommCost {
    pub fn per_round(&self, total_dim: usize) -> f64 {
        self.a + self.b * total_dim as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommEvent {
    pub global_step: u64,
    pub policy: String,
    pub simulated_cost: f64,
}

/// Count and cost of every communication round that fired.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CommLedger {
    pub rounds: u64,
    pub events: Vec<CommEvent>,
}

impl CommLedger {
    pub fn record(&mut self, global_step: u64, policy: &str, cost: f64) {
        self.rounds += 1;
        self.events.push(CommEvent {
            global_step,
            policy: policy.to_string(),
            simulated_cost: cost,
        });
    }

    pub fn total_cost(&self) -> f64 {
        self.events.iter().map(|e| e.simulated_cost).sum()
    }
}

/// Center parameters published at one communication round.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSnapshot {
    pub round: u64,
    pub global_step: u64,
    pub provenance: Provenance,
    pub params: LayeredParams,
}

/// Worker position after one local step, kept only when parameter tracing
/// is enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTraceRow {
    pub step: u64,
    pub worker_id: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    AbortedNumeric { at_step: u64, reason: String },
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }
}

/// Version tag of the emitted CSV/JSON layout.
pub const OUTPUT_SCHEMA_VERSION: &str = "1";

fn default_schema() -> String {
    OUTPUT_SCHEMA_VERSION.to_string()
}

/// Final metrics block serialized as the run's JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(default = "default_schema")]
    pub schema_version: String,
    pub policy: String,
    pub seed: u64,
    pub workers: usize,
    pub total_steps: u64,
    pub final_worker_losses: Vec<f64>,
    pub final_center_loss: Option<f64>,
    pub rounds: u64,
    pub simulated_comm_cost: f64,
    pub wall_time_secs: f64,
    pub status: RunStatus,
}

/// Full deterministic output of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<StepRow>,
    pub centers: Vec<CenterSnapshot>,
    pub ledger: CommLedger,
    pub final_workers: Vec<LayeredParams>,
    pub final_center: Option<LayeredParams>,
    pub param_trace: Vec<ParamTraceRow>,
    pub summary: RunSummary,
}

impl RunRecord {
    pub fn status(&self) -> &RunStatus {
        &self.summary.status
    }

    /// Trajectory CSV bytes (columns: step, worker_id, loss, grad_norm,
    /// event), deterministic for identical records.
    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(w.into_inner().expect("vec writer cannot fail"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let bytes = self.csv_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.summary)?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

impl RunRecord {
    /// Order-sensitive digest of everything deterministic in the record
    /// (wall time is excluded). Two runs with identical configs and seeds
    /// must agree on this value.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv::new();
        for row in &self.rows {
            h.u64(row.step);
            h.u64(row.worker_id as u64);
            h.f64(row.loss);
            h.f64(row.grad_norm);
            h.bytes(row.event.as_bytes());
        }
        for c in &self.centers {
            h.u64(c.round);
            h.u64(c.global_step);
            for v in c.params.flatten() {
                h.f64(v);
            }
        }
        h.u64(self.ledger.rounds);
        for e in &self.ledger.events {
            h.u64(e.global_step);
            h.f64(e.simulated_cost);
        }
        for w in &self.final_workers {
            for v in w.flatten() {
                h.f64(v);
            }
        }
        for t in &self.param_trace {
            h.u64(t.step);
            for v in &t.values {
                h.f64(*v);
            }
        }
        h.finish()
    }
}

/// FNV-1a, enough for replay comparison.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn bytes(&mut self, data: &[u8]) {
        for &b in data {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn u64(&mut self, v: u64) {
        self.bytes(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.u64(v.to_bits());
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Bundled reader for trajectory CSVs. Verifies the row ordering contract:
/// rows must be strictly ordered by `(step, worker_id)`.
pub fn read_trajectory_csv(path: &Path) -> Result<Vec<StepRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for item in reader.deserialize::<StepRow>() {
        rows.push(item?);
    }
    for pair in rows.windows(2) {
        let key = |r: &StepRow| (r.step, r.worker_id);
        if key(&pair[0]) >= key(&pair[1]) {
            return Err(Error::Numeric(format!(
                "trajectory rows out of order at step {}",
                pair[1].step
            )));
        }
    }
    Ok(rows)
}
