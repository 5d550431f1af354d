//! Run configuration files.
//!
//! One JSON document per run. Unknown keys are rejected and every field is
//! validated before any compute starts; error messages name the offending
//! key.

use std::path::Path;

use serde::{Deserialize, Serialize};

use grawa_core::{
    AnyObjective, CommCost, Error, LayeredParams, LocalOptConfig, ObjectiveSpec, PolicyConfig,
    Result, RunOptions, RunRecord, Schedule,
};

fn default_batch_size() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub objective: ObjectiveSpec,
    pub policy: PolicyConfig,
    pub local_opt: LocalOptConfig,
    pub workers: usize,
    pub total_steps: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub schedule: Schedule,
    pub seed: u64,
    #[serde(default)]
    pub comm_cost: CommCost,
    #[serde(default)]
    pub record_params: bool,
    /// Explicit initial parameters per worker (layer-nested arrays).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_inits: Option<Vec<LayeredParams>>,
    /// Output directory; the --out flag overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        self.local_opt.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        // Build early to surface objective-spec problems as config errors.
        self.objective.build()?;
        Ok(())
    }

    pub fn to_run_options(&self) -> RunOptions {
        RunOptions {
            workers: self.workers,
            total_steps: self.total_steps,
            batch_size: self.batch_size,
            schedule: self.schedule,
            seed: self.seed,
            comm_cost: self.comm_cost,
            record_params: self.record_params,
            worker_inits: self.worker_inits.clone(),
        }
    }

    /// Build the objective and run the harness.
    pub fn execute(&self) -> Result<(AnyObjective, RunRecord)> {
        self.validate()?;
        let objective = self.objective.build()?;
        let record = grawa_core::run(
            &objective,
            &self.policy,
            &self.local_opt,
            &self.to_run_options(),
        )?;
        Ok((objective, record))
    }
}
