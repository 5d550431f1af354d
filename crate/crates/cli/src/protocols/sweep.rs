//! Grid sweep over policies, seeds and optionally pulling forces and
//! communication periods.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use grawa_core::{Error, Policy, Result};

use crate::config::RunConfig;
use crate::emit;
use crate::protocols::build_pool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Template run; the grid below overrides policy, seed, lambda, tau.
    pub base: RunConfig,
    pub policies: Vec<Policy>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taus: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub policy: String,
    pub lambda: f64,
    pub tau: u64,
    pub seed: u64,
    pub completed: bool,
    pub rounds: u64,
    pub simulated_comm_cost: f64,
    pub mean_final_loss: f64,
    pub min_final_loss: f64,
    pub dir: String,
}

pub fn run_sweep(cfg: &SweepConfig, out: &Path) -> Result<Vec<SweepRow>> {
    if cfg.policies.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config("sweep needs policies and seeds".into()));
    }
    cfg.base.validate()?;
    let lambdas = cfg
        .lambdas
        .clone()
        .unwrap_or_else(|| vec![cfg.base.policy.lambda]);
    let taus = cfg.taus.clone().unwrap_or_else(|| vec![cfg.base.policy.tau]);

    let mut cells = Vec::new();
    for &policy in &cfg.policies {
        for &lambda in &lambdas {
            for &tau in &taus {
                for &seed in &cfg.seeds {
                    cells.push((policy, lambda, tau, seed));
                }
            }
        }
    }

    std::fs::create_dir_all(out)?;
    let pool = build_pool();
    let rows: Vec<Result<SweepRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(policy, lambda, tau, seed)| {
                let mut run_cfg = cfg.base.clone();
                run_cfg.policy.policy = policy;
                run_cfg.policy.lambda = lambda;
                run_cfg.policy.tau = tau;
                run_cfg.seed = seed;
                run_cfg.validate()?;
                let (_, record) = run_cfg.execute()?;
                let name = format!("sweep_{}_l{lambda}_t{tau}_s{seed}", policy.name());
                emit::write_run_outputs(&out.join(&name), &record)?;
                let losses = &record.summary.final_worker_losses;
                Ok(SweepRow {
                    policy: policy.name().to_string(),
                    lambda,
                    tau,
                    seed,
                    completed: record.status().is_completed(),
                    rounds: record.ledger.rounds,
                    simulated_comm_cost: record.ledger.total_cost(),
                    mean_final_loss: losses.iter().sum::<f64>() / losses.len() as f64,
                    min_final_loss: losses.iter().cloned().fold(f64::INFINITY, f64::min),
                    dir: name,
                })
            })
            .collect()
    });
    let rows: Vec<SweepRow> = rows.into_iter().collect::<Result<_>>()?;

    let mut w = csv::Writer::from_path(out.join("sweep_index.csv"))?;
    w.write_record([
        "policy",
        "lambda",
        "tau",
        "seed",
        "completed",
        "rounds",
        "simulated_comm_cost",
        "mean_final_loss",
        "min_final_loss",
        "dir",
    ])?;
    for r in &rows {
        w.write_record([
            r.policy.clone(),
            format!("{}", r.lambda),
            r.tau.to_string(),
            r.seed.to_string(),
            r.completed.to_string(),
            r.rounds.to_string(),
            format!("{}", r.simulated_comm_cost),
            format!("{}", r.mean_final_loss),
            format!("{}", r.min_final_loss),
            r.dir.clone(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}
