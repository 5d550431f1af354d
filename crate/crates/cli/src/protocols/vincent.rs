//! Vincent-function comparison protocol.
//!
//! Four workers start at the corners of the [0.25, 10]^2 box, run plain
//! SGD with learning rate 0.01, and a distributed pull is applied after
//! every 4 local updates per worker. Seeds vary the simulated asynchrony
//! (jittered interleaving). Every policy converges to the same loss value;
//! the interesting output is the local curvature at the converged center,
//! which separates flat-minima-seeking policies from leader-following
//! ones.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use grawa_core::objective::vincent::curvature_score;
use grawa_core::{
    Error, LayeredParams, LocalOptConfig, ObjectiveSpec, Policy, PolicyConfig, Result, RunOptions,
    RunRecord, Schedule,
};

use crate::emit;
use crate::protocols::{build_pool, canonical_policy};

/// Loss level that counts as "converged" (every valley bottom sits at -2).
pub const CONVERGENCE_THRESHOLD: f64 = -1.99;
/// Local learning rate of the protocol.
pub const ETA: f64 = 0.01;
/// Distributed pull after every 4 local updates.
pub const TAU: u64 = 4;
pub const WORKERS: usize = 4;
/// Per-worker step budget.
pub const DEFAULT_TOTAL_STEPS: u64 = 5000;
/// Interleaving skew used to model asynchrony.
const MAX_SKEW: u64 = 2;

const CORNERS: [(f64, f64); 4] = [(0.25, 0.25), (0.25, 10.0), (10.0, 0.25), (10.0, 10.0)];

pub const DEFAULT_POLICIES: [Policy; 5] = [
    Policy::Easgd,
    Policy::Lsgd,
    Policy::Grawa,
    Policy::Mgrawa,
    Policy::Lgrawa,
];

pub fn corner_inits() -> Vec<LayeredParams> {
    CORNERS
        .iter()
        .map(|&(x, y)| LayeredParams::new(vec![vec![x], vec![y]]))
        .collect()
}

/// Protocol hyperparameters. One shared pulling force for every
/// center-based policy isolates the center-selection rule itself: with a
/// common lambda the leader-following policy gets captured by whichever
/// worker first reports a low loss, while the gradient-weighted policies
/// keep favoring flat valleys.
pub const LAMBDA: f64 = 0.5;

pub fn protocol_policy(policy: Policy) -> PolicyConfig {
    let mut cfg = canonical_policy(policy, TAU);
    if !policy.is_data_parallel() {
        cfg.lambda = LAMBDA;
    }
    cfg
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VincentRow {
    pub policy: String,
    pub seed: u64,
    /// Whether every worker reached the convergence threshold in budget.
    pub all_converged: bool,
    /// Global step of each worker's first observation at or below the
    /// threshold (None if never).
    pub first_hit_steps: Vec<Option<u64>>,
    pub final_worker_losses: Vec<f64>,
    pub center_x: f64,
    pub center_y: f64,
    pub center_loss: f64,
    /// `|f_xx| + |f_yy|` at the converged center; lower means flatter.
    pub curvature_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VincentReport {
    pub rows: Vec<VincentRow>,
    pub threshold: f64,
    pub total_steps: u64,
}

impl VincentReport {
    /// Mean curvature score of one policy across its seeds.
    pub fn mean_curvature(&self, policy: Policy) -> Option<f64> {
        let scores: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.policy == policy.name())
            .map(|r| r.curvature_score)
            .collect();
        if scores.is_empty() {
            None
        } else {
            Some(scores.iter().sum::<f64>() / scores.len() as f64)
        }
    }

    /// Per-seed curvature of one policy, keyed by seed.
    pub fn curvature_by_seed(&self, policy: Policy) -> Vec<(u64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.policy == policy.name())
            .map(|r| (r.seed, r.curvature_score))
            .collect()
    }
}

/// Run one (policy, seed) cell of the protocol.
pub fn run_one(policy: Policy, seed: u64, total_steps: u64) -> Result<(VincentRow, RunRecord)> {
    let objective = ObjectiveSpec::Vincent2d.build()?;
    let policy_cfg = protocol_policy(policy);
    let local = LocalOptConfig::plain(ETA);
    let opts = RunOptions {
        workers: WORKERS,
        total_steps,
        batch_size: 1,
        schedule: if policy.is_data_parallel() {
            Schedule::RoundRobin
        } else {
            Schedule::Jittered { max_skew: MAX_SKEW }
        },
        seed,
        comm_cost: Default::default(),
        record_params: true,
        worker_inits: Some(corner_inits()),
    };
    let record = grawa_core::run(&objective, &policy_cfg, &local, &opts)?;
    if !record.status().is_completed() {
        return Err(Error::Numeric(format!(
            "vincent run aborted: {:?}",
            record.status()
        )));
    }

    let mut first_hit_steps = vec![None; WORKERS];
    for row in &record.rows {
        if row.loss <= CONVERGENCE_THRESHOLD && first_hit_steps[row.worker_id].is_none() {
            first_hit_steps[row.worker_id] = Some(row.step);
        }
    }
    let final_worker_losses = record.summary.final_worker_losses.clone();
    // A worker that only dips below the threshold on its very last update
    // has no row showing it; count the final loss as a hit too.
    let all_converged = (0..WORKERS).all(|w| {
        first_hit_steps[w].is_some() || final_worker_losses[w] <= CONVERGENCE_THRESHOLD
    });

    let center = record
        .final_center
        .clone()
        .ok_or_else(|| Error::Numeric("vincent run produced no communication round".into()))?;
    let (cx, cy) = (center.layer(0)[0], center.layer(1)[0]);
    let center_loss = objective.eval_full(&center)?;
    let row = VincentRow {
        policy: policy.name().to_string(),
        seed,
        all_converged,
        first_hit_steps,
        final_worker_losses,
        center_x: cx,
        center_y: cy,
        center_loss,
        curvature_score: curvature_score(cx, cy),
    };
    Ok((row, record))
}

/// Run the whole grid; when `out` is given, each cell's trajectory and
/// positions files land in `out/vincent_<policy>_s<seed>/` and the
/// comparison report in `out/vincent_report.{json,csv}`.
pub fn run_protocol(
    policies: &[Policy],
    seeds: &[u64],
    total_steps: u64,
    out: Option<&Path>,
) -> Result<VincentReport> {
    if policies.is_empty() || seeds.is_empty() {
        return Err(Error::Config("vincent needs at least one policy and one seed".into()));
    }
    let cells: Vec<(Policy, u64)> = policies
        .iter()
        .flat_map(|&p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let pool = build_pool();
    let results: Vec<Result<(VincentRow, RunRecord)>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(p, s)| run_one(p, s, total_steps))
            .collect()
    });

    let mut rows = Vec::with_capacity(cells.len());
    for ((policy, seed), result) in cells.into_iter().zip(results) {
        let (row, record) = result?;
        if let Some(dir) = out {
            emit::write_run_outputs(
                &dir.join(format!("vincent_{}_s{}", policy.name(), seed)),
                &record,
            )?;
        }
        rows.push(row);
    }
    let report = VincentReport {
        rows,
        threshold: CONVERGENCE_THRESHOLD,
        total_steps,
    };
    if let Some(dir) = out {
        emit::write_json(&dir.join("vincent_report.json"), &report)?;
        write_report_csv(&dir.join("vincent_report.csv"), &report)?;
    }
    Ok(report)
}

fn write_report_csv(path: &Path, report: &VincentReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "policy",
        "seed",
        "all_converged",
        "center_x",
        "center_y",
        "center_loss",
        "curvature_score",
    ])?;
    for r in &report.rows {
        w.write_record([
            r.policy.clone(),
            r.seed.to_string(),
            r.all_converged.to_string(),
            format!("{}", r.center_x),
            format!("{}", r.center_y),
            format!("{}", r.center_loss),
            format!("{}", r.curvature_score),
        ])?;
    }
    w.flush()?;
    Ok(())
}
