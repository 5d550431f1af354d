//! Flatness comparison across policies on the synthetic classifier.
//!
//! Each (policy, seed) cell trains to a fixed step budget and then reports
//! test error, generalization gap, full-train gradient norm and the
//! Lanczos Frobenius proxy, for both the best worker (lowest train loss)
//! and the center variable.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use grawa_core::{
    flatness, AnyObjective, Error, LayeredParams, LocalOptConfig, ObjectiveSpec, Policy,
    PolicyConfig, Result, RunOptions, Schedule,
};

use crate::protocols::{build_pool, canonical_policy};

fn d_hidden() -> Vec<usize> {
    vec![8, 8]
}
fn d_train() -> usize {
    200
}
fn d_test() -> usize {
    100
}
fn d_dataset_seed() -> u64 {
    42
}
fn d_policies() -> Vec<Policy> {
    vec![Policy::Mgrawa, Policy::Lgrawa, Policy::Easgd, Policy::Lsgd]
}
fn d_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}
fn d_workers() -> usize {
    4
}
fn d_steps() -> u64 {
    600
}
fn d_batch() -> usize {
    16
}
fn d_eta() -> f64 {
    0.1
}
fn d_momentum() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatnessConfig {
    #[serde(default = "d_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "d_train")]
    pub n_train: usize,
    #[serde(default = "d_test")]
    pub n_test: usize,
    #[serde(default = "d_dataset_seed")]
    pub dataset_seed: u64,
    #[serde(default = "d_policies")]
    pub policies: Vec<Policy>,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_workers")]
    pub workers: usize,
    #[serde(default = "d_steps")]
    pub total_steps: u64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_eta")]
    pub eta: f64,
    #[serde(default = "d_momentum")]
    pub momentum: f64,
    /// Lanczos steps; defaults to min(dim, 100).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lanczos_k: Option<usize>,
}

impl Default for FlatnessConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

/// Metrics of one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub train_loss: f64,
    pub train_err_pct: f64,
    pub test_err_pct: f64,
    pub generalization_gap: f64,
    pub full_grad_norm: f64,
    pub frobenius_proxy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessRow {
    pub policy: String,
    pub seed: u64,
    pub best_worker: usize,
    pub worker: PointMetrics,
    pub center: PointMetrics,
    pub rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub rows: Vec<FlatnessRow>,
    pub lanczos_k: usize,
}

impl FlatnessReport {
    pub fn mean_center_proxy(&self, policy: Policy) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.policy == policy.name())
            .map(|r| r.center.frobenius_proxy)
            .collect();
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    }
}

/// Communication periods used by the comparison: the gradient-weighted
/// policies amortize their accumulation phase over longer periods.
pub fn comparison_tau(policy: Policy) -> u64 {
    match policy {
        Policy::Grawa | Policy::Mgrawa | Policy::Lgrawa => 16,
        Policy::LocalMgrawa | Policy::LocalLgrawa => 16,
        Policy::Easgd | Policy::Lsgd => 4,
        Policy::DpSgd | Policy::DpSam => 1,
    }
}

fn point_metrics(
    objective: &AnyObjective,
    params: &LayeredParams,
    k: usize,
    seed: u64,
) -> Result<PointMetrics> {
    let train_loss = objective.eval_full(params)?;
    let train_err = objective
        .classify_error_pct(params, objective.train_data())
        .ok_or_else(|| Error::Config("flatness comparison requires a classifier".into()))?;
    let test_err = objective
        .test_data()
        .and_then(|d| objective.classify_error_pct(params, d))
        .ok_or_else(|| Error::Config("flatness comparison requires a test split".into()))?;
    let gap = flatness::generalization_gap(train_err, test_err)?;
    let grad_norm = flatness::full_gradient_norm(objective, params)?;
    let dim = objective.total_dim();
    let spectrum = flatness::lanczos_spectrum(
        |v| flatness::hvp(objective, params, v).expect("hvp on traced params"),
        dim,
        k,
        seed,
    )?;
    Ok(PointMetrics {
        train_loss,
        train_err_pct: train_err,
        test_err_pct: test_err,
        generalization_gap: gap,
        full_grad_norm: grad_norm,
        frobenius_proxy: spectrum.frobenius_proxy,
    })
}

fn run_cell(cfg: &FlatnessConfig, policy: Policy, seed: u64, k: usize) -> Result<FlatnessRow> {
    let objective = ObjectiveSpec::MlpClassifier {
        hidden: cfg.hidden.clone(),
        activation: Default::default(),
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        dataset_seed: cfg.dataset_seed,
    }
    .build()?;
    let policy_cfg: PolicyConfig = canonical_policy(policy, comparison_tau(policy));
    let local = LocalOptConfig {
        momentum: cfg.momentum,
        nesterov: cfg.momentum > 0.0,
        sam_rho: if policy == Policy::DpSam { 0.05 } else { 0.0 },
        ..LocalOptConfig::plain(cfg.eta)
    };
    let opts = RunOptions {
        workers: cfg.workers,
        total_steps: cfg.total_steps,
        batch_size: cfg.batch_size,
        schedule: Schedule::RoundRobin,
        seed,
        comm_cost: Default::default(),
        record_params: false,
        worker_inits: None,
    };
    let record = grawa_core::run(&objective, &policy_cfg, &local, &opts)?;
    if !record.status().is_completed() {
        return Err(Error::Numeric(format!(
            "flatness run {policy}/{seed} aborted: {:?}",
            record.status()
        )));
    }

    let losses = &record.summary.final_worker_losses;
    let best_worker = losses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let worker_params = &record.final_workers[best_worker];
    // Gradient-sharing policies have no center; their replicas are all
    // identical, so the best worker doubles as the consensus model.
    let center_params = record
        .final_center
        .clone()
        .unwrap_or_else(|| worker_params.clone());

    Ok(FlatnessRow {
        policy: policy.name().to_string(),
        seed,
        best_worker,
        worker: point_metrics(&objective, worker_params, k, seed)?,
        center: point_metrics(&objective, &center_params, k, seed)?,
        rounds: record.ledger.rounds,
    })
}

pub fn run_comparison(cfg: &FlatnessConfig, out: Option<&Path>) -> Result<FlatnessReport> {
    if cfg.policies.len() < 2 {
        return Err(Error::Config(
            "flatness comparison needs at least 2 policies".into(),
        ));
    }
    if cfg.seeds.len() < 3 {
        return Err(Error::Config(
            "flatness comparison needs at least 3 seeds".into(),
        ));
    }
    let probe = ObjectiveSpec::MlpClassifier {
        hidden: cfg.hidden.clone(),
        activation: Default::default(),
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        dataset_seed: cfg.dataset_seed,
    }
    .build()?;
    let k = cfg.lanczos_k.unwrap_or(100).min(probe.total_dim());

    let cells: Vec<(Policy, u64)> = cfg
        .policies
        .iter()
        .flat_map(|&p| cfg.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let pool = build_pool();
    let rows: Vec<Result<FlatnessRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(p, s)| run_cell(cfg, p, s, k))
            .collect()
    });
    let rows: Vec<FlatnessRow> = rows.into_iter().collect::<Result<_>>()?;
    let report = FlatnessReport { rows, lanczos_k: k };

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        crate::emit::write_json(&dir.join("flatness_report.json"), &report)?;
        let mut w = csv::Writer::from_path(dir.join("flatness_table.csv"))?;
        w.write_record([
            "policy",
            "seed",
            "best_worker",
            "worker_train_err_pct",
            "worker_test_err_pct",
            "worker_gap",
            "worker_grad_norm",
            "worker_frobenius_proxy",
            "center_train_err_pct",
            "center_test_err_pct",
            "center_gap",
            "center_grad_norm",
            "center_frobenius_proxy",
            "rounds",
        ])?;
        for r in &report.rows {
            w.write_record([
                r.policy.clone(),
                r.seed.to_string(),
                r.best_worker.to_string(),
                format!("{}", r.worker.train_err_pct),
                format!("{}", r.worker.test_err_pct),
                format!("{}", r.worker.generalization_gap),
                format!("{}", r.worker.full_grad_norm),
                format!("{}", r.worker.frobenius_proxy),
                format!("{}", r.center.train_err_pct),
                format!("{}", r.center.test_err_pct),
                format!("{}", r.center.generalization_gap),
                format!("{}", r.center.full_grad_norm),
                format!("{}", r.center.frobenius_proxy),
                r.rounds.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(report)
}
