//! Convergence-rate probe on a noisy strongly convex quadratic.
//!
//! With a learning-rate schedule of `c / t` the expected suboptimality of
//! an SGD-driven worker decays like `1 / t`, so the least-squares slope of
//! `log E[f - f*]` against `log t` over the final decade should sit near
//! -1. With zero noise and a constant rate below `2 / L` the decay is
//! linear instead, i.e. a straight line of `log f` against `t`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use grawa_core::{
    Error, LocalOptConfig, LrSchedule, ObjectiveSpec, Policy, PolicyConfig, Result, RunOptions,
    Schedule,
};

use crate::emit;
use crate::protocols::build_pool;

fn d_dim() -> usize {
    10
}
fn d_sigma() -> f64 {
    0.1
}
fn d_workers() -> usize {
    4
}
fn d_seeds() -> Vec<u64> {
    (1..=10).collect()
}
fn d_steps() -> u64 {
    2000
}
fn d_c() -> f64 {
    0.9
}
fn d_lambda() -> f64 {
    0.1
}
fn d_tau() -> u64 {
    1
}
fn d_policy() -> Policy {
    Policy::Grawa
}
fn d_batch() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexRateConfig {
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_sigma")]
    pub noise_sigma: f64,
    /// Hessian spectrum; defaults to an even spread on [1, 2], which keeps
    /// `c/t` schedules stable from the first step while `c` stays above
    /// the 1/(2m) threshold needed for the 1/t regime.
    #[serde(default)]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default = "d_workers")]
    pub workers: usize,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_steps")]
    pub total_steps: u64,
    /// Coefficient of the inverse-t schedule (ignored when `constant_eta`
    /// is set).
    #[serde(default = "d_c")]
    pub lr_c: f64,
    /// Switch to a constant learning rate (linear-convergence mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_eta: Option<f64>,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_tau")]
    pub tau: u64,
    #[serde(default = "d_policy")]
    pub policy: Policy,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
}

impl Default for ConvexRateConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields default")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// log-suboptimality against log t (1/t regime).
    LogLog,
    /// log-suboptimality against t (linear-convergence regime).
    SemiLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexRateReport {
    pub mode: RateMode,
    /// Fitted slope over the window; `None` when the run diverged.
    pub slope: Option<f64>,
    /// 1.96 standard errors of the slope estimate.
    pub half_width: Option<f64>,
    pub r_squared: Option<f64>,
    pub per_seed_slopes: Vec<f64>,
    pub divergent: bool,
    /// Fit window in local steps (final decade for the log-log mode).
    pub window: (u64, u64),
    /// Known analysis constants of the probed quadratic; the sPL and cone
    /// constants are taken over the annulus 0.1 <= ||x|| <= 8 that the
    /// seeded inits inhabit.
    pub constants: grawa_core::TheoreticalConstants,
}

/// Suboptimality curve of one seed: mean over workers of `f(x) - f*` at
/// each local step (f* = 0 for the centered quadratic).
fn seed_curve(cfg: &ConvexRateConfig, seed: u64) -> Result<Vec<f64>> {
    let objective = ObjectiveSpec::Quadratic {
        dim: cfg.dim,
        noise_sigma: cfg.noise_sigma,
        eigenvalues: cfg.eigenvalues.clone(),
        n_samples: 256,
    }
    .build()?;
    let policy = PolicyConfig::new(cfg.policy, cfg.lambda, cfg.tau);
    let local = LocalOptConfig {
        lr_schedule: match cfg.constant_eta {
            Some(_) => LrSchedule::Constant,
            None => LrSchedule::InverseT { c: cfg.lr_c },
        },
        ..LocalOptConfig::plain(cfg.constant_eta.unwrap_or(cfg.lr_c))
    };
    let opts = RunOptions {
        workers: cfg.workers,
        total_steps: cfg.total_steps,
        batch_size: cfg.batch_size,
        schedule: Schedule::RoundRobin,
        seed,
        comm_cost: Default::default(),
        record_params: true,
        worker_inits: None,
    };
    let record = grawa_core::run(&objective, &policy, &local, &opts)?;

    let t = cfg.total_steps as usize;
    let mut sums = vec![0.0f64; t];
    let mut counts = vec![0u32; t];
    let mut per_worker_step = vec![0usize; cfg.workers];
    for row in &record.param_trace {
        let local_t = per_worker_step[row.worker_id];
        per_worker_step[row.worker_id] += 1;
        if local_t < t {
            let p = grawa_core::LayeredParams::from_flat(
                &row.values,
                &objective.signature(),
            )?;
            sums[local_t] += objective.eval_full(&p)?;
            counts[local_t] += 1;
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect())
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - (slope * p.0 + intercept);
            r * r
        })
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let se = if points.len() > 2 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, se, r2)
}

fn fit_window(curve: &[f64], window: (u64, u64), mode: RateMode) -> Option<(f64, f64, f64)> {
    let points: Vec<(f64, f64)> = (window.0..=window.1)
        .filter_map(|t| {
            let v = curve[(t - 1) as usize];
            if v.is_finite() && v > 0.0 {
                let x = match mode {
                    RateMode::LogLog => (t as f64).ln(),
                    RateMode::SemiLog => t as f64,
                };
                Some((x, v.ln()))
            } else {
                None
            }
        })
        .collect();
    if points.len() < 8 {
        return None;
    }
    Some(least_squares(&points))
}

pub fn run_probe(cfg: &ConvexRateConfig, out: Option<&Path>) -> Result<ConvexRateReport> {
    if cfg.constant_eta.is_none() && cfg.noise_sigma <= 0.0 {
        return Err(Error::Config(
            "the inverse-t probe requires noise_sigma > 0 (set constant_eta for the \
             deterministic linear-rate mode)"
                .into(),
        ));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::Config("seeds must not be empty".into()));
    }
    let mode = if cfg.constant_eta.is_some() {
        RateMode::SemiLog
    } else {
        RateMode::LogLog
    };
    let pool = build_pool();
    let curves: Vec<Result<Vec<f64>>> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| seed_curve(cfg, seed))
            .collect()
    });
    let curves: Vec<Vec<f64>> = curves.into_iter().collect::<Result<_>>()?;

    let t = cfg.total_steps;
    let window = match mode {
        RateMode::LogLog => ((t / 10).max(1), t),
        // Skip the initial transient in the deterministic regime.
        RateMode::SemiLog => (10.min(t), t),
    };

    let divergent = curves
        .iter()
        .flatten()
        .any(|v| !v.is_finite() || *v > 1e12);

    let mut mean_curve = vec![0.0f64; t as usize];
    for c in &curves {
        for (m, v) in mean_curve.iter_mut().zip(c) {
            *m += v / curves.len() as f64;
        }
    }

    let per_seed_slopes: Vec<f64> = curves
        .iter()
        .filter_map(|c| fit_window(c, window, mode).map(|(s, _, _)| s))
        .collect();

    let fit = if divergent {
        None
    } else {
        fit_window(&mean_curve, window, mode)
    };
    let built = ObjectiveSpec::Quadratic {
        dim: cfg.dim,
        noise_sigma: cfg.noise_sigma,
        eigenvalues: cfg.eigenvalues.clone(),
        n_samples: 1,
    }
    .build()?;
    let eigs = match &built {
        grawa_core::AnyObjective::Quadratic(q) => q.eigenvalues().to_vec(),
        _ => unreachable!(),
    };
    let report = ConvexRateReport {
        mode,
        slope: fit.map(|(s, _, _)| s),
        half_width: fit.map(|(_, se, _)| 1.96 * se),
        r_squared: fit.map(|(_, _, r2)| r2),
        per_seed_slopes,
        divergent,
        window,
        constants: grawa_core::TheoreticalConstants::for_quadratic(
            &eigs,
            cfg.noise_sigma,
            0.1,
            8.0,
        )?,
    };

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        emit::write_json(&dir.join("convex_rate.json"), &report)?;
        let mut w = csv::Writer::from_path(dir.join("convex_rate_curve.csv"))?;
        w.write_record(["t", "mean_suboptimality"])?;
        for (i, v) in mean_curve.iter().enumerate() {
            w.write_record([(i + 1).to_string(), format!("{v}")])?;
        }
        w.flush()?;
    }
    Ok(report)
}
