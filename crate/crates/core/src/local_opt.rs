//! Per-worker local update rules.
//!
//! Workers run SGD (optionally with momentum, Nesterov acceleration and
//! coupled L2 weight decay) or its sharpness-aware variant between
//! communication rounds, plus the proximity step that keeps them near the
//! most recently published center.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{AnyObjective, Batch};
use crate::tensor::{LayeredGradient, LayeredParams};

/// Learning-rate schedule. `InverseT` yields an effective rate of `c / t`
/// at local step `t >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    #[default]
    Constant,
    InverseT { c: f64 },
}


#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalOptConfig {
    pub eta: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub nesterov: bool,
    #[serde(default)]
    pub weight_decay: f64,
    /// Neighborhood radius of the sharpness-aware ascend step; 0 disables it.
    #[serde(default)]
    pub sam_rho: f64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
}

impl LocalOptConfig {
    pub fn plain(eta: f64) -> Self {
        Self {
            eta,
            momentum: 0.0,
            nesterov: false,
            weight_decay: 0.0,
            sam_rho: 0.0,
            lr_schedule: LrSchedule::Constant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eta <= 0.0 || !self.eta.is_finite() {
            return Err(Error::Config(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.sam_rho < 0.0 || !self.sam_rho.is_finite() {
            return Err(Error::Config(format!(
                "sam_rho must be >= 0, got {}",
                self.sam_rho
            )));
        }
        if let LrSchedule::InverseT { c } = self.lr_schedule {
            if c <= 0.0 || !c.is_finite() {
                return Err(Error::Config(format!(
                    "lr_schedule.c must be > 0, got {c}"
                )));
            }
        }
        Ok(())
    }

    /// Effective learning rate at local step `t` (1-based).
    pub fn rate_at(&self, t: u64) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.eta,
            LrSchedule::InverseT { c } => c / t.max(1) as f64,
        }
    }

    pub fn uses_sam(&self) -> bool {
        self.sam_rho > 0.0
    }
}

/// Momentum buffers, zero-initialized to the parameter signature.
#[derive(Debug, Clone, PartialEq)]
pub struct OptBuffers {
    pub velocity: LayeredParams,
    pub step: u64,
}

impl OptBuffers {
    pub fn new(signature: &[usize]) -> Self {
        Self {
            velocity: LayeredParams::zeros(signature),
            step: 0,
        }
    }
}

/// One SGD step. With momentum `m > 0` the velocity update is
/// `v <- m v + g` and the applied direction is `v` (or `g + m v` under
/// Nesterov). Weight decay is added to the gradient before the velocity
/// update (coupled L2).
pub fn sgd_step(
    params: &LayeredParams,
    grad: &LayeredGradient,
    buffers: &mut OptBuffers,
    config: &LocalOptConfig,
    t: u64,
) -> Result<LayeredParams> {
    if !grad.matches_params(params) {
        return Err(Error::ShapeMismatch {
            expected: params.signature(),
            got: grad.signature(),
        });
    }
    if !grad.is_finite() {
        return Err(Error::Numeric("non-finite gradient in sgd_step".into()));
    }
    let lr = config.rate_at(t);
    let mut out = params.clone();
    for k in 0..params.num_layers() {
        let p_in = params.layer(k);
        let g_in = grad.layer(k);
        let v = buffers.velocity.layer_mut(k);
        let p_out = out.layer_mut(k);
        for i in 0..p_in.len() {
            let g = g_in[i] + config.weight_decay * p_in[i];
            let d = if config.momentum > 0.0 {
                v[i] = config.momentum * v[i] + g;
                if config.nesterov {
                    g + config.momentum * v[i]
                } else {
                    v[i]
                }
            } else {
                g
            };
            p_out[i] = p_in[i] - lr * d;
        }
    }
    buffers.step += 1;
    Ok(out)
}

/// Threshold below which the SAM ascend step is skipped (degenerate
/// gradient direction).
pub const SAM_NORM_FLOOR: f64 = 1e-12;

/// Sharpness-aware gradient: ascend to `x + rho g/||g||` and return the
/// gradient evaluated there on the same batch. The boolean reports whether
/// the ascend was skipped because the gradient direction was degenerate.
pub fn sam_gradient(
    objective: &AnyObjective,
    params: &LayeredParams,
    batch: &Batch,
    rho: f64,
) -> Result<(LayeredGradient, bool)> {
    let g = objective.grad(params, batch)?;
    let norm = g.l2_norm();
    if norm < SAM_NORM_FLOOR {
        return Ok((g, true));
    }
    let mut adv = params.clone();
    for k in 0..adv.num_layers() {
        let gl = g.layer(k);
        let pl = adv.layer_mut(k);
        for (p, &gv) in pl.iter_mut().zip(gl) {
            *p += rho * gv / norm;
        }
    }
    Ok((objective.grad(&adv, batch)?, false))
}

/// One SAM step: compute the sharpness-aware gradient, then descend from
/// the original parameters with it through the regular SGD machinery.
/// Returns the updated parameters, the gradient that a gradient-averaging
/// scheme would consume, and the ascend-skipped flag.
pub fn sam_step(
    objective: &AnyObjective,
    params: &LayeredParams,
    batch: &Batch,
    buffers: &mut OptBuffers,
    config: &LocalOptConfig,
    t: u64,
) -> Result<(LayeredParams, LayeredGradient, bool)> {
    if !config.uses_sam() {
        return Err(Error::Config("sam_step requires sam_rho > 0".into()));
    }
    let (g, skipped) = sam_gradient(objective, params, batch, config.sam_rho)?;
    let updated = sgd_step(params, &g, buffers, config, t)?;
    Ok((updated, g, skipped))
}

/// Proximity step toward the stale center with effective force `mu / tau`:
/// `x <- (1 - mu/tau) x + (mu/tau) center`.
pub fn proximity_step(
    params: &LayeredParams,
    center: &LayeredParams,
    mu: f64,
    tau: u64,
) -> Result<LayeredParams> {
    params.check_shape(center)?;
    if tau == 0 {
        return Err(Error::Config("tau must be >= 1".into()));
    }
    let coef = mu / tau as f64;
    if !(0.0..=1.0).contains(&coef) || !coef.is_finite() {
        return Err(Error::Config(format!(
            "mu/tau must lie in [0, 1], got {coef}"
        )));
    }
    Ok(params.lerp(center, coef))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::ObjectiveSpec;
    use crate::tensor::GradientSource;

    fn params(v: &[f64]) -> LayeredParams {
        LayeredParams::new(vec![v.to_vec()])
    }

    fn grad(v: &[f64]) -> LayeredGradient {
        LayeredGradient::new(vec![v.to_vec()], GradientSource::BatchAccumulated)
    }

    #[test]
    fn plain_step() {
        let cfg = LocalOptConfig::plain(0.1);
        let mut buf = OptBuffers::new(&[2]);
        let out = sgd_step(&params(&[1.0, 1.0]), &grad(&[1.0, 2.0]), &mut buf, &cfg, 1).unwrap();
        assert_eq!(out.layer(0), &[0.9, 0.8]);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let cfg = LocalOptConfig {
            momentum: 0.9,
            nesterov: true,
            ..LocalOptConfig::plain(0.5)
        };
        let mut buf = OptBuffers::new(&[2]);
        let p = params(&[3.0, -4.0]);
        let out = sgd_step(&p, &grad(&[0.0, 0.0]), &mut buf, &cfg, 1).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn momentum_second_step_displacement() {
        // v1 = 1, step 0.1; v2 = 0.9 + 1 = 1.9, step 0.19.
        let cfg = LocalOptConfig {
            momentum: 0.9,
            ..LocalOptConfig::plain(0.1)
        };
        let mut buf = OptBuffers::new(&[2]);
        let p0 = params(&[0.0, 0.0]);
        let p1 = sgd_step(&p0, &grad(&[1.0, 0.0]), &mut buf, &cfg, 1).unwrap();
        let p2 = sgd_step(&p1, &grad(&[1.0, 0.0]), &mut buf, &cfg, 2).unwrap();
        let displacement = p1.layer(0)[0] - p2.layer(0)[0];
        assert!((displacement - 0.19).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let cfg = LocalOptConfig::plain(0.1);
        let mut buf = OptBuffers::new(&[1]);
        let err = sgd_step(&params(&[1.0]), &grad(&[f64::NAN]), &mut buf, &cfg, 1);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn inverse_t_suboptimality_monotone_after_burn_in() {
        // Strongly convex noiseless quadratic; f(x_t) must be non-increasing
        // once the schedule has decayed past the stability threshold.
        let obj = ObjectiveSpec::Quadratic {
            dim: 4,
            noise_sigma: 0.0,
            eigenvalues: Some(vec![1.0, 1.3, 1.6, 2.0]),
            n_samples: 8,
        }
        .build()
        .unwrap();
        let cfg = LocalOptConfig {
            lr_schedule: LrSchedule::InverseT { c: 0.9 },
            ..LocalOptConfig::plain(0.9)
        };
        let mut buf = OptBuffers::new(&obj.signature());
        let mut p = params(&[2.0, -1.5, 1.0, 0.5]);
        let batch = Batch::full(obj.train_data(), 0).unwrap();
        let mut prev = f64::INFINITY;
        for t in 1..=200u64 {
            let g = obj.grad(&p, &batch).unwrap();
            p = sgd_step(&p, &g, &mut buf, &cfg, t).unwrap();
            let f = obj.eval(&p, &batch).unwrap();
            if t > 10 {
                assert!(f <= prev + 1e-15, "f increased at t={t}: {prev} -> {f}");
            }
            prev = f;
        }
    }

    #[test]
    fn sam_hand_oracle_on_identity_quadratic() {
        // A = I, x = (1, 0), rho = 0.05: ascend to (1.05, 0), gradient there
        // is (1.05, 0), descend gives (0.895, 0).
        let obj = ObjectiveSpec::Quadratic {
            dim: 2,
            noise_sigma: 0.0,
            eigenvalues: Some(vec![1.0, 1.0]),
            n_samples: 8,
        }
        .build()
        .unwrap();
        let cfg = LocalOptConfig {
            sam_rho: 0.05,
            ..LocalOptConfig::plain(0.1)
        };
        let mut buf = OptBuffers::new(&[2]);
        let batch = Batch::full(obj.train_data(), 0).unwrap();
        let (out, g, skipped) =
            sam_step(&obj, &params(&[1.0, 0.0]), &batch, &mut buf, &cfg, 1).unwrap();
        assert!(!skipped);
        assert!((g.layer(0)[0] - 1.05).abs() < 1e-12);
        assert_eq!(g.layer(0)[1], 0.0);
        assert!((out.layer(0)[0] - 0.895).abs() < 1e-12);
    }

    #[test]
    fn sam_zero_gradient_skips_ascend() {
        let obj = ObjectiveSpec::Quadratic {
            dim: 2,
            noise_sigma: 0.0,
            eigenvalues: Some(vec![1.0, 1.0]),
            n_samples: 8,
        }
        .build()
        .unwrap();
        let batch = Batch::full(obj.train_data(), 0).unwrap();
        let (g, skipped) = sam_gradient(&obj, &params(&[0.0, 0.0]), &batch, 0.05).unwrap();
        assert!(skipped);
        assert_eq!(g.layer(0), &[0.0, 0.0]);
    }

    #[test]
    fn sam_with_zero_rho_equals_sgd() {
        let obj = ObjectiveSpec::Quadratic {
            dim: 3,
            noise_sigma: 0.2,
            eigenvalues: Some(vec![1.0, 1.5, 2.0]),
            n_samples: 32,
        }
        .build()
        .unwrap();
        let cfg = LocalOptConfig {
            momentum: 0.9,
            ..LocalOptConfig::plain(0.05)
        };
        for key in 0..20u64 {
            let batch = Batch::from_indices(obj.train_data(), &[0, 1], key).unwrap();
            let p = params(&[0.3, -0.7, 1.1]);
            let mut buf_a = OptBuffers::new(&[3]);
            let mut buf_b = OptBuffers::new(&[3]);
            // rho = 0 disables the ascend entirely; the step must bit-equal
            // plain SGD on the same batch.
            let (g, skipped) = sam_gradient(&obj, &p, &batch, 0.0).unwrap();
            assert!(!skipped);
            let a = sgd_step(&p, &g, &mut buf_a, &cfg, 1).unwrap();
            let b = sgd_step(&p, &obj.grad(&p, &batch).unwrap(), &mut buf_b, &cfg, 1).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn proximity_endpoints_and_arithmetic() {
        let p = params(&[2.0, 0.0]);
        let c = params(&[0.0, 0.0]);
        assert_eq!(proximity_step(&p, &c, 0.0, 16).unwrap(), p);
        assert_eq!(proximity_step(&p, &c, 16.0, 16).unwrap(), c);
        let out = proximity_step(&p, &c, 0.05, 16).unwrap();
        assert!((out.layer(0)[0] - 1.99375).abs() < 1e-15);
        assert_eq!(out.layer(0)[1], 0.0);
    }

    #[test]
    fn proximity_rejects_out_of_range_force() {
        let p = params(&[1.0]);
        let c = params(&[0.0]);
        assert!(proximity_step(&p, &c, 17.0, 16).is_err());
        assert!(proximity_step(&p, &c, -0.1, 16).is_err());
    }

    #[test]
    fn proximity_contracts_exactly() {
        let p = params(&[3.0, -2.0, 5.0]);
        let c = params(&[1.0, 1.0, 1.0]);
        for (mu, tau) in [(0.05, 16u64), (0.5, 4), (2.0, 8), (1.0, 1)] {
            let out = proximity_step(&p, &c, mu, tau).unwrap();
            let expected = (1.0 - mu / tau as f64) * p.distance(&c);
            assert!(
                (out.distance(&c) - expected).abs() <= 1e-12 * expected.max(1.0),
                "contraction identity violated for mu={mu} tau={tau}"
            );
        }
    }

    #[test]
    fn config_validation_names_the_key() {
        let bad = LocalOptConfig {
            momentum: 1.0,
            ..LocalOptConfig::plain(0.1)
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("momentum"));
    }
}
