//! Center-variable computations and distributed updates.
//!
//! A communication round builds a consensus model (the center variable)
//! from the current workers and pulls every worker toward it. The policies
//! differ in how the center is formed:
//!
//! * `grawa` — weighted average, one weight per worker, inversely
//!   proportional to the Euclidean norm of the flattened accumulated
//!   gradient;
//! * `mgrawa` — like `grawa`, but the score is the *sum* of per-layer
//!   Frobenius norms, which weights layers individually before collapsing
//!   to a model-level scalar;
//! * `lgrawa` — the weighted average is applied independently per layer,
//!   so a worker's "mature" layers (small accumulated gradient) can earn a
//!   large weight even when the rest of the model does not;
//! * `local_mgrawa` / `local_lgrawa` — same weighting, but the scores come
//!   from a bias-corrected running estimate of the local optimizer's own
//!   gradient norms instead of a dedicated shared batch;
//! * `easgd` — moving average of the uniform worker mean, in space and time;
//! * `lsgd` — copy of the leader (minimum current loss) worker;
//! * `dp_sgd` / `dp_sam` — no center at all; gradients are averaged every
//!   step and all replicas stay identical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{AnyObjective, Batch};
use crate::tensor::{
    uniform_mean, weighted_layer_sum, GradientSource, LayeredGradient, LayeredParams,
};

/// Distributed update policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Grawa,
    Mgrawa,
    Lgrawa,
    LocalMgrawa,
    LocalLgrawa,
    Easgd,
    Lsgd,
    DpSgd,
    DpSam,
}

impl Policy {
    pub const ALL: [Policy; 9] = [
        Policy::Grawa,
        Policy::Mgrawa,
        Policy::Lgrawa,
        Policy::LocalMgrawa,
        Policy::LocalLgrawa,
        Policy::Easgd,
        Policy::Lsgd,
        Policy::DpSgd,
        Policy::DpSam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Grawa => "grawa",
            Policy::Mgrawa => "mgrawa",
            Policy::Lgrawa => "lgrawa",
            Policy::LocalMgrawa => "local_mgrawa",
            Policy::LocalLgrawa => "local_lgrawa",
            Policy::Easgd => "easgd",
            Policy::Lsgd => "lsgd",
            Policy::DpSgd => "dp_sgd",
            Policy::DpSam => "dp_sam",
        }
    }

    pub fn parse(name: &str) -> Result<Policy> {
        Policy::ALL
            .iter()
            .copied()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown policy \"{name}\"")))
    }

    /// Gradient-sharing policies synchronize every step and keep replicas
    /// identical; they have no center variable.
    pub fn is_data_parallel(self) -> bool {
        matches!(self, Policy::DpSgd | Policy::DpSam)
    }

    /// Policies whose local phase pulls toward the stale center.
    pub fn uses_proximity(self) -> bool {
        matches!(
            self,
            Policy::Mgrawa | Policy::Lgrawa | Policy::LocalMgrawa | Policy::LocalLgrawa | Policy::Lsgd
        )
    }

    /// Policies that accumulate gradients on a shared batch at each round.
    pub fn uses_shared_batch(self) -> bool {
        matches!(self, Policy::Grawa | Policy::Mgrawa | Policy::Lgrawa)
    }

    /// Policies that track gradient norms from the local optimizer itself.
    pub fn uses_local_profile(self) -> bool {
        matches!(self, Policy::LocalMgrawa | Policy::LocalLgrawa)
    }

    pub fn is_grawa_family(self) -> bool {
        matches!(
            self,
            Policy::Grawa
                | Policy::Mgrawa
                | Policy::Lgrawa
                | Policy::LocalMgrawa
                | Policy::LocalLgrawa
        )
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_epsilon_norm() -> f64 {
    1e-12
}

fn default_easgd_rho() -> f64 {
    0.9
}

/// Knobs of one distributed run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub policy: Policy,
    /// Pulling force of the distributed update, in [0, 1].
    pub lambda: f64,
    /// Communication period: local steps per worker between rounds.
    pub tau: u64,
    /// Proximity search strength; the per-step force is `mu / tau`.
    #[serde(default)]
    pub mu: f64,
    /// Momentum on the accumulated gradient-norm scores, in [0, 1).
    #[serde(default)]
    pub gamma: f64,
    /// Moving-average strength of the EASGD center.
    #[serde(default = "default_easgd_rho")]
    pub easgd_rho: f64,
    /// Floor applied to gradient norms before taking reciprocals.
    #[serde(default = "default_epsilon_norm")]
    pub epsilon_norm: f64,
    /// Use the standard bias correction `g_mvg / (1 - gamma^t)` instead of
    /// the variant with a leading `gamma` factor.
    #[serde(default)]
    pub drop_leading_gamma: bool,
}

impl PolicyConfig {
    pub fn new(policy: Policy, lambda: f64, tau: u64) -> Self {
        Self {
            policy,
            lambda,
            tau,
            mu: 0.0,
            gamma: 0.0,
            easgd_rho: default_easgd_rho(),
            epsilon_norm: default_epsilon_norm(),
            drop_leading_gamma: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.tau == 0 {
            return Err(Error::Config("tau must be an integer >= 1".into()));
        }
        if self.mu < 0.0 || !self.mu.is_finite() {
            return Err(Error::Config(format!("mu must be >= 0, got {}", self.mu)));
        }
        if self.mu / self.tau as f64 > 1.0 {
            return Err(Error::Config(format!(
                "mu/tau must lie in [0, 1], got {}",
                self.mu / self.tau as f64
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.easgd_rho) {
            return Err(Error::Config(format!(
                "easgd_rho must lie in [0, 1], got {}",
                self.easgd_rho
            )));
        }
        if self.epsilon_norm <= 0.0 || self.epsilon_norm.is_nan() {
            return Err(Error::Config("epsilon_norm must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-layer accumulated gradient norms of one worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradNormProfile {
    /// Frobenius norm of the accumulated gradient at each layer.
    pub per_layer: Vec<f64>,
    /// Model-level score: the sum of the per-layer norms.
    pub model_total: f64,
    /// Exponential moving average state backing `smooth_profile`.
    pub momentum_state: Vec<f64>,
    /// Update count of the moving average, for bias correction.
    pub step_count: u64,
}

impl GradNormProfile {
    pub fn from_layer_norms(per_layer: Vec<f64>) -> Self {
        let model_total = per_layer.iter().sum();
        Self {
            momentum_state: per_layer.clone(),
            per_layer,
            model_total,
            step_count: 0,
        }
    }

    /// Euclidean norm of the flattened accumulated gradient. Because the
    /// layers are disjoint coordinate blocks, this is the root of the sum
    /// of squared per-layer norms.
    pub fn flat_norm(&self) -> f64 {
        self.per_layer.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Inverse-gradient-norm averaging weights.
///
/// `beta_i` is proportional to `1 / norms_i` and the weights sum to one,
/// i.e. `beta_i = (1/a_i) / sum_j (1/a_j)`, which is algebraically the
/// closed form `Theta / a_i` with `Theta = (sum_j 1/a_j)^-1`. Norms below
/// `epsilon_norm` are floored to it, so near-flat workers dominate without
/// dividing by zero. Exactly equal norms produce exactly uniform weights.
pub fn grawa_weights(norms: &[f64], epsilon_norm: f64) -> Result<Vec<f64>> {
    if norms.is_empty() {
        return Err(Error::Config(
            "grawa_weights requires at least one norm".into(),
        ));
    }
    if norms.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN gradient norm in grawa_weights".into()));
    }
    let floored: Vec<f64> = norms.iter().map(|&v| v.max(epsilon_norm)).collect();
    if floored.iter().all(|&v| v == floored[0]) {
        // Symmetry: equal scores must yield the exact uniform average.
        return Ok(vec![1.0 / norms.len() as f64; norms.len()]);
    }
    let recips: Vec<f64> = floored.iter().map(|v| 1.0 / v).collect();
    let total: f64 = recips.iter().sum();
    Ok(recips.into_iter().map(|r| r / total).collect())
}

/// Accumulate per-layer gradient norms on a shared batch.
///
/// The sample gradients are summed *before* the norm is taken: with batch
/// size `N` and mean-loss gradient `g`, the accumulated layer gradient is
/// `N * g_k` and the profile entry is its Frobenius norm.
pub fn accumulate_profile(
    objective: &AnyObjective,
    params: &LayeredParams,
    shared_batch: &Batch,
) -> Result<GradNormProfile> {
    let grad = objective.grad(params, shared_batch)?;
    if !grad.is_finite() {
        return Err(Error::Numeric(
            "non-finite gradient while accumulating profile".into(),
        ));
    }
    let n = shared_batch.size() as f64;
    let per_layer: Vec<f64> = (0..grad.num_layers())
        .map(|k| n * grad.layer_norm(k))
        .collect();
    Ok(GradNormProfile::from_layer_norms(per_layer))
}

/// Exponential moving average over gradient-norm scores with bias
/// correction:
///
/// ```text
/// g_mvg <- gamma * g_mvg + (1 - gamma) * g_cur
/// g_est <- gamma * g_mvg / (1 - gamma^step)
/// ```
///
/// The estimate keeps the leading `gamma` factor by default;
/// `drop_leading_gamma` switches to the standard correction
/// `g_mvg / (1 - gamma^step)`. With `gamma = 0` the current profile is
/// returned unchanged.
pub fn smooth_profile(
    current: &GradNormProfile,
    previous: Option<&GradNormProfile>,
    gamma: f64,
    step: u64,
    drop_leading_gamma: bool,
) -> Result<GradNormProfile> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!(
            "gamma must lie in [0, 1), got {gamma}"
        )));
    }
    if step == 0 {
        return Err(Error::Config("smoothing step must be >= 1".into()));
    }
    if gamma == 0.0 {
        return Ok(current.clone());
    }
    let zeros;
    let prev_state: &[f64] = match previous {
        Some(p) => {
            if p.momentum_state.len() != current.per_layer.len() {
                return Err(Error::ShapeMismatch {
                    expected: vec![current.per_layer.len()],
                    got: vec![p.momentum_state.len()],
                });
            }
            &p.momentum_state
        }
        None => {
            zeros = vec![0.0; current.per_layer.len()];
            &zeros
        }
    };
    let momentum_state: Vec<f64> = prev_state
        .iter()
        .zip(&current.per_layer)
        .map(|(m, c)| gamma * m + (1.0 - gamma) * c)
        .collect();
    let correction = 1.0 - gamma.powi(step as i32);
    let lead = if drop_leading_gamma { 1.0 } else { gamma };
    let per_layer: Vec<f64> = momentum_state
        .iter()
        .map(|m| lead * m / correction)
        .collect();
    let model_total = per_layer.iter().sum();
    Ok(GradNormProfile {
        per_layer,
        model_total,
        momentum_state,
        step_count: step,
    })
}

/// Provenance of a center variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    WeightedAverage,
    PerLayerWeighted,
    MovingAverage,
    LeaderCopy { worker: usize },
}

/// Consensus model toward which workers are pulled.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterVariable {
    pub params: LayeredParams,
    pub provenance: Provenance,
    pub round_index: u64,
}

fn check_worker_shapes(worker_params: &[LayeredParams]) -> Result<()> {
    if worker_params.is_empty() {
        return Err(Error::Config("at least one worker is required".into()));
    }
    for w in &worker_params[1..] {
        worker_params[0].check_shape(w)?;
    }
    Ok(())
}

/// Model-level weighted average: one weight per worker from its
/// model-total score, applied to every layer.
pub fn center_mgrawa(
    worker_params: &[LayeredParams],
    profiles: &[GradNormProfile],
    epsilon_norm: f64,
) -> Result<CenterVariable> {
    check_worker_shapes(worker_params)?;
    if profiles.len() != worker_params.len() {
        return Err(Error::Config("one profile per worker is required".into()));
    }
    let totals: Vec<f64> = profiles.iter().map(|p| p.model_total).collect();
    let weights = grawa_weights(&totals, epsilon_norm)?;
    let params = weighted_center(worker_params, |_k| &weights);
    Ok(CenterVariable {
        params,
        provenance: Provenance::WeightedAverage,
        round_index: 0,
    })
}

/// Vanilla model-level weighting by the flattened gradient norm instead of
/// the per-layer norm sum.
pub fn center_grawa(
    worker_params: &[LayeredParams],
    profiles: &[GradNormProfile],
    epsilon_norm: f64,
) -> Result<CenterVariable> {
    check_worker_shapes(worker_params)?;
    if profiles.len() != worker_params.len() {
        return Err(Error::Config("one profile per worker is required".into()));
    }
    let norms: Vec<f64> = profiles.iter().map(|p| p.flat_norm()).collect();
    let weights = grawa_weights(&norms, epsilon_norm)?;
    let params = weighted_center(worker_params, |_k| &weights);
    Ok(CenterVariable {
        params,
        provenance: Provenance::WeightedAverage,
        round_index: 0,
    })
}

/// Layer-level weighted average: independent weights per layer from the
/// per-layer scores. The weights of each layer sum to one, so across `K`
/// layers the coefficients sum to `K`.
pub fn center_lgrawa(
    worker_params: &[LayeredParams],
    profiles: &[GradNormProfile],
    epsilon_norm: f64,
) -> Result<CenterVariable> {
    check_worker_shapes(worker_params)?;
    if profiles.len() != worker_params.len() {
        return Err(Error::Config("one profile per worker is required".into()));
    }
    let layers = worker_params[0].num_layers();
    for p in profiles {
        if p.per_layer.len() != layers {
            return Err(Error::ShapeMismatch {
                expected: vec![layers],
                got: vec![p.per_layer.len()],
            });
        }
    }
    let per_layer_weights: Vec<Vec<f64>> = (0..layers)
        .map(|k| {
            let norms: Vec<f64> = profiles.iter().map(|p| p.per_layer[k]).collect();
            grawa_weights(&norms, epsilon_norm)
        })
        .collect::<Result<_>>()?;
    let params = weighted_center(worker_params, |k| &per_layer_weights[k]);
    Ok(CenterVariable {
        params,
        provenance: Provenance::PerLayerWeighted,
        round_index: 0,
    })
}

fn weighted_center<'a, F>(worker_params: &[LayeredParams], weights_for_layer: F) -> LayeredParams
where
    F: Fn(usize) -> &'a [f64],
{
    let layers = (0..worker_params[0].num_layers())
        .map(|k| {
            let per_worker: Vec<&[f64]> = worker_params.iter().map(|p| p.layer(k)).collect();
            weighted_layer_sum(&per_worker, weights_for_layer(k))
        })
        .collect();
    LayeredParams::new(layers)
}

/// Moving average of the uniform worker mean, in space and time:
/// `x_C <- (1 - rho) * previous_center + rho * mean(workers)`.
pub fn center_easgd(
    worker_params: &[LayeredParams],
    previous_center: &LayeredParams,
    rho: f64,
) -> Result<CenterVariable> {
    check_worker_shapes(worker_params)?;
    worker_params[0].check_shape(previous_center)?;
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!(
            "easgd_rho must lie in [0, 1], got {rho}"
        )));
    }
    let mean = uniform_mean(worker_params)?;
    Ok(CenterVariable {
        params: previous_center.lerp(&mean, rho),
        provenance: Provenance::MovingAverage,
        round_index: 0,
    })
}

/// Leader copy: the worker with the smallest current batch loss becomes
/// the center. Ties break to the lowest worker index; NaN losses exclude a
/// worker, and all-NaN is a numeric error.
pub fn center_lsgd(
    worker_params: &[LayeredParams],
    worker_batch_losses: &[f64],
) -> Result<CenterVariable> {
    check_worker_shapes(worker_params)?;
    if worker_batch_losses.len() != worker_params.len() {
        return Err(Error::Config("one loss per worker is required".into()));
    }
    let mut leader: Option<(usize, f64)> = None;
    for (i, &loss) in worker_batch_losses.iter().enumerate() {
        if loss.is_nan() {
            continue;
        }
        match leader {
            Some((_, best)) if loss >= best => {}
            _ => leader = Some((i, loss)),
        }
    }
    let (worker, _) = leader
        .ok_or_else(|| Error::Numeric("all worker losses are NaN; no leader exists".into()))?;
    Ok(CenterVariable {
        params: worker_params[worker].clone(),
        provenance: Provenance::LeaderCopy { worker },
        round_index: 0,
    })
}

/// Distributed update `x_m <- (1 - lambda) x_m + lambda x_C`.
pub fn pull_update(
    worker_params: &LayeredParams,
    center: &LayeredParams,
    lambda: f64,
) -> Result<LayeredParams> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    worker_params.check_shape(center)?;
    Ok(worker_params.lerp(center, lambda))
}

/// Uniform gradient average shared by all data-parallel replicas.
pub fn dp_allreduce(grads: &[LayeredGradient]) -> Result<LayeredGradient> {
    if grads.is_empty() {
        return Err(Error::Config("allreduce requires at least one gradient".into()));
    }
    let sig = grads[0].signature();
    for g in &grads[1..] {
        if g.signature() != sig {
            return Err(Error::ShapeMismatch {
                expected: sig,
                got: g.signature(),
            });
        }
    }
    let mut mean = LayeredGradient::zeros(&sig, GradientSource::BatchAccumulated);
    for g in grads {
        mean.add(g);
    }
    mean.scale(1.0 / grads.len() as f64);
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::ObjectiveSpec;

    fn profile(per_layer: &[f64]) -> GradNormProfile {
        GradNormProfile::from_layer_norms(per_layer.to_vec())
    }

    fn params1(v: &[f64]) -> LayeredParams {
        LayeredParams::new(vec![v.to_vec()])
    }

    const EPS: f64 = 1e-12;

    #[test]
    fn equal_norms_give_exact_quarter_weights() {
        let w = grawa_weights(&[1.0, 1.0, 1.0, 1.0], EPS).unwrap();
        assert_eq!(w, vec![0.25; 4]);
    }

    #[test]
    fn two_norms_follow_reciprocal_ratio() {
        let w = grawa_weights(&[1.0, 2.0], EPS).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_worker_weight_is_one() {
        assert_eq!(grawa_weights(&[3.7], EPS).unwrap(), vec![1.0]);
    }

    #[test]
    fn empty_norms_rejected() {
        assert!(grawa_weights(&[], EPS).is_err());
    }

    #[test]
    fn zero_norm_is_floored_not_divided() {
        let w = grawa_weights(&[0.0, 1.0], EPS).unwrap();
        assert!(w[0] > 0.999999, "flattest worker must dominate: {w:?}");
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_decrease_in_own_norm() {
        let base = grawa_weights(&[1.0, 2.0, 3.0], EPS).unwrap();
        let bumped = grawa_weights(&[1.5, 2.0, 3.0], EPS).unwrap();
        assert!(bumped[0] < base[0]);
        assert!(bumped[1] > base[1]);
    }

    #[test]
    fn profile_single_sample_batch_is_raw_gradient_norm() {
        let obj = ObjectiveSpec::Quadratic {
            dim: 2,
            noise_sigma: 0.0,
            eigenvalues: Some(vec![1.0, 2.0]),
            n_samples: 4,
        }
        .build()
        .unwrap();
        let p = params1(&[1.0, 1.0]);
        let batch = Batch::from_indices(obj.train_data(), &[0], 0).unwrap();
        let prof = accumulate_profile(&obj, &p, &batch).unwrap();
        // gradient (1, 2), one layer, N = 1.
        assert!((prof.per_layer[0] - 5.0_f64.sqrt()).abs() < 1e-15);
        assert!((prof.model_total - prof.per_layer.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn profile_hand_norms() {
        // G1 = [3, 4] and G2 = [0] give per-layer norms [5, 0], total 5.
        let prof = profile(&[5.0, 0.0]);
        assert_eq!(prof.model_total, 5.0);
        assert_eq!(prof.flat_norm(), 5.0);
    }

    #[test]
    fn profile_vincent_at_one_one() {
        let obj = ObjectiveSpec::Vincent2d.build().unwrap();
        let p = LayeredParams::new(vec![vec![1.0], vec![1.0]]);
        // One placeholder row: the accumulated gradient equals the raw
        // analytic gradient (-10, -10), one coordinate per layer.
        let batch = Batch::from_indices(obj.train_data(), &[0], 0).unwrap();
        let prof = accumulate_profile(&obj, &p, &batch).unwrap();
        assert!((prof.per_layer[0] - 10.0).abs() < 1e-9);
        assert!((prof.per_layer[1] - 10.0).abs() < 1e-9);
        assert!((prof.model_total - 20.0).abs() < 1e-9);
    }

    #[test]
    fn smoothing_with_zero_gamma_is_identity() {
        let cur = profile(&[3.0, 4.0]);
        let out = smooth_profile(&cur, None, 0.0, 5, false).unwrap();
        assert_eq!(out, cur);
    }

    #[test]
    fn smoothing_first_step_plugin_values() {
        // g_mvg = 0.1 * 10 = 1.0, g_est = 0.9 * 1.0 / (1 - 0.9) = 9.0.
        let cur = profile(&[10.0]);
        let out = smooth_profile(&cur, None, 0.9, 1, false).unwrap();
        assert!((out.momentum_state[0] - 1.0).abs() < 1e-15);
        assert!((out.per_layer[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn smoothing_constant_signal_converges_to_gamma_times_signal() {
        let gamma = 0.8;
        let cur = profile(&[4.0]);
        let mut prev: Option<GradNormProfile> = None;
        let mut last = 0.0;
        for t in 1..=200 {
            let out = smooth_profile(&cur, prev.as_ref(), gamma, t, false).unwrap();
            last = out.per_layer[0];
            prev = Some(out);
        }
        // Geometric series: the bias-corrected mean converges to the
        // constant signal, and the leading factor scales it by gamma.
        assert!((last - gamma * 4.0).abs() < 1e-9);
        let mut prev: Option<GradNormProfile> = None;
        let mut last = 0.0;
        for t in 1..=200 {
            let out = smooth_profile(&cur, prev.as_ref(), gamma, t, true).unwrap();
            last = out.per_layer[0];
            prev = Some(out);
        }
        assert!((last - 4.0).abs() < 1e-9);
    }

    #[test]
    fn mgrawa_equal_profiles_is_uniform_mean() {
        let ps = vec![params1(&[0.0, 0.0]), params1(&[3.0, 3.0])];
        let profs = vec![profile(&[2.0]), profile(&[2.0])];
        let c = center_mgrawa(&ps, &profs, EPS).unwrap();
        assert_eq!(c.params, uniform_mean(&ps).unwrap());
    }

    #[test]
    fn mgrawa_inverse_totals_example() {
        // totals [1, 2] give beta = [2/3, 1/3]; centers (0,0) and (3,3)
        // combine to (1, 1).
        let ps = vec![params1(&[0.0, 0.0]), params1(&[3.0, 3.0])];
        let profs = vec![profile(&[1.0]), profile(&[2.0])];
        let c = center_mgrawa(&ps, &profs, EPS).unwrap();
        assert!((c.params.layer(0)[0] - 1.0).abs() < 1e-14);
        assert!((c.params.layer(0)[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mgrawa_single_worker_is_identity() {
        let ps = vec![params1(&[1.5, -2.0])];
        let profs = vec![profile(&[7.0])];
        let c = center_mgrawa(&ps, &profs, EPS).unwrap();
        assert_eq!(c.params, ps[0]);
    }

    #[test]
    fn lgrawa_per_layer_weights_example() {
        // worker 1 layer norms [1, 4], worker 2 [3, 2]:
        // layer 1 weights [3/4, 1/4], layer 2 weights [1/3, 2/3].
        let ps = vec![
            LayeredParams::new(vec![vec![1.0], vec![1.0]]),
            LayeredParams::new(vec![vec![0.0], vec![0.0]]),
        ];
        let profs = vec![profile(&[1.0, 4.0]), profile(&[3.0, 2.0])];
        let c = center_lgrawa(&ps, &profs, EPS).unwrap();
        assert!((c.params.layer(0)[0] - 0.75).abs() < 1e-14);
        assert!((c.params.layer(1)[0] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn lgrawa_identical_profiles_is_uniform_mean() {
        let ps = vec![
            LayeredParams::new(vec![vec![2.0, 0.0], vec![1.0]]),
            LayeredParams::new(vec![vec![0.0, 4.0], vec![3.0]]),
        ];
        let profs = vec![profile(&[5.0, 1.0]), profile(&[5.0, 1.0])];
        let c = center_lgrawa(&ps, &profs, EPS).unwrap();
        assert_eq!(c.params, uniform_mean(&ps).unwrap());
    }

    #[test]
    fn lgrawa_single_layer_bit_equals_mgrawa() {
        let ps = vec![
            params1(&[0.3, 1.7, -2.2]),
            params1(&[1.1, 0.0, 0.4]),
            params1(&[-0.6, 2.5, 3.3]),
        ];
        let profs = vec![profile(&[1.3]), profile(&[0.2]), profile(&[4.1])];
        let a = center_mgrawa(&ps, &profs, EPS).unwrap();
        let b = center_lgrawa(&ps, &profs, EPS).unwrap();
        for (x, y) in a.params.flatten().iter().zip(b.params.flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn lgrawa_layer_count_mismatch_rejected() {
        let ps = vec![
            LayeredParams::new(vec![vec![1.0], vec![1.0]]),
            LayeredParams::new(vec![vec![0.0], vec![0.0]]),
        ];
        let profs = vec![profile(&[1.0]), profile(&[1.0])];
        assert!(center_lgrawa(&ps, &profs, EPS).is_err());
    }

    #[test]
    fn easgd_endpoints_and_midpoint() {
        let ps = vec![params1(&[2.0, 2.0]), params1(&[2.0, 2.0])];
        let prev = params1(&[0.0, 0.0]);
        let full = center_easgd(&ps, &prev, 1.0).unwrap();
        assert_eq!(full.params, params1(&[2.0, 2.0]));
        let frozen = center_easgd(&ps, &prev, 0.0).unwrap();
        assert_eq!(frozen.params, prev);
        let half = center_easgd(&ps, &prev, 0.5).unwrap();
        assert_eq!(half.params, params1(&[1.0, 1.0]));
    }

    #[test]
    fn lsgd_leader_selection_and_ties() {
        let ps = vec![params1(&[0.0]), params1(&[1.0]), params1(&[2.0])];
        let c = center_lsgd(&ps, &[0.5, 0.2, 0.9]).unwrap();
        assert_eq!(c.provenance, Provenance::LeaderCopy { worker: 1 });
        assert_eq!(c.params, ps[1]);

        let tie = center_lsgd(&ps, &[0.3, 0.3, 0.3]).unwrap();
        assert_eq!(tie.provenance, Provenance::LeaderCopy { worker: 0 });

        let skip_nan = center_lsgd(&ps, &[f64::NAN, 0.4, 0.1]).unwrap();
        assert_eq!(skip_nan.provenance, Provenance::LeaderCopy { worker: 2 });

        assert!(center_lsgd(&ps, &[f64::NAN, f64::NAN, f64::NAN]).is_err());
    }

    #[test]
    fn lsgd_leader_is_a_deep_copy() {
        let mut ps = vec![params1(&[1.0]), params1(&[5.0])];
        let c = center_lsgd(&ps, &[0.1, 0.2]).unwrap();
        ps[0].layer_mut(0)[0] = 99.0;
        assert_eq!(c.params.layer(0)[0], 1.0);
    }

    #[test]
    fn pull_endpoints_and_arithmetic() {
        let p = params1(&[1.0, 0.0]);
        let c = params1(&[0.0, 0.0]);
        assert_eq!(pull_update(&p, &c, 0.0).unwrap(), p);
        assert_eq!(pull_update(&p, &c, 1.0).unwrap(), c);
        let out = pull_update(&p, &c, 0.3).unwrap();
        assert!((out.layer(0)[0] - 0.7).abs() < 1e-15);
        assert!(pull_update(&p, &c, 1.5).is_err());
    }

    #[test]
    fn allreduce_examples() {
        let g1 = LayeredGradient::new(vec![vec![1.0, 0.0]], GradientSource::BatchAccumulated);
        let g2 = LayeredGradient::new(vec![vec![0.0, 1.0]], GradientSource::BatchAccumulated);
        let only = dp_allreduce(std::slice::from_ref(&g1)).unwrap();
        assert_eq!(only.layers(), g1.layers());
        let mean = dp_allreduce(&[g1, g2]).unwrap();
        assert_eq!(mean.layer(0), &[0.5, 0.5]);
    }

    #[test]
    fn policy_names_round_trip() {
        for p in Policy::ALL {
            assert_eq!(Policy::parse(p.name()).unwrap(), p);
        }
        assert!(Policy::parse("sgd").is_err());
    }

    #[test]
    fn config_validation_names_keys() {
        let mut cfg = PolicyConfig::new(Policy::Mgrawa, 1.5, 16);
        assert!(cfg.validate().unwrap_err().to_string().contains("lambda"));
        cfg.lambda = 0.3;
        cfg.tau = 0;
        assert!(cfg.validate().unwrap_err().to_string().contains("tau"));
        cfg.tau = 2;
        cfg.mu = 3.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("mu"));
    }
}
