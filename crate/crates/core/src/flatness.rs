//! Flatness and generalization diagnostics.
//!
//! Gradient norms on the full training set, Hessian-vector products,
//! a Lanczos spectrum extractor with full reorthogonalization, the
//! Frobenius-norm sharpness proxy built from the extracted pseudo
//! eigenvalues, and probes for the convex-analysis preconditions.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::center_policy::grawa_weights;
use crate::error::{Error, Result};
use crate::objective::AnyObjective;
use crate::seed::{self, Stream};
use crate::tensor::{weighted_params_sum, LayeredParams};

/// Euclidean norm of the full-training-set mean gradient, flattened across
/// layers.
pub fn full_gradient_norm(objective: &AnyObjective, params: &LayeredParams) -> Result<f64> {
    Ok(objective.grad_full(params)?.l2_norm())
}

/// Hessian-vector product at `params`.
///
/// Uses the analytic Hessian when the objective has one; otherwise a
/// central difference of the full-set gradient,
/// `(g(x + h v) - g(x - h v)) / (2 h)` with `h = 1e-4 (1 + ||x||) / ||v||`.
/// A zero direction returns the zero vector.
pub fn hvp(objective: &AnyObjective, params: &LayeredParams, v: &[f64]) -> Result<Vec<f64>> {
    let dim = params.total_dim();
    if v.len() != dim {
        return Err(Error::ShapeMismatch {
            expected: vec![dim],
            got: vec![v.len()],
        });
    }
    let v_norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if v_norm == 0.0 {
        return Ok(vec![0.0; dim]);
    }
    if let Some(exact) = objective.hvp_exact(params, v) {
        return Ok(exact);
    }
    let h = 1e-4 * (1.0 + params.l2_norm()) / v_norm;
    let sig = params.signature();
    let x = params.flatten();
    let shift = |dir: f64| -> Result<Vec<f64>> {
        let moved: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + dir * h * b).collect();
        Ok(objective
            .grad_full(&LayeredParams::from_flat(&moved, &sig)?)?
            .flatten())
    };
    let plus = shift(1.0)?;
    let minus = shift(-1.0)?;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) / (2.0 * h))
        .collect())
}

/// Top pseudo-eigenvalues extracted by Lanczos, sorted by magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Ritz values in descending order of magnitude.
    pub ritz_values: Vec<f64>,
    /// `sqrt(sum of squared Ritz values)`; proxy of the Hessian Frobenius
    /// norm. Lower means flatter.
    pub frobenius_proxy: f64,
    pub k_used: usize,
    /// Whether the recurrence hit an invariant subspace and restarted.
    pub breakdown: bool,
    /// Last off-diagonal term of the recurrence; small values indicate a
    /// converged subspace.
    pub residual: f64,
}

const BREAKDOWN_TOL: f64 = 1e-12;

/// `k`-step Lanczos with full reorthogonalization from a seeded random
/// start vector.
///
/// On a zero off-diagonal (invariant subspace) the iteration restarts with
/// a fresh random direction orthogonal to the basis found so far, so `k`
/// Ritz values are always produced for `k <= dim`; the event is reported
/// through the `breakdown` flag.
pub fn lanczos_spectrum<F>(
    mut hvp_oracle: F,
    dim: usize,
    k: usize,
    seed: u64,
) -> Result<SpectrumReport>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if k == 0 || k > dim {
        return Err(Error::Config(format!(
            "lanczos requires 1 <= k <= dim, got k={k}, dim={dim}"
        )));
    }
    let mut rng = seed::rng(seed, Stream::Probe(0));
    let mut draw = |basis: &[Vec<f64>]| -> Result<Vec<f64>> {
        // A fresh unit vector orthogonalized against the current basis.
        for _ in 0..32 {
            let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            orthogonalize(&mut v, basis);
            let n = norm(&v);
            if n > 1e-8 {
                for x in &mut v {
                    *x /= n;
                }
                return Ok(v);
            }
        }
        Err(Error::Numeric(
            "could not draw a start vector outside the converged subspace".into(),
        ))
    };

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut alphas: Vec<f64> = Vec::with_capacity(k);
    let mut betas: Vec<f64> = Vec::new();
    let mut breakdown = false;
    let mut residual = 0.0;

    let mut v = draw(&basis)?;
    let mut beta_prev = 0.0;
    let mut v_prev: Vec<f64> = vec![0.0; dim];

    while alphas.len() < k {
        let av = hvp_oracle(&v);
        if av.len() != dim {
            return Err(Error::ShapeMismatch {
                expected: vec![dim],
                got: vec![av.len()],
            });
        }
        let alpha = dot(&v, &av);
        let mut w: Vec<f64> = av
            .iter()
            .zip(v.iter().zip(&v_prev))
            .map(|(a, (vc, vp))| a - alpha * vc - beta_prev * vp)
            .collect();
        basis.push(v.clone());
        alphas.push(alpha);

        // Two passes of classical Gram-Schmidt against the whole basis keep
        // the vectors orthogonal to working precision and suppress ghost
        // eigenvalues at these problem sizes.
        orthogonalize(&mut w, &basis);
        orthogonalize(&mut w, &basis);

        if alphas.len() == k {
            residual = norm(&w);
            break;
        }
        let beta = norm(&w);
        if beta <= BREAKDOWN_TOL {
            breakdown = true;
            betas.push(0.0);
            v = draw(&basis)?;
            beta_prev = 0.0;
            v_prev = vec![0.0; dim];
        } else {
            betas.push(beta);
            v_prev = std::mem::replace(
                &mut v,
                w.iter().map(|x| x / beta).collect(),
            );
            beta_prev = beta;
        }
    }

    let mut ritz = tridiagonal_eigenvalues(&alphas, &betas);
    ritz.sort_by(|a, b| b.abs().partial_cmp(&a.abs()).unwrap());
    let frobenius_proxy = ritz.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(SpectrumReport {
        ritz_values: ritz,
        frobenius_proxy,
        k_used: k,
        breakdown,
        residual,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let h = dot(v, b);
        for (x, y) in v.iter_mut().zip(b) {
            *x -= h * y;
        }
    }
}

/// Eigenvalues of a symmetric tridiagonal matrix by the implicit-shift QL
/// algorithm. `offdiag` holds the `n - 1` subdiagonal entries.
pub fn tridiagonal_eigenvalues(diag: &[f64], offdiag: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = offdiag.to_vec();
    e.resize(n, 0.0);
    if n == 1 {
        return d;
    }
    for l in 0..n {
        let mut iterations = 0;
        loop {
            // Look for a negligible subdiagonal element to split at.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > 64 {
                // The remaining estimates are already at working accuracy.
                break;
            }
            // Wilkinson-style shift.
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0_f64, 1.0_f64);
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                f = (d[i] - g) * s + 2.0 * c * b;
                p = s * f;
                d[i + 1] = g + p;
                g = c * f - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d
}

/// Generalization gap in percentage points: test error minus train error.
pub fn generalization_gap(train_err_pct: f64, test_err_pct: f64) -> Result<f64> {
    for (name, v) in [("train_err_pct", train_err_pct), ("test_err_pct", test_err_pct)] {
        if !(0.0..=100.0).contains(&v) {
            return Err(Error::Config(format!(
                "{name} must lie in [0, 100], got {v}"
            )));
        }
    }
    Ok(test_err_pct - train_err_pct)
}

/// Outcome of the center-dominance probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    /// Fraction of trials with `f(x_C) <= sum_i beta_i f(x_i)`. Convexity
    /// makes this an exact inequality, so the fraction must be 1.
    pub jensen_fraction: f64,
    /// Fraction of trials with `f(x_C) <= min_i f(x_i)`. Reported as
    /// observed; it is only guaranteed under the cone/sPL preconditions.
    pub dominance_fraction: f64,
    pub trials: usize,
}

/// One placement of the probe: weight the workers by their true gradient
/// norms, form the center, and check the Jensen and dominance
/// inequalities (in that order in the returned pair).
pub fn dominance_trial(
    objective: &AnyObjective,
    workers: &[LayeredParams],
) -> Result<(bool, bool)> {
    let norms: Vec<f64> = workers
        .iter()
        .map(|w| full_gradient_norm(objective, w))
        .collect::<Result<_>>()?;
    let weights = grawa_weights(&norms, 1e-12)?;
    let center = weighted_params_sum(workers, &weights)?;
    let losses: Vec<f64> = workers
        .iter()
        .map(|w| objective.eval_full(w))
        .collect::<Result<_>>()?;
    let f_center = objective.eval_full(&center)?;
    let weighted: f64 = weights.iter().zip(&losses).map(|(b, f)| b * f).sum();
    let min_loss = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    let jensen = f_center <= weighted + 1e-10;
    let dominance = f_center <= min_loss + 1e-12 * min_loss.abs().max(1.0);
    Ok((jensen, dominance))
}

/// Randomized probe of the center inequalities on a convex objective.
/// Workers are placed at seeded Gaussian points, weighted by their true
/// gradient norms, and the center is compared against the weighted and the
/// minimum worker loss.
pub fn center_dominance_probe(
    objective: &AnyObjective,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<DominanceReport> {
    if !objective.is_convex() {
        return Err(Error::Config(
            "center_dominance_probe requires a convex objective".into(),
        ));
    }
    if m == 0 || trials == 0 {
        return Err(Error::Config("probe needs m >= 1 and trials >= 1".into()));
    }
    let sig = objective.signature();
    let dim = objective.total_dim();
    let mut rng = seed::rng(seed, Stream::Probe(1));
    let mut jensen_hits = 0usize;
    let mut dominance_hits = 0usize;
    for _ in 0..trials {
        let workers: Vec<LayeredParams> = (0..m)
            .map(|_| {
                let flat: Vec<f64> = (0..dim)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        1.5 * z
                    })
                    .collect();
                LayeredParams::from_flat(&flat, &sig)
            })
            .collect::<Result<_>>()?;
        let (jensen, dominance) = dominance_trial(objective, &workers)?;
        jensen_hits += usize::from(jensen);
        dominance_hits += usize::from(dominance);
    }
    Ok(DominanceReport {
        jensen_fraction: jensen_hits as f64 / trials as f64,
        dominance_fraction: dominance_hits as f64 / trials as f64,
        trials,
    })
}

/// Constants of the convergence analyses, where they are known for the
/// objective at hand. Unknown entries stay `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TheoreticalConstants {
    /// Smoothness (Lipschitz constant of the gradient).
    pub l_smooth: Option<f64>,
    /// Strong convexity constant.
    pub m_strong: Option<f64>,
    /// Strengthened Polyak constant: `||grad f(x)|| >= mu (f(x) - f*)`.
    pub mu_spl: Option<f64>,
    /// Cone slope: `f(x) - f* >= k ||x - x*||`.
    pub k_cone: Option<f64>,
    /// Gradient-noise standard deviation.
    pub sigma: Option<f64>,
    /// Relative gradient-noise bound (0 for additive noise).
    pub nu: Option<f64>,
    /// Worker-drift bound.
    pub zeta: Option<f64>,
    /// Worker-to-center distance bound.
    pub rho_bound: Option<f64>,
}

impl TheoreticalConstants {
    /// Constants for a diagonal quadratic, with the sPL and cone constants
    /// taken over the annulus `r <= ||x|| <= big_r` (neither condition has
    /// a nonzero global constant for a quadratic near its minimizer).
    pub fn for_quadratic(
        eigenvalues: &[f64],
        noise_sigma: f64,
        r: f64,
        big_r: f64,
    ) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.iter().any(|&e| e <= 0.0) {
            return Err(Error::Config("eigenvalues must be positive".into()));
        }
        if !(0.0 < r && r <= big_r) {
            return Err(Error::Config("annulus requires 0 < r <= big_r".into()));
        }
        let l = eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let m = eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        Ok(Self {
            l_smooth: Some(l),
            m_strong: Some(m),
            mu_spl: Some(2.0 * m / (l * big_r)),
            k_cone: Some(0.5 * m * r),
            sigma: Some(noise_sigma),
            nu: Some(0.0),
            zeta: None,
            rho_bound: None,
        })
    }
}
