//! Strongly convex diagonal quadratic with optional gradient noise.
//!
//! `f(x) = 1/2 x^T A x` with `A = diag(eigenvalues)`. The stochastic
//! gradient is `A x + eps` where `eps` is zero-mean Gaussian with
//! per-coordinate standard deviation `noise_sigma`, drawn deterministically
//! from the batch's noise key. The estimator is unbiased with variance
//! bounded by `sigma^2` per coordinate, and the full-data gradient is the
//! exact `A x`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::objective::data::{Batch, Dataset};
use crate::tensor::{GradientSource, LayeredGradient, LayeredParams};

#[derive(Debug, Clone)]
pub struct Quadratic {
    eigenvalues: Vec<f64>,
    noise_sigma: f64,
    data: Dataset,
}

impl Quadratic {
    pub fn new(eigenvalues: Vec<f64>, noise_sigma: f64, n_samples: usize) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Config("quadratic dim must be at least 1".into()));
        }
        if eigenvalues.iter().any(|&e| e <= 0.0 || !e.is_finite()) {
            return Err(Error::Config(
                "quadratic eigenvalues must all be positive (SPD Hessian)".into(),
            ));
        }
        if noise_sigma < 0.0 || !noise_sigma.is_finite() {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        Ok(Self {
            eigenvalues,
            noise_sigma,
            data: Dataset::dummy(n_samples.max(1)),
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Single layer holding the whole parameter vector.
    pub fn signature(&self) -> Vec<usize> {
        vec![self.dim()]
    }

    pub fn train_data(&self) -> &Dataset {
        &self.data
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Largest Hessian eigenvalue (smoothness constant).
    pub fn smoothness(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(f64::MIN, f64::max)
    }

    /// Smallest Hessian eigenvalue (strong convexity constant).
    pub fn strong_convexity(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(f64::MAX, f64::min)
    }

    fn check(&self, params: &LayeredParams) -> Result<()> {
        if params.signature() != self.signature() {
            return Err(Error::ShapeMismatch {
                expected: self.signature(),
                got: params.signature(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, params: &LayeredParams, _batch: &Batch) -> Result<f64> {
        self.check(params)?;
        let x = params.layer(0);
        Ok(0.5
            * x.iter()
                .zip(&self.eigenvalues)
                .map(|(v, e)| e * v * v)
                .sum::<f64>())
    }

    /// Exact gradient `A x` without sampling noise.
    pub fn grad_exact(&self, params: &LayeredParams) -> Result<LayeredGradient> {
        self.check(params)?;
        let g = params
            .layer(0)
            .iter()
            .zip(&self.eigenvalues)
            .map(|(v, e)| e * v)
            .collect();
        Ok(LayeredGradient::new(
            vec![g],
            GradientSource::BatchAccumulated,
        ))
    }

    pub fn grad(&self, params: &LayeredParams, batch: &Batch) -> Result<LayeredGradient> {
        let mut g = self.grad_exact(params)?;
        if self.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(batch.noise_key());
            for v in g.layer_mut(0) {
                let eps: f64 = StandardNormal.sample(&mut rng);
                *v += self.noise_sigma * eps;
            }
        }
        Ok(g)
    }

    /// Exact Hessian-vector product `A v`.
    pub fn hvp(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.eigenvalues)
            .map(|(x, e)| e * x)
            .collect()
    }
}
