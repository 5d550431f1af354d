//! Differentiable objectives exposing loss and per-layer gradients.
//!
//! Three kinds are provided: the analytic 2-D Vincent function, a noisy
//! strongly convex quadratic, and a small dense classifier on synthetic
//! spirals. All are pure functions of `(params, batch)`; a batch carries
//! the seed material for any gradient noise, so identical inputs always
//! reproduce identical outputs.

pub mod data;
pub mod mlp;
pub mod quadratic;
pub mod vincent;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use data::{make_shards, Batch, BatchStream, Dataset};
pub use mlp::{Activation, Mlp};
pub use quadratic::Quadratic;
pub use vincent::Vincent;

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::{LayeredGradient, LayeredParams};

fn default_quadratic_samples() -> usize {
    256
}

fn default_mlp_train() -> usize {
    200
}

fn default_mlp_test() -> usize {
    100
}

/// Declarative objective description, parsed from run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// `f(x, y) = -sin(10 ln x) - sin(10 ln y)`, full-batch.
    Vincent2d,
    /// Diagonal SPD quadratic. When `eigenvalues` is omitted the spectrum
    /// is evenly spaced on [1, 2], keeping the conditioning mild.
    Quadratic {
        dim: usize,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default)]
        eigenvalues: Option<Vec<f64>>,
        #[serde(default = "default_quadratic_samples")]
        n_samples: usize,
    },
    /// Dense classifier on two interleaved spirals.
    MlpClassifier {
        hidden: Vec<usize>,
        #[serde(default)]
        activation: Activation,
        #[serde(default = "default_mlp_train")]
        n_train: usize,
        #[serde(default = "default_mlp_test")]
        n_test: usize,
        dataset_seed: u64,
    },
}

impl ObjectiveSpec {
    pub fn build(&self) -> Result<AnyObjective> {
        match self {
            ObjectiveSpec::Vincent2d => Ok(AnyObjective::Vincent(Vincent::new())),
            ObjectiveSpec::Quadratic {
                dim,
                noise_sigma,
                eigenvalues,
                n_samples,
            } => {
                let eigs = match eigenvalues {
                    Some(e) => {
                        if e.len() != *dim {
                            return Err(Error::Config(format!(
                                "eigenvalues length {} does not match dim {dim}",
                                e.len()
                            )));
                        }
                        e.clone()
                    }
                    None => evenly_spaced(*dim, 1.0, 2.0),
                };
                Ok(AnyObjective::Quadratic(Quadratic::new(
                    eigs,
                    *noise_sigma,
                    *n_samples,
                )?))
            }
            ObjectiveSpec::MlpClassifier {
                hidden,
                activation,
                n_train,
                n_test,
                dataset_seed,
            } => Ok(AnyObjective::Mlp(Mlp::new(
                hidden,
                *activation,
                *n_train,
                *n_test,
                *dataset_seed,
            )?)),
        }
    }
}

fn evenly_spaced(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Concrete objective, dispatched by enum so callers can reach analytic
/// fast paths (e.g. the exact quadratic Hessian) without downcasting.
#[derive(Debug, Clone)]
pub enum AnyObjective {
    Vincent(Vincent),
    Quadratic(Quadratic),
    Mlp(Mlp),
}

impl AnyObjective {
    pub fn signature(&self) -> Vec<usize> {
        match self {
            AnyObjective::Vincent(v) => v.signature(),
            AnyObjective::Quadratic(q) => q.signature(),
            AnyObjective::Mlp(m) => m.signature(),
        }
    }

    pub fn total_dim(&self) -> usize {
        self.signature().iter().sum()
    }

    /// Shared initial model all workers start from.
    pub fn init_params(&self, init_seed: u64) -> LayeredParams {
        match self {
            AnyObjective::Vincent(_) => {
                let mut rng = seed::rng(init_seed, seed::Stream::Init);
                let (lo, hi) = vincent::DOMAIN_BOX;
                LayeredParams::new(vec![
                    vec![rng.gen_range(lo..hi)],
                    vec![rng.gen_range(lo..hi)],
                ])
            }
            AnyObjective::Quadratic(q) => {
                let mut rng = seed::rng(init_seed, seed::Stream::Init);
                use rand_distr::{Distribution, StandardNormal};
                let x: Vec<f64> = (0..q.dim())
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        2.0 * z
                    })
                    .collect();
                LayeredParams::new(vec![x])
            }
            AnyObjective::Mlp(m) => m.init_params(seed::derive(init_seed, seed::Stream::Init)),
        }
    }

    /// Mean loss over the batch.
    pub fn eval(&self, params: &LayeredParams, batch: &Batch) -> Result<f64> {
        match self {
            AnyObjective::Vincent(v) => v.eval(params, batch),
            AnyObjective::Quadratic(q) => q.eval(params, batch),
            AnyObjective::Mlp(m) => m.eval(params, batch),
        }
    }

    /// Gradient of the mean batch loss, including any batch-tied noise.
    pub fn grad(&self, params: &LayeredParams, batch: &Batch) -> Result<LayeredGradient> {
        match self {
            AnyObjective::Vincent(v) => v.grad(params, batch),
            AnyObjective::Quadratic(q) => q.grad(params, batch),
            AnyObjective::Mlp(m) => m.grad(params, batch),
        }
    }

    /// Deterministic mean loss over the full training set.
    pub fn eval_full(&self, params: &LayeredParams) -> Result<f64> {
        match self {
            AnyObjective::Quadratic(q) => q.eval(params, &Batch::full(q.train_data(), 0)?),
            _ => self.eval(params, &Batch::full(self.train_data(), 0)?),
        }
    }

    /// Deterministic gradient of the full-training-set mean loss (exact
    /// `A x` for the quadratic, no sampling noise).
    pub fn grad_full(&self, params: &LayeredParams) -> Result<LayeredGradient> {
        match self {
            AnyObjective::Vincent(v) => v.grad(params, &Batch::full(v.train_data(), 0)?),
            AnyObjective::Quadratic(q) => q.grad_exact(params),
            AnyObjective::Mlp(m) => m.grad(params, &Batch::full(m.train_data(), 0)?),
        }
    }

    pub fn train_data(&self) -> &Dataset {
        match self {
            AnyObjective::Vincent(v) => v.train_data(),
            AnyObjective::Quadratic(q) => q.train_data(),
            AnyObjective::Mlp(m) => m.train_data(),
        }
    }

    pub fn test_data(&self) -> Option<&Dataset> {
        match self {
            AnyObjective::Mlp(m) => Some(m.test_data()),
            _ => None,
        }
    }

    /// Per-coordinate projection box enforced by the harness after every
    /// update, if the objective needs one.
    pub fn domain_box(&self) -> Option<(f64, f64)> {
        match self {
            AnyObjective::Vincent(_) => Some(vincent::DOMAIN_BOX),
            _ => None,
        }
    }

    pub fn is_convex(&self) -> bool {
        matches!(self, AnyObjective::Quadratic(_))
    }

    /// Exact Hessian-vector product where an analytic Hessian exists.
    pub fn hvp_exact(&self, _params: &LayeredParams, v: &[f64]) -> Option<Vec<f64>> {
        match self {
            AnyObjective::Quadratic(q) => Some(q.hvp(v)),
            _ => None,
        }
    }

    /// Classification error in percent, for classifier objectives.
    pub fn classify_error_pct(&self, params: &LayeredParams, data: &Dataset) -> Option<f64> {
        match self {
            AnyObjective::Mlp(m) => m.classify_error_pct(params, data).ok(),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ObjectiveSpec::Quadratic {
            dim: 3,
            noise_sigma: 0.1,
            eigenvalues: None,
            n_samples: 64,
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: ObjectiveSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn unknown_objective_key_rejected() {
        let text = r#"{"kind": "quadratic", "dim": 3, "curvature": 2.0}"#;
        let err = serde_json::from_str::<ObjectiveSpec>(text).unwrap_err();
        assert!(err.to_string().contains("curvature"));
    }

    #[test]
    fn eigenvalue_length_mismatch_rejected() {
        let spec = ObjectiveSpec::Quadratic {
            dim: 3,
            noise_sigma: 0.0,
            eigenvalues: Some(vec![1.0, 2.0]),
            n_samples: 16,
        };
        assert!(spec.build().is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let obj = ObjectiveSpec::Vincent2d.build().unwrap();
        assert_eq!(obj.init_params(5), obj.init_params(5));
        assert_ne!(obj.init_params(5), obj.init_params(6));
    }

    #[test]
    fn grad_full_matches_full_batch_grad_when_deterministic() {
        let obj = ObjectiveSpec::MlpClassifier {
            hidden: vec![4],
            activation: Activation::Tanh,
            n_train: 30,
            n_test: 10,
            dataset_seed: 2,
        }
        .build()
        .unwrap();
        let p = obj.init_params(1);
        let full = Batch::full(obj.train_data(), 0).unwrap();
        assert_eq!(
            obj.grad(&p, &full).unwrap().flatten(),
            obj.grad_full(&p).unwrap().flatten()
        );
    }
}
