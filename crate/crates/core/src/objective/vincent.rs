//! Two-dimensional Vincent test function.
//!
//! `f(x, y) = -sin(10 ln x) - sin(10 ln y)` on the positive quadrant. All
//! local minimizers attain the value -2, but the valleys get flatter as
//! the coordinates grow: at a minimizer `x*` the curvature is `100 / x*^2`.
//! That makes the function a compact probe for flat-minima-seeking
//! behavior. Evaluation outside the domain is a hard error; trajectory
//! harnesses are expected to project iterates back into [0.25, 10] instead
//! of silently clamping inputs here.

use crate::error::{Error, Result};
use crate::objective::data::{Batch, Dataset};
use crate::tensor::{GradientSource, LayeredGradient, LayeredParams};

/// Plot-range box the trajectory harness projects onto, per coordinate.
pub const DOMAIN_BOX: (f64, f64) = (0.25, 10.0);

#[derive(Debug, Clone)]
pub struct Vincent {
    data: Dataset,
}

impl Vincent {
    pub fn new() -> Self {
        // The function ignores data; identical placeholder rows keep the
        // shard and batch machinery uniform across objectives. Trajectory
        // protocols use batch_size 1, which makes every draw equivalent to
        // the deterministic full-batch evaluation.
        Self {
            data: Dataset::dummy(64),
        }
    }

    pub fn signature(&self) -> Vec<usize> {
        vec![1, 1]
    }

    pub fn train_data(&self) -> &Dataset {
        &self.data
    }

    fn coords(params: &LayeredParams) -> Result<(f64, f64)> {
        if params.signature() != [1, 1] {
            return Err(Error::ShapeMismatch {
                expected: vec![1, 1],
                got: params.signature(),
            });
        }
        Ok((params.layer(0)[0], params.layer(1)[0]))
    }

    fn check_domain(x: f64, y: f64) -> Result<()> {
        if x <= 0.0 || y <= 0.0 {
            return Err(Error::Domain(format!(
                "vincent2d requires strictly positive coordinates, got ({x}, {y})"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, params: &LayeredParams, _batch: &Batch) -> Result<f64> {
        let (x, y) = Self::coords(params)?;
        Self::check_domain(x, y)?;
        Ok(-(10.0 * x.ln()).sin() - (10.0 * y.ln()).sin())
    }

    pub fn grad(&self, params: &LayeredParams, _batch: &Batch) -> Result<LayeredGradient> {
        let (x, y) = Self::coords(params)?;
        Self::check_domain(x, y)?;
        let gx = -10.0 * (10.0 * x.ln()).cos() / x;
        let gy = -10.0 * (10.0 * y.ln()).cos() / y;
        Ok(LayeredGradient::new(
            vec![vec![gx], vec![gy]],
            GradientSource::BatchAccumulated,
        ))
    }
}

impl Default for Vincent {
    fn default() -> Self {
        Self::new()
    }
}

/// Analytic second derivative of one coordinate term,
/// `d^2/dx^2 [-sin(10 ln x)] = (100 sin(10 ln x) + 10 cos(10 ln x)) / x^2`.
pub fn second_derivative(x: f64) -> f64 {
    let u = 10.0 * x.ln();
    (100.0 * u.sin() + 10.0 * u.cos()) / (x * x)
}

/// Curvature score at a 2-D point: `|f_xx| + |f_yy|`. Lower means flatter.
pub fn curvature_score(x: f64, y: f64) -> f64 {
    second_derivative(x).abs() + second_derivative(y).abs()
}
