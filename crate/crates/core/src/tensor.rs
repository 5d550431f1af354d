//! Layered parameter and gradient containers.
//!
//! A model's parameters are an ordered list of layer units, each stored as
//! a flat `f64` buffer (the Frobenius norm of a layer equals the Euclidean
//! norm of its flattened entries, so no shape metadata is needed beyond
//! lengths). All cross-worker arithmetic requires identical signatures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered list of dense layer tensors, flattened per layer.
/// Serializes as the bare nested array of layer values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayeredParams {
    layers: Vec<Vec<f64>>,
}

/// Gradient with the same shape signature as its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredGradient {
    layers: Vec<Vec<f64>>,
    source: GradientSource,
}

/// Whether a gradient came from one sample or a whole batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientSource {
    SingleSample,
    BatchAccumulated,
}

impl LayeredParams {
    pub fn new(layers: Vec<Vec<f64>>) -> Self {
        Self { layers }
    }

    pub fn zeros(signature: &[usize]) -> Self {
        Self {
            layers: signature.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.signature())
    }

    pub fn signature(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn total_dim(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn layer(&self, k: usize) -> &[f64] {
        &self.layers[k]
    }

    pub fn layer_mut(&mut self, k: usize) -> &mut Vec<f64> {
        &mut self.layers[k]
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flatten().copied().collect()
    }

    pub fn from_flat(flat: &[f64], signature: &[usize]) -> Result<Self> {
        let expected: usize = signature.iter().sum();
        if flat.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: signature.to_vec(),
                got: vec![flat.len()],
            });
        }
        let mut layers = Vec::with_capacity(signature.len());
        let mut offset = 0;
        for &n in signature {
            layers.push(flat[offset..offset + n].to_vec());
            offset += n;
        }
        Ok(Self { layers })
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.signature() == other.signature()
    }

    pub fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.signature(),
                got: other.signature(),
            })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flatten().all(|v| v.is_finite())
    }

    /// Euclidean norm of the flattened parameter vector.
    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
            .sum::<f64>()
            .sqrt()
    }

    /// `self += c * other`, layer by layer.
    pub fn add_scaled(&mut self, other: &Self, c: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
    }

    /// `self += c * grad`, layer by layer (plain gradient step for c < 0).
    pub fn add_scaled_gradient(&mut self, grad: &LayeredGradient, c: f64) {
        for (a, b) in self.layers.iter_mut().zip(&grad.layers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += c * y;
            }
        }
    }

    /// Convex combination `(1 - w) * self + w * target`, the exact form of
    /// both the pulling and the proximity update.
    pub fn lerp(&self, target: &Self, w: f64) -> Self {
        let layers = self
            .layers
            .iter()
            .zip(&target.layers)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (1.0 - w) * x + w * y)
                    .collect()
            })
            .collect();
        Self { layers }
    }

    /// Clamp every coordinate into `[lo, hi]`.
    pub fn clamp_coords(&mut self, lo: f64, hi: f64) {
        for layer in &mut self.layers {
            for v in layer {
                *v = v.clamp(lo, hi);
            }
        }
    }
}

impl LayeredGradient {
    pub fn new(layers: Vec<Vec<f64>>, source: GradientSource) -> Self {
        Self { layers, source }
    }

    pub fn zeros(signature: &[usize], source: GradientSource) -> Self {
        Self {
            layers: signature.iter().map(|&n| vec![0.0; n]).collect(),
            source,
        }
    }

    pub fn signature(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn source(&self) -> GradientSource {
        self.source
    }

    pub fn layer(&self, k: usize) -> &[f64] {
        &self.layers[k]
    }

    pub fn layer_mut(&mut self, k: usize) -> &mut Vec<f64> {
        &mut self.layers[k]
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flatten().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flatten().all(|v| v.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Frobenius norm of one layer (Euclidean norm of its flat entries).
    pub fn layer_norm(&self, k: usize) -> f64 {
        self.layers[k].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for layer in &mut self.layers {
            for v in layer {
                *v *= c;
            }
        }
    }

    pub fn add(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn matches_params(&self, params: &LayeredParams) -> bool {
        self.signature() == params.signature()
    }
}

/// Weighted sum of one layer across workers: `sum_m w[m] * layers[m]`.
///
/// Model-level and layer-level averaging both funnel through this helper
/// with the same accumulation order, so a single-layer model produces bit
/// identical centers under either scheme.
pub fn weighted_layer_sum(layers: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    debug_assert_eq!(layers.len(), weights.len());
    let n = layers[0].len();
    let mut acc = vec![0.0; n];
    for (layer, &w) in layers.iter().zip(weights) {
        for (a, &v) in acc.iter_mut().zip(layer.iter()) {
            *a += w * v;
        }
    }
    acc
}

/// Uniform average of a set of identically shaped parameter vectors.
pub fn uniform_mean(items: &[LayeredParams]) -> Result<LayeredParams> {
    if items.is_empty() {
        return Err(Error::Config("uniform_mean requires at least one model".into()));
    }
    let w = vec![1.0 / items.len() as f64; items.len()];
    weighted_params_sum(items, &w)
}

/// `sum_m weights[m] * items[m]` applied per layer.
pub fn weighted_params_sum(items: &[LayeredParams], weights: &[f64]) -> Result<LayeredParams> {
    if items.is_empty() || items.len() != weights.len() {
        return Err(Error::Config(
            "weighted sum requires one weight per model".into(),
        ));
    }
    let first = &items[0];
    for item in &items[1..] {
        first.check_shape(item)?;
    }
    let layers = (0..first.num_layers())
        .map(|k| {
            let per_worker: Vec<&[f64]> = items.iter().map(|p| p.layer(k)).collect();
            weighted_layer_sum(&per_worker, weights)
        })
        .collect();
    Ok(LayeredParams::new(layers))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_mismatch_is_reported() {
        let a = LayeredParams::new(vec![vec![1.0, 2.0]]);
        let b = LayeredParams::new(vec![vec![1.0], vec![2.0]]);
        assert!(a.check_shape(&b).is_err());
    }

    #[test]
    fn lerp_endpoints_are_exact() {
        let a = LayeredParams::new(vec![vec![1.0, -3.0], vec![0.5]]);
        let b = LayeredParams::new(vec![vec![2.0, 7.0], vec![-0.5]]);
        assert_eq!(a.lerp(&b, 0.0), a);
        assert_eq!(a.lerp(&b, 1.0), b);
    }

    #[test]
    fn flatten_round_trip() {
        let a = LayeredParams::new(vec![vec![1.0, 2.0], vec![3.0]]);
        let back = LayeredParams::from_flat(&a.flatten(), &a.signature()).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn uniform_mean_of_two() {
        let a = LayeredParams::new(vec![vec![0.0, 2.0]]);
        let b = LayeredParams::new(vec![vec![4.0, 0.0]]);
        let m = uniform_mean(&[a, b]).unwrap();
        assert_eq!(m.layer(0), &[2.0, 1.0]);
    }
}
