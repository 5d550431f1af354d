//! Small dense classifier with hand-rolled backprop.
//!
//! One layer unit bundles a dense layer's weight matrix and bias. The loss
//! is mean softmax cross-entropy over the batch. The synthetic task is two
//! interleaved 2-D spirals generated from the dataset seed, with a held-out
//! test split drawn from the same stream.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::objective::data::{Batch, Dataset};
use crate::seed::splitmix64;
use crate::tensor::{GradientSource, LayeredGradient, LayeredParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}


#[derive(Debug, Clone)]
pub struct Mlp {
    /// Layer widths including input and output: e.g. [2, 8, 8, 2].
    widths: Vec<usize>,
    activation: Activation,
    train: Dataset,
    test: Dataset,
}

impl Mlp {
    pub fn new(
        hidden: &[usize],
        activation: Activation,
        n_train: usize,
        n_test: usize,
        dataset_seed: u64,
    ) -> Result<Self> {
        if hidden.contains(&0) {
            return Err(Error::Config("mlp hidden widths must all be >= 1".into()));
        }
        if n_train == 0 || n_test == 0 {
            return Err(Error::Config("mlp needs n_train >= 1 and n_test >= 1".into()));
        }
        let mut widths = vec![2];
        widths.extend_from_slice(hidden);
        widths.push(2);

        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(dataset_seed));
        let train = two_spirals(n_train, &mut rng)?;
        let test = two_spirals(n_test, &mut rng)?;
        Ok(Self {
            widths,
            activation,
            train,
            test,
        })
    }

    pub fn signature(&self) -> Vec<usize> {
        (0..self.num_layers())
            .map(|k| self.widths[k + 1] * self.widths[k] + self.widths[k + 1])
            .collect()
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn train_data(&self) -> &Dataset {
        &self.train
    }

    pub fn test_data(&self) -> &Dataset {
        &self.test
    }

    pub fn init_params(&self, seed: u64) -> LayeredParams {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
        let layers = (0..self.num_layers())
            .map(|k| {
                let (fan_in, fan_out) = (self.widths[k], self.widths[k + 1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut unit: Vec<f64> = (0..fan_out * fan_in)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect();
                unit.extend(std::iter::repeat_n(0.0, fan_out));
                unit
            })
            .collect();
        LayeredParams::new(layers)
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

    fn act(&self, z: f64) -> f64 {
        match self.activation {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative of the activation expressed through its output value.
    fn act_deriv(&self, h: f64) -> f64 {
        match self.activation {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Forward pass for one sample; returns all post-activation vectors,
    /// with the raw logits last.
    fn forward(&self, params: &LayeredParams, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(x.to_vec());
        for k in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.widths[k], self.widths[k + 1]);
            let unit = params.layer(k);
            let (w, b) = unit.split_at(fan_out * fan_in);
            let prev = &acts[k];
            let mut out = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let mut z = b[o];
                for (i, &p) in prev.iter().enumerate() {
                    z += w[o * fan_in + i] * p;
                }
                out.push(if k + 1 < self.num_layers() {
                    self.act(z)
                } else {
                    z
                });
            }
            acts.push(out);
        }
        acts
    }

    fn sample_loss(logits: &[f64], label: usize) -> f64 {
        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        lse - logits[label]
    }

    fn softmax(logits: &[f64]) -> Vec<f64> {
        let max = logits.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }

    pub fn eval(&self, params: &LayeredParams, batch: &Batch) -> Result<f64> {
        self.check(params)?;
        let mut total = 0.0;
        for i in 0..batch.size() {
            let acts = self.forward(params, batch.row(i));
            total += Self::sample_loss(acts.last().unwrap(), batch.target(i) as usize);
        }
        Ok(total / batch.size() as f64)
    }

    /// Gradient of the mean batch loss.
    pub fn grad(&self, params: &LayeredParams, batch: &Batch) -> Result<LayeredGradient> {
        self.check(params)?;
        let mut grad = LayeredGradient::zeros(&self.signature(), GradientSource::BatchAccumulated);
        let scale = 1.0 / batch.size() as f64;
        for i in 0..batch.size() {
            self.backprop_sample(params, batch.row(i), batch.target(i) as usize, scale, &mut grad);
        }
        Ok(grad)
    }

    fn backprop_sample(
        &self,
        params: &LayeredParams,
        x: &[f64],
        label: usize,
        scale: f64,
        grad: &mut LayeredGradient,
    ) {
        let acts = self.forward(params, x);
        // dL/dz at the output layer: softmax probabilities minus one-hot.
        let mut delta = Self::softmax(acts.last().unwrap());
        delta[label] -= 1.0;

        for k in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.widths[k], self.widths[k + 1]);
            let unit = params.layer(k);
            let (w, _) = unit.split_at(fan_out * fan_in);
            let prev = &acts[k];
            let g = grad.layer_mut(k);
            for o in 0..fan_out {
                let d = delta[o] * scale;
                for (i, &p) in prev.iter().enumerate() {
                    g[o * fan_in + i] += d * p;
                }
                g[fan_out * fan_in + o] += d;
            }
            if k > 0 {
                let mut next = vec![0.0; fan_in];
                for (i, n) in next.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (o, &d) in delta.iter().enumerate() {
                        s += w[o * fan_in + i] * d;
                    }
                    *n = s * self.act_deriv(prev[i]);
                }
                delta = next;
            }
        }
    }

    /// Classification error in percent on the given dataset.
    pub fn classify_error_pct(&self, params: &LayeredParams, data: &Dataset) -> Result<f64> {
        self.check(params)?;
        let mut wrong = 0usize;
        for i in 0..data.len() {
            let acts = self.forward(params, data.row(i));
            let logits = acts.last().unwrap();
            let pred = if logits[1] > logits[0] { 1 } else { 0 };
            if pred != data.target(i) as usize {
                wrong += 1;
            }
        }
        Ok(100.0 * wrong as f64 / data.len() as f64)
    }
}

/// Two interleaved spirals, one per class, with mild coordinate noise.
fn two_spirals(n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let per_class = n.div_ceil(2);
    let mut rows: Vec<([f64; 2], f64)> = Vec::with_capacity(per_class * 2);
    for class in 0..2usize {
        for i in 0..per_class {
            let t = i as f64 / per_class.max(1) as f64;
            let r = 0.2 + 1.8 * t;
            let angle = 2.5 * std::f64::consts::PI * t + class as f64 * std::f64::consts::PI;
            let nx: f64 = StandardNormal.sample(rng);
            let ny: f64 = StandardNormal.sample(rng);
            rows.push((
                [
                    r * angle.cos() + 0.08 * nx,
                    r * angle.sin() + 0.08 * ny,
                ],
                class as f64,
            ));
        }
    }
    // Interleave classes deterministically, then trim to n.
    let mut inputs = Vec::with_capacity(n * 2);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let idx = (i / 2) + (i % 2) * per_class;
        let (xy, label) = rows[idx];
        inputs.extend_from_slice(&xy);
        targets.push(label);
    }
    Dataset::new(inputs, targets, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_mlp() -> Mlp {
        Mlp::new(&[5], Activation::Tanh, 40, 20, 11).unwrap()
    }

    #[test]
    fn signature_counts_weights_and_biases() {
        let m = small_mlp();
        // [2 -> 5] is 2*5+5 = 15, [5 -> 2] is 5*2+2 = 12.
        assert_eq!(m.signature(), vec![15, 12]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = small_mlp();
        let params = m.init_params(3);
        let batch = Batch::from_indices(m.train_data(), &[0, 3, 7, 12], 0).unwrap();
        let analytic = m.grad(&params, &batch).unwrap();

        let sig = m.signature();
        let flat = params.flatten();
        let h = 1e-5;
        for (idx, fg) in analytic.flatten().iter().enumerate() {
            let mut plus = flat.clone();
            plus[idx] += h;
            let mut minus = flat.clone();
            minus[idx] -= h;
            let fp = m
                .eval(&LayeredParams::from_flat(&plus, &sig).unwrap(), &batch)
                .unwrap();
            let fm = m
                .eval(&LayeredParams::from_flat(&minus, &sig).unwrap(), &batch)
                .unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fg - fd).abs() / fg.abs().max(fd.abs()).max(1.0);
            assert!(rel < 1e-5, "coord {idx}: analytic {fg} vs fd {fd}");
        }
    }

    #[test]
    fn spirals_are_balanced_and_reproducible() {
        let a = Mlp::new(&[4], Activation::Tanh, 50, 10, 5).unwrap();
        let b = Mlp::new(&[4], Activation::Tanh, 50, 10, 5).unwrap();
        assert_eq!(a.train_data(), b.train_data());
        let ones = (0..a.train_data().len())
            .filter(|&i| a.train_data().target(i) == 1.0)
            .count();
        assert_eq!(ones, 25);
    }

    #[test]
    fn zero_width_rejected() {
        assert!(Mlp::new(&[4, 0], Activation::Tanh, 10, 10, 1).is_err());
    }
}
