//! Datasets, batches and worker-exclusive shard streams.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed::splitmix64;

/// In-memory dataset of dense rows with scalar targets (class labels are
/// stored as their float value).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    in_dim: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, in_dim: usize) -> Result<Self> {
        if in_dim == 0 || !inputs.len().is_multiple_of(in_dim) {
            return Err(Error::Config("dataset inputs not a multiple of in_dim".into()));
        }
        if inputs.len() / in_dim != targets.len() {
            return Err(Error::Config(
                "dataset inputs and targets row counts differ".into(),
            ));
        }
        Ok(Self {
            inputs,
            targets,
            in_dim,
        })
    }

    /// Placeholder dataset for analytic objectives that ignore data.
    pub fn dummy(n: usize) -> Self {
        Self {
            inputs: vec![0.0; n],
            targets: vec![0.0; n],
            in_dim: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.in_dim..(i + 1) * self.in_dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }
}

/// One mini-batch. `noise_key` seeds any batch-tied gradient noise, so a
/// batch fully determines the stochastic gradient at given parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    targets: Vec<f64>,
    in_dim: usize,
    size: usize,
    noise_key: u64,
}

impl Batch {
    pub fn from_indices(data: &Dataset, indices: &[usize], noise_key: u64) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let mut inputs = Vec::with_capacity(indices.len() * data.in_dim());
        let mut targets = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(data.row(i));
            targets.push(data.target(i));
        }
        Ok(Self {
            inputs,
            targets,
            in_dim: data.in_dim(),
            size: indices.len(),
            noise_key,
        })
    }

    /// The whole dataset as a single batch.
    pub fn full(data: &Dataset, noise_key: u64) -> Result<Self> {
        let indices: Vec<usize> = (0..data.len()).collect();
        Self::from_indices(data, &indices, noise_key)
    }

    /// Seeded draw of `size` distinct rows from the dataset.
    pub fn sample(data: &Dataset, size: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        let size = size.min(data.len());
        let mut indices: Vec<usize> = (0..data.len()).collect();
        indices.partial_shuffle(rng, size);
        let noise_key = rng.next_u64();
        Self::from_indices(data, &indices[..size], noise_key)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.in_dim..(i + 1) * self.in_dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn noise_key(&self) -> u64 {
        self.noise_key
    }
}

/// Endless stream of seeded mini-batches over one worker's shard.
/// Each epoch reshuffles the shard; the final batch of an epoch may be
/// short when the shard size is not a multiple of the batch size.
#[derive(Debug, Clone)]
pub struct BatchStream {
    data: Arc<Dataset>,
    shard: Vec<usize>,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl BatchStream {
    pub fn next_batch(&mut self) -> Batch {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let indices: Vec<usize> = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        let noise_key = self.rng.next_u64();
        Batch::from_indices(&self.data, &indices, noise_key)
            .expect("shard batches are never empty")
    }

    /// Sample indices owned by this shard, in assignment order.
    pub fn shard_indices(&self) -> &[usize] {
        &self.shard
    }
}

/// Partition a dataset into `m` worker-exclusive shards and wrap each in a
/// seeded batch stream. The partition is exhaustive and pairwise disjoint;
/// the same seed always yields the same assignment.
pub fn make_shards(
    data: &Dataset,
    m: usize,
    seed: u64,
    batch_size: usize,
) -> Result<Vec<BatchStream>> {
    if m == 0 {
        return Err(Error::Config("worker count M must be at least 1".into()));
    }
    if data.len() < m {
        return Err(Error::Config(format!(
            "dataset of {} samples cannot be split across {m} workers",
            data.len()
        )));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }

    let mut assign_rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
    let mut indices: Vec<usize> = (0..data.len()).collect();
    indices.shuffle(&mut assign_rng);

    let data = Arc::new(data.clone());
    let base = data.len() / m;
    let extra = data.len() % m;
    let mut streams = Vec::with_capacity(m);
    let mut offset = 0;
    for w in 0..m {
        let take = base + usize::from(w < extra);
        let shard: Vec<usize> = indices[offset..offset + take].to_vec();
        offset += take;
        streams.push(BatchStream {
            data: Arc::clone(&data),
            order: shard.clone(),
            shard,
            cursor: usize::MAX, // force a shuffle on the first draw
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(splitmix64(seed ^ (w as u64 + 1))),
        });
    }
    Ok(streams)
}
