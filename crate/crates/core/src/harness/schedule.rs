//! Worker interleaving.
//!
//! Asynchrony is simulated: a schedule decides which worker takes the next
//! local step. `RoundRobin` cycles workers in index order; `Jittered`
//! draws a seeded random worker among those whose step counter stays
//! within `max_skew` of the slowest active worker, so
//! `|t_i - t_j| <= max(max_skew, 1)` holds at all times and `max_skew = 0`
//! reduces to strict round robin.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    #[default]
    RoundRobin,
    Jittered { max_skew: u64 },
}


/// Stateful step-order generator for one run.
pub struct Interleaver {
    schedule: Schedule,
    counts: Vec<u64>,
    budget: u64,
    rng: ChaCha8Rng,
}

impl Interleaver {
    pub fn new(schedule: Schedule, workers: usize, budget: u64, rng: ChaCha8Rng) -> Self {
        Self {
            schedule,
            counts: vec![0; workers],
            budget,
            rng,
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Pick the next worker to step, or `None` when every worker has
    /// exhausted its budget.
    pub fn next_worker(&mut self) -> Option<usize> {
        let active: Vec<usize> = (0..self.counts.len())
            .filter(|&w| self.counts[w] < self.budget)
            .collect();
        if active.is_empty() {
            return None;
        }
        let min_active = active.iter().map(|&w| self.counts[w]).min().unwrap();
        let chosen = match self.schedule {
            Schedule::RoundRobin => *active
                .iter()
                .find(|&&w| self.counts[w] == min_active)
                .unwrap(),
            Schedule::Jittered { max_skew } => {
                let allowance = max_skew.max(1);
                let eligible: Vec<usize> = active
                    .iter()
                    .copied()
                    .filter(|&w| self.counts[w] - min_active < allowance)
                    .collect();
                if max_skew == 0 {
                    eligible[0]
                } else {
                    eligible[self.rng.gen_range(0..eligible.len())]
                }
            }
        };
        self.counts[chosen] += 1;
        Some(chosen)
    }
}
