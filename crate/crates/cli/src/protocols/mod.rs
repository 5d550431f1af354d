//! Canned experiment protocols.

pub mod convex_rate;
pub mod flatness_cmp;
pub mod nonconvex;
pub mod sweep;
pub mod vincent;

use grawa_core::{Policy, PolicyConfig};

/// Canonical distributed hyperparameters per policy family, mirroring the
/// search-grid midpoints used throughout the experiments. `tau` comes from
/// the caller because the protocols pin different communication periods.
pub fn canonical_policy(policy: Policy, tau: u64) -> PolicyConfig {
    let mut cfg = match policy {
        Policy::Grawa | Policy::Mgrawa | Policy::Lgrawa => {
            let mut c = PolicyConfig::new(policy, 0.5, tau);
            c.mu = 0.05;
            c
        }
        Policy::LocalMgrawa | Policy::LocalLgrawa => {
            let mut c = PolicyConfig::new(policy, 0.5, tau);
            c.mu = 0.05;
            c.gamma = 0.9;
            c
        }
        Policy::Easgd => {
            let mut c = PolicyConfig::new(policy, 0.43, tau);
            c.easgd_rho = 0.9;
            c
        }
        Policy::Lsgd => {
            let mut c = PolicyConfig::new(policy, 0.1, tau);
            c.mu = 0.1;
            c
        }
        Policy::DpSgd | Policy::DpSam => PolicyConfig::new(policy, 0.0, 1),
    };
    if policy.is_data_parallel() {
        cfg.tau = 1;
    }
    cfg
}

/// Thread pool sized by the `GRAWA_MAX_PARALLEL` environment variable
/// (defaults to the available parallelism).
pub fn build_pool() -> rayon::ThreadPool {
    let default = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let n = std::env::var("GRAWA_MAX_PARALLEL")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(default);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .expect("thread pool construction cannot fail with n >= 1")
}
