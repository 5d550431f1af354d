//! Desk-scale laboratory for distributed data-parallel optimization.
//!
//! The crate simulates `M` workers that run local SGD on worker-exclusive
//! data shards and periodically synchronize through a *center variable*.
//! The interesting part is how that center is computed: the GRAWA family
//! (model-level and layer-level gradient-norm-weighted averaging) prefers
//! workers sitting in flat regions of the loss surface, while the bundled
//! baselines (EASGD, LSGD, DataParallel with SGD or SAM) implement the
//! classical alternatives.
//!
//! Everything is deterministic given a seed: asynchrony is modeled by a
//! seeded interleaving of worker steps instead of real threads, so runs
//! can be replayed and diffed bit for bit.

pub mod center_policy;
pub mod error;
pub mod flatness;
pub mod harness;
pub mod local_opt;
pub mod objective;
pub mod seed;
pub mod tensor;

pub use center_policy::{
    accumulate_profile, center_easgd, center_grawa, center_lgrawa, center_lsgd, center_mgrawa,
    dp_allreduce, grawa_weights, pull_update, smooth_profile, CenterVariable, GradNormProfile,
    Policy, PolicyConfig, Provenance,
};
pub use error::{Error, Result};
pub use flatness::{
    center_dominance_probe, full_gradient_norm, generalization_gap, hvp, lanczos_spectrum,
    DominanceReport, SpectrumReport, TheoreticalConstants,
};
pub use harness::{
    run, should_communicate, CommCost, CommLedger, RunOptions, RunRecord, RunStatus, Schedule,
    StepRow, WorkerState,
};
pub use local_opt::{proximity_step, sam_gradient, sgd_step, LocalOptConfig, LrSchedule, OptBuffers};
pub use objective::{make_shards, AnyObjective, Batch, BatchStream, Dataset, ObjectiveSpec};
pub use tensor::{LayeredGradient, LayeredParams};
