//! Orchestration of M workers over shards with periodic communication.
//!
//! The orchestrator owns every worker's state and replays a seeded
//! interleaving of local steps. A communication round fires whenever
//! `M * tau` divides the total number of local steps taken so far; during
//! a round all workers are frozen (barrier semantics), the center variable
//! is computed according to the policy, and every worker is pulled toward
//! it. Identical seeds and configs produce bitwise-identical records.

mod record;
mod schedule;

pub use record::{
    read_trajectory_csv, CenterSnapshot, CommCost, CommEvent, CommLedger, ParamTraceRow,
    RunRecord, RunStatus, RunSummary, StepRow,
};
pub use schedule::{Interleaver, Schedule};

use std::time::Instant;

use crate::center_policy::{
    accumulate_profile, center_easgd, center_grawa, center_lgrawa, center_lsgd, center_mgrawa,
    dp_allreduce, pull_update, smooth_profile, CenterVariable, GradNormProfile, Policy,
    PolicyConfig, Provenance,
};
use crate::error::{Error, Result};
use crate::local_opt::{sam_gradient, sgd_step, LocalOptConfig, OptBuffers};
use crate::objective::{make_shards, AnyObjective, Batch, BatchStream};
use crate::seed::{self, Stream};
use crate::tensor::{uniform_mean, LayeredGradient, LayeredParams};

/// Communication trigger: fires when the summed worker counters are a
/// positive multiple of `M * tau`.
pub fn should_communicate(counters: &[u64], m: usize, tau: u64) -> bool {
    let total: u64 = counters.iter().sum();
    total > 0 && total.is_multiple_of(m as u64 * tau)
}

/// Harness-level knobs of one run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    /// Local steps per worker.
    pub total_steps: u64,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub seed: u64,
    pub comm_cost: CommCost,
    /// Keep a per-step trace of worker positions (small models only).
    pub record_params: bool,
    /// Explicit initial parameters per worker; defaults to one shared
    /// seeded model.
    pub worker_inits: Option<Vec<LayeredParams>>,
}

impl RunOptions {
    pub fn new(workers: usize, total_steps: u64, batch_size: usize, seed: u64) -> Self {
        Self {
            workers,
            total_steps,
            batch_size,
            schedule: Schedule::RoundRobin,
            seed,
            comm_cost: CommCost::default(),
            record_params: false,
            worker_inits: None,
        }
    }
}

/// One worker's mutable state.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub id: usize,
    pub params: LayeredParams,
    pub buffers: OptBuffers,
    /// Local iteration counter; equals the number of local steps taken.
    pub t_m: u64,
    pub stream: BatchStream,
    pub last_batch: Option<Batch>,
    /// Profile used at the most recent communication round.
    pub last_profile: Option<GradNormProfile>,
    /// Running gradient-norm estimate for the local policies.
    smoother: Option<GradNormProfile>,
    steps_since_round: u64,
}

struct Engine<'a> {
    objective: &'a AnyObjective,
    policy: PolicyConfig,
    local: LocalOptConfig,
    opts: RunOptions,
    workers: Vec<WorkerState>,
    center: CenterVariable,
    rows: Vec<StepRow>,
    centers: Vec<CenterSnapshot>,
    ledger: CommLedger,
    trace: Vec<ParamTraceRow>,
    global_step: u64,
    round_index: u64,
}

/// Execute one distributed run. Configuration errors are returned as
/// `Err`; numeric failures mid-run (NaN loss, domain exits) abort the run
/// and are reported in the record's status together with the partial rows.
pub fn run(
    objective: &AnyObjective,
    policy: &PolicyConfig,
    local: &LocalOptConfig,
    opts: &RunOptions,
) -> Result<RunRecord> {
    policy.validate()?;
    local.validate()?;
    if opts.workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    if opts.total_steps == 0 {
        return Err(Error::Config("total_steps must be at least 1".into()));
    }
    if policy.policy.is_data_parallel() && opts.schedule != Schedule::RoundRobin {
        return Err(Error::Config(
            "schedule must be round_robin for data-parallel policies (lockstep execution)".into(),
        ));
    }
    if policy.policy == Policy::DpSam && !local.uses_sam() {
        return Err(Error::Config("dp_sam requires sam_rho > 0".into()));
    }

    let start = Instant::now();
    let signature = objective.signature();
    let inits: Vec<LayeredParams> = match &opts.worker_inits {
        Some(given) => {
            if given.len() != opts.workers {
                return Err(Error::Config(format!(
                    "worker_inits has {} entries for {} workers",
                    given.len(),
                    opts.workers
                )));
            }
            for p in given {
                if p.signature() != signature {
                    return Err(Error::ShapeMismatch {
                        expected: signature.clone(),
                        got: p.signature(),
                    });
                }
                if !p.is_finite() {
                    return Err(Error::Config("worker_inits must be finite".into()));
                }
            }
            given.clone()
        }
        None => {
            let shared = objective.init_params(opts.seed);
            vec![shared; opts.workers]
        }
    };

    let streams = make_shards(
        objective.train_data(),
        opts.workers,
        seed::derive(opts.seed, Stream::Shards),
        opts.batch_size,
    )?;

    let workers: Vec<WorkerState> = inits
        .into_iter()
        .zip(streams)
        .enumerate()
        .map(|(id, (params, stream))| WorkerState {
            id,
            buffers: OptBuffers::new(&signature),
            params,
            t_m: 0,
            stream,
            last_batch: None,
            last_profile: None,
            smoother: None,
            steps_since_round: 0,
        })
        .collect();

    // Before the first round the proximity target is the shared initial
    // model (the uniform mean of the initial workers when they differ).
    let initial_center = uniform_mean(
        &workers
            .iter()
            .map(|w| w.params.clone())
            .collect::<Vec<_>>(),
    )?;

    let mut engine = Engine {
        objective,
        policy: *policy,
        local: *local,
        opts: opts.clone(),
        workers,
        center: CenterVariable {
            params: initial_center,
            provenance: Provenance::WeightedAverage,
            round_index: 0,
        },
        rows: Vec::new(),
        centers: Vec::new(),
        ledger: CommLedger::default(),
        trace: Vec::new(),
        global_step: 0,
        round_index: 0,
    };

    let status = if policy.policy.is_data_parallel() {
        engine.run_data_parallel()?
    } else {
        engine.run_rounds()?
    };
    Ok(engine.finish(status, start))
}

impl<'a> Engine<'a> {
    fn run_rounds(&mut self) -> Result<RunStatus> {
        let rng = seed::rng(self.opts.seed, Stream::Schedule);
        let mut interleaver = Interleaver::new(
            self.opts.schedule,
            self.opts.workers,
            self.opts.total_steps,
            rng,
        );
        while let Some(w) = interleaver.next_worker() {
            if let Some(status) = self.local_step(w)? {
                return Ok(status);
            }
            let counters: Vec<u64> = self.workers.iter().map(|ws| ws.t_m).collect();
            if should_communicate(&counters, self.opts.workers, self.policy.tau) {
                if let Some(status) = self.communication_round()? {
                    return Ok(status);
                }
            }
        }
        Ok(RunStatus::Completed)
    }

    /// One local step of worker `w`: draw a batch, apply SGD or SAM, then
    /// the proximity pull toward the stale center, then project back into
    /// the objective's domain box.
    fn local_step(&mut self, w: usize) -> Result<Option<RunStatus>> {
        let batch = self.workers[w].stream.next_batch();
        let params = self.workers[w].params.clone();
        let t = self.workers[w].t_m + 1;

        let loss = match self.objective.eval(&params, &batch) {
            Ok(l) => l,
            Err(e) => return self.abort(e),
        };
        if !loss.is_finite() {
            return self.abort(Error::Numeric(format!("loss {loss} at step {t}")));
        }

        let mut events: Vec<&str> = Vec::new();
        let grad_result = if self.local.uses_sam() {
            sam_gradient(self.objective, &params, &batch, self.local.sam_rho).map(|(g, skipped)| {
                if skipped {
                    events.push("ascend_skipped");
                }
                g
            })
        } else {
            self.objective.grad(&params, &batch)
        };
        let grad = match grad_result {
            Ok(g) => g,
            Err(e) => return self.abort(e),
        };
        let grad_norm = grad.l2_norm();

        if self.policy.policy.uses_local_profile() {
            self.update_local_profile(w, &grad)?;
        }

        let stepped = sgd_step(&params, &grad, &mut self.workers[w].buffers, &self.local, t)?;
        let mut new_params = if self.policy.policy.uses_proximity() && self.policy.mu > 0.0 {
            crate::local_opt::proximity_step(
                &stepped,
                &self.center.params,
                self.policy.mu,
                self.policy.tau,
            )?
        } else {
            stepped
        };
        if let Some((lo, hi)) = self.objective.domain_box() {
            new_params.clamp_coords(lo, hi);
        }
        if !new_params.is_finite() {
            return self.abort(Error::Numeric(format!(
                "non-finite parameters on worker {w} at step {t}"
            )));
        }

        self.workers[w].params = new_params;
        self.workers[w].t_m = t;
        self.workers[w].last_batch = Some(batch);
        self.global_step += 1;
        self.push_row(w, loss, grad_norm, events);
        self.maybe_trace(w);
        Ok(None)
    }

    /// Track the running gradient-norm estimate from the local optimizer's
    /// own batch gradient.
    fn update_local_profile(&mut self, w: usize, grad: &LayeredGradient) -> Result<()> {
        let per_layer: Vec<f64> = (0..grad.num_layers()).map(|k| grad.layer_norm(k)).collect();
        let current = GradNormProfile::from_layer_norms(per_layer);
        let worker = &mut self.workers[w];
        worker.steps_since_round += 1;
        let smoothed = smooth_profile(
            &current,
            worker.smoother.as_ref(),
            self.policy.gamma,
            worker.steps_since_round,
            self.policy.drop_leading_gamma,
        )?;
        worker.smoother = Some(smoothed);
        Ok(())
    }

    fn communication_round(&mut self) -> Result<Option<RunStatus>> {
        self.round_index += 1;
        let params: Vec<LayeredParams> = self.workers.iter().map(|w| w.params.clone()).collect();

        let center_result = match self.policy.policy {
            Policy::Grawa | Policy::Mgrawa | Policy::Lgrawa => self.shared_batch_center(&params),
            Policy::LocalMgrawa | Policy::LocalLgrawa => self.local_profile_center(&params),
            Policy::Easgd => {
                center_easgd(&params, &self.center.params, self.policy.easgd_rho)
            }
            Policy::Lsgd => {
                let losses: Vec<f64> = self
                    .workers
                    .iter()
                    .map(|w| match &w.last_batch {
                        Some(b) => self
                            .objective
                            .eval(&w.params, b)
                            .unwrap_or(f64::NAN),
                        // A worker that has not stepped yet cannot lead.
                        None => f64::INFINITY,
                    })
                    .collect();
                center_lsgd(&params, &losses)
            }
            Policy::DpSgd | Policy::DpSam => unreachable!("dp policies do not hold rounds"),
        };
        let mut center = match center_result {
            Ok(c) => c,
            Err(e @ (Error::Numeric(_) | Error::Domain(_))) => return self.abort(e),
            Err(e) => return Err(e),
        };
        center.round_index = self.round_index;
        if !center.params.is_finite() {
            return self.abort(Error::Numeric(format!(
                "non-finite center at round {}",
                self.round_index
            )));
        }

        for w in &mut self.workers {
            w.params = pull_update(&w.params, &center.params, self.policy.lambda)?;
        }

        self.centers.push(CenterSnapshot {
            round: self.round_index,
            global_step: self.global_step,
            provenance: center.provenance,
            params: center.params.clone(),
        });
        let cost = self
            .opts
            .comm_cost
            .per_round(self.objective.total_dim());
        self.ledger
            .record(self.global_step, self.policy.policy.name(), cost);
        self.center = center;
        if let Some(row) = self.rows.last_mut() {
            push_event(&mut row.event, "comm");
        }
        Ok(None)
    }

    /// Profiles for the batch policies come from one shared batch drawn
    /// from the full training set with a round-seeded RNG, identical for
    /// every worker.
    fn shared_batch_center(&mut self, params: &[LayeredParams]) -> Result<CenterVariable> {
        let mut round_rng = seed::rng(self.opts.seed, Stream::Round(self.round_index));
        let shared = Batch::sample(
            self.objective.train_data(),
            self.opts.batch_size,
            &mut round_rng,
        )?;
        let mut profiles = Vec::with_capacity(params.len());
        for (w, p) in params.iter().enumerate() {
            let raw = accumulate_profile(self.objective, p, &shared)?;
            let profile = if self.policy.gamma > 0.0 {
                smooth_profile(
                    &raw,
                    self.workers[w].last_profile.as_ref(),
                    self.policy.gamma,
                    self.round_index,
                    self.policy.drop_leading_gamma,
                )?
            } else {
                raw
            };
            self.workers[w].last_profile = Some(profile.clone());
            profiles.push(profile);
        }
        match self.policy.policy {
            Policy::Grawa => center_grawa(params, &profiles, self.policy.epsilon_norm),
            Policy::Mgrawa => center_mgrawa(params, &profiles, self.policy.epsilon_norm),
            Policy::Lgrawa => center_lgrawa(params, &profiles, self.policy.epsilon_norm),
            _ => unreachable!(),
        }
    }

    /// Profiles for the local policies come from each worker's running
    /// estimate, which is then reset for the next period. A worker that
    /// took no step since the last round reuses its previous profile or,
    /// lacking one, is excluded from the average via an infinite score.
    fn local_profile_center(&mut self, params: &[LayeredParams]) -> Result<CenterVariable> {
        let layers = params[0].num_layers();
        let mut profiles = Vec::with_capacity(params.len());
        for w in &mut self.workers {
            let profile = match w.smoother.take() {
                Some(est) => est,
                None => match &w.last_profile {
                    Some(prev) => prev.clone(),
                    None => GradNormProfile::from_layer_norms(vec![f64::INFINITY; layers]),
                },
            };
            w.steps_since_round = 0;
            w.last_profile = Some(profile.clone());
            profiles.push(profile);
        }
        match self.policy.policy {
            Policy::LocalMgrawa => center_mgrawa(params, &profiles, self.policy.epsilon_norm),
            Policy::LocalLgrawa => center_lgrawa(params, &profiles, self.policy.epsilon_norm),
            _ => unreachable!(),
        }
    }

    /// Data-parallel execution: lockstep iterations, one all-reduce per
    /// step, every replica applies the same averaged gradient.
    fn run_data_parallel(&mut self) -> Result<RunStatus> {
        let m = self.opts.workers;
        for iter in 1..=self.opts.total_steps {
            let mut grads: Vec<LayeredGradient> = Vec::with_capacity(m);
            let mut per_worker: Vec<(f64, f64, Vec<&str>)> = Vec::with_capacity(m);
            for w in 0..m {
                let batch = self.workers[w].stream.next_batch();
                let params = &self.workers[w].params;
                let loss = match self.objective.eval(params, &batch) {
                    Ok(l) if l.is_finite() => l,
                    Ok(l) => {
                        return Ok(self.abort_status(Error::Numeric(format!(
                            "loss {l} at iteration {iter}"
                        ))))
                    }
                    Err(e) => return Ok(self.abort_status(e)),
                };
                let mut events: Vec<&str> = Vec::new();
                let grad = if self.policy.policy == Policy::DpSam {
                    let (g, skipped) =
                        sam_gradient(self.objective, params, &batch, self.local.sam_rho)?;
                    if skipped {
                        events.push("ascend_skipped");
                    }
                    g
                } else {
                    self.objective.grad(params, &batch)?
                };
                per_worker.push((loss, grad.l2_norm(), events));
                grads.push(grad);
                self.workers[w].last_batch = Some(batch);
            }

            let mean = dp_allreduce(&grads)?;
            for w in 0..m {
                let params = self.workers[w].params.clone();
                let updated = sgd_step(
                    &params,
                    &mean,
                    &mut self.workers[w].buffers,
                    &self.local,
                    iter,
                )?;
                if !updated.is_finite() {
                    return Ok(self.abort_status(Error::Numeric(format!(
                        "non-finite parameters at iteration {iter}"
                    ))));
                }
                self.workers[w].params = updated;
                self.workers[w].t_m = iter;
            }

            self.global_step = iter;
            for (w, (loss, grad_norm, events)) in per_worker.into_iter().enumerate() {
                self.push_row(w, loss, grad_norm, events);
                self.maybe_trace(w);
            }
            let cost = self.opts.comm_cost.per_round(self.objective.total_dim());
            self.ledger
                .record(self.global_step, self.policy.policy.name(), cost);
        }
        Ok(RunStatus::Completed)
    }

    fn push_row(&mut self, worker: usize, loss: f64, grad_norm: f64, events: Vec<&str>) {
        let mut event = String::new();
        for e in events {
            push_event(&mut event, e);
        }
        self.rows.push(StepRow {
            step: self.global_step,
            worker_id: worker,
            loss,
            grad_norm,
            event,
        });
    }

    fn maybe_trace(&mut self, worker: usize) {
        if self.opts.record_params {
            self.trace.push(ParamTraceRow {
                step: self.global_step,
                worker_id: worker,
                values: self.workers[worker].params.flatten(),
            });
        }
    }

    fn abort(&mut self, err: Error) -> Result<Option<RunStatus>> {
        match err {
            e @ (Error::Numeric(_) | Error::Domain(_)) => Ok(Some(self.abort_status(e))),
            other => Err(other),
        }
    }

    fn abort_status(&mut self, err: Error) -> RunStatus {
        if let Some(row) = self.rows.last_mut() {
            push_event(&mut row.event, "abort");
        }
        RunStatus::AbortedNumeric {
            at_step: self.global_step,
            reason: err.to_string(),
        }
    }

    fn finish(self, status: RunStatus, start: Instant) -> RunRecord {
        let final_worker_losses: Vec<f64> = self
            .workers
            .iter()
            .map(|w| self.objective.eval_full(&w.params).unwrap_or(f64::NAN))
            .collect();
        let final_center = self.centers.last().map(|c| c.params.clone());
        let final_center_loss = final_center
            .as_ref()
            .map(|c| self.objective.eval_full(c).unwrap_or(f64::NAN));
        let summary = RunSummary {
            schema_version: record::OUTPUT_SCHEMA_VERSION.to_string(),
            policy: self.policy.policy.name().to_string(),
            seed: self.opts.seed,
            workers: self.opts.workers,
            total_steps: self.opts.total_steps,
            final_worker_losses,
            final_center_loss,
            rounds: self.ledger.rounds,
            simulated_comm_cost: self.ledger.total_cost(),
            wall_time_secs: start.elapsed().as_secs_f64(),
            status,
        };
        RunRecord {
            rows: self.rows,
            centers: self.centers,
            ledger: self.ledger,
            final_workers: self.workers.into_iter().map(|w| w.params).collect(),
            final_center,
            param_trace: self.trace,
            summary,
        }
    }
}

fn push_event(event: &mut String, tag: &str) {
    if !event.is_empty() {
        event.push('|');
    }
    event.push_str(tag);
}

#[cfg(test)]
mod tests;
