use super::*;
use crate::objective::ObjectiveSpec;

fn quadratic(dim: usize, sigma: f64) -> AnyObjective {
    ObjectiveSpec::Quadratic {
        dim,
        noise_sigma: sigma,
        eigenvalues: None,
        n_samples: 64,
    }
    .build()
    .unwrap()
}

fn plain_local(eta: f64) -> LocalOptConfig {
    LocalOptConfig::plain(eta)
}

#[test]
fn trigger_examples() {
    assert!(should_communicate(&[16, 16, 16, 16], 4, 16));
    assert!(!should_communicate(&[16, 16, 16, 15], 4, 16));
    assert!(!should_communicate(&[0, 0, 0, 0], 4, 16));
}

#[test]
fn round_robin_fires_every_tau_sweeps() {
    let obj = quadratic(3, 0.0);
    let policy = PolicyConfig::new(Policy::Easgd, 0.3, 4);
    let opts = RunOptions::new(3, 20, 8, 5);
    let rec = run(&obj, &policy, &plain_local(0.05), &opts).unwrap();
    assert!(rec.status().is_completed());
    assert_eq!(rec.ledger.rounds, 5);
    let steps: Vec<u64> = rec.ledger.events.iter().map(|e| e.global_step).collect();
    assert_eq!(steps, vec![12, 24, 36, 48, 60]);
    // Ledger consistency: rounds * M * tau equals the steps consumed at
    // the last round.
    assert_eq!(rec.ledger.rounds * 3 * 4, *steps.last().unwrap());
}

#[test]
fn identical_seeds_identical_records() {
    let obj = quadratic(4, 0.2);
    let mut policy = PolicyConfig::new(Policy::Mgrawa, 0.4, 4);
    policy.mu = 0.1;
    let mut opts = RunOptions::new(4, 30, 8, 123);
    opts.schedule = Schedule::Jittered { max_skew: 2 };
    opts.record_params = true;
    let a = run(&obj, &policy, &plain_local(0.05), &opts).unwrap();
    let b = run(&obj, &policy, &plain_local(0.05), &opts).unwrap();
    assert_eq!(a.digest(), b.digest());
    assert_eq!(a.csv_bytes().unwrap(), b.csv_bytes().unwrap());
    let mut opts2 = opts.clone();
    opts2.seed = 124;
    let c = run(&obj, &policy, &plain_local(0.05), &opts2).unwrap();
    assert_ne!(a.digest(), c.digest());
}

#[test]
fn dp_replicas_stay_bitwise_identical() {
    let obj = quadratic(5, 0.3);
    let policy = PolicyConfig::new(Policy::DpSgd, 0.0, 1);
    let mut opts = RunOptions::new(4, 25, 8, 9);
    opts.record_params = true;
    let rec = run(&obj, &policy, &plain_local(0.05), &opts).unwrap();
    assert!(rec.status().is_completed());
    // One row and one trace entry per worker per iteration.
    for step in 1..=25u64 {
        let positions: Vec<&ParamTraceRow> = rec
            .param_trace
            .iter()
            .filter(|t| t.step == step)
            .collect();
        assert_eq!(positions.len(), 4);
        for p in &positions[1..] {
            assert_eq!(p.values, positions[0].values, "replicas diverged at {step}");
        }
    }
    // DP communicates after every batch.
    assert_eq!(rec.ledger.rounds, 25);
}

#[test]
fn dp_sam_requires_positive_rho_and_runs() {
    let obj = quadratic(3, 0.0);
    let policy = PolicyConfig::new(Policy::DpSam, 0.0, 1);
    let opts = RunOptions::new(2, 10, 8, 3);
    assert!(run(&obj, &policy, &plain_local(0.05), &opts).is_err());
    let local = LocalOptConfig {
        sam_rho: 0.05,
        ..plain_local(0.05)
    };
    let rec = run(&obj, &policy, &local, &opts).unwrap();
    assert!(rec.status().is_completed());
    for w in &rec.final_workers[1..] {
        assert_eq!(w, &rec.final_workers[0]);
    }
}

#[test]
fn decoupled_workers_match_independent_sgd() {
    // lambda = 0 and mu = 0: the harness must reproduce M independent SGD
    // trajectories bit for bit (profiles are still accumulated at rounds,
    // but the pull is a no-op).
    let obj = quadratic(4, 0.5);
    let policy = PolicyConfig::new(Policy::Mgrawa, 0.0, 4);
    let opts = RunOptions::new(3, 24, 8, 77);
    let rec = run(&obj, &policy, &plain_local(0.05), &opts).unwrap();

    let shared = obj.init_params(77);
    let streams = make_shards(
        obj.train_data(),
        3,
        seed::derive(77, Stream::Shards),
        8,
    )
    .unwrap();
    for (w, mut stream) in streams.into_iter().enumerate() {
        let mut params = shared.clone();
        let mut buffers = OptBuffers::new(&obj.signature());
        for t in 1..=24u64 {
            let batch = stream.next_batch();
            let grad = obj.grad(&params, &batch).unwrap();
            params = sgd_step(&params, &grad, &mut buffers, &plain_local(0.05), t).unwrap();
        }
        assert_eq!(rec.final_workers[w], params, "worker {w} diverged");
    }
}

#[test]
fn numeric_blowup_aborts_with_partial_record() {
    let obj = quadratic(2, 0.0);
    let policy = PolicyConfig::new(Policy::Easgd, 0.1, 4);
    let opts = RunOptions::new(2, 50, 8, 1);
    // A learning rate this large overflows within a couple of steps.
    let rec = run(&obj, &policy, &plain_local(1e200), &opts).unwrap();
    match rec.status() {
        RunStatus::AbortedNumeric { at_step, .. } => assert!(*at_step < 100),
        RunStatus::Completed => panic!("run should have aborted"),
    }
    assert!(!rec.rows.is_empty());
    assert!(rec.rows.last().unwrap().event.contains("abort"));
}

#[test]
fn vincent_iterates_stay_in_the_plot_box() {
    let obj = ObjectiveSpec::Vincent2d.build().unwrap();
    let mut policy = PolicyConfig::new(Policy::Mgrawa, 0.5, 4);
    policy.mu = 0.05;
    let mut opts = RunOptions::new(4, 200, 1, 2);
    opts.record_params = true;
    opts.worker_inits = Some(vec![
        LayeredParams::new(vec![vec![0.25], vec![0.25]]),
        LayeredParams::new(vec![vec![0.25], vec![10.0]]),
        LayeredParams::new(vec![vec![10.0], vec![0.25]]),
        LayeredParams::new(vec![vec![10.0], vec![10.0]]),
    ]);
    let rec = run(&obj, &policy, &plain_local(0.01), &opts).unwrap();
    assert!(rec.status().is_completed());
    for t in &rec.param_trace {
        for &v in &t.values {
            assert!((0.25..=10.0).contains(&v), "coordinate {v} escaped the box");
        }
    }
}

#[test]
fn lsgd_center_is_leader_copy() {
    let obj = quadratic(3, 0.1);
    let policy = PolicyConfig::new(Policy::Lsgd, 0.2, 4);
    let opts = RunOptions::new(3, 12, 8, 4);
    let rec = run(&obj, &policy, &plain_local(0.05), &opts).unwrap();
    assert!(!rec.centers.is_empty());
    for c in &rec.centers {
        assert!(matches!(c.provenance, Provenance::LeaderCopy { .. }));
    }
}

#[test]
fn local_policies_reset_profiles_each_round() {
    let obj = quadratic(4, 0.2);
    let mut policy = PolicyConfig::new(Policy::LocalMgrawa, 0.3, 4);
    policy.gamma = 0.9;
    policy.mu = 0.05;
    let opts = RunOptions::new(3, 24, 8, 8);
    let rec = run(&obj, &policy, &plain_local(0.05), &opts).unwrap();
    assert!(rec.status().is_completed());
    assert_eq!(rec.ledger.rounds, 6);
}

#[test]
fn local_profile_center_matches_manual_reconstruction() {
    // Replays the full local-profile pipeline by hand: per-step layer
    // norms of the workers' own batch gradients, bias-corrected smoothing,
    // weights, weighted center, then a full pull (lambda = 1) so the final
    // workers equal the reconstructed center.
    let obj = quadratic(3, 0.4);
    let gamma = 0.9;
    let mut policy = PolicyConfig::new(Policy::LocalMgrawa, 1.0, 2);
    policy.gamma = gamma;
    let opts = RunOptions::new(2, 2, 8, 31);
    let local = plain_local(0.05);
    let rec = run(&obj, &policy, &local, &opts).unwrap();
    assert_eq!(rec.ledger.rounds, 1);

    let shared = obj.init_params(31);
    let streams = make_shards(obj.train_data(), 2, seed::derive(31, Stream::Shards), 8).unwrap();
    let mut totals = Vec::new();
    let mut finals = Vec::new();
    for mut stream in streams {
        let mut params = shared.clone();
        let mut buffers = OptBuffers::new(&obj.signature());
        let mut state: Option<GradNormProfile> = None;
        for t in 1..=2u64 {
            let batch = stream.next_batch();
            let grad = obj.grad(&params, &batch).unwrap();
            let cur = GradNormProfile::from_layer_norms(vec![grad.layer_norm(0)]);
            state = Some(smooth_profile(&cur, state.as_ref(), gamma, t, false).unwrap());
            params = sgd_step(&params, &grad, &mut buffers, &local, t).unwrap();
        }
        totals.push(state.unwrap().model_total);
        finals.push(params);
    }
    let weights = crate::center_policy::grawa_weights(&totals, policy.epsilon_norm).unwrap();
    let expected = crate::tensor::weighted_params_sum(&finals, &weights).unwrap();
    for w in &rec.final_workers {
        assert_eq!(w, &expected);
    }
}

#[test]
fn worker_init_validation() {
    let obj = quadratic(3, 0.0);
    let policy = PolicyConfig::new(Policy::Easgd, 0.1, 4);
    let mut opts = RunOptions::new(2, 5, 8, 1);
    opts.worker_inits = Some(vec![LayeredParams::new(vec![vec![0.0; 3]])]);
    assert!(run(&obj, &policy, &plain_local(0.1), &opts).is_err());
    opts.worker_inits = Some(vec![
        LayeredParams::new(vec![vec![0.0; 2]]),
        LayeredParams::new(vec![vec![0.0; 2]]),
    ]);
    assert!(run(&obj, &policy, &plain_local(0.1), &opts).is_err());
}

#[test]
fn trajectory_csv_round_trips_through_reader() {
    let obj = quadratic(3, 0.1);
    let policy = PolicyConfig::new(Policy::Mgrawa, 0.3, 4);
    let opts = RunOptions::new(2, 10, 8, 6);
    let rec = run(&obj, &policy, &plain_local(0.05), &opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trajectory.csv");
    rec.write_csv(&path).unwrap();
    let rows = read_trajectory_csv(&path).unwrap();
    assert_eq!(rows, rec.rows);
}
