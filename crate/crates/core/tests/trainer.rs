use std::fs;

use vma3c::env::EnvConfig;
use vma3c::trainer::{train, train_with_hooks, TrainConfig, TrainHooks, EVALS_CSV};
use vma3c::Error;

fn small(total_steps: u64, workers: usize) -> TrainConfig {
    TrainConfig {
        total_steps,
        workers,
        checkpoints: 2,
        eval_steps: 1,
        seed: 17,
        env: EnvConfig::two_agent().with_error_rate(0.02),
        ..Default::default()
    }
}

#[test]
fn single_worker_counter_stops_within_one_rollout() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(&small(10, 1), dir.path()).unwrap();
    assert!((10..15).contains(&out.final_counter), "{}", out.final_counter);
}

#[test]
fn counter_bound_with_several_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(60, 3);
    let out = train(&cfg, dir.path()).unwrap();
    assert!(out.final_counter >= 60);
    assert!(out.final_counter <= 60 + 3 * cfg.t_max as u64);
}

#[test]
fn single_worker_runs_are_bit_reproducible() {
    let cfg = small(40, 1);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = train(&cfg, a.path()).unwrap();
    let rb = train(&cfg, b.path()).unwrap();
    let sums = |r: &vma3c::trainer::TrainOutcome| -> Vec<String> {
        r.checkpoints.iter().map(|c| c.sha256.clone()).collect()
    };
    assert_eq!(sums(&ra), sums(&rb));
    assert_eq!(ra.checkpoints.len(), 2);
    assert_eq!(
        fs::read_to_string(a.path().join(EVALS_CSV)).unwrap().lines().next(),
        Some("step,mean_reward,stderr,wallclock_s")
    );
}

#[test]
fn forty_checkpoints_give_forty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        checkpoints: 40,
        ..small(80, 1)
    };
    let out = train(&cfg, dir.path()).unwrap();
    assert_eq!(out.checkpoints.len(), 40);
    let csv = fs::read_to_string(dir.path().join(EVALS_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 41);
    assert_eq!(fs::read_dir(dir.path().join("checkpoints")).unwrap().count(), 80);
}

#[test]
fn budget_below_checkpoint_count_gives_one_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        checkpoints: 40,
        ..small(10, 1)
    };
    assert_eq!(train(&cfg, dir.path()).unwrap().checkpoints.len(), 1);
}

#[test]
fn worker_panic_aborts_and_keeps_partial_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        checkpoints: 10,
        ..small(200, 2)
    };
    let hooks = TrainHooks {
        fail_worker: Some((1, 8)),
        skip_eval: false,
    };
    match train_with_hooks(&cfg, dir.path(), &hooks) {
        Err(Error::Worker(msg)) => assert!(msg.contains("worker 1 panicked"), "{msg}"),
        other => panic!("expected a worker failure, got {other:?}"),
    }
    let kept = fs::read_dir(dir.path().join("checkpoints")).unwrap().count();
    assert!(kept > 0 && kept < 20, "{kept}");
    assert!(!dir.path().join(EVALS_CSV).exists());
}

#[test]
fn invalid_config_is_rejected_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        workers: 0,
        ..small(10, 1)
    };
    assert!(matches!(train(&cfg, dir.path()), Err(Error::Config(_))));
    assert!(!dir.path().join("checkpoints").exists());
}
