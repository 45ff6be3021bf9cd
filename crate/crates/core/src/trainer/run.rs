use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use log::{error, info};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::eval::evaluate;
use super::{run_learner, EvalSummary, LearnerStats, ParameterStore, Snapshot, TrainConfig};
use crate::a3c::{save_params, NetworkArch, NetworkParams};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::vismap::StatusSchema;

pub const EVALS_CSV: &str = "evals.csv";
const EPISODES_CSV: &str = "episodes.csv";

/// Counter values at which checkpoints are taken: `k · N_end / checkpoints`
/// for `k = 1..=checkpoints`, or a single final checkpoint when the budget
/// is smaller than the number of checkpoints.
pub fn checkpoint_boundaries(total_steps: u64, checkpoints: usize) -> Vec<u64> {
    let k = checkpoints as u64;
    if total_steps < k {
        return vec![total_steps];
    }
    (1..=k).map(|i| i * total_steps / k).collect()
}

/// JSON sidecar written next to every parameter file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub index: usize,
    pub step: u64,
    pub version: u64,
    pub arch: NetworkArch,
    pub env: EnvConfig,
    pub vismap: StatusSchema,
    pub vismap_enabled: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckpointRecord {
    pub index: usize,
    pub step: u64,
    pub wallclock_s: f64,
    pub path: PathBuf,
    /// SHA-256 of the parameter file.
    pub sha256: String,
    pub eval: Option<EvalSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainOutcome {
    pub checkpoints: Vec<CheckpointRecord>,
    pub final_counter: u64,
    pub updates: u64,
    /// `(global counter at episode end, total episode reward)` over all
    /// workers, sorted by counter.
    pub episodes: Vec<(u64, f64)>,
}

/// Test hooks for the training run.
#[derive(Clone, Debug, Default)]
pub struct TrainHooks {
    /// `(worker, n)`: that worker panics after its `n`-th update.
    pub fail_worker: Option<(usize, u64)>,
    /// Skip evaluating checkpoints.
    pub skip_eval: bool,
}

pub fn train(cfg: &TrainConfig, out_dir: &Path) -> Result<TrainOutcome> {
    train_with_hooks(cfg, out_dir, &TrainHooks::default())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn save_snapshot(cfg: &TrainConfig, dir: &Path, index: usize, snap: &Snapshot) -> Result<CheckpointRecord> {
    let path = dir.join(format!("ckpt_{index:03}.bin"));
    save_params(&path, &snap.params)?;
    let meta = CheckpointMeta {
        index,
        step: snap.step,
        version: snap.version,
        arch: snap.params.arch.clone(),
        env: cfg.env.clone(),
        vismap: cfg.resolved_schema(),
        vismap_enabled: cfg.vismap_enabled,
        seed: cfg.seed,
    };
    fs::write(path.with_extension("json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(CheckpointRecord {
        index,
        step: snap.step,
        wallclock_s: snap.wallclock_s,
        sha256: sha256_hex(&fs::read(&path)?),
        path,
        eval: None,
    })
}

/// Trains with `cfg.workers` learners, writes `checkpoints/`,
/// `evals.csv` and `episodes.csv` under `out_dir`, and evaluates every
/// checkpoint. If a worker fails the run stops, the checkpoints taken so
/// far are written, and a [`Error::Worker`] is returned.
pub fn train_with_hooks(cfg: &TrainConfig, out_dir: &Path, hooks: &TrainHooks) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ckpt_dir = out_dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir)?;

    let params = NetworkParams::<f32>::init(&cfg.resolved_arch(), cfg.seed)?;
    let boundaries = checkpoint_boundaries(cfg.total_steps, cfg.checkpoints);
    let store = ParameterStore::new(params, cfg.rmsprop, boundaries, cfg.record_checksums);
    info!(
        "training {} steps with {} workers, vismap {}",
        cfg.total_steps,
        cfg.workers,
        if cfg.vismap_enabled { "on" } else { "off" }
    );

    let results: Vec<std::result::Result<LearnerStats, String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.workers)
            .map(|i| {
                let store = &store;
                let fail_after = hooks.fail_worker.and_then(|(w, n)| (w == i).then_some(n));
                scope.spawn(move || {
                    let seed = cfg.seed ^ i as u64;
                    let r = catch_unwind(AssertUnwindSafe(|| run_learner(store, cfg, seed, fail_after)));
                    let r = match r {
                        Ok(Ok(stats)) => Ok(stats),
                        Ok(Err(e)) => Err(format!("worker {i}: {e}")),
                        Err(panic) => {
                            let msg = panic
                                .downcast_ref::<String>()
                                .cloned()
                                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                                .unwrap_or_else(|| "unknown panic".into());
                            Err(format!("worker {i} panicked: {msg}"))
                        }
                    };
                    if r.is_err() {
                        store.close();
                    }
                    r
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("worker thread could not be joined".into())))
            .collect()
    });

    let mut records = Vec::new();
    for (k, snap) in store.snapshots().iter().enumerate() {
        records.push(save_snapshot(cfg, &ckpt_dir, k + 1, snap)?);
    }
    let failures: Vec<String> = results.iter().filter_map(|r| r.as_ref().err().cloned()).collect();
    if !failures.is_empty() {
        for f in &failures {
            error!("{f}");
        }
        return Err(Error::Worker(format!(
            "{}; {} checkpoints kept in {}",
            failures.join("; "),
            records.len(),
            ckpt_dir.display()
        )));
    }

    let mut episodes: Vec<(u64, f64)> = Vec::new();
    let mut updates = 0;
    for stats in results.into_iter().flatten() {
        episodes.extend(stats.episodes);
        updates += stats.updates;
    }
    episodes.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut ep_out = BufWriter::new(File::create(out_dir.join(EPISODES_CSV))?);
    writeln!(ep_out, "step,episode_reward")?;
    for (step, r) in &episodes {
        writeln!(ep_out, "{step},{r}")?;
    }
    ep_out.flush()?;

    let mut csv = BufWriter::new(File::create(out_dir.join(EVALS_CSV))?);
    writeln!(csv, "step,mean_reward,stderr,wallclock_s")?;
    let snapshots = store.snapshots();
    for (rec, snap) in records.iter_mut().zip(&snapshots) {
        if hooks.skip_eval {
            continue;
        }
        let summary = evaluate(&snap.params, cfg, cfg.eval_policy, cfg.eval_steps)?;
        info!(
            "checkpoint {} at step {}: mean reward {:.2} ± {:.2}",
            rec.index, rec.step, summary.mean_reward, summary.stderr
        );
        writeln!(
            csv,
            "{},{},{},{:.3}",
            rec.step, summary.mean_reward, summary.stderr, rec.wallclock_s
        )?;
        csv.flush()?;
        rec.eval = Some(summary);
    }

    Ok(TrainOutcome {
        checkpoints: records,
        final_counter: store.counter(),
        updates,
        episodes,
    })
}
