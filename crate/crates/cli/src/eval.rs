use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;
use vma3c::a3c::{load_params, NetworkParams};
use vma3c::trainer::{evaluate, CheckpointMeta, EvalSummary, TrainConfig};

use crate::manifest::{config_hash, RunManifest};
use crate::{CliError, CliResult, PolicyArg};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Parameter file (`ckpt_NNN.bin`); its `.json` sidecar must sit next
    /// to it.
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    pub steps: u64,
    #[arg(long, value_enum, default_value = "greedy")]
    pub policy: PolicyArg,
    /// Evaluation seed; defaults to the training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for `eval.json`; defaults to `eval_<stem>` next to
    /// the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalRecord<'a> {
    checkpoint: String,
    step: u64,
    policy: &'a str,
    requested_steps: u64,
    #[serde(flatten)]
    summary: EvalSummary,
}

/// Loads a checkpoint and the config needed to run it.
pub fn load_checkpoint(path: &Path) -> CliResult<(CheckpointMeta, NetworkParams<f32>, TrainConfig)> {
    let sidecar = path.with_extension("json");
    let text = fs::read_to_string(&sidecar).map_err(|e| {
        CliError::new(4, format!("{}: cannot read checkpoint metadata: {e}", sidecar.display()))
    })?;
    let meta: CheckpointMeta = serde_json::from_str(&text)
        .map_err(|e| CliError::new(4, format!("{}: invalid metadata: {e}", sidecar.display())))?;
    if !path.exists() {
        return Err(CliError::new(4, format!("{}: no such checkpoint", path.display())));
    }
    let params = load_params(path, &meta.arch)?;
    let cfg = TrainConfig {
        env: meta.env.clone(),
        vismap: Some(meta.vismap.clone()),
        vismap_enabled: meta.vismap_enabled,
        arch: Some(meta.arch.clone()),
        seed: meta.seed,
        ..Default::default()
    };
    cfg.validate().map_err(|e| CliError::new(4, format!("checkpoint metadata: {e}")))?;
    Ok((meta, params, cfg))
}

pub fn run(args: EvalArgs) -> CliResult {
    let (meta, params, mut cfg) = load_checkpoint(&args.checkpoint)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.steps == 0 {
        return Err(CliError::new(2, "--steps must be positive"));
    }
    let manifest = RunManifest::begin("eval", Some(config_hash(&cfg)?), Some(cfg.seed));
    let summary = evaluate(&params, &cfg, args.policy.into(), args.steps)?;
    println!(
        "step {}: mean reward {:.2} ± {:.2} ({} episodes, {} steps)",
        meta.step, summary.mean_reward, summary.stderr, summary.episodes, summary.steps
    );

    let out = args.out.unwrap_or_else(|| {
        let stem = args
            .checkpoint
            .file_stem()
            .map_or("checkpoint".into(), |s| s.to_string_lossy().into_owned());
        args.checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join(format!("eval_{stem}"))
    });
    fs::create_dir_all(&out)?;
    let record = EvalRecord {
        checkpoint: args.checkpoint.display().to_string(),
        step: meta.step,
        policy: match args.policy {
            PolicyArg::Greedy => "greedy",
            PolicyArg::Sample => "sample",
        },
        requested_steps: args.steps,
        summary,
    };
    fs::write(out.join("eval.json"), serde_json::to_vec_pretty(&record)?)?;
    manifest.finish(&out, vec!["eval.json".into()])
}
