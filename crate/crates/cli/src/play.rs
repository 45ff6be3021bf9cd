use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vma3c::a3c::{forward, greedy_actions, sample_actions, NetworkParams, ObservationStack};
use vma3c::env::{scripted_oracle, Action, EnvState, TrajectoryRecord};
use vma3c::trainer::{Observer, HISTORY};

use crate::eval::load_checkpoint;
use crate::manifest::{config_hash, RunManifest};
use crate::train::{apply_common, load_config};
use crate::{CliError, CliResult, Overrides, PolicyArg};

#[derive(Args, Debug)]
pub struct PlayArgs {
    /// A checkpoint file, or `oracle` for the scripted policy.
    pub source: String,
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
    #[arg(long, value_enum, default_value = "greedy")]
    pub policy: PolicyArg,
    #[arg(long, default_value = "play")]
    pub out: PathBuf,
}

enum Source {
    Oracle,
    Network(NetworkParams<f32>),
}

fn write_frame(path: &Path, frame: &vma3c::frame::Frame) -> CliResult {
    let mut f = BufWriter::new(File::create(path)?);
    frame.write_pgm(&mut f)?;
    f.flush()?;
    Ok(())
}

pub fn run(args: PlayArgs) -> CliResult {
    let (source, mut cfg) = if args.source == "oracle" {
        let mut cfg = load_config(args.common.config.as_deref())?;
        if args.common.er.is_none() {
            cfg.env.error_rate = 0.0;
        }
        (Source::Oracle, cfg)
    } else {
        if args.common.config.is_some() {
            return Err(CliError::new(2, "--config applies only to `play oracle`"));
        }
        let (_, params, cfg) = load_checkpoint(Path::new(&args.source))?;
        (Source::Network(params), cfg)
    };
    apply_common(&mut cfg, &args.common);
    cfg.validate()?;

    let manifest = RunManifest::begin("play", Some(config_hash(&cfg)?), Some(cfg.seed));
    fs::create_dir_all(&args.out)?;
    let observer = Observer::new(&cfg)?;
    let env_cfg = Arc::new(cfg.env.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = BufWriter::new(File::create(args.out.join("trajectory.jsonl"))?);
    let mut outputs = vec!["trajectory.jsonl".to_string()];

    for ep in 0..args.episodes {
        let (mut state, frame) = EnvState::reset(env_cfg.clone(), cfg.seed.wrapping_add(ep as u64))?;
        let mut obs = observer.observe(&state, &frame)?;
        let mut stack = ObservationStack::new(HISTORY, obs.clone())?;
        let mut total = 0.0;
        loop {
            let t = state.step_count();
            let name = format!("ep{ep:03}_t{t:03}.pgm");
            write_frame(&args.out.join(&name), &obs)?;
            outputs.push(name);
            let actions: Vec<Action> = match &source {
                Source::Oracle => scripted_oracle(&state)?,
                Source::Network(params) => {
                    let (pi, _) = forward(params, &stack.to_tensor()?)?;
                    let idx = match args.policy {
                        PolicyArg::Greedy => greedy_actions(&pi),
                        PolicyArg::Sample => sample_actions(&pi, &mut rng),
                    };
                    idx.into_iter().map(Action::from_index).collect::<Result<_, _>>()?
                }
            };
            let res = state.step(&actions)?;
            total += res.rewards.iter().map(|&r| r as f64).sum::<f64>();
            let record = TrajectoryRecord {
                step: t,
                actions,
                rewards: res.rewards.clone(),
                statuses: state.statuses(),
            };
            serde_json::to_writer(&mut log, &record)?;
            writeln!(log)?;
            if res.done {
                break;
            }
            obs = observer.observe(&state, &res.frame)?;
            stack.push(obs.clone());
        }
        println!("episode {ep}: total reward {total}");
    }
    log.flush()?;
    manifest.finish(&args.out, outputs)
}
