use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use log::info;
use vma3c::a3c::AdvantageMode;
use vma3c::trainer::{train, TrainConfig, EVALS_CSV};

use crate::manifest::{config_hash, RunManifest};
use crate::{AdvantageArg, CliError, CliResult, OnOff, Overrides};

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long, value_enum)]
    pub vismap: Option<OnOff>,
    /// Total training steps.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub advantage_mode: Option<AdvantageArg>,
    #[arg(long)]
    pub checkpoints: Option<usize>,
    /// Environment steps per checkpoint evaluation.
    #[arg(long)]
    pub eval_steps: Option<u64>,
    /// Run directory; defaults to runs/<config>-<vismap>-er<ER>-seed<SEED>.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Reads a training config. Parse errors carry `path:line:column`.
pub fn load_config(path: Option<&Path>) -> CliResult<TrainConfig> {
    let Some(path) = path else {
        return Ok(TrainConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new(2, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::new(
            2,
            format!("{}:{}:{}: {e}", path.display(), e.line(), e.column()),
        )
    })
}

pub fn apply_common(cfg: &mut TrainConfig, o: &Overrides) {
    if let Some(er) = o.er {
        cfg.env.error_rate = er;
    }
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
}

pub fn run(args: TrainArgs) -> CliResult {
    let mut cfg = load_config(args.common.config.as_deref())?;
    apply_common(&mut cfg, &args.common);
    if let Some(v) = args.vismap {
        cfg.vismap_enabled = v == OnOff::On;
    }
    if let Some(n) = args.steps {
        cfg.total_steps = n;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(m) = args.advantage_mode {
        cfg.advantage_mode = match m {
            AdvantageArg::Paper => AdvantageMode::Paper,
            AdvantageArg::Standard => AdvantageMode::Standard,
        };
    }
    if let Some(k) = args.checkpoints {
        cfg.checkpoints = k;
    }
    if let Some(n) = args.eval_steps {
        cfg.eval_steps = n;
    }
    cfg.validate()?;

    let out = args.out.unwrap_or_else(|| {
        let stem = args
            .common
            .config
            .as_deref()
            .and_then(|p| p.file_stem())
            .map_or("default".into(), |s| s.to_string_lossy().into_owned());
        let vis = if cfg.vismap_enabled { "vmap" } else { "a3c" };
        PathBuf::from("runs").join(format!("{stem}-{vis}-er{}-seed{}", cfg.env.error_rate, cfg.seed))
    });
    fs::create_dir_all(&out)?;
    let manifest = RunManifest::begin("train", Some(config_hash(&cfg)?), Some(cfg.seed));
    fs::write(out.join("config.json"), serde_json::to_vec_pretty(&cfg)?)?;

    let outcome = match train(&cfg, &out) {
        Ok(o) => o,
        Err(e) => {
            let err = CliError::from(e);
            let kept = list_files(&out.join("checkpoints"), "checkpoints");
            manifest.failed(&err.message).finish(&out, kept)?;
            return Err(err);
        }
    };
    let last = outcome.checkpoints.last().and_then(|c| c.eval);
    if let Some(e) = last {
        println!(
            "final checkpoint: mean reward {:.2} ± {:.2} over {} episodes",
            e.mean_reward, e.stderr, e.episodes
        );
    }
    info!("run written to {}", out.display());
    let mut outputs = vec!["config.json".to_string(), EVALS_CSV.to_string(), "episodes.csv".into()];
    outputs.extend(list_files(&out.join("checkpoints"), "checkpoints"));
    manifest.finish(&out, outputs)
}

/// Sorted file names in `dir`, prefixed with `prefix/` when non-empty.
fn list_files(dir: &Path, prefix: &str) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .map(|n| if prefix.is_empty() { n } else { format!("{prefix}/{n}") })
        .collect();
    names.sort();
    names
}
