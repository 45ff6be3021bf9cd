//! Asynchronous multi-actor training.
//!
//! `workers` learner threads share one [`ParameterStore`]. Each learner
//! snapshots the parameters, plays up to `t_max` steps in its own
//! environment, computes the clipped loss gradient and submits it. Updates
//! are applied one at a time under the store's write lock.

mod eval;
mod learner;
mod observe;
mod run;
mod store;

use serde::{Deserialize, Serialize};

use crate::a3c::{AdvantageMode, LossCoefficients, NetworkArch};
use crate::env::{EnvConfig, FRAME_SIZE};
use crate::error::{config, Result};
use crate::optim::RmsPropConfig;
use crate::vismap::StatusSchema;

pub use eval::{evaluate, evaluate_policy, EvalSummary};
pub use learner::{run_learner, LearnerStats};
pub use observe::Observer;
pub use run::{
    checkpoint_boundaries, train, train_with_hooks, CheckpointMeta, CheckpointRecord, TrainHooks,
    TrainOutcome, EVALS_CSV,
};
pub use store::{params_checksum, ParameterStore, Snapshot};

/// Frames stacked into one network input.
pub const HISTORY: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalPolicy {
    #[default]
    Greedy,
    Sample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Global step budget `N_end`.
    pub total_steps: u64,
    pub workers: usize,
    pub t_max: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub advantage_mode: AdvantageMode,
    pub lr_start: f64,
    pub clip_norm: f64,
    pub rmsprop: RmsPropConfig,
    pub checkpoints: usize,
    pub eval_steps: u64,
    pub eval_policy: EvalPolicy,
    pub seed: u64,
    pub env: EnvConfig,
    /// Defaults to the Milk Factory schema for `env.n_pickup`.
    pub vismap: Option<StatusSchema>,
    /// `false` trains the plain multi-agent baseline: the holder strip
    /// stays blank.
    pub vismap_enabled: bool,
    /// Defaults to the standard network with one actor head per robot.
    pub arch: Option<NetworkArch>,
    /// Record a checksum of every parameter version (testing aid; costly).
    pub record_checksums: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let c = LossCoefficients::default();
        Self {
            total_steps: 200_000,
            workers: 8,
            t_max: 5,
            gamma: c.gamma,
            alpha: c.alpha,
            beta: c.beta,
            advantage_mode: c.advantage_mode,
            lr_start: 0.001,
            clip_norm: 40.0,
            rmsprop: RmsPropConfig::default(),
            checkpoints: 40,
            eval_steps: 10_000,
            eval_policy: EvalPolicy::Greedy,
            seed: 0,
            env: EnvConfig::two_agent(),
            vismap: None,
            vismap_enabled: true,
            arch: None,
            record_checksums: false,
        }
    }
}

impl TrainConfig {
    pub fn coefficients(&self) -> LossCoefficients {
        LossCoefficients {
            gamma: self.gamma,
            alpha: self.alpha,
            beta: self.beta,
            advantage_mode: self.advantage_mode,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.env.n_robots()
    }

    pub fn resolved_arch(&self) -> NetworkArch {
        self.arch
            .clone()
            .unwrap_or_else(|| NetworkArch::standard(self.n_agents()))
    }

    pub fn resolved_schema(&self) -> StatusSchema {
        self.vismap
            .clone()
            .unwrap_or_else(|| StatusSchema::milk_factory(self.env.n_pickup))
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(config("total_steps must be positive"));
        }
        if self.workers == 0 {
            return Err(config("workers must be positive"));
        }
        if self.t_max == 0 {
            return Err(config("t_max must be positive"));
        }
        if !(self.lr_start >= 0.0 && self.lr_start.is_finite()) {
            return Err(config(format!("lr_start {} must be finite and >= 0", self.lr_start)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(config(format!("clip_norm {} must be positive", self.clip_norm)));
        }
        if !(0.0..1.0).contains(&self.rmsprop.decay) || !(self.rmsprop.epsilon > 0.0) {
            return Err(config(format!("invalid RMSProp settings {:?}", self.rmsprop)));
        }
        if self.checkpoints == 0 {
            return Err(config("checkpoints must be positive"));
        }
        if self.eval_steps == 0 {
            return Err(config("eval_steps must be positive"));
        }
        self.coefficients().validate()?;
        self.env.validate()?;
        let schema = self.resolved_schema();
        schema.validate()?;
        if schema.n_agents() != self.n_agents() {
            return Err(config(format!(
                "vismap schema lists {} agents, the environment has {}",
                schema.n_agents(),
                self.n_agents()
            )));
        }
        let arch = self.resolved_arch();
        arch.validate()?;
        if arch.n_agents != self.n_agents() || arch.n_actions != crate::env::N_ACTIONS {
            return Err(config(format!(
                "network has {} heads of {} actions, the environment needs {} of {}",
                arch.n_agents,
                arch.n_actions,
                self.n_agents(),
                crate::env::N_ACTIONS
            )));
        }
        if arch.input_size != FRAME_SIZE || arch.input_channels != HISTORY {
            return Err(config(format!(
                "network input must be {HISTORY}x{FRAME_SIZE}x{FRAME_SIZE}"
            )));
        }
        Ok(())
    }
}

/// `lr_start · max(0, 1 − step/N_end)`.
pub fn lr_schedule(step: u64, cfg: &TrainConfig) -> f64 {
    let frac = step as f64 / cfg.total_steps as f64;
    cfg.lr_start * (1.0 - frac).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        let three = TrainConfig {
            env: EnvConfig::three_agent(),
            ..Default::default()
        };
        three.validate().unwrap();
        assert_eq!(three.resolved_arch().n_agents, 3);
    }

    #[test]
    fn lr_schedule_is_linear_to_zero() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(0, &cfg), 0.001);
        assert_eq!(lr_schedule(cfg.total_steps, &cfg), 0.0);
        assert!((lr_schedule(cfg.total_steps / 2, &cfg) - 0.0005).abs() < 1e-15);
        assert_eq!(lr_schedule(cfg.total_steps + 40, &cfg), 0.0);
    }

    #[test]
    fn json_defaults_and_unknown_fields() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"total_steps": 1000}"#).unwrap();
        assert_eq!(cfg.workers, 8);
        assert_eq!(cfg.checkpoints, 40);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"total_step": 1000}"#).is_err());
        let round: TrainConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for cfg in [
            TrainConfig { workers: 0, ..Default::default() },
            TrainConfig { alpha: 0.5, ..Default::default() },
            TrainConfig { clip_norm: 0.0, ..Default::default() },
            TrainConfig { arch: Some(NetworkArch::reduced(2)), ..Default::default() },
            TrainConfig { vismap: Some(StatusSchema::milk_factory(2)), ..Default::default() },
        ] {
            assert!(matches!(cfg.validate(), Err(crate::Error::Config(_))), "{cfg:?}");
        }
    }
}
