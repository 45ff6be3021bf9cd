use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EvalPolicy, Observer, TrainConfig, HISTORY};
use crate::a3c::{forward, greedy_actions, sample_actions, NetworkParams, ObservationStack};
use crate::env::{Action, EnvState};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Mean total (all-agent) reward per completed episode.
    pub mean_reward: f64,
    /// Standard error of that mean; 0 for a single episode.
    pub stderr: f64,
    pub episodes: usize,
    pub steps: u64,
}

impl EvalSummary {
    fn from_totals(totals: &[f64], steps: u64) -> Self {
        let n = totals.len() as f64;
        let mean = totals.iter().sum::<f64>() / n;
        let stderr = if totals.len() > 1 {
            let var = totals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self {
            mean_reward: mean,
            stderr,
            episodes: totals.len(),
            steps,
        }
    }
}

/// Plays whole episodes with `policy` until at least `steps` environment
/// steps have elapsed. Episode `k` is reset with seed `seed + k`.
pub fn evaluate_policy<F>(cfg: &TrainConfig, steps: u64, seed: u64, mut policy: F) -> Result<EvalSummary>
where
    F: FnMut(&EnvState, &ObservationStack) -> Result<Vec<usize>>,
{
    let observer = Observer::new(cfg)?;
    let env_cfg = Arc::new(cfg.env.clone());
    let mut totals = Vec::new();
    let mut elapsed = 0u64;
    while elapsed < steps {
        let (mut state, frame) = EnvState::reset(env_cfg.clone(), seed.wrapping_add(totals.len() as u64))?;
        let mut stack = ObservationStack::new(HISTORY, observer.observe(&state, &frame)?)?;
        let mut total = 0.0;
        loop {
            let actions = policy(&state, &stack)?;
            let joint: Vec<Action> = actions
                .iter()
                .map(|&a| Action::from_index(a))
                .collect::<Result<_>>()?;
            let res = state.step(&joint)?;
            elapsed += 1;
            total += res.rewards.iter().map(|&r| r as f64).sum::<f64>();
            if res.done {
                break;
            }
            stack.push(observer.observe(&state, &res.frame)?);
        }
        totals.push(total);
    }
    Ok(EvalSummary::from_totals(&totals, elapsed))
}

/// Seed of the evaluation stream for a run seeded with `root`.
pub(crate) fn eval_seed(root: u64) -> u64 {
    root ^ 0x5eed_e7a1_0000_0000
}

/// Evaluates network parameters over `steps` environment steps.
pub fn evaluate(
    params: &NetworkParams<f32>,
    cfg: &TrainConfig,
    policy: EvalPolicy,
    steps: u64,
) -> Result<EvalSummary> {
    let seed = eval_seed(cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    evaluate_policy(cfg, steps, seed, |_, stack| {
        let (pi, _) = forward(params, &stack.to_tensor()?)?;
        Ok(match policy {
            EvalPolicy::Greedy => greedy_actions(&pi),
            EvalPolicy::Sample => sample_actions(&pi, &mut rng),
        })
    })
}
