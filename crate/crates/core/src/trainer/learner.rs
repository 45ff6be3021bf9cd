use std::sync::Arc;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{lr_schedule, Observer, ParameterStore, TrainConfig, HISTORY};
use crate::a3c::{
    actor_factors, advantage_target, forward_on_tape, rollout_loss, sample_actions,
    ObservationStack, Trajectory, Transition,
};
use crate::autodiff::Tape;
use crate::env::{Action, EnvState};
use crate::error::Result;
use crate::optim::clip_global_norm;

/// What one learner did.
#[derive(Clone, Debug, Default)]
pub struct LearnerStats {
    pub steps: u64,
    pub updates: u64,
    /// `(global counter at episode end, total episode reward)`.
    pub episodes: Vec<(u64, f64)>,
}

/// Runs the learner loop until the global counter reaches
/// `cfg.total_steps` or the store is closed.
///
/// `fail_after` makes the learner panic after that many updates; it exists
/// to exercise the trainer's failure path.
pub fn run_learner(
    store: &ParameterStore,
    cfg: &TrainConfig,
    worker_seed: u64,
    fail_after: Option<u64>,
) -> Result<LearnerStats> {
    let arch = cfg.resolved_arch();
    let coeffs = cfg.coefficients();
    let observer = Observer::new(cfg)?;
    let env_cfg = Arc::new(cfg.env.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(worker_seed);

    let (mut state, frame) = EnvState::reset(env_cfg.clone(), rng.gen())?;
    let mut stack = ObservationStack::new(HISTORY, observer.observe(&state, &frame)?)?;
    let mut episode_reward = 0.0;
    let mut stats = LearnerStats::default();

    while !store.is_closed() && store.counter() < cfg.total_steps {
        let (params, _) = store.snapshot();
        let mut tape = Tape::new(&params.tensors);
        let mut heads = Vec::with_capacity(cfg.t_max);
        let mut traj = Trajectory::default();

        for _ in 0..cfg.t_max {
            let x = tape.constant(stack.to_tensor()?);
            let h = forward_on_tape(&mut tape, &arch, x)?;
            let policies: Vec<Vec<f32>> = h
                .policies
                .iter()
                .map(|&p| tape.value(p).data().to_vec())
                .collect();
            let actions = sample_actions(&policies, &mut rng);
            let joint: Vec<Action> = actions
                .iter()
                .map(|&a| Action::from_index(a))
                .collect::<Result<_>>()?;
            let res = state.step(&joint)?;
            let reward: f64 = res.rewards.iter().map(|&r| r as f64).sum();
            let counter = store.add_steps(1);
            stats.steps += 1;
            episode_reward += reward;
            heads.push(h);
            traj.transitions.push(Transition { actions, reward });
            if res.done {
                traj.terminal = true;
                stats.episodes.push((counter, episode_reward));
                debug!("worker seed {worker_seed}: episode reward {episode_reward} at step {counter}");
                episode_reward = 0.0;
                let (s, f) = EnvState::reset(env_cfg.clone(), rng.gen())?;
                state = s;
                stack.reset(observer.observe(&state, &f)?);
                break;
            }
            stack.push(observer.observe(&state, &res.frame)?);
        }

        let bootstrap = if traj.terminal {
            0.0
        } else {
            let x = tape.constant(stack.to_tensor()?);
            let h = forward_on_tape(&mut tape, &arch, x)?;
            tape.value(h.value).item()? as f64
        };
        let targets = advantage_target(&traj, bootstrap, coeffs.gamma)?;
        let values: Vec<f64> = heads
            .iter()
            .map(|h| tape.value(h.value).item().map(|v| v as f64))
            .collect::<Result<_>>()?;
        let factors = actor_factors(&targets, &values, coeffs.advantage_mode);
        let actions: Vec<Vec<usize>> = traj.transitions.iter().map(|t| t.actions.clone()).collect();
        let (loss, _) = rollout_loss(&mut tape, &heads, &actions, &targets, &factors, &coeffs)?;
        let mut grads = tape.backward(loss)?;
        clip_global_norm(&mut grads, cfg.clip_norm)?;
        let lr = lr_schedule(store.counter(), cfg);
        match store.apply_update(&grads, lr) {
            Ok(_) => {}
            Err(_) if store.is_closed() => break,
            Err(e) => return Err(e),
        }
        stats.updates += 1;
        if fail_after.is_some_and(|n| stats.updates >= n) {
            panic!("injected learner failure after {} updates", stats.updates);
        }
    }
    Ok(stats)
}
