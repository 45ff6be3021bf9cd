use serde::{Deserialize, Serialize};

use super::HeadVars;
use crate::autodiff::{Tape, Var};
use crate::error::{config, contract, Result};
use crate::tensor::Scalar;

/// Probabilities are floored here before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// Weight of `log π` in the actor term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvantageMode {
    /// `A_t − V(s_t)`.
    #[default]
    Paper,
    /// `A_t` alone.
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossCoefficients {
    pub gamma: f64,
    /// Critic weight.
    pub alpha: f64,
    /// Entropy weight.
    pub beta: f64,
    pub advantage_mode: AdvantageMode,
}

impl Default for LossCoefficients {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 1.0,
            beta: 0.01,
            advantage_mode: AdvantageMode::Paper,
        }
    }
}

impl LossCoefficients {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return Err(config(format!("alpha {} must be a finite value >= 1", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(config(format!("beta {} outside [0, 1]", self.beta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub actions: Vec<usize>,
    /// Sum of all agents' rewards for this step.
    pub reward: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// The episode ended after the last transition.
    pub terminal: bool,
}

impl Trajectory {
    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// `R_t = Σ_k γ^k r_{t+k+1}` for every `t`, where `rewards[t]` is the
/// reward received after acting at step `t` and nothing follows the last
/// reward.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Bootstrapped n-step return for every step of the trajectory:
/// `A_t = Σ_{k<T−t} γ^k r_{t+k+1} + γ^{T−t} V(s_T)`, with `V(s_T) = 0` for a
/// terminal trajectory.
pub fn advantage_target(traj: &Trajectory, bootstrap: f64, gamma: f64) -> Result<Vec<f64>> {
    if traj.is_empty() {
        return Err(contract("advantage of an empty trajectory"));
    }
    let mut acc = if traj.terminal { 0.0 } else { bootstrap };
    let mut out = vec![0.0; traj.len()];
    for t in (0..traj.len()).rev() {
        acc = traj.transitions[t].reward + gamma * acc;
        out[t] = acc;
    }
    Ok(out)
}

/// `log π(a) · (A_t − V(s_t))`.
pub fn actor_loss(policy: &[f64], action: usize, target: f64, value: f64) -> Result<f64> {
    let p = *policy
        .get(action)
        .ok_or_else(|| contract(format!("action {action} outside the policy")))?;
    Ok(p.max(LOG_FLOOR).ln() * (target - value))
}

/// `½ (target − V)²`.
pub fn critic_loss(target: f64, value: f64) -> f64 {
    0.5 * (target - value).powi(2)
}

pub fn entropy(policy: &[f64]) -> f64 {
    -policy.iter().map(|&p| p * p.max(LOG_FLOOR).ln()).sum::<f64>()
}

/// `H = Σ_i H_i`.
pub fn entropy_sum(policies: &[Vec<f64>]) -> f64 {
    policies.iter().map(|p| entropy(p)).sum()
}

/// The minimised objective `−Σ_i L^a_i + α L^c − β H`.
pub fn total_loss(actor_sum: f64, critic: f64, entropy: f64, alpha: f64, beta: f64) -> f64 {
    -actor_sum + alpha * critic - beta * entropy
}

/// Per-step weight of `log π` for the chosen advantage mode.
pub fn actor_factors(targets: &[f64], values: &[f64], mode: AdvantageMode) -> Vec<f64> {
    targets
        .iter()
        .zip(values)
        .map(|(&a, &v)| match mode {
            AdvantageMode::Paper => a - v,
            AdvantageMode::Standard => a,
        })
        .collect()
}

/// Loss values summed over the steps of one rollout.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub actor: Vec<f64>,
    pub critic: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Records the rollout loss on `tape` and returns it with its breakdown.
///
/// `heads[t]` is the forward pass at step `t`, `targets[t]` is `A_t` and
/// `factors[t]` the weight of `log π`. Targets and factors enter as
/// constants, so no gradient flows through them.
pub fn rollout_loss<T: Scalar>(
    tape: &mut Tape<'_, T>,
    heads: &[HeadVars],
    actions: &[Vec<usize>],
    targets: &[f64],
    factors: &[f64],
    coeffs: &LossCoefficients,
) -> Result<(Var, LossBreakdown)> {
    let n = heads.len();
    if n == 0 || actions.len() != n || targets.len() != n || factors.len() != n {
        return Err(contract(format!(
            "rollout of {n} steps with {} actions, {} targets, {} factors",
            actions.len(),
            targets.len(),
            factors.len()
        )));
    }
    let n_agents = heads[0].policies.len();
    let t = T::from_f64_lossy;
    let floor = t(LOG_FLOOR);
    let mut terms = Vec::with_capacity(n * (1 + 2 * n_agents));
    let mut bd = LossBreakdown {
        actor: vec![0.0; n_agents],
        ..Default::default()
    };
    for step in 0..n {
        let h = &heads[step];
        if h.policies.len() != n_agents || actions[step].len() != n_agents {
            return Err(contract(format!("step {step}: agent count mismatch")));
        }
        let target = tape.scalar(t(targets[step]));
        let diff = tape.sub(h.value, target)?;
        let sq = tape.mul(diff, diff)?;
        terms.push(tape.scale(sq, t(0.5 * coeffs.alpha)));
        bd.critic += 0.5 * tape.value(diff).item()?.as_f64().powi(2);

        for (i, (&pi, &a)) in h.policies.iter().zip(&actions[step]).enumerate() {
            let logp = tape.log_floored(pi, floor);
            let chosen = tape.pick(logp, a)?;
            terms.push(tape.scale(chosen, t(-factors[step])));
            bd.actor[i] += tape.value(chosen).item()?.as_f64() * factors[step];

            let plogp = tape.mul(pi, logp)?;
            let neg_h = tape.sum(plogp);
            terms.push(tape.scale(neg_h, t(coeffs.beta)));
            bd.entropy -= tape.value(neg_h).item()?.as_f64();
        }
    }
    let loss = tape.add_all(&terms)?;
    bd.total = total_loss(
        bd.actor.iter().sum(),
        bd.critic,
        bd.entropy,
        coeffs.alpha,
        coeffs.beta,
    );
    Ok((loss, bd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::a3c::{forward_on_tape, NetworkArch, NetworkParams};
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn traj(rewards: &[f64], terminal: bool) -> Trajectory {
        Trajectory {
            transitions: rewards
                .iter()
                .map(|&r| Transition {
                    actions: vec![0],
                    reward: r,
                })
                .collect(),
            terminal,
        }
    }

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&[1.0, 1.0, 1.0], 0.5)[0], 1.75);
        let r = [3.0, -1.0, 2.0];
        assert_eq!(discounted_return(&r, 0.0), r.to_vec());
        assert_eq!(discounted_return(&r, 1.0), vec![4.0, 1.0, 2.0]);
    }

    #[test]
    fn advantage_examples() {
        assert_eq!(advantage_target(&traj(&[10.0], true), 123.0, 0.99).unwrap(), vec![10.0]);
        let a = advantage_target(&traj(&[0.0, 0.0], false), 1.0, 0.99).unwrap();
        assert!(close(a[0], 0.9801, 1e-12));
        assert!(advantage_target(&traj(&[], false), 1.0, 0.99).is_err());
    }

    #[test]
    fn actor_loss_examples() {
        let uniform = [0.2; 5];
        assert_eq!(actor_loss(&uniform, 1, 3.0, 3.0).unwrap(), 0.0);
        assert_eq!(actor_loss(&[0.0, 1.0, 0.0, 0.0, 0.0], 1, 5.0, 1.0).unwrap(), 0.0);
        let l = actor_loss(&uniform, 0, 2.0, 0.0).unwrap();
        assert!(close(l, 0.2f64.ln() * 2.0, 1e-12));
        assert!(close(l, -3.2189, 1e-4));
        assert!(actor_loss(&uniform, 5, 1.0, 0.0).is_err());
        // a zero probability is floored, not -inf
        assert!(actor_loss(&[1.0, 0.0, 0.0, 0.0, 0.0], 2, 1.0, 0.0).unwrap().is_finite());
    }

    #[test]
    fn critic_loss_examples() {
        assert_eq!(critic_loss(4.0, 4.0), 0.0);
        assert_eq!(critic_loss(10.0, 8.0), 2.0);
        let (t, v, h) = (10.0, 8.0, 1e-6);
        let fd = (critic_loss(t, v + h) - critic_loss(t, v - h)) / (2.0 * h);
        assert!(close(fd, -(t - v), 1e-6));
    }

    #[test]
    fn entropy_examples() {
        let u = vec![0.2; 5];
        assert!(close(entropy_sum(&[u.clone(), u.clone()]), 2.0 * 5f64.ln(), 1e-12));
        assert!(close(entropy_sum(&[u.clone(), u.clone(), u]), 4.8283, 1e-4));
        let d = vec![0.0, 0.0, 1.0, 0.0, 0.0];
        assert_eq!(entropy_sum(&[d.clone(), d]), 0.0);
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(0.0, 0.0, 0.0, 1.0, 0.01), 0.0);
        let l = total_loss(-3.2189, 2.0, 3.2189, 1.0, 0.01);
        assert!(close(l, 5.1867, 1e-4));
        assert_eq!(total_loss(-1.0, 2.0, 5.0, 1.0, 0.0), total_loss(-1.0, 2.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn coefficient_bounds() {
        LossCoefficients::default().validate().unwrap();
        for bad in [
            LossCoefficients { alpha: 0.5, ..Default::default() },
            LossCoefficients { beta: 1.5, ..Default::default() },
            LossCoefficients { gamma: -0.1, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    fn reduced_rollout(
        params: &NetworkParams<f64>,
        coeffs: &LossCoefficients,
    ) -> (LossBreakdown, crate::autodiff::GradientSet<f64>, Vec<Vec<Vec<f64>>>, Vec<f64>) {
        let arch = &params.arch;
        let mut tape = Tape::new(&params.tensors);
        let mut heads = Vec::new();
        for s in 0..3u64 {
            let n: usize = arch.input_shape().iter().product();
            let data = (0..n).map(|k| ((k as u64 * 7 + s * 13) % 11) as f64 / 11.0).collect();
            let x = tape.constant(Tensor::new(arch.input_shape().to_vec(), data).unwrap());
            heads.push(forward_on_tape(&mut tape, arch, x).unwrap());
        }
        let values: Vec<f64> = heads.iter().map(|h| tape.value(h.value).item().unwrap()).collect();
        let pis: Vec<Vec<Vec<f64>>> = heads
            .iter()
            .map(|h| h.policies.iter().map(|&p| tape.value(p).data().to_vec()).collect())
            .collect();
        let actions = vec![vec![0, 3], vec![4, 1], vec![2, 2]];
        let targets = vec![1.5, -0.5, 2.0];
        let factors = actor_factors(&targets, &values, coeffs.advantage_mode);
        let (loss, bd) =
            rollout_loss(&mut tape, &heads, &actions, &targets, &factors, coeffs).unwrap();
        assert!(close(tape.value(loss).item().unwrap(), bd.total, 1e-9));
        (bd, tape.backward(loss).unwrap(), pis, values)
    }

    #[test]
    fn breakdown_matches_scalar_formulas() {
        let params = NetworkParams::<f64>::init(&NetworkArch::reduced(2), 3).unwrap();
        let coeffs = LossCoefficients::default();
        let (bd, _, pis, values) = reduced_rollout(&params, &coeffs);
        let actions = [[0, 3], [4, 1], [2, 2]];
        let targets = [1.5, -0.5, 2.0];
        let mut actor = [0.0; 2];
        let mut critic = 0.0;
        let mut ent = 0.0;
        for t in 0..3 {
            for i in 0..2 {
                actor[i] += actor_loss(&pis[t][i], actions[t][i], targets[t], values[t]).unwrap();
            }
            critic += critic_loss(targets[t], values[t]);
            ent += entropy_sum(&pis[t]);
        }
        for i in 0..2 {
            assert!(close(bd.actor[i], actor[i], 1e-12));
        }
        assert!(close(bd.critic, critic, 1e-12));
        assert!(close(bd.entropy, ent, 1e-12));
        assert!(bd.critic >= 0.0);
    }

    #[test]
    fn actor_term_sends_no_gradient_to_the_critic() {
        let arch = NetworkArch::reduced(2);
        let params = NetworkParams::<f64>::init(&arch, 4).unwrap();
        // alpha = 0 leaves only the actor and entropy terms
        let coeffs = LossCoefficients {
            alpha: 0.0,
            ..Default::default()
        };
        let (bd, grads, _, _) = reduced_rollout(&params, &coeffs);
        for k in arch.critic_param_indices() {
            assert!(grads.tensors()[k].data().iter().all(|&g| g == 0.0));
        }
        // but the critic does change the actor loss value
        let mut moved = params.clone();
        moved.tensors[7].data_mut()[0] += 0.5;
        let (bd2, _, _, _) = reduced_rollout(&moved, &coeffs);
        assert_ne!(bd.actor, bd2.actor);
    }

    #[test]
    fn standard_mode_weights_by_target_only() {
        let f = actor_factors(&[2.0, 3.0], &[0.5, 1.0], AdvantageMode::Standard);
        assert_eq!(f, vec![2.0, 3.0]);
        let f = actor_factors(&[2.0, 3.0], &[0.5, 1.0], AdvantageMode::Paper);
        assert_eq!(f, vec![1.5, 2.0]);
    }

    fn brute_force_advantage(r: &[f64], terminal: bool, v: f64, gamma: f64) -> Vec<f64> {
        let t_max = r.len();
        (0..t_max)
            .map(|t| {
                let mut sum = 0.0;
                for k in 0..t_max - t {
                    sum += gamma.powi(k as i32) * r[t + k];
                }
                let boot = if terminal { 0.0 } else { v };
                sum + gamma.powi((t_max - t) as i32) * boot
            })
            .collect()
    }

    fn policy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 5).prop_map(|v| {
            let s: f64 = v.iter().sum::<f64>() + 1e-9;
            v.iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn advantage_matches_brute_force(
            r in prop::collection::vec(-10.0f64..10.0, 1..=5),
            terminal in any::<bool>(),
            v in -50.0f64..50.0,
            gamma in 0.0f64..=1.0,
        ) {
            let got = advantage_target(&traj(&r, terminal), v, gamma).unwrap();
            let want = brute_force_advantage(&r, terminal, v, gamma);
            for (a, b) in got.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn entropy_is_bounded(p in policy()) {
            let h = entropy(&p);
            prop_assert!(h >= -1e-12 && h <= 5f64.ln() + 1e-12);
        }

        #[test]
        fn swapping_agents_swaps_actor_losses(
            p0 in policy(), p1 in policy(), a0 in 0usize..5, a1 in 0usize..5,
            target in -10.0f64..10.0, value in -10.0f64..10.0,
        ) {
            let l = [actor_loss(&p0, a0, target, value).unwrap(), actor_loss(&p1, a1, target, value).unwrap()];
            let s = [actor_loss(&p1, a1, target, value).unwrap(), actor_loss(&p0, a0, target, value).unwrap()];
            prop_assert_eq!(l[0], s[1]);
            prop_assert_eq!(l[1], s[0]);
        }
    }
}
