//! Seeded verification suites behind `vma3c check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::a3c::{advantage_target, Trajectory, Transition};
use crate::env::{reset, scripted_oracle, Action, EnvConfig, EnvState};
use crate::error::Result;
use crate::frame::Frame;
use crate::vismap::{compose_holder, verify_premises, HolderLayout, PremiseReport, StatusSchema};

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub summary: String,
    /// Up to ten failing cases.
    pub counterexamples: Vec<serde_json::Value>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn record(&mut self, case: serde_json::Value) {
        self.failures += 1;
        if self.counterexamples.len() < 10 {
            self.counterexamples.push(case);
        }
    }
}

/// A random reachable environment state and its frame.
pub fn random_state(rng: &mut ChaCha8Rng) -> Result<(EnvState, Frame)> {
    let base = if rng.gen_bool(0.5) {
        EnvConfig::two_agent()
    } else {
        EnvConfig::three_agent()
    };
    let cfg = base.with_error_rate(rng.gen_range(0.0..0.2)).with_seed(rng.gen());
    let (mut state, mut frame) = reset(&cfg)?;
    let steps = rng.gen_range(0..cfg.episode_length);
    for _ in 0..steps {
        let actions: Vec<Action> = (0..state.n_robots())
            .map(|_| Action::ALL[rng.gen_range(0..Action::ALL.len())])
            .collect();
        frame = state.step(&actions)?.frame;
    }
    Ok((state, frame))
}

/// Composes random frames with random status assignments (at least one
/// pick-up robot showing a glyph) and checks all three premises plus
/// byte-exact preservation of every pixel outside the painted slots.
pub fn premise_suite(seed: u64, cases: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let holder = HolderLayout::default();
    let mut report = SuiteReport {
        name: "premises",
        cases,
        failures: 0,
        summary: String::new(),
        counterexamples: Vec::new(),
    };
    for case in 0..cases {
        let (state, frame) = random_state(&mut rng)?;
        let n_pickup = state.config().n_pickup;
        let table = StatusSchema::milk_factory(n_pickup).compile()?;
        let mut statuses: Vec<&str> = (0..n_pickup)
            .map(|_| ["idle", "busy", "failed"][rng.gen_range(0..3)])
            .collect();
        let forced = rng.gen_range(0..n_pickup);
        statuses[forced] = if rng.gen_bool(0.5) { "busy" } else { "failed" };
        statuses.push(["idle", "busy"][rng.gen_range(0..2)]);

        let map = table.visual_map(&statuses)?;
        let composed = compose_holder(&frame, &map, &holder)?;
        let premises: PremiseReport = verify_premises(&composed);
        let slots: Vec<_> = composed.glyph_regions.iter().map(|g| g.rect).collect();
        let outside_changed = frame
            .bounds()
            .pixels()
            .filter(|&(x, y)| !slots.iter().any(|r| r.contains(x, y)))
            .find(|&(x, y)| frame.get(x, y) != composed.image.get(x, y));
        let round_trip = composed.extract_frame()? == frame.crop(holder.frame_region)?;
        if !premises.all_passed() || outside_changed.is_some() || !round_trip {
            report.record(serde_json::json!({
                "case": case,
                "statuses": statuses,
                "premises": premises,
                "changed_outside_slots": outside_changed,
                "frame_round_trip": round_trip,
            }));
        }
    }
    report.summary = format!("{} of {cases} compositions violate a premise", report.failures);
    Ok(report)
}

/// Compares the bootstrapped return against a direct double sum over
/// random trajectories of length 1 to 5.
pub fn advantage_suite(seed: u64, cases: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport {
        name: "advantage",
        cases,
        failures: 0,
        summary: String::new(),
        counterexamples: Vec::new(),
    };
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let len = rng.gen_range(1..=5);
        let rewards: Vec<f64> = (0..len).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let terminal = rng.gen_bool(0.3);
        let v = rng.gen_range(-100.0..100.0);
        let gamma = rng.gen_range(0.0..=1.0);
        let traj = Trajectory {
            transitions: rewards
                .iter()
                .map(|&reward| Transition {
                    actions: Vec::new(),
                    reward,
                })
                .collect(),
            terminal,
        };
        let got = advantage_target(&traj, v, gamma)?;
        for t in 0..len {
            let mut want = 0.0;
            for k in 0..len - t {
                want += gamma.powi(k as i32) * rewards[t + k];
            }
            if !terminal {
                want += gamma.powi((len - t) as i32) * v;
            }
            let err = (got[t] - want).abs();
            worst = worst.max(err);
            if !(err <= 1e-9) {
                report.record(serde_json::json!({
                    "case": case, "t": t, "rewards": rewards, "terminal": terminal,
                    "bootstrap": v, "gamma": gamma, "got": got[t], "want": want,
                }));
            }
        }
    }
    report.summary = format!("max abs error {worst:.3e} over {cases} trajectories");
    Ok(report)
}

/// Total reward of one scripted-oracle episode.
pub fn oracle_episode_reward(cfg: &EnvConfig) -> Result<f64> {
    let (mut state, _) = reset(cfg)?;
    let mut total = 0.0;
    while !state.is_done() {
        let actions = scripted_oracle(&state)?;
        total += state.step(&actions)?.rewards.iter().map(|&r| r as f64).sum::<f64>();
    }
    Ok(total)
}

/// Scripted oracle at zero error rate: 500 in the two-agent setting, 900
/// with two pick-up robots.
pub fn env_suite() -> Result<SuiteReport> {
    let mut report = SuiteReport {
        name: "env",
        cases: 2,
        failures: 0,
        summary: String::new(),
        counterexamples: Vec::new(),
    };
    let two = oracle_episode_reward(&EnvConfig::two_agent().with_error_rate(0.0))?;
    let three = oracle_episode_reward(&EnvConfig::three_agent().with_error_rate(0.0))?;
    for (setting, got, want) in [("two-agent", two, 500.0), ("three-agent", three, 900.0)] {
        if got != want {
            report.record(serde_json::json!({"setting": setting, "reward": got, "expected": want}));
        }
    }
    report.summary = format!("oracle reward {two} (two-agent), {three} (three-agent)");
    Ok(report)
}
