//! One PASS/FAIL line per acceptance criterion.
//!
//! The desk-scale learning comparison trains six full runs and dominates
//! the runtime (about an hour on one core). `VMA3C_DESK_STEPS` shrinks its
//! budget for quick local runs; the printed line always states the budget
//! actually used.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use vma3c::a3c::{advantage_target, Trajectory, Transition};
use vma3c::autodiff::GradientSet;
use vma3c::env::{reset, scripted_oracle, Action, EnvConfig};
use vma3c::gradcheck::{check_gradients, GradCheckConfig};
use vma3c::optim::clip_global_norm;
use vma3c::suites::random_state;
use vma3c::tensor::Tensor;
use vma3c::trainer::{train, train_with_hooks, TrainConfig, TrainHooks};
use vma3c::vismap::{compose_holder, verify_premises, HolderLayout, StatusSchema};

/// Writes past the test harness's output capture so the verdicts show up
/// in a plain `cargo test` run.
fn emit(line: String) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

struct Ledger {
    hard_failures: Vec<&'static str>,
}

impl Ledger {
    fn report(&mut self, name: &'static str, passed: bool, detail: String) {
        emit(format!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" }));
        if !passed {
            self.hard_failures.push(name);
        }
    }

    fn report_soft(&mut self, name: &'static str, passed: bool, detail: String) {
        emit(format!("{} {name}: {detail} (soft)", if passed { "PASS" } else { "FAIL" }));
    }
}

fn episode_reward(cfg: &EnvConfig, mut pick: impl FnMut(&vma3c::env::EnvState) -> Vec<Action>) -> f64 {
    let (mut state, _) = reset(cfg).unwrap();
    let mut total = 0.0;
    while !state.is_done() {
        let a = pick(&state);
        total += state.step(&a).unwrap().rewards.iter().map(|&r| r as f64).sum::<f64>();
    }
    total
}

fn env_optimality(l: &mut Ledger) {
    let t = Instant::now();
    let r = episode_reward(&EnvConfig::two_agent().with_error_rate(0.0), |s| scripted_oracle(s).unwrap());
    let secs = t.elapsed().as_secs_f64();
    l.report(
        "env_optimality",
        r == 500.0 && secs < 1.0,
        format!("oracle reward {r} (want exactly 500) in {secs:.3} s (limit 1 s)"),
    );
}

fn env_bound(l: &mut Ledger) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let ers = [0.0, 0.01, 0.02, 0.05, 0.1, 0.3];
    let (mut max2, mut max3) = (f64::MIN, f64::MIN);
    for ep in 0..10_000u64 {
        for (base, max) in [(EnvConfig::two_agent(), &mut max2), (EnvConfig::three_agent(), &mut max3)] {
            let cfg = base.with_error_rate(ers[ep as usize % ers.len()]).with_seed(rng.gen());
            let r = episode_reward(&cfg, |s| {
                (0..s.n_robots()).map(|_| Action::ALL[rng.gen_range(0..5)]).collect()
            });
            *max = max.max(r);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    l.report(
        "env_bound",
        max2 <= 500.0 && max3 <= 1000.0 && secs < 120.0,
        format!(
            "10000 random episodes per setting: max two-agent {max2} (<= 500), max three-agent {max3} (<= 1000) in {secs:.1} s (limit 120 s)"
        ),
    );
}

fn three_agent_oracle(l: &mut Ledger) {
    let r = episode_reward(&EnvConfig::three_agent().with_error_rate(0.0), |s| scripted_oracle(s).unwrap());
    l.report(
        "three_agent_oracle",
        r == 900.0,
        format!("oracle reward {r} (pinned at 900, band 880..920)"),
    );
}

fn premise_suite(l: &mut Ledger) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let holder = HolderLayout::default();
    let mut failures = 0;
    for _ in 0..1000 {
        let (state, frame) = random_state(&mut rng).unwrap();
        let n_pickup = state.config().n_pickup;
        let table = StatusSchema::milk_factory(n_pickup).compile().unwrap();
        let mut statuses: Vec<&str> = (0..n_pickup)
            .map(|_| ["idle", "busy", "failed"][rng.gen_range(0..3)])
            .collect();
        statuses[rng.gen_range(0..n_pickup)] = ["busy", "failed"][rng.gen_range(0..2)];
        statuses.push(["idle", "busy"][rng.gen_range(0..2)]);
        let map = table.visual_map(&statuses).unwrap();
        let c = compose_holder(&frame, &map, &holder).unwrap();

        let regions: Vec<_> = c.glyph_regions.iter().map(|g| g.rect).collect();
        let lit = |x: usize, y: usize| c.image.get(x, y) != 0;
        let any_lit = |r: &vma3c::frame::Rect| r.pixels().any(|(x, y)| lit(x, y));
        let all_pixels: Vec<_> = c.image.bounds().pixels().collect();
        let total_lit = all_pixels.iter().filter(|&&(x, y)| lit(x, y)).count();

        // frame is kept and is not the whole picture
        let p1 = any_lit(&c.frame_region)
            && all_pixels.iter().any(|&(x, y)| lit(x, y) && !c.frame_region.contains(x, y));
        // every glyph is present and none is the whole picture
        let p2 = regions.iter().all(|r| {
            let own = r.pixels().filter(|&(x, y)| lit(x, y)).count();
            c.image.bounds().contains_rect(r) && own > 0 && own < total_lit
        });
        // no lit pixel is shared or unclaimed
        let p3 = all_pixels.iter().filter(|&&(x, y)| lit(x, y)).all(|&(x, y)| {
            let owners = regions.iter().filter(|r| r.contains(x, y)).count()
                + usize::from(c.frame_region.contains(x, y));
            owners == 1
        });
        let kept = all_pixels
            .iter()
            .filter(|&&(x, y)| !regions.iter().any(|r| r.contains(x, y)))
            .all(|&(x, y)| c.image.get(x, y) == frame.get(x, y));
        if !(p1 && p2 && p3 && kept && verify_premises(&c).all_passed()) {
            failures += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    l.report(
        "premise_suite",
        failures == 0 && secs < 10.0,
        format!("{failures} of 1000 compositions violate a premise in {secs:.2} s (limit 10 s)"),
    );
}

fn gradient_suite(l: &mut Ledger) {
    let t = Instant::now();
    let (mut worst, mut checked, mut failed) = (0.0f64, 0, 0);
    for seed in 0..3 {
        let r = check_gradients(&GradCheckConfig {
            seed,
            ..Default::default()
        })
        .unwrap();
        worst = worst.max(r.max_rel_err());
        checked += r.checked();
        failed += usize::from(!r.passed());
    }
    let secs = t.elapsed().as_secs_f64();
    l.report(
        "gradient_suite",
        failed == 0 && worst <= 1e-3 && secs < 300.0,
        format!(
            "actor, critic, entropy and total terms over {checked} partials: max relative error {worst:.2e} (<= 1e-3) in {secs:.1} s"
        ),
    );
}

fn advantage_oracle(l: &mut Ledger) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let len = rng.gen_range(1..=5);
        let rewards: Vec<f64> = (0..len).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let terminal = rng.gen_bool(0.5);
        let v: f64 = rng.gen_range(-50.0..50.0);
        let gamma: f64 = rng.gen_range(0.5..=1.0);
        let traj = Trajectory {
            transitions: rewards
                .iter()
                .map(|&reward| Transition {
                    actions: vec![0],
                    reward,
                })
                .collect(),
            terminal,
        };
        let got = advantage_target(&traj, v, gamma).unwrap();
        for t in 0..len {
            // explicit product of discounts rather than powi
            let mut want = 0.0;
            let mut disc = 1.0;
            for r in &rewards[t..] {
                want += disc * r;
                disc *= gamma;
            }
            if !terminal {
                want += disc * v;
            }
            worst = worst.max((got[t] - want).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    l.report(
        "advantage_oracle",
        worst <= 1e-9 && secs < 5.0,
        format!("max abs error {worst:.2e} over 1000 trajectories (<= 1e-9) in {secs:.3} s"),
    );
}

fn clipping(l: &mut Ledger) {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let (mut worst_ratio, mut identity_ok, mut cases) = (0.0f64, true, 0);
    for _ in 0..2000 {
        let scale = 10f64.powf(rng.gen_range(-3.0..4.0));
        let tensors: Vec<Tensor<f32>> = (0..rng.gen_range(1..5))
            .map(|_| {
                let n = rng.gen_range(1..50);
                let data = (0..n).map(|_| (rng.gen_range(-1.0..1.0) * scale) as f32).collect();
                Tensor::new(vec![n], data).unwrap()
            })
            .collect();
        let before: Vec<Vec<f32>> = tensors.iter().map(|t| t.data().to_vec()).collect();
        let pre = before.iter().flatten().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        let mut g = GradientSet::from_tensors(tensors);
        clip_global_norm(&mut g, 40.0).unwrap();
        let after: Vec<Vec<f32>> = g.tensors().iter().map(|t| t.data().to_vec()).collect();
        let post = after.iter().flatten().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        worst_ratio = worst_ratio.max(post / 40.0);
        if pre <= 40.0 && before != after {
            identity_ok = false;
        }
        cases += 1;
    }
    l.report(
        "clipping",
        worst_ratio <= 1.0 + 1e-6 && identity_ok,
        format!(
            "{cases} gradient sets: max post-clip norm / 40 = {worst_ratio:.9}, identity below threshold: {identity_ok}"
        ),
    );
}

fn determinism(l: &mut Ledger) {
    let cfg = TrainConfig {
        total_steps: 2000,
        workers: 1,
        checkpoints: 4,
        seed: 99,
        env: EnvConfig::two_agent().with_error_rate(0.02),
        ..Default::default()
    };
    let hooks = TrainHooks {
        skip_eval: true,
        ..Default::default()
    };
    let digests = |dir: &std::path::Path| -> Vec<String> {
        let out = train_with_hooks(&cfg, dir, &hooks).unwrap();
        out.checkpoints
            .iter()
            .map(|c| {
                let bytes = std::fs::read(&c.path).unwrap();
                Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
            })
            .collect()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (da, db) = (digests(a.path()), digests(b.path()));
    l.report(
        "determinism",
        da == db && da.len() == 4,
        format!("{} checkpoints, sha256 identical across two single-worker runs: {}", da.len(), da == db),
    );
}

fn desk_scale_learning(l: &mut Ledger) {
    let steps: u64 = std::env::var("VMA3C_DESK_STEPS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(200_000);
    let t = Instant::now();
    let mut finals = [Vec::new(), Vec::new()];
    for seed in 1..=3u64 {
        for (k, vismap) in [true, false].into_iter().enumerate() {
            let cfg = TrainConfig {
                total_steps: steps,
                workers: 8,
                checkpoints: 1,
                eval_steps: 10_000,
                seed,
                vismap_enabled: vismap,
                env: EnvConfig::two_agent().with_error_rate(0.01),
                ..Default::default()
            };
            let dir = tempfile::tempdir().unwrap();
            let out = train(&cfg, dir.path()).unwrap();
            let eval = out.checkpoints.last().and_then(|c| c.eval).unwrap();
            finals[k].push(eval.mean_reward);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (vm, base) = (mean(&finals[0]), mean(&finals[1]));
    let secs = t.elapsed().as_secs_f64();
    l.report_soft(
        "desk_scale_learning",
        vm >= 1.5 * base && vm > base,
        format!(
            "{steps} steps x 8 workers, 3 seeds: VMA3C final mean {vm:.1} {:?} vs baseline {base:.1} {:?}, need >= 1.5x, took {secs:.0} s",
            finals[0], finals[1]
        ),
    );
}

#[test]
fn acceptance() {
    let mut l = Ledger {
        hard_failures: Vec::new(),
    };
    env_optimality(&mut l);
    env_bound(&mut l);
    three_agent_oracle(&mut l);
    premise_suite(&mut l);
    gradient_suite(&mut l);
    advantage_oracle(&mut l);
    clipping(&mut l);
    determinism(&mut l);
    desk_scale_learning(&mut l);
    assert!(l.hard_failures.is_empty(), "failed: {:?}", l.hard_failures);
}
