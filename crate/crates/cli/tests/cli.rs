use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use vma3c::env::{reset, Action, EnvConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vma3c"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn serve_matches_native_env_over_random_sequences() {
    let mut child = bin()
        .args(["serve", "--er", "0.05"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut ask = |req: String| -> Value {
        writeln!(stdin, "{req}").unwrap();
        let mut line = String::new();
        stdout.read_line(&mut line).unwrap();
        serde_json::from_str(&line).unwrap()
    };

    let spec = ask(r#"{"cmd":"spec"}"#.into());
    assert_eq!(spec["protocol_version"], 1);
    assert_eq!(ask(r#"{"cmd":"warp"}"#.into())["error"], "unknown_cmd");
    assert_eq!(ask("{oops".into())["error"], "malformed_request");

    let b64 = base64::engine::general_purpose::STANDARD;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seq in 0..100u64 {
        let cfg = EnvConfig::two_agent().with_error_rate(0.05).with_seed(seq);
        let (mut native, frame) = reset(&cfg).unwrap();
        let r = ask(format!(r#"{{"cmd":"reset","seed":{seq}}}"#));
        assert_eq!(b64.decode(r["frame"].as_str().unwrap()).unwrap(), frame.pixels());
        let len = rng.gen_range(1..=200);
        for _ in 0..len {
            let a: Vec<usize> = (0..2).map(|_| rng.gen_range(0..5)).collect();
            let joint: Vec<Action> = a.iter().map(|&i| Action::from_index(i).unwrap()).collect();
            let want = native.step(&joint).unwrap();
            let got = ask(format!(r#"{{"cmd":"step","actions":[{},{}]}}"#, a[0], a[1]));
            assert_eq!(b64.decode(got["frame"].as_str().unwrap()).unwrap(), want.frame.pixels());
            let rewards: Vec<f64> = got["rewards"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_f64().unwrap())
                .collect();
            let native_rewards: Vec<f64> = want.rewards.iter().map(|&r| r as f64).collect();
            assert_eq!(rewards, native_rewards);
            assert_eq!(got["done"], want.done);
            if want.done {
                assert_eq!(ask(r#"{"cmd":"step","actions":[0,0]}"#.into())["error"], "episode_done");
                break;
            }
        }
    }
    drop(stdin);
    assert!(child.wait().unwrap().success());
}

#[test]
fn play_oracle_scores_500_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = run_ok(&["play", "oracle", "--episodes", "1", "--seed", "7", "--out", dir.to_str().unwrap()]);
        assert!(out.contains("total reward 500"), "{out}");
    }
    let frames = std::fs::read_dir(&a)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm"))
        .count();
    assert_eq!(frames, 200);
    let log = std::fs::read_to_string(a.join("trajectory.jsonl")).unwrap();
    let total: f64 = log
        .lines()
        .map(|l| {
            let v: Value = serde_json::from_str(l).unwrap();
            v["rewards"].as_array().unwrap().iter().map(|r| r.as_f64().unwrap()).sum::<f64>()
        })
        .sum();
    assert_eq!(log.lines().count(), 200);
    assert_eq!(total, 500.0);
    for name in ["trajectory.jsonl", "ep000_t000.pgm", "ep000_t123.pgm"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap());
    }
    assert_eq!(manifest(&a)["seed"], 7);
}

#[test]
fn check_suites_pass() {
    for (suite, cases) in [("premises", "200"), ("advantage", "200"), ("env", "1"), ("grad", "1")] {
        let out = run_ok(&["check", suite, "--cases", cases]);
        assert!(out.starts_with("PASS"), "{out}");
    }
}

#[test]
fn invalid_config_exits_2_with_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"workers\": 2,\n  \"bogus\": 1\n}\n").unwrap();
    let out = bin()
        .args(["train", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(tmp.path().join("run"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json:3:"), "{err}");
    assert!(!tmp.path().join("run").exists());
}

#[test]
fn corrupt_checkpoint_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    run_ok(&[
        "train", "--steps", "40", "--workers", "1", "--checkpoints", "1", "--eval-steps", "200",
        "--out", run.to_str().unwrap(),
    ]);
    let ckpt = run.join("checkpoints/ckpt_001.bin");
    let out = run_ok(&["eval", ckpt.to_str().unwrap(), "--steps", "200"]);
    assert!(out.contains("mean reward"), "{out}");

    let mut bytes = std::fs::read(&ckpt).unwrap();
    bytes[0] = b'X';
    std::fs::write(&ckpt, &bytes).unwrap();
    let status = bin().args(["eval", ckpt.to_str().unwrap()]).status().unwrap();
    assert_eq!(status.code(), Some(4));

    let status = bin()
        .args(["plot", tmp.path().to_str().unwrap(), "--out"])
        .arg(tmp.path().join("plot"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn train_then_plot_gives_valid_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (vismap, er) in [("on", "0.02"), ("off", "0.02"), ("on", "0.05"), ("off", "0.05")] {
        let dir = tmp.path().join(format!("{vismap}-{er}"));
        run_ok(&[
            "train", "--vismap", vismap, "--er", er, "--steps", "60", "--workers", "1",
            "--checkpoints", "3", "--eval-steps", "200", "--out", dir.to_str().unwrap(),
        ]);
        let m = manifest(&dir);
        assert_eq!(m["status"], "ok");
        assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
        assert_eq!(std::fs::read_to_string(dir.join("evals.csv")).unwrap().lines().count(), 4);
        runs.push(dir);
    }
    let out_dir = tmp.path().join("plot");
    let mut args = vec!["plot".to_string()];
    args.extend(runs.iter().map(|r| r.display().to_string()));
    args.extend(["--out".to_string(), out_dir.display().to_string()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    run_ok(&args);

    let svg = std::fs::read_to_string(out_dir.join("chart.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
    assert_eq!(polylines, 4);
    let titles: Vec<&str> = doc
        .descendants()
        .filter(|n| n.has_tag_name("text"))
        .filter_map(|n| n.text())
        .filter(|t| t.contains("ER ="))
        .collect();
    assert_eq!(titles.len(), 2);
    let merged = std::fs::read_to_string(out_dir.join("merged.csv")).unwrap();
    assert_eq!(merged.lines().count(), 1 + 4 * 3);
    assert!(out_dir.join("manifest.json").exists());
}
