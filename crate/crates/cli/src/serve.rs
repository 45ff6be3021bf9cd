use std::io::{self, BufRead, Write};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use clap::Args;
use serde::Deserialize;
use serde_json::{json, Value};
use vma3c::env::{Action, EnvConfig, EnvState, N_ACTIONS};
use vma3c::frame::Frame;

use crate::train::{apply_common, load_config};
use crate::{CliError, CliResult, Overrides};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Overrides,
}

#[derive(Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
enum Request {
    Spec,
    Reset {
        #[serde(default)]
        seed: u64,
    },
    Step { actions: Vec<i64> },
}

fn error(kind: &str) -> Value {
    json!({ "error": kind })
}

fn observation(frame: &Frame, rewards: &[f32], done: bool) -> Value {
    json!({
        "frame": B64.encode(frame.pixels()),
        "rewards": rewards.iter().map(|&r| r as f64).collect::<Vec<_>>(),
        "done": done,
    })
}

/// One served environment.
pub struct Server {
    config: Arc<EnvConfig>,
    state: Option<EnvState>,
}

impl Server {
    pub fn new(config: EnvConfig) -> CliResult<Self> {
        config.validate()?;
        Ok(Self {
            config: Arc::new(config),
            state: None,
        })
    }

    fn spec(&self) -> Value {
        let n = self.config.n_robots();
        json!({
            "protocol_version": PROTOCOL_VERSION,
            "n_agents": n,
            "n_actions": N_ACTIONS,
            "frame_width": vma3c::env::FRAME_SIZE,
            "frame_height": vma3c::env::FRAME_SIZE,
            "episode_length": self.config.episode_length,
            "error_rate": self.config.error_rate,
        })
    }

    /// Answers one request line. Never fails; problems become error
    /// responses.
    pub fn handle(&mut self, line: &str) -> Value {
        let raw: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(_) => return error("malformed_request"),
        };
        let known = matches!(
            raw.get("cmd").and_then(Value::as_str),
            Some("spec" | "reset" | "step")
        );
        if raw.get("cmd").is_some_and(Value::is_string) && !known {
            return error("unknown_cmd");
        }
        let req: Request = match serde_json::from_value(raw) {
            Ok(r) => r,
            Err(_) => return error("malformed_request"),
        };
        match req {
            Request::Spec => self.spec(),
            Request::Reset { seed } => match EnvState::reset(self.config.clone(), seed) {
                Ok((state, frame)) => {
                    let zeros = vec![0.0; state.n_robots()];
                    self.state = Some(state);
                    observation(&frame, &zeros, false)
                }
                Err(e) => json!({ "error": "reset_failed", "detail": e.to_string() }),
            },
            Request::Step { actions } => {
                let Some(state) = self.state.as_mut() else {
                    return error("not_reset");
                };
                if state.is_done() {
                    return error("episode_done");
                }
                if actions.len() != state.n_robots() {
                    return error("invalid_actions");
                }
                let joint: Option<Vec<Action>> = actions
                    .iter()
                    .map(|&a| usize::try_from(a).ok().and_then(|a| Action::from_index(a).ok()))
                    .collect();
                let Some(joint) = joint else {
                    return error("invalid_actions");
                };
                match state.step(&joint) {
                    Ok(res) => observation(&res.frame, &res.rewards, res.done),
                    Err(e) => json!({ "error": "step_failed", "detail": e.to_string() }),
                }
            }
        }
    }
}

/// Reads requests line by line until end of input, writing one response
/// line per non-blank request.
pub fn serve_loop<R: BufRead, W: Write>(server: &mut Server, input: R, mut output: W) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = server.handle(&line);
        serde_json::to_writer(&mut output, &resp)?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

pub fn run(args: ServeArgs) -> CliResult {
    let mut cfg = load_config(args.common.config.as_deref())?;
    apply_common(&mut cfg, &args.common);
    let mut server = Server::new(cfg.env)?;
    let stdin = io::stdin();
    serve_loop(&mut server, stdin.lock(), io::stdout().lock())
        .map_err(|e| CliError::new(1, e.to_string()))
}
