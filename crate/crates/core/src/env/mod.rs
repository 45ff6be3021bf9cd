//! The Milk Factory gridworld.
//!
//! A conveyor belt runs along one row of the grid, carrying milk bottles from
//! its head (column 0) towards its end. Pick-up robots wait below the belt,
//! pick a bottle, carry it to a box and come back. Every action a working
//! pick-up robot takes may break it with probability `error_rate`; a broken
//! robot freezes until the mechanic robot stands next to it and repairs it.
//!
//! Robots act simultaneously. Within a step the order is: movement,
//! interactions (pick, drop, fix), failure sampling, belt advance, spawn.

mod layout;
mod oracle;
mod render;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, contract, Result};
use crate::frame::Frame;

pub use layout::{Cell, Layout, PickupSpot};
pub use oracle::scripted_oracle;
pub use render::{intensity, render, RenderGeometry, FRAME_SIZE};

/// Reward for a successful pick, drop or fix.
pub const REWARD: f32 = 10.0;

/// Number of actions available to every robot.
pub const N_ACTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    /// Pick/drop for pick-up robots, fix for the mechanic.
    Interact,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Interact,
    ];

    pub fn from_index(index: usize) -> Result<Action> {
        Action::ALL
            .get(index)
            .copied()
            .ok_or_else(|| contract(format!("action index {index} out of range")))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotKind {
    Pickup,
    Mechanic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Idle,
    /// Carrying a bottle (pick-up robots) or having a robot to repair
    /// (mechanic).
    Busy,
    Failed,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Idle => "idle",
            Status::Busy => "busy",
            Status::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Pick-up robots (1 = two-agent setting, 2 = three-agent setting).
    #[serde(default = "default_n_pickup")]
    pub n_pickup: usize,
    /// Failure probability per pick-up robot action.
    #[serde(default = "default_error_rate")]
    pub error_rate: f64,
    #[serde(default = "default_episode_length")]
    pub episode_length: u32,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to the standard layout for `n_pickup`.
    #[serde(default)]
    pub layout: Option<Layout>,
}

fn default_n_pickup() -> usize {
    1
}

fn default_error_rate() -> f64 {
    0.01
}

fn default_episode_length() -> u32 {
    200
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::two_agent()
    }
}

impl EnvConfig {
    /// One pick-up robot and one mechanic.
    pub fn two_agent() -> Self {
        Self {
            n_pickup: 1,
            error_rate: default_error_rate(),
            episode_length: default_episode_length(),
            seed: 0,
            layout: None,
        }
    }

    /// Two pick-up robots and one mechanic.
    pub fn three_agent() -> Self {
        Self {
            n_pickup: 2,
            ..Self::two_agent()
        }
    }

    pub fn with_error_rate(mut self, error_rate: f64) -> Self {
        self.error_rate = error_rate;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n_robots(&self) -> usize {
        self.n_pickup + 1
    }

    /// The explicit layout, or the standard one for `n_pickup`.
    pub fn resolved_layout(&self) -> Result<Layout> {
        match &self.layout {
            Some(l) => Ok(l.clone()),
            None => Layout::standard(self.n_pickup),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.error_rate) {
            return Err(config(format!(
                "error_rate must lie in [0, 1], got {}",
                self.error_rate
            )));
        }
        if !(1..=2).contains(&self.n_pickup) {
            return Err(config(format!(
                "n_pickup must be 1 or 2, got {}",
                self.n_pickup
            )));
        }
        if self.episode_length == 0 {
            return Err(config("episode_length must be positive"));
        }
        let layout = self.resolved_layout()?;
        if layout.pickups.len() != self.n_pickup {
            return Err(config(format!(
                "layout places {} pick-up robots, config asks for {}",
                layout.pickups.len(),
                self.n_pickup
            )));
        }
        layout.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Robot {
    pub position: Cell,
    pub kind: RobotKind,
    pub carrying: bool,
    pub failed: bool,
}

/// Per-episode bookkeeping used by the conservation checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeCounters {
    pub picks: u32,
    pub drops: u32,
    /// Bottles destroyed because their carrier failed.
    pub lost: u32,
    pub fixes: u32,
    pub failures: u32,
}

#[derive(Debug, PartialEq)]
pub struct StepResult {
    pub frame: Frame,
    pub rewards: Vec<f32>,
    pub done: bool,
}

/// Complete world state. Everything except `rng` determines the rendered
/// frame.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    config: Arc<EnvConfig>,
    layout: Arc<Layout>,
    step_count: u32,
    robots: Vec<Robot>,
    belt: Vec<bool>,
    counters: EpisodeCounters,
    rng: ChaCha8Rng,
}

/// Starts an episode seeded from `config.seed`.
pub fn reset(config: &EnvConfig) -> Result<(EnvState, Frame)> {
    EnvState::reset(Arc::new(config.clone()), config.seed)
}

impl EnvState {
    /// Starts an episode from an already shared config with an explicit seed.
    pub fn reset(config: Arc<EnvConfig>, seed: u64) -> Result<(EnvState, Frame)> {
        config.validate()?;
        let layout = Arc::new(config.resolved_layout()?);
        let mut robots: Vec<Robot> = layout
            .pickups
            .iter()
            .map(|p| Robot {
                position: p.spawn,
                kind: RobotKind::Pickup,
                carrying: false,
                failed: false,
            })
            .collect();
        robots.push(Robot {
            position: layout.mechanic_spawn,
            kind: RobotKind::Mechanic,
            carrying: false,
            failed: false,
        });
        let belt = layout.initial_belt();
        let state = EnvState {
            config,
            layout,
            step_count: 0,
            robots,
            belt,
            counters: EpisodeCounters::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let frame = render(&state);
        Ok((state, frame))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn shared_config(&self) -> Arc<EnvConfig> {
        Arc::clone(&self.config)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn step_count(&self) -> u32 {
        self.step_count
    }

    pub fn robots(&self) -> &[Robot] {
        &self.robots
    }

    pub fn n_robots(&self) -> usize {
        self.robots.len()
    }

    /// Bottle presence per belt column.
    pub fn belt(&self) -> &[bool] {
        &self.belt
    }

    pub fn counters(&self) -> EpisodeCounters {
        self.counters
    }

    pub fn is_done(&self) -> bool {
        self.step_count >= self.config.episode_length
    }

    pub fn bottles_in_hand(&self) -> u32 {
        self.robots.iter().filter(|r| r.carrying).count() as u32
    }

    /// Marks pick-up robot `index` as failed, losing any carried bottle.
    pub fn inject_failure(&mut self, index: usize) -> Result<()> {
        let robot = self
            .robots
            .get_mut(index)
            .ok_or_else(|| contract(format!("robot index {index} out of range")))?;
        if robot.kind != RobotKind::Pickup {
            return Err(contract("only pick-up robots can fail"));
        }
        if !robot.failed {
            robot.failed = true;
            self.counters.failures += 1;
            if robot.carrying {
                robot.carrying = false;
                self.counters.lost += 1;
            }
        }
        Ok(())
    }

    /// Status of robot `index` as seen by the visual map.
    pub fn agent_status(&self, index: usize) -> Result<Status> {
        let robot = self
            .robots
            .get(index)
            .ok_or_else(|| contract(format!("robot index {index} out of range")))?;
        Ok(match robot.kind {
            RobotKind::Pickup if robot.failed => Status::Failed,
            RobotKind::Pickup if robot.carrying => Status::Busy,
            RobotKind::Pickup => Status::Idle,
            RobotKind::Mechanic => {
                if self.robots.iter().any(|r| r.failed) {
                    Status::Busy
                } else {
                    Status::Idle
                }
            }
        })
    }

    pub fn statuses(&self) -> Vec<Status> {
        (0..self.robots.len())
            .map(|i| self.agent_status(i).expect("index in range"))
            .collect()
    }

    pub fn render(&self) -> Frame {
        render(self)
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<StepResult> {
        if self.is_done() {
            return Err(contract("step called on a finished episode"));
        }
        if actions.len() != self.robots.len() {
            return Err(contract(format!(
                "{} actions for {} robots",
                actions.len(),
                self.robots.len()
            )));
        }
        let mut rewards = vec![0.0; self.robots.len()];
        // Robots broken at the start of the step ignore their action and do
        // not roll for failure.
        let acting: Vec<bool> = self.robots.iter().map(|r| !r.failed).collect();

        self.resolve_moves(actions, &acting);

        for i in 0..self.robots.len() {
            if !acting[i] || actions[i] != Action::Interact {
                continue;
            }
            let robot = self.robots[i];
            match robot.kind {
                RobotKind::Pickup if robot.carrying => {
                    if self.layout.adjacent_to_box(robot.position) {
                        self.robots[i].carrying = false;
                        self.counters.drops += 1;
                        rewards[i] = REWARD;
                    }
                }
                RobotKind::Pickup => {
                    if let Some(col) = self.layout.adjacent_belt_column(robot.position, &self.belt) {
                        self.belt[col] = false;
                        self.robots[i].carrying = true;
                        self.counters.picks += 1;
                        rewards[i] = REWARD;
                    }
                }
                RobotKind::Mechanic => {
                    let target = (0..self.robots.len()).find(|&j| {
                        self.robots[j].failed && self.robots[j].position.is_adjacent(robot.position)
                    });
                    if let Some(j) = target {
                        self.robots[j].failed = false;
                        self.counters.fixes += 1;
                        rewards[i] = REWARD;
                    }
                }
            }
        }

        let error_rate = self.config.error_rate;
        for i in 0..self.robots.len() {
            if self.robots[i].kind != RobotKind::Pickup || !acting[i] {
                continue;
            }
            let roll: f64 = self.rng.gen();
            if roll < error_rate {
                self.inject_failure(i)?;
            }
        }

        self.step_count += 1;
        self.layout.advance_belt(&mut self.belt, self.step_count);

        Ok(StepResult {
            frame: render(self),
            rewards,
            done: self.is_done(),
        })
    }

    /// Simultaneous movement. Moves into walls, the belt, boxes or cells
    /// held by a stationary robot fail; when several robots target the same
    /// cell the lowest index wins; two robots may not swap cells.
    fn resolve_moves(&mut self, actions: &[Action], acting: &[bool]) {
        let n = self.robots.len();
        let current: Vec<Cell> = self.robots.iter().map(|r| r.position).collect();
        let mut target: Vec<Cell> = (0..n)
            .map(|i| {
                if !acting[i] {
                    return current[i];
                }
                match self.layout.neighbor(current[i], actions[i]) {
                    Some(c) if self.layout.is_walkable(c) => c,
                    _ => current[i],
                }
            })
            .collect();

        loop {
            let mut changed = false;
            for j in 0..n {
                if target[j] == current[j] {
                    continue;
                }
                let blocked = (0..n).any(|k| {
                    k != j
                        && ((target[k] == current[k] && current[k] == target[j])
                            || (target[k] == current[j] && current[k] == target[j])
                            || (k < j && target[k] == target[j]))
                });
                if blocked {
                    target[j] = current[j];
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for (robot, cell) in self.robots.iter_mut().zip(target) {
            robot.position = cell;
        }
    }
}

/// One line of the newline-delimited JSON trajectory log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: u32,
    pub actions: Vec<Action>,
    pub rewards: Vec<f32>,
    pub statuses: Vec<Status>,
}
