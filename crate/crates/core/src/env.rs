//! The greedy-shooter pursuit-evasion environment.
//!
//! Two agents move in an unbounded plane. Each step both agents pick a turn
//! and a speed from the start-of-step state, rotate instantly, then translate
//! in a straight line for `dt`. Capture is checked on the end-of-step poses.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{in_sector, to_relative_frame, wrap_angle, Observation, Pose, SectorSpec};

/// Number of discrete actions available to the learning agent.
pub const RL_ACTION_COUNT: usize = 10;

/// Simulation parameters. [`Default`] gives the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Speed choices, in action-index order (speed-major).
    pub rl_speeds: Vec<f64>,
    /// Turn choices, in action-index order within each speed block.
    pub rl_turns: Vec<f64>,
    pub gs_speed: f64,
    /// Greedy shooter turns are clamped to `[-gs_turn_limit, gs_turn_limit]`.
    pub gs_turn_limit: f64,
    pub targeting: SectorSpec,
    pub dt: f64,
    pub max_steps: u32,
    /// Standard deviation of the learner's initial x and y.
    pub init_pos_stddev: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            rl_speeds: vec![0.05, 0.1],
            rl_turns: vec![-PI / 6.0, -PI / 12.0, 0.0, PI / 12.0, PI / 6.0],
            gs_speed: 0.1,
            gs_turn_limit: PI / 6.0,
            targeting: SectorSpec::new(0.25, PI / 6.0).expect("valid default sector"),
            dt: 1.0,
            max_steps: 100,
            init_pos_stddev: 0.5,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.rl_speeds.is_empty() || self.rl_turns.is_empty() {
            return bad("learner action set is empty".into());
        }
        if self.action_count() != RL_ACTION_COUNT {
            return bad(format!(
                "learner action set has {} entries, the Q-network expects {RL_ACTION_COUNT}",
                self.action_count()
            ));
        }
        let all_finite = self
            .rl_speeds
            .iter()
            .chain(&self.rl_turns)
            .chain([
                &self.gs_speed,
                &self.gs_turn_limit,
                &self.dt,
                &self.init_pos_stddev,
            ])
            .all(|v| v.is_finite());
        if !all_finite {
            return bad("non-finite environment parameter".into());
        }
        if self.rl_speeds.iter().any(|&s| s < 0.0) || self.gs_speed < 0.0 {
            return bad("speeds must be non-negative".into());
        }
        if self.gs_turn_limit < 0.0 || self.dt <= 0.0 || self.init_pos_stddev < 0.0 {
            return bad("turn limit, dt and init stddev must be positive".into());
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        Ok(())
    }

    pub fn action_count(&self) -> usize {
        self.rl_speeds.len() * self.rl_turns.len()
    }

    /// Decodes a learner action index: speed-major, turn-minor.
    pub fn rl_action(&self, index: usize) -> Result<Action> {
        let count = self.action_count();
        if index >= count {
            return Err(Error::ActionOutOfRange { index, count });
        }
        let turns = self.rl_turns.len();
        Ok(Action {
            turn: self.rl_turns[index % turns],
            speed: self.rl_speeds[index / turns],
        })
    }

    /// Whether an action index selects the slowest available speed.
    pub fn is_slowest_speed(&self, index: usize) -> bool {
        let block = index / self.rl_turns.len();
        let slowest = self.rl_speeds.iter().cloned().fold(f64::INFINITY, f64::min);
        self.rl_speeds.get(block) == Some(&slowest)
    }
}

/// A turn (radians) applied at the start of a step, and the speed (m/s) held through it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub turn: f64,
    pub speed: f64,
}

/// Full environment state: both poses plus the elapsed step count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub rl: Pose,
    pub gs: Pose,
    pub step_count: u32,
}

impl WorldState {
    pub fn new(rl: Pose, gs: Pose) -> Self {
        Self {
            rl,
            gs,
            step_count: 0,
        }
    }

    pub fn separation(&self) -> f64 {
        self.rl.distance_to(self.gs.position())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Ongoing,
    RlWin,
    RlLoss,
    MutualCapture,
    Timeout,
}

impl Verdict {
    pub fn is_terminal(self) -> bool {
        self != Verdict::Ongoing
    }

    pub fn reward(self) -> f64 {
        if self == Verdict::RlWin {
            1.0
        } else {
            0.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Ongoing => "Ongoing",
            Verdict::RlWin => "RlWin",
            Verdict::RlLoss => "RlLoss",
            Verdict::MutualCapture => "MutualCapture",
            Verdict::Timeout => "Timeout",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: bool,
    pub verdict: Verdict,
}

impl StepOutcome {
    fn from_verdict(observation: Observation, verdict: Verdict) -> Self {
        Self {
            observation,
            reward: verdict.reward(),
            terminal: verdict.is_terminal(),
            verdict,
        }
    }
}

/// Symmetry-reduced observation: the learner's pose in the shooter's frame.
pub fn observe(state: &WorldState) -> Observation {
    to_relative_frame(&state.gs, &state.rl)
}

/// Pure pursuit: turn toward the learner's start-of-step position, clamped
/// to the turn limit. A coincident learner yields no turn.
pub fn gs_policy(cfg: &EnvConfig, state: &WorldState) -> Action {
    let turn = match state.gs.bearing_to(state.rl.position()) {
        None => 0.0,
        Some(bearing) => {
            wrap_angle(bearing - state.gs.heading).clamp(-cfg.gs_turn_limit, cfg.gs_turn_limit)
        }
    };
    Action {
        turn,
        speed: cfg.gs_speed,
    }
}

fn move_agent(pose: &Pose, action: Action, dt: f64) -> Pose {
    let heading = wrap_angle(pose.heading + action.turn);
    let (s, c) = heading.sin_cos();
    let dist = action.speed * dt;
    Pose {
        x: pose.x + dist * c,
        y: pose.y + dist * s,
        heading,
    }
}

/// Scores a state by which agents hold the other in their sector.
pub fn judge(cfg: &EnvConfig, state: &WorldState) -> Verdict {
    let rl_hits = in_sector(&state.rl, state.gs.position(), &cfg.targeting);
    let gs_hits = in_sector(&state.gs, state.rl.position(), &cfg.targeting);
    match (rl_hits, gs_hits) {
        (true, true) => Verdict::MutualCapture,
        (true, false) => Verdict::RlWin,
        (false, true) => Verdict::RlLoss,
        (false, false) if state.step_count >= cfg.max_steps => Verdict::Timeout,
        (false, false) => Verdict::Ongoing,
    }
}

/// One simultaneous-move transition. Does not check terminality of `state`.
pub fn transition(
    cfg: &EnvConfig,
    state: &WorldState,
    rl_action: Action,
) -> (WorldState, StepOutcome) {
    let gs_action = gs_policy(cfg, state);
    let next = WorldState {
        rl: move_agent(&state.rl, rl_action, cfg.dt),
        gs: move_agent(&state.gs, gs_action, cfg.dt),
        step_count: state.step_count + 1,
    };
    let verdict = judge(cfg, &next);
    (next, StepOutcome::from_verdict(observe(&next), verdict))
}

/// Stateful wrapper around [`transition`] with reset and episode bookkeeping.
#[derive(Debug, Clone)]
pub struct PursuitEnv {
    cfg: EnvConfig,
    state: WorldState,
    done: bool,
}

impl PursuitEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: WorldState::new(Pose::origin(), Pose::origin()),
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Shooter at the origin facing +x; learner position Gaussian around the
    /// origin, heading uniform.
    pub fn reset_random<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (WorldState, Observation) {
        let normal = Normal::new(0.0, self.cfg.init_pos_stddev).expect("validated stddev");
        let x = normal.sample(rng);
        let y = normal.sample(rng);
        // uniform on [-PI, PI); the wrap moves the single point -PI to PI
        let heading = wrap_angle(rng.random_range(-PI..PI));
        self.state = WorldState::new(Pose { x, y, heading }, Pose::origin());
        self.done = false;
        (self.state, observe(&self.state))
    }

    pub fn reset_fixed(&mut self, init: WorldState) -> Result<(WorldState, Observation)> {
        if init.step_count != 0 {
            return Err(Error::NonZeroStepCount(init.step_count));
        }
        if !init.rl.is_valid() || !init.gs.is_valid() {
            return Err(Error::InvalidConfig(
                "initial poses must be finite with wrapped headings".into(),
            ));
        }
        self.state = init;
        self.done = false;
        Ok((self.state, observe(&self.state)))
    }

    pub fn step(&mut self, action_index: usize) -> Result<StepOutcome> {
        let action = self.cfg.rl_action(action_index)?;
        self.step_action(action)
    }

    pub fn step_action(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeOver);
        }
        let (next, outcome) = transition(&self.cfg, &self.state, action);
        self.state = next;
        self.done = outcome.terminal;
        Ok(outcome)
    }

    pub fn observe(&self) -> Observation {
        observe(&self.state)
    }
}
