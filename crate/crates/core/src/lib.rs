//! Greedy-shooter pursuit-evasion in the plane, with a deep Q-learning
//! evader-turned-hunter.
//!
//! * [`geometry`]: poses, angle wrapping, frame transforms, targeting sectors
//! * [`env`]: the two-agent environment and the pure-pursuit opponent
//! * [`nn`]: the Q-network, backpropagation, Adam, checkpoints
//! * [`dqn`]: replay buffer, exploration schedule, training loop
//! * [`eval`]: the fixed 80-case test suite and greedy evaluation
//! * [`trajectory`]: per-step CSV export

pub mod dqn;
pub mod env;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod nn;
pub mod rng;
pub mod trajectory;

pub use dqn::{train, ReplayBuffer, TrainConfig, Trainer, TrainingLog, Transition};
pub use env::{Action, EnvConfig, PursuitEnv, StepOutcome, Verdict, WorldState};
pub use error::{Error, Result};
pub use eval::{build_suite, evaluate, EvalReport, TestCase};
pub use geometry::{Observation, Pose, SectorSpec};
pub use nn::{Adam, Checkpoint, QNetwork, ARCHITECTURE};
