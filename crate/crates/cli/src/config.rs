//! Layered run configuration: defaults, then an optional flat JSON file,
//! then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pursuit_core::{EnvConfig, SectorSpec, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub rl_speeds: Vec<f64>,
    pub rl_turns: Vec<f64>,
    pub gs_speed: f64,
    pub gs_turn_limit: f64,
    pub targeting_range: f64,
    pub targeting_angle: f64,
    pub dt: f64,
    pub max_steps: u32,
    pub init_pos_stddev: f64,

    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub final_epsilon: f64,
    pub epsilon_decay_frames: u64,
    pub warmup_frames: u64,
    pub target_sync_frames: u64,
    pub test_every_frames: u64,
    pub max_frames: u64,
    pub buffer_capacity: usize,
    pub seed: u64,

    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub export_trajectories: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        let train = TrainConfig::default();
        Self {
            rl_speeds: env.rl_speeds,
            rl_turns: env.rl_turns,
            gs_speed: env.gs_speed,
            gs_turn_limit: env.gs_turn_limit,
            targeting_range: env.targeting.range(),
            targeting_angle: env.targeting.angle(),
            dt: env.dt,
            max_steps: env.max_steps,
            init_pos_stddev: env.init_pos_stddev,
            gamma: train.gamma,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            weight_decay: train.weight_decay,
            final_epsilon: train.final_epsilon,
            epsilon_decay_frames: train.epsilon_decay_frames,
            warmup_frames: train.warmup_frames,
            target_sync_frames: train.target_sync_frames,
            test_every_frames: train.test_every_frames,
            max_frames: train.max_frames,
            buffer_capacity: train.buffer_capacity,
            seed: train.seed,
            out_dir: PathBuf::from("out"),
            checkpoint: None,
            export_trajectories: false,
        }
    }
}

/// Flag values that override the config file when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub max_frames: Option<u64>,
    pub test_every_frames: Option<u64>,
    pub epsilon_decay_frames: Option<u64>,
    pub learning_rate: Option<f64>,
    pub gamma: Option<f64>,
    pub batch_size: Option<usize>,
    pub buffer_capacity: Option<usize>,
    pub weight_decay: Option<f64>,
    pub target_sync_frames: Option<u64>,
    pub warmup_frames: Option<u64>,
    pub checkpoint: Option<PathBuf>,
    pub export_trajectories: bool,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        cfg.apply(overrides);
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident <- $src:ident),* $(,)?) => {
                $(if let Some(v) = o.$src.clone() { self.$field = v; })*
            };
        }
        set!(
            out_dir <- out_dir,
            seed <- seed,
            max_frames <- max_frames,
            test_every_frames <- test_every_frames,
            epsilon_decay_frames <- epsilon_decay_frames,
            learning_rate <- learning_rate,
            gamma <- gamma,
            batch_size <- batch_size,
            buffer_capacity <- buffer_capacity,
            weight_decay <- weight_decay,
            target_sync_frames <- target_sync_frames,
            warmup_frames <- warmup_frames,
        );
        if o.checkpoint.is_some() {
            self.checkpoint = o.checkpoint.clone();
        }
        if o.export_trajectories {
            self.export_trajectories = true;
        }
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        let cfg = EnvConfig {
            rl_speeds: self.rl_speeds.clone(),
            rl_turns: self.rl_turns.clone(),
            gs_speed: self.gs_speed,
            gs_turn_limit: self.gs_turn_limit,
            targeting: SectorSpec::new(self.targeting_range, self.targeting_angle)?,
            dt: self.dt,
            max_steps: self.max_steps,
            init_pos_stddev: self.init_pos_stddev,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            gamma: self.gamma,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            final_epsilon: self.final_epsilon,
            epsilon_decay_frames: self.epsilon_decay_frames,
            warmup_frames: self.warmup_frames,
            target_sync_frames: self.target_sync_frames,
            test_every_frames: self.test_every_frames,
            max_frames: self.max_frames,
            buffer_capacity: self.buffer_capacity,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A file name inside the output directory.
    pub fn output_path(&self, file_name: &str) -> PathBuf {
        debug_assert!(!file_name.contains(['/', '\\']));
        self.out_dir.join(file_name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
