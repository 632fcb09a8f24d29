//! Deep Q-learning: replay buffer, epsilon-greedy exploration, Bellman
//! targets from a periodically synced target network, and the frame loop
//! that interleaves training with greedy evaluation on the fixed suite.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, PursuitEnv};
use crate::error::{Error, Result};
use crate::eval::{build_suite, evaluate, window_mean, EvalReport, TestCase};
use crate::geometry::Observation;
use crate::nn::{Adam, Batch, Gradients, QNetwork, Workspace};
use crate::rng::{child_rng, Stream};

/// Episode rewards averaged for the smoothed training curve.
pub const SMOOTHING_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Observation,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer; once full, the oldest transition is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 20)),
            next: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        debug_assert!(t.reward == 0.0 || t.terminal, "rewards are terminal-only");
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity {
            0
        } else {
            self.next
        };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Uniform sampling with replacement into `out` (cleared first).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, out: &mut Vec<Transition>) {
        out.clear();
        if self.items.is_empty() {
            return;
        }
        out.extend((0..n).map(|_| self.items[rng.random_range(0..self.items.len())]));
    }

    /// Uniform sample of slot indices, for statistics on the sampler itself.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        (0..n)
            .map(|_| rng.random_range(0..self.items.len()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub final_epsilon: f64,
    /// Epsilon decays linearly from 1 to `final_epsilon` over this many frames.
    pub epsilon_decay_frames: u64,
    /// No gradient steps before this many frames have been collected.
    pub warmup_frames: u64,
    pub target_sync_frames: u64,
    pub test_every_frames: u64,
    pub max_frames: u64,
    pub buffer_capacity: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 32,
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            final_epsilon: 0.02,
            epsilon_decay_frames: 100_000,
            warmup_frames: 10_000,
            target_sync_frames: 1_000,
            test_every_frames: 25_000,
            max_frames: 2_000_000,
            buffer_capacity: 100_000,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 {
            return bad("batch size and buffer capacity must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.final_epsilon) {
            return bad("final epsilon must lie in [0, 1]");
        }
        if self.target_sync_frames == 0 || self.test_every_frames == 0 {
            return bad("target sync and test cadence must be positive");
        }
        Ok(())
    }
}

/// Linear decay from 1.0 at frame 0 to `final_epsilon` at `epsilon_decay_frames`.
pub fn epsilon_at(frame: u64, cfg: &TrainConfig) -> f64 {
    if frame >= cfg.epsilon_decay_frames {
        return cfg.final_epsilon;
    }
    let progress = frame as f64 / cfg.epsilon_decay_frames as f64;
    1.0 + (cfg.final_epsilon - 1.0) * progress
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy. With `epsilon == 0` the random stream is never touched.
pub fn select_action<R: Rng + ?Sized>(
    net: &QNetwork,
    obs: &Observation,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..net.output_dim()));
    }
    Ok(argmax(&net.forward(&obs.to_array())?))
}

/// One-step Q-learning targets: `r` for terminal transitions, otherwise
/// `r + gamma * max_a Q_target(s', a)`.
pub fn bellman_targets(
    batch: &[Transition],
    target_net: &QNetwork,
    gamma: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(batch.len());
    bellman_targets_into(
        batch,
        target_net,
        gamma,
        &mut Workspace::new(),
        &mut Vec::new(),
        &mut out,
    )?;
    Ok(out)
}

fn bellman_targets_into(
    batch: &[Transition],
    target_net: &QNetwork,
    gamma: f64,
    ws: &mut Workspace,
    scratch: &mut Vec<f64>,
    out: &mut Vec<f64>,
) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    scratch.clear();
    for t in batch.iter().filter(|t| !t.terminal) {
        scratch.extend_from_slice(&t.next_obs.to_array());
    }
    let next_q = if scratch.is_empty() {
        Vec::new()
    } else {
        target_net.forward_many(scratch, ws)?
    };
    let width = target_net.output_dim();
    let mut rows = next_q.chunks(width);
    out.clear();
    for t in batch {
        if t.terminal {
            out.push(t.reward);
        } else {
            let row = rows.next().expect("one row per non-terminal transition");
            let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            out.push(t.reward + gamma * best);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// Frame count at the end of the episode.
    pub frame: u64,
    pub episode: u64,
    pub reward: f64,
    pub smoothed_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub frame: u64,
    pub test_wins_of_80: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeRecord>,
    pub tests: Vec<TestRecord>,
}

impl TrainingLog {
    pub fn write_train_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for rec in &self.episodes {
            wr.serialize(rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_test_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for rec in &self.tests {
            wr.serialize(rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Why [`Trainer::run`] returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunEnd {
    /// A test reached a perfect score at this frame.
    Perfect(u64),
    /// The frame limit was reached.
    FrameLimit,
}

/// The training loop, advanced one environment frame at a time.
pub struct Trainer {
    env_cfg: EnvConfig,
    cfg: TrainConfig,
    env: PursuitEnv,
    online: QNetwork,
    target: QNetwork,
    opt: Adam,
    buffer: ReplayBuffer,
    suite: Vec<TestCase>,
    env_rng: ChaCha8Rng,
    explore_rng: ChaCha8Rng,
    sample_rng: ChaCha8Rng,
    frame: u64,
    episode: u64,
    obs: Observation,
    rewards: Vec<f64>,
    log: TrainingLog,
    last_report: Option<EvalReport>,
    ws: Workspace,
    grads: Gradients,
    batch: Batch,
    sampled: Vec<Transition>,
    targets: Vec<f64>,
    scratch: Vec<f64>,
}

impl Trainer {
    pub fn new(env_cfg: EnvConfig, cfg: TrainConfig) -> Result<Self> {
        env_cfg.validate()?;
        cfg.validate()?;
        let mut env = PursuitEnv::new(env_cfg.clone())?;
        let online = QNetwork::reference(&mut child_rng(cfg.seed, Stream::WeightInit));
        let mut env_rng = child_rng(cfg.seed, Stream::EnvInit);
        let (_, obs) = env.reset_random(&mut env_rng);
        Ok(Self {
            target: online.sync_clone(),
            opt: Adam::new(&online, cfg.learning_rate, cfg.weight_decay),
            grads: online.clone(),
            batch: Batch::new(online.input_dim(), online.output_dim()),
            online,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            suite: build_suite(),
            explore_rng: child_rng(cfg.seed, Stream::Exploration),
            sample_rng: child_rng(cfg.seed, Stream::ReplaySampling),
            env_rng,
            env,
            env_cfg,
            cfg,
            frame: 0,
            episode: 0,
            obs,
            rewards: Vec::new(),
            log: TrainingLog::default(),
            last_report: None,
            ws: Workspace::new(),
            sampled: Vec::new(),
            targets: Vec::new(),
            scratch: Vec::new(),
        })
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn into_parts(self) -> (QNetwork, TrainingLog) {
        (self.online, self.log)
    }

    pub fn last_report(&self) -> Option<&EvalReport> {
        self.last_report.as_ref()
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn env_config(&self) -> &EnvConfig {
        &self.env_cfg
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Advances one frame. Returns the test record when this frame ran an evaluation.
    pub fn step_frame(&mut self) -> Result<Option<TestRecord>> {
        let epsilon = epsilon_at(self.frame, &self.cfg);
        let action = select_action(&self.online, &self.obs, epsilon, &mut self.explore_rng)?;
        let outcome = self.env.step(action)?;
        self.buffer.push(Transition {
            obs: self.obs,
            action,
            reward: outcome.reward,
            next_obs: outcome.observation,
            terminal: outcome.terminal,
        });
        self.obs = outcome.observation;
        self.frame += 1;

        if outcome.terminal {
            self.rewards.push(outcome.reward);
            let last = self.rewards.len() - 1;
            self.log.episodes.push(EpisodeRecord {
                frame: self.frame,
                episode: self.episode,
                reward: outcome.reward,
                smoothed_reward: window_mean(&self.rewards, last, SMOOTHING_WINDOW),
            });
            self.episode += 1;
            self.obs = self.env.reset_random(&mut self.env_rng).1;
        }

        if self.frame >= self.cfg.warmup_frames && self.buffer.len() >= self.cfg.batch_size {
            self.gradient_step()?;
        }
        if self.frame.is_multiple_of(self.cfg.target_sync_frames) {
            self.target = self.online.sync_clone();
        }
        if self.frame.is_multiple_of(self.cfg.test_every_frames) {
            let report = evaluate(&self.online, &self.suite, &self.env_cfg)?;
            let record = TestRecord {
                frame: self.frame,
                test_wins_of_80: report.wins,
            };
            self.log.tests.push(record.clone());
            self.last_report = Some(report);
            return Ok(Some(record));
        }
        Ok(None)
    }

    fn gradient_step(&mut self) -> Result<()> {
        self.buffer
            .sample_into(&mut self.sample_rng, self.cfg.batch_size, &mut self.sampled);
        bellman_targets_into(
            &self.sampled,
            &self.target,
            self.cfg.gamma,
            &mut self.ws,
            &mut self.scratch,
            &mut self.targets,
        )?;
        self.batch.clear();
        for (t, &y) in self.sampled.iter().zip(&self.targets) {
            self.batch.push_selected(&t.obs.to_array(), t.action, y)?;
        }
        self.online
            .backward(&self.batch, &mut self.grads, &mut self.ws)?;
        self.opt.step(&mut self.online, &self.grads)
    }

    /// Runs until `frame_limit` frames or, if `stop_on_perfect`, the first
    /// perfect evaluation. `on_test` sees every evaluation as it happens.
    pub fn run<F>(
        &mut self,
        frame_limit: u64,
        stop_on_perfect: bool,
        mut on_test: F,
    ) -> Result<RunEnd>
    where
        F: FnMut(&Trainer, &TestRecord),
    {
        while self.frame < frame_limit {
            if let Some(record) = self.step_frame()? {
                on_test(self, &record);
                if stop_on_perfect && record.test_wins_of_80 == self.suite.len() {
                    return Ok(RunEnd::Perfect(self.frame));
                }
            }
        }
        Ok(RunEnd::FrameLimit)
    }
}

/// Trains until a perfect test score or `cfg.max_frames`.
pub fn train(env_cfg: EnvConfig, cfg: TrainConfig) -> Result<(QNetwork, TrainingLog)> {
    let max_frames = cfg.max_frames;
    let mut trainer = Trainer::new(env_cfg, cfg)?;
    trainer.run(max_frames, true, |_, _| {})?;
    Ok(trainer.into_parts())
}
