//! Fixed 80-case test suite, greedy evaluation and reward smoothing.

use std::f64::consts::PI;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::dqn::select_action;
use crate::env::{EnvConfig, PursuitEnv, Verdict, WorldState};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::nn::QNetwork;
use crate::trajectory::TrajectoryRow;

pub const SUITE_SEPARATIONS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];
pub const SUITE_BEARINGS: [f64; 4] = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];
pub const SUITE_HEADINGS: [f64; 4] = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: usize,
    pub init: WorldState,
}

/// The reference suite: separation x bearing of the learner from the shooter
/// x learner heading, shooter at the origin facing +x. Ids are assigned in
/// that nesting order.
pub fn build_suite() -> Vec<TestCase> {
    let mut suite = Vec::with_capacity(80);
    for &d in &SUITE_SEPARATIONS {
        for &bearing in &SUITE_BEARINGS {
            for &heading in &SUITE_HEADINGS {
                let rl = Pose::new(d * bearing.cos(), d * bearing.sin(), heading)
                    .expect("finite suite pose");
                suite.push(TestCase {
                    id: suite.len(),
                    init: WorldState::new(rl, Pose::origin()),
                });
            }
        }
    }
    suite
}

/// Picks suite cases by id, in the order given.
pub fn select_cases(suite: &[TestCase], ids: &[usize]) -> Result<Vec<TestCase>> {
    ids.iter()
        .map(|&id| {
            suite
                .iter()
                .find(|c| c.id == id)
                .copied()
                .ok_or(Error::UnknownCase(id))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: usize,
    pub verdict: Verdict,
    pub length: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub wins: usize,
    pub losses: usize,
    pub mutual: usize,
    pub timeouts: usize,
    pub cases: Vec<CaseResult>,
    /// Mean episode length over winning cases; `None` without wins.
    pub mean_win_length: Option<f64>,
}

impl EvalReport {
    pub fn total(&self) -> usize {
        self.wins + self.losses + self.mutual + self.timeouts
    }

    fn from_cases(cases: Vec<CaseResult>) -> Self {
        let count = |v: Verdict| cases.iter().filter(|c| c.verdict == v).count();
        let wins = count(Verdict::RlWin);
        let win_steps: u32 = cases
            .iter()
            .filter(|c| c.verdict == Verdict::RlWin)
            .map(|c| c.length)
            .sum();
        Self {
            wins,
            losses: count(Verdict::RlLoss),
            mutual: count(Verdict::MutualCapture),
            timeouts: count(Verdict::Timeout),
            mean_win_length: (wins > 0).then(|| win_steps as f64 / wins as f64),
            cases,
        }
    }
}

/// A random stream that must never be used. Greedy evaluation runs on it so
/// any accidental draw fails loudly.
#[derive(Debug, Clone, Copy, Default)]
pub struct PoisonedRng;

impl RngCore for PoisonedRng {
    fn next_u32(&mut self) -> u32 {
        panic!("greedy evaluation consulted the random stream")
    }

    fn next_u64(&mut self) -> u64 {
        panic!("greedy evaluation consulted the random stream")
    }

    fn fill_bytes(&mut self, _dest: &mut [u8]) {
        panic!("greedy evaluation consulted the random stream")
    }
}

/// One played-out episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub rows: Vec<TrajectoryRow>,
    pub verdict: Verdict,
    pub length: u32,
}

/// Plays one episode from `init` with epsilon-greedy actions.
pub fn play_episode<R: Rng + ?Sized>(
    net: &QNetwork,
    cfg: &EnvConfig,
    init: WorldState,
    episode_id: u64,
    epsilon: f64,
    rng: &mut R,
) -> Result<Episode> {
    let mut env = PursuitEnv::new(cfg.clone())?;
    let (state, mut obs) = env.reset_fixed(init)?;
    let mut rows = vec![TrajectoryRow::new(
        episode_id,
        &state,
        None,
        0.0,
        Verdict::Ongoing,
    )];
    loop {
        let action = select_action(net, &obs, epsilon, rng)?;
        let out = env.step(action)?;
        rows.push(TrajectoryRow::new(
            episode_id,
            env.state(),
            Some(action),
            out.reward,
            out.verdict,
        ));
        obs = out.observation;
        if out.terminal {
            return Ok(Episode {
                rows,
                verdict: out.verdict,
                length: env.state().step_count,
            });
        }
    }
}

/// Greedy rollout from a fixed initialization.
pub fn rollout(
    net: &QNetwork,
    cfg: &EnvConfig,
    init: WorldState,
    episode_id: u64,
) -> Result<Episode> {
    play_episode(net, cfg, init, episode_id, 0.0, &mut PoisonedRng)
}

/// Greedy evaluation over `suite`, tallied by case id order.
pub fn evaluate(net: &QNetwork, suite: &[TestCase], cfg: &EnvConfig) -> Result<EvalReport> {
    let cases = suite
        .iter()
        .map(|case| {
            let ep = rollout(net, cfg, case.init, case.id as u64)?;
            Ok(CaseResult {
                id: case.id,
                verdict: ep.verdict,
                length: ep.length,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_cases(cases))
}

/// Like [`evaluate`] but returning the full trajectories too.
pub fn evaluate_with_trajectories(
    net: &QNetwork,
    suite: &[TestCase],
    cfg: &EnvConfig,
) -> Result<(EvalReport, Vec<Episode>)> {
    let episodes = suite
        .iter()
        .map(|case| rollout(net, cfg, case.init, case.id as u64))
        .collect::<Result<Vec<_>>>()?;
    let cases = suite
        .iter()
        .zip(&episodes)
        .map(|(case, ep)| CaseResult {
            id: case.id,
            verdict: ep.verdict,
            length: ep.length,
        })
        .collect();
    Ok((EvalReport::from_cases(cases), episodes))
}

/// Mean of `rewards[max(0, i + 1 - window)..=i]`.
pub fn window_mean(rewards: &[f64], i: usize, window: usize) -> f64 {
    let start = (i + 1).saturating_sub(window);
    let slice = &rewards[start..=i];
    slice.iter().sum::<f64>() / slice.len() as f64
}

/// Trailing moving average; early entries average over the available prefix.
pub fn smooth_rewards(rewards: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    (0..rewards.len())
        .map(|i| window_mean(rewards, i, window))
        .collect()
}
