//! Per-step trajectory records and their CSV form.
//!
//! Row `k` holds the poses after `k` steps. The action index is the learner
//! action that produced the row, so it is empty on the step-0 row; reward and
//! verdict are those received on arriving at the row.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::env::{Verdict, WorldState};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub episode_id: u64,
    pub step: u32,
    pub rl_x: f64,
    pub rl_y: f64,
    pub rl_heading: f64,
    pub gs_x: f64,
    pub gs_y: f64,
    pub gs_heading: f64,
    pub rl_action_index: Option<usize>,
    pub reward: f64,
    pub verdict: Verdict,
}

impl TrajectoryRow {
    pub fn new(
        episode_id: u64,
        state: &WorldState,
        action: Option<usize>,
        reward: f64,
        verdict: Verdict,
    ) -> Self {
        Self {
            episode_id,
            step: state.step_count,
            rl_x: state.rl.x,
            rl_y: state.rl.y,
            rl_heading: state.rl.heading,
            gs_x: state.gs.x,
            gs_y: state.gs.y,
            gs_heading: state.gs.heading,
            rl_action_index: action,
            reward,
            verdict,
        }
    }
}

pub fn write_csv<W: Write>(rows: &[TrajectoryRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for row in rows {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<TrajectoryRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let rows = rd
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(rows)
}
