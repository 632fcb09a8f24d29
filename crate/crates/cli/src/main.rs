use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::Overrides;

#[derive(Parser)]
#[command(
    name = "pursuit",
    version,
    about = "Train and evaluate a DQN agent against a greedy shooter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train until a perfect test score or the frame limit.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_frames: Option<u64>,
        #[arg(long)]
        test_every: Option<u64>,
        #[arg(long)]
        epsilon_decay_frames: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        buffer_size: Option<usize>,
        #[arg(long)]
        weight_decay: Option<f64>,
        #[arg(long)]
        target_sync: Option<u64>,
        #[arg(long)]
        warmup: Option<u64>,
    },
    /// Greedy evaluation of a checkpoint on the fixed test suite.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated case ids; defaults to the whole suite.
        #[arg(long, value_delimiter = ',')]
        cases: Option<Vec<usize>>,
        #[arg(long)]
        case: Option<usize>,
        /// Also write traj_<id>.csv for every evaluated case.
        #[arg(long)]
        export_trajectories: bool,
    },
    /// Play one greedy episode and write its trajectory.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, conflicts_with = "init")]
        case: Option<usize>,
        /// Custom start: rl_x,rl_y,rl_heading,gs_x,gs_y,gs_heading
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        init: Option<Vec<f64>>,
    },
}

fn overrides(common: &Common) -> Overrides {
    Overrides {
        out_dir: common.out.clone(),
        seed: common.seed,
        ..Default::default()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            common,
            max_frames,
            test_every,
            epsilon_decay_frames,
            lr,
            gamma,
            batch_size,
            buffer_size,
            weight_decay,
            target_sync,
            warmup,
        } => {
            let o = Overrides {
                max_frames,
                test_every_frames: test_every,
                epsilon_decay_frames,
                learning_rate: lr,
                gamma,
                batch_size,
                buffer_capacity: buffer_size,
                weight_decay,
                target_sync_frames: target_sync,
                warmup_frames: warmup,
                ..overrides(&common)
            };
            commands::train(common.config.as_deref(), &o)
        }
        Command::Evaluate {
            common,
            checkpoint,
            cases,
            case,
            export_trajectories,
        } => {
            let o = Overrides {
                checkpoint,
                export_trajectories,
                ..overrides(&common)
            };
            let ids = match (cases, case) {
                (Some(mut ids), Some(one)) => {
                    ids.push(one);
                    Some(ids)
                }
                (ids, one) => ids.or(one.map(|c| vec![c])),
            };
            commands::evaluate(common.config.as_deref(), &o, ids)
        }
        Command::Rollout {
            common,
            checkpoint,
            case,
            init,
        } => {
            let o = Overrides {
                checkpoint,
                ..overrides(&common)
            };
            commands::rollout(common.config.as_deref(), &o, case, init)
        }
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
