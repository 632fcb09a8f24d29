use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use pursuit_core::dqn::RunEnd;
use pursuit_core::eval::{self, evaluate_with_trajectories, select_cases};
use pursuit_core::trajectory;
use pursuit_core::{build_suite, Checkpoint, Pose, QNetwork, Trainer, WorldState};

use crate::config::{Overrides, RunConfig};

/// Exit status when training stops at the frame limit without a perfect test.
const EXIT_NOT_CONVERGED: u8 = 2;

fn create(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>> {
    let path = cfg.output_path(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn save_progress(cfg: &RunConfig, trainer: &Trainer) -> Result<()> {
    trainer
        .log()
        .write_train_csv(create(cfg, "train_log.csv")?)?;
    trainer.log().write_test_csv(create(cfg, "test_log.csv")?)?;
    let name = format!("checkpoint_{}.json", trainer.frame());
    Checkpoint::new(trainer.online(), cfg.seed, trainer.frame()).save(cfg.output_path(&name))?;
    Ok(())
}

fn prepare_out_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;
    let path = cfg.output_path("effective_config.json");
    fs::write(&path, cfg.to_json()).with_context(|| format!("writing {}", path.display()))
}

pub fn train(config: Option<&Path>, overrides: &Overrides) -> Result<ExitCode> {
    let cfg = RunConfig::load(config, overrides)?;
    let env_cfg = cfg.env_config()?;
    let train_cfg = cfg.train_config()?;
    prepare_out_dir(&cfg)?;
    println!("effective config:\n{}", cfg.to_json());

    let mut trainer = Trainer::new(env_cfg, train_cfg)?;
    let mut write_error = None;
    let end = trainer.run(cfg.max_frames, true, |t, rec| {
        println!(
            "frame {:>9}  test wins {:>2}/80",
            rec.frame, rec.test_wins_of_80
        );
        if let Err(e) = save_progress(&cfg, t) {
            write_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    save_progress(&cfg, &trainer)?;
    match end {
        RunEnd::Perfect(frame) => {
            println!("perfect test score at frame {frame}");
            Ok(ExitCode::SUCCESS)
        }
        RunEnd::FrameLimit => {
            println!("no perfect test score within {} frames", cfg.max_frames);
            Ok(ExitCode::from(EXIT_NOT_CONVERGED))
        }
    }
}

fn load_network(cfg: &RunConfig) -> Result<QNetwork> {
    let path = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| anyhow!("--checkpoint is required"))?;
    let ck =
        Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    ck.to_network()
        .with_context(|| format!("validating checkpoint {}", path.display()))
}

fn write_trajectory(
    cfg: &RunConfig,
    label: &str,
    rows: &[trajectory::TrajectoryRow],
) -> Result<()> {
    trajectory::write_csv(rows, create(cfg, &format!("traj_{label}.csv"))?)?;
    Ok(())
}

pub fn evaluate(
    config: Option<&Path>,
    overrides: &Overrides,
    ids: Option<Vec<usize>>,
) -> Result<ExitCode> {
    let cfg = RunConfig::load(config, overrides)?;
    let env_cfg = cfg.env_config()?;
    let net = load_network(&cfg)?;
    let suite = build_suite();
    let suite = match ids {
        Some(ids) => select_cases(&suite, &ids)?,
        None => suite,
    };
    prepare_out_dir(&cfg)?;

    let (report, episodes) = evaluate_with_trajectories(&net, &suite, &env_cfg)?;
    let n = report.total();
    println!("wins: {}/{n}", report.wins);
    println!("losses: {}/{n}", report.losses);
    println!("mutual captures: {}/{n}", report.mutual);
    println!("timeouts: {}/{n}", report.timeouts);
    if let Some(len) = report.mean_win_length {
        println!("mean winning episode length: {len:.2}");
    }
    serde_json::to_writer_pretty(create(&cfg, "eval_report.json")?, &report)?;
    if cfg.export_trajectories {
        for (case, ep) in suite.iter().zip(&episodes) {
            write_trajectory(&cfg, &case.id.to_string(), &ep.rows)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn rollout(
    config: Option<&Path>,
    overrides: &Overrides,
    case: Option<usize>,
    init: Option<Vec<f64>>,
) -> Result<ExitCode> {
    let cfg = RunConfig::load(config, overrides)?;
    let env_cfg = cfg.env_config()?;
    let net = load_network(&cfg)?;
    let (label, start, id) = match (case, init) {
        (Some(id), None) => {
            let c = select_cases(&build_suite(), &[id])?[0];
            (id.to_string(), c.init, id as u64)
        }
        (None, Some(v)) => {
            if v.len() != 6 {
                bail!("--init takes 6 values, got {}", v.len());
            }
            let rl = Pose::new(v[0], v[1], v[2])?;
            let gs = Pose::new(v[3], v[4], v[5])?;
            ("custom".to_string(), WorldState::new(rl, gs), 0)
        }
        _ => bail!("exactly one of --case or --init is required"),
    };
    prepare_out_dir(&cfg)?;
    let ep = eval::rollout(&net, &env_cfg, start, id)?;
    write_trajectory(&cfg, &label, &ep.rows)?;
    println!("verdict: {}", ep.verdict);
    println!("episode length: {}", ep.length);
    Ok(ExitCode::SUCCESS)
}
