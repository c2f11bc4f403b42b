//! Command-line driver: Monte Carlo runs of the tracker in joint and/or
//! separate mode, with CSV output.

use crate::metrics::{aggregate, detected_count, ospa, position_error, OspaConfig};
use crate::rng::{substream, Purpose};
use crate::scenario::config::ScenarioConfig;
use crate::scenario::replay::{read_replay, ReplayError};
use crate::scenario::{build_scenario, initial_agent_beliefs, synthesize_frame, ConfigError, MeasurementFrame, ScenarioTruth};
use crate::tracker::{Mode, TrackReport, Tracker, TrackerConfig, TrackerError, TrackerState};
use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("invalid arguments: {0}")]
    Arguments(String),
    #[error("run {run} ({mode}): {source}")]
    Tracker { run: usize, mode: Mode, source: TrackerError },
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Replay(_) | CliError::Arguments(_) => 1,
            CliError::Tracker { .. } | CliError::Output { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Jlt,
    Slt,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::Jlt => vec![Mode::Jlt],
            ModeArg::Slt => vec![Mode::Slt],
            ModeArg::Both => vec![Mode::Jlt, Mode::Slt],
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "coop-track", version, about = "Cooperative localization and multi-object tracking")]
pub struct Args {
    /// Scenario file (TOML); the reference scenario when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replay recorded measurements instead of simulating them
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: ModeArg,
    /// Number of Monte Carlo runs
    #[arg(long, default_value_t = 1)]
    pub mc: usize,
    /// Base seed; run r uses seed + r
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the particle count of the scenario file
    #[arg(long)]
    pub particles: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Result of one run in one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub run: usize,
    pub mode: Mode,
    pub reports: Vec<TrackReport>,
    /// MOSPA and agent errors per time step; absent without ground truth.
    pub mospa: Option<Vec<f64>>,
    pub agent_errors: Option<Vec<Vec<f64>>>,
}

impl RunOutput {
    pub fn detected(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.tracks.len() as f64).collect()
    }
}

pub fn tracker_config(cfg: &ScenarioConfig) -> TrackerConfig {
    TrackerConfig {
        particles: cfg.tracker.particles,
        pruning_threshold: cfg.tracker.pruning_threshold,
        existence_threshold: cfg.tracker.existence_threshold,
        selfloc_iterations: cfg.tracker.selfloc_iterations,
        da_iterations: cfg.tracker.da_iterations,
    }
}

/// Runs the filter over the frames; step `t` draws from its own substream.
pub fn simulate(
    tracker: &Tracker,
    initial: TrackerState,
    frames: &[MeasurementFrame],
    seed: u64,
) -> Result<Vec<TrackReport>, TrackerError> {
    let mut state = initial;
    let mut reports = Vec::with_capacity(frames.len());
    for frame in frames {
        let mut rng = substream(seed, frame.t as u64, Purpose::Tracker);
        let (next, report) = tracker.step(&state, frame, &mut rng)?;
        state = next;
        reports.push(report);
    }
    Ok(reports)
}

/// One Monte Carlo run of every requested mode on shared measurements.
pub fn run_once(
    cfg: &ScenarioConfig,
    replay: Option<&[MeasurementFrame]>,
    modes: &[Mode],
    run: usize,
    seed: u64,
) -> Result<Vec<RunOutput>, CliError> {
    let truth = build_scenario(cfg, seed)?;
    let frames: Vec<MeasurementFrame> = match replay {
        Some(f) => f.to_vec(),
        None => (1..=truth.horizon).map(|t| synthesize_frame(&truth, t, seed)).collect(),
    };
    let tcfg = tracker_config(cfg);
    let ospa_cfg = OspaConfig::default();
    let mut out = Vec::new();
    for &mode in modes {
        let tracker = Tracker::new(truth.model.clone(), tcfg, truth.pairs(), mode);
        let initial = TrackerState::new(initial_agent_beliefs(&truth, tcfg.particles, seed));
        let reports =
            simulate(&tracker, initial, &frames, seed).map_err(|source| CliError::Tracker { run, mode, source })?;
        let (mospa, agent_errors) = if replay.is_none() {
            let (m, e) = score(&truth, &reports, &ospa_cfg);
            (Some(m), Some(e))
        } else {
            (None, None)
        };
        out.push(RunOutput {
            run,
            mode,
            reports,
            mospa,
            agent_errors,
        });
    }
    Ok(out)
}

/// Per-step OSPA of the reported tracks and per-agent position errors.
pub fn score(truth: &ScenarioTruth, reports: &[TrackReport], cfg: &OspaConfig) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut mospa = Vec::with_capacity(reports.len());
    let mut errors = Vec::with_capacity(reports.len());
    for r in reports {
        let est: Vec<_> = r.tracks.iter().map(|k| k.state.position).collect();
        let tru: Vec<_> = truth.active_targets(r.t).iter().map(|x| x.position).collect();
        mospa.push(ospa(&est, &tru, cfg).expect("default OSPA parameters are valid"));
        errors.push(
            r.agents
                .iter()
                .zip(&truth.agents[r.t])
                .map(|(e, s)| position_error(&e.position, &s.position))
                .collect(),
        );
    }
    (mospa, errors)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Output {
        path: path.display().to_string(),
        source,
    })
}

fn write_run(dir: &Path, out: &RunOutput, truth: Option<&ScenarioTruth>, threshold: f64) -> Result<(), CliError> {
    let tag = format!("{}_{}", out.mode, out.run);
    let mut agents = String::from("t,agent,true_x,true_y,est_x,est_y,error\n");
    let mut tracks = String::from("t,label,existence,x,y,vx,vy\n");
    let mut metrics = String::from("t,mospa,detected\n");
    for (k, r) in out.reports.iter().enumerate() {
        for (a, est) in r.agents.iter().enumerate() {
            let (tx, ty, err) = match truth {
                Some(s) => {
                    let p = s.agents[r.t][a].position;
                    (num(p.x), num(p.y), num(position_error(&est.position, &p)))
                }
                None => (String::new(), String::new(), String::new()),
            };
            let _ = writeln!(
                agents,
                "{},{},{},{},{},{},{}",
                r.t,
                a + 1,
                tx,
                ty,
                num(est.position.x),
                num(est.position.y),
                err
            );
        }
        for trk in &r.tracks {
            let s = trk.state;
            let _ = writeln!(
                tracks,
                "{},{},{},{},{},{},{}",
                r.t,
                trk.label,
                num(trk.existence),
                num(s.position.x),
                num(s.position.y),
                num(s.velocity.x),
                num(s.velocity.y)
            );
        }
        let existences: Vec<f64> = r.tracks.iter().map(|k| k.existence).collect();
        let mospa = out.mospa.as_ref().map_or(String::new(), |m| num(m[k]));
        let _ = writeln!(metrics, "{},{},{}", r.t, mospa, detected_count(&existences, threshold));
    }
    write_file(&dir.join(format!("agents_{tag}.csv")), &agents)?;
    write_file(&dir.join(format!("tracks_{tag}.csv")), &tracks)?;
    write_file(&dir.join(format!("metrics_{tag}.csv")), &metrics)
}

fn write_summary(dir: &Path, outputs: &[RunOutput], modes: &[Mode], truth: Option<&ScenarioTruth>) -> Result<(), CliError> {
    let n_agents = outputs.first().and_then(|o| o.reports.first()).map_or(0, |r| r.agents.len());
    let mut text = String::from("mode,t,true_count,mospa,detected");
    for a in 1..=n_agents {
        let _ = write!(text, ",agent_{a}_error");
    }
    text.push('\n');
    for &mode in modes {
        let runs: Vec<&RunOutput> = outputs.iter().filter(|o| o.mode == mode).collect();
        let detected = aggregate(&runs.iter().map(|o| o.detected()).collect::<Vec<_>>()).expect("equal horizons");
        let mospa = truth.map(|_| {
            aggregate(&runs.iter().map(|o| o.mospa.clone().unwrap_or_default()).collect::<Vec<_>>())
                .expect("equal horizons")
        });
        let errors: Option<Vec<Vec<f64>>> = truth.map(|_| {
            (0..n_agents)
                .map(|a| {
                    let per_run: Vec<Vec<f64>> = runs
                        .iter()
                        .map(|o| o.agent_errors.as_ref().map_or(vec![], |e| e.iter().map(|row| row[a]).collect()))
                        .collect();
                    aggregate(&per_run).expect("equal horizons")
                })
                .collect()
        });
        for (k, r) in runs[0].reports.iter().enumerate() {
            let true_count = truth.map_or(String::new(), |s| s.active_targets(r.t).len().to_string());
            let m = mospa.as_ref().map_or(String::new(), |m| num(m[k]));
            let _ = write!(text, "{},{},{},{},{}", mode, r.t, true_count, m, num(detected[k]));
            for a in 0..n_agents {
                let e = errors.as_ref().map_or(String::new(), |e| num(e[a][k]));
                let _ = write!(text, ",{e}");
            }
            text.push('\n');
        }
    }
    write_file(&dir.join("summary.csv"), &text)
}

/// Executes the command line. Output files are identical for any thread
/// count.
pub fn run(args: &Args) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => ScenarioConfig::from_path(p)?,
        None => crate::scenario::paper_config(),
    };
    if let Some(n) = args.particles {
        if n == 0 {
            return Err(CliError::Arguments("--particles must be positive".into()));
        }
        cfg.tracker.particles = n;
    }
    if args.mc == 0 {
        return Err(CliError::Arguments("--mc must be positive".into()));
    }
    cfg.validate()?;
    let replay = match &args.replay {
        Some(p) => Some(read_replay(p, cfg.agents.len(), cfg.horizon)?),
        None => None,
    };
    let modes = args.mode.modes();
    std::fs::create_dir_all(&args.out).map_err(|source| CliError::Output {
        path: args.out.display().to_string(),
        source,
    })?;
    let results: Vec<Result<Vec<RunOutput>, CliError>> = (0..args.mc)
        .into_par_iter()
        .map(|r| run_once(&cfg, replay.as_deref(), &modes, r, args.seed.wrapping_add(r as u64)))
        .collect();
    let mut outputs = Vec::new();
    for r in results {
        outputs.extend(r?);
    }
    let threshold = cfg.tracker.existence_threshold;
    for o in &outputs {
        let truth = if replay.is_none() {
            Some(build_scenario(&cfg, args.seed.wrapping_add(o.run as u64))?)
        } else {
            None
        };
        write_run(&args.out, o, truth.as_ref(), threshold)?;
    }
    let truth = if replay.is_none() {
        Some(build_scenario(&cfg, args.seed)?)
    } else {
        None
    };
    write_summary(&args.out, &outputs, &modes, truth.as_ref())
}
