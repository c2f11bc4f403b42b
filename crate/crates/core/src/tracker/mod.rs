//! Sequential per-pair multi-object tracking, optionally coupled with agent
//! localization.
//!
//! One time step: predict agents, run self-localization, predict potential
//! targets, then process the sensing pairs in order. Each pair evaluates its
//! association factors, runs message-passing data association and updates
//! the beliefs it touched; the measurements of the pair spawn new potential
//! targets. Finally weak potential targets are pruned.

mod evaluate;

pub use evaluate::{evaluate_pair, EntryMessages, JointSamples, NewPt, PairEvaluation, RowKind, CLUTTER_FLOOR};

use crate::association::{bp_associate, AssociationError, AssociationMarginals};
use crate::belief::{AgentBelief, BeliefError, PtBelief, PtLabel};
use crate::models::{ncv_step, AgentState, ModelConfig, ModelError, TargetState};
use crate::scenario::{AgentPair, MeasurementFrame};
use crate::selfloc::{predict_agent, selfloc_round, SelfLocConfig, SelfLocError};
use rand::Rng;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackerError {
    #[error("agent {agent}: {source}")]
    AgentBelief { agent: usize, source: BeliefError },
    #[error("potential target {label}: {source}")]
    PtBelief { label: PtLabel, source: BeliefError },
    #[error("unknown agent {0}")]
    UnknownAgent(usize),
    #[error(transparent)]
    SelfLoc(#[from] SelfLocError),
    #[error(transparent)]
    Association(#[from] AssociationError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Joint localization and tracking, or separate localization followed by
/// tracking with the agent estimates taken as exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Jlt,
    Slt,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Jlt => "jlt",
            Mode::Slt => "slt",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jlt" => Ok(Mode::Jlt),
            "slt" => Ok(Mode::Slt),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub particles: usize,
    pub pruning_threshold: f64,
    pub existence_threshold: f64,
    pub selfloc_iterations: usize,
    pub da_iterations: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            particles: 1000,
            pruning_threshold: 0.01,
            existence_threshold: 0.75,
            selfloc_iterations: 5,
            da_iterations: 50,
        }
    }
}

/// Beliefs carried from one time step to the next. In separate mode the
/// agent beliefs are those of the localization filter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub t: usize,
    pub agents: Vec<AgentBelief>,
    pub pts: Vec<PtBelief>,
}

impl TrackerState {
    pub fn new(agents: Vec<AgentBelief>) -> Self {
        Self {
            t: 0,
            agents,
            pts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackEstimate {
    pub label: PtLabel,
    pub existence: f64,
    pub state: TargetState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackReport {
    pub t: usize,
    /// MMSE agent estimates, indexed by agent id minus one.
    pub agents: Vec<AgentState>,
    /// Potential targets whose existence probability exceeds the threshold.
    pub tracks: Vec<TrackEstimate>,
    pub num_pts: usize,
}

/// Prediction of potential targets: every particle follows the motion
/// model and survives with probability `p_s`.
pub fn predict_pts<R: Rng + ?Sized>(
    prev: &[PtBelief],
    model: &ModelConfig,
    rng: &mut R,
) -> Result<Vec<PtBelief>, ModelError> {
    let ps = model.survival_prob;
    prev.iter()
        .map(|b| {
            let particles = b
                .particles
                .iter()
                .map(|s| ncv_step(s, model.noise.process_std_target, model.dt, rng))
                .collect::<Result<Vec<_>, _>>()?;
            let e = b.existence_mass();
            Ok(PtBelief {
                label: b.label,
                particles,
                weights: b.weights.iter().map(|w| w * ps).collect(),
                nonexistence: b.nonexistence + (1.0 - ps) * e,
            })
        })
        .collect()
}

fn agent_error(agent: usize) -> impl Fn(BeliefError) -> TrackerError {
    move |source| TrackerError::AgentBelief { agent, source }
}

/// Sums `ln(factor)` into `acc`; factors are positive by construction.
fn add_log(acc: &mut [f64], factor: impl Iterator<Item = f64>) {
    for (a, f) in acc.iter_mut().zip(factor) {
        *a += f.ln();
    }
}

/// Belief update after data association at one pair. Potential targets and,
/// in joint mode, the agents are reweighted by their messages and
/// resampled; new potential targets are appended.
#[allow(clippy::too_many_arguments)]
pub fn update_pair<R: Rng + ?Sized>(
    agents: &[AgentBelief],
    pts: &[PtBelief],
    eval: &PairEvaluation,
    marginals: &AssociationMarginals,
    model: &ModelConfig,
    cfg: &TrackerConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<(Vec<AgentBelief>, Vec<PtBelief>), TrackerError> {
    let pd = model.detection_prob;
    let m = eval.measurements.len();
    let n = cfg.particles;
    let nu = &marginals.object_messages;
    let phi = &marginals.measurement_messages;

    let mut new_pts = Vec::with_capacity(pts.len() + m);
    let mut new_agents = agents.to_vec();
    let mut agent_factor = vec![0.0; eval.samples.len()];

    for (row, kind) in eval.rows.iter().enumerate() {
        let entries = &eval.entries[row];
        let detected = entries.iter().any(Option::is_some);
        match *kind {
            RowKind::Pt(l) => {
                let b = &pts[l];
                let mut updated = b.clone();
                let total = b.existence_mass() + b.nonexistence;
                updated.weights.iter_mut().for_each(|w| *w /= total);
                updated.nonexistence /= total;
                let mut factor = vec![1.0 - pd; b.particles.len()];
                for (j, e) in entries.iter().enumerate() {
                    if let Some(e) = e {
                        for (f, a) in factor.iter_mut().zip(&e.object) {
                            *f += nu[row][j + 1] * a;
                        }
                    }
                }
                updated.weights.iter_mut().zip(&factor).for_each(|(w, f)| *w *= f);
                updated.normalize();
                let resampled = updated
                    .resample(n, rng)
                    .map_err(|source| TrackerError::PtBelief { label: b.label, source })?;
                new_pts.push(resampled);
                if mode == Mode::Jlt && detected {
                    let xi0 = eval.problem.xi[row][0];
                    let mut zeta = vec![xi0; eval.samples.len()];
                    for (j, e) in entries.iter().enumerate() {
                        if let Some(e) = e {
                            for (z, a) in zeta.iter_mut().zip(&e.agent) {
                                *z += nu[row][j + 1] * a;
                            }
                        }
                    }
                    add_log(&mut agent_factor, zeta.into_iter());
                }
            }
            RowKind::Agent(a) if mode == Mode::Jlt && detected => {
                let mut factor = vec![1.0 - pd; agents[a].len()];
                let mut zeta = vec![1.0 - pd; eval.samples.len()];
                for (j, e) in entries.iter().enumerate() {
                    if let Some(e) = e {
                        for (f, x) in factor.iter_mut().zip(&e.object) {
                            *f += nu[row][j + 1] * x;
                        }
                        for (z, x) in zeta.iter_mut().zip(&e.agent) {
                            *z += nu[row][j + 1] * x;
                        }
                    }
                }
                let belief = &mut new_agents[a];
                belief.weights.iter_mut().zip(&factor).for_each(|(w, f)| *w *= f);
                belief.normalize().map_err(agent_error(a + 1))?;
                *belief = belief.resample(n, rng).map_err(agent_error(a + 1))?;
                add_log(&mut agent_factor, zeta.into_iter());
            }
            _ => {}
        }
    }

    for (j, birth) in eval.births.iter().enumerate() {
        let others: f64 = phi[j][1..].iter().sum();
        let existence = birth.ratio / (birth.ratio + 1.0 + others);
        let mut b = PtBelief {
            label: birth.label,
            particles: birth.particles.clone(),
            weights: birth.weights.iter().map(|w| w * existence).collect(),
            nonexistence: 1.0 - existence,
        };
        b.normalize();
        new_pts.push(
            b.resample(n, rng)
                .map_err(|source| TrackerError::PtBelief { label: birth.label, source })?,
        );
        if mode == Mode::Jlt {
            add_log(&mut agent_factor, birth.agent_ratio.iter().map(|r| 1.0 + r + others));
        }
    }

    if mode == Mode::Jlt && (m > 0 || eval.entries.iter().flatten().any(Option::is_some)) {
        let s = &eval.samples;
        let max = agent_factor.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let u: Vec<f64> = s
            .weights
            .iter()
            .zip(&agent_factor)
            .map(|(v, f)| v * (f - max).exp())
            .collect();
        let (rx, tx) = (eval.pair.rx - 1, eval.pair.tx - 1);
        let mut w_rx = vec![0.0; agents[rx].len()];
        for (q, uq) in u.iter().enumerate() {
            w_rx[s.rx_index[q]] += uq;
        }
        let mut b = AgentBelief {
            particles: agents[rx].particles.clone(),
            weights: w_rx,
        };
        b.normalize().map_err(agent_error(rx + 1))?;
        new_agents[rx] = b.resample(n, rng).map_err(agent_error(rx + 1))?;
        if tx != rx {
            let mut w_tx = vec![0.0; agents[tx].len()];
            for (q, uq) in u.iter().enumerate() {
                w_tx[s.tx_index[q]] += uq;
            }
            let mut b = AgentBelief {
                particles: agents[tx].particles.clone(),
                weights: w_tx,
            };
            b.normalize().map_err(agent_error(tx + 1))?;
            new_agents[tx] = b.resample(n, rng).map_err(agent_error(tx + 1))?;
        }
    }
    Ok((new_agents, new_pts))
}

/// The tracking filter: models, settings and the sensing pairs in
/// processing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub model: ModelConfig,
    pub config: TrackerConfig,
    pub pairs: Vec<AgentPair>,
    pub mode: Mode,
}

impl Tracker {
    pub fn new(model: ModelConfig, config: TrackerConfig, pairs: Vec<AgentPair>, mode: Mode) -> Self {
        Self {
            model,
            config,
            pairs,
            mode,
        }
    }

    /// Advances the filter by one time step.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &TrackerState,
        frame: &MeasurementFrame,
        rng: &mut R,
    ) -> Result<(TrackerState, TrackReport), TrackerError> {
        let model = &self.model;
        let cfg = &self.config;
        let n = cfg.particles;
        let t = state.t + 1;

        let mut predicted = Vec::with_capacity(state.agents.len());
        for b in &state.agents {
            predicted.push(predict_agent(b, model.noise.process_std_agent, model.dt, rng)?);
        }
        let loc = selfloc_round(
            &predicted,
            frame,
            model,
            &SelfLocConfig {
                iterations: cfg.selfloc_iterations,
            },
        )?;
        let mut loc_estimates = Vec::with_capacity(loc.beliefs.len());
        let mut localized = Vec::with_capacity(loc.beliefs.len());
        for (a, b) in loc.beliefs.iter().enumerate() {
            loc_estimates.push(b.mmse_estimate().map_err(agent_error(a + 1))?);
            localized.push(b.resample(n, rng).map_err(agent_error(a + 1))?);
        }

        let mut agents = match self.mode {
            Mode::Jlt => localized.clone(),
            Mode::Slt => loc_estimates.iter().map(|s| AgentBelief::point(*s)).collect(),
        };
        let mut pts = predict_pts(&state.pts, model, rng)?;

        for pair in &self.pairs {
            let Some(zs) = frame.mot.get(&(pair.rx, pair.tx)) else {
                continue;
            };
            let eval = evaluate_pair(&agents, &pts, *pair, zs, model, t, n, rng)?;
            let marginals = bp_associate(&eval.problem, cfg.da_iterations)?;
            let (a, p) = update_pair(&agents, &pts, &eval, &marginals, model, cfg, self.mode, rng)?;
            agents = a;
            pts = p;
        }

        pts.retain(|b| b.existence_probability() >= cfg.pruning_threshold);

        let agent_estimates = match self.mode {
            Mode::Jlt => agents
                .iter()
                .enumerate()
                .map(|(a, b)| b.mmse_estimate().map_err(agent_error(a + 1)))
                .collect::<Result<Vec<_>, _>>()?,
            Mode::Slt => loc_estimates,
        };
        let mut tracks = Vec::new();
        for b in &pts {
            let existence = b.existence_probability();
            if existence > cfg.existence_threshold {
                let est = b
                    .mmse_estimate()
                    .map_err(|source| TrackerError::PtBelief { label: b.label, source })?;
                tracks.push(TrackEstimate {
                    label: b.label,
                    existence,
                    state: est,
                });
            }
        }
        let report = TrackReport {
            t,
            agents: agent_estimates,
            tracks,
            num_pts: pts.len(),
        };
        let next = TrackerState {
            t,
            agents: match self.mode {
                Mode::Jlt => agents,
                Mode::Slt => localized,
            },
            pts,
        };
        Ok((next, report))
    }
}
