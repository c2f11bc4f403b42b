//! Ground truth, measurement synthesis and scenario input.

pub mod config;
pub mod replay;

use crate::belief::AgentBelief;
use crate::models::{
    detection_probability, predict_link, predict_mot, AgentState, Geometry,
    KinematicState, ModelConfig, ObjectKind, RangeBearing, TargetState, Vec2,
};
use crate::rng::{substream, Purpose};
use config::{AgentSection, ScenarioConfig, Trajectory};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use std::collections::BTreeMap;

pub use config::{paper_config, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkMeasurement {
    pub rx: usize,
    pub tx: usize,
    pub value: RangeBearing,
}

/// Everything observed at one time step. Agent ids are 1-based.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeasurementFrame {
    pub t: usize,
    pub nav: BTreeMap<usize, Vec2>,
    pub links: Vec<LinkMeasurement>,
    /// MOT scans keyed by `(rx, tx)`. A present key with an empty list is a
    /// scan that produced nothing; an absent key means the pair did not scan.
    pub mot: BTreeMap<(usize, usize), Vec<RangeBearing>>,
}

/// A sensing pair. `index` is its 1-based position in the pair order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentPair {
    pub index: usize,
    pub rx: usize,
    pub tx: usize,
}

impl AgentPair {
    pub fn geometry(&self) -> Geometry {
        if self.rx == self.tx {
            Geometry::Monostatic
        } else {
            Geometry::Bistatic
        }
    }
}

/// All receiver/transmitter combinations, ordered by `(rx, tx)`.
pub fn sensing_pairs(receivers: &[usize], transmitters: &[usize]) -> Vec<AgentPair> {
    let mut keys: Vec<(usize, usize)> = receivers
        .iter()
        .flat_map(|&r| transmitters.iter().map(move |&t| (r, t)))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .enumerate()
        .map(|(k, (rx, tx))| AgentPair { index: k + 1, rx, tx })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrack {
    pub start: usize,
    pub end: usize,
    /// Indexed by time step `0..=horizon`; `None` while inactive.
    pub states: Vec<Option<TargetState>>,
}

impl TargetTrack {
    pub fn is_active(&self, t: usize) -> bool {
        t >= self.start && t <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outage {
    pub rx: usize,
    pub tx: usize,
    pub start: usize,
    pub end: usize,
}

impl Outage {
    /// Outages block the link in both directions.
    pub fn blocks(&self, a: usize, b: usize, t: usize) -> bool {
        let same = (a == self.rx && b == self.tx) || (a == self.tx && b == self.rx);
        same && t >= self.start && t <= self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentPrior {
    pub position_radius: f64,
    pub velocity_half_width: f64,
}

/// Ground truth and models of one scenario realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTruth {
    pub horizon: usize,
    pub model: ModelConfig,
    pub receivers: Vec<usize>,
    pub transmitters: Vec<usize>,
    /// `agents[t][id - 1]` for `t` in `0..=horizon`.
    pub agents: Vec<Vec<AgentState>>,
    pub targets: Vec<TargetTrack>,
    pub outages: Vec<Outage>,
    pub agent_prior: AgentPrior,
}

impl ScenarioTruth {
    pub fn num_agents(&self) -> usize {
        self.agents[0].len()
    }

    pub fn pairs(&self) -> Vec<AgentPair> {
        sensing_pairs(&self.receivers, &self.transmitters)
    }

    pub fn active_targets(&self, t: usize) -> Vec<TargetState> {
        self.targets.iter().filter_map(|k| k.states.get(t).copied().flatten()).collect()
    }
}

fn agent_state(a: &AgentSection, t: usize, dt: f64) -> AgentState {
    let time = t as f64 * dt;
    match a.trajectory {
        Trajectory::Circle {
            center,
            radius,
            speed,
            phase_deg,
            clockwise,
        } => {
            let dir = if clockwise { -1.0 } else { 1.0 };
            let theta = phase_deg.to_radians() + dir * speed * time / radius;
            let (s, c) = theta.sin_cos();
            KinematicState::new(
                center[0] + radius * c,
                center[1] + radius * s,
                -dir * speed * s,
                dir * speed * c,
            )
        }
        Trajectory::Static { position } => KinematicState::new(position[0], position[1], 0.0, 0.0),
        Trajectory::Linear { position, velocity } => KinematicState::new(
            position[0] + velocity[0] * time,
            position[1] + velocity[1] * time,
            velocity[0],
            velocity[1],
        ),
    }
}

/// Builds the ground truth. Targets without an explicit start state are
/// placed uniformly in the spawn region with a velocity drawn uniformly from
/// the spawn speed box.
pub fn build_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<ScenarioTruth, ConfigError> {
    cfg.validate()?;
    let mut rng = substream(seed, 0, Purpose::Truth);
    let mut sorted = cfg.agents.clone();
    sorted.sort_by_key(|a| a.id);
    let agents = (0..=cfg.horizon)
        .map(|t| sorted.iter().map(|a| agent_state(a, t, cfg.dt)).collect())
        .collect();
    let spawn = cfg.spawn_region();
    let w = cfg.target_spawn.speed_half_width;
    let mut targets = Vec::new();
    for spec in &cfg.targets {
        let [start, end] = spec.window;
        let p0 = match spec.position {
            Some(p) => Vec2::new(p[0], p[1]),
            None => spawn.sample(&mut rng),
        };
        let v = match spec.velocity {
            Some(v) => Vec2::new(v[0], v[1]),
            None if w > 0.0 => Vec2::new(rng.random_range(-w..=w), rng.random_range(-w..=w)),
            None => Vec2::zeros(),
        };
        let states = (0..=cfg.horizon)
            .map(|t| {
                (t >= start && t <= end).then(|| TargetState {
                    position: p0 + v * ((t - start) as f64 * cfg.dt),
                    velocity: v,
                })
            })
            .collect();
        targets.push(TargetTrack { start, end, states });
    }
    Ok(ScenarioTruth {
        horizon: cfg.horizon,
        model: cfg.model_config(),
        receivers: sorted.iter().filter(|a| a.rx).map(|a| a.id).collect(),
        transmitters: sorted.iter().filter(|a| a.tx).map(|a| a.id).collect(),
        agents,
        targets,
        outages: cfg
            .outages
            .iter()
            .map(|o| Outage {
                rx: o.rx,
                tx: o.tx,
                start: o.window[0],
                end: o.window[1],
            })
            .collect(),
        agent_prior: AgentPrior {
            position_radius: cfg.agent_prior.position_radius,
            velocity_half_width: cfg.agent_prior.velocity_half_width,
        },
    })
}

pub fn build_paper_scenario(seed: u64) -> ScenarioTruth {
    build_scenario(&paper_config(), seed).expect("reference scenario is valid")
}

/// Initial agent beliefs: positions uniform in a disk around the true start
/// position, velocities uniform in a square.
pub fn initial_agent_beliefs(truth: &ScenarioTruth, n: usize, seed: u64) -> Vec<AgentBelief> {
    let mut rng = substream(seed, 0, Purpose::Prior);
    let prior = truth.agent_prior;
    truth.agents[0]
        .iter()
        .map(|s| {
            let particles = (0..n)
                .map(|_| {
                    let r = prior.position_radius * rng.random::<f64>().sqrt();
                    let phi = rng.random::<f64>() * std::f64::consts::TAU;
                    let w = prior.velocity_half_width;
                    let v = if w > 0.0 {
                        Vec2::new(rng.random_range(-w..=w), rng.random_range(-w..=w))
                    } else {
                        Vec2::zeros()
                    };
                    KinematicState {
                        position: s.position + Vec2::new(r * phi.cos(), r * phi.sin()),
                        velocity: v,
                    }
                })
                .collect();
            AgentBelief::uniform(particles)
        })
        .collect()
}

fn noisy<R: Rng + ?Sized>(clean: RangeBearing, model: &ModelConfig, rng: &mut R) -> RangeBearing {
    let nr: f64 = rng.sample(StandardNormal);
    let nb: f64 = rng.sample(StandardNormal);
    RangeBearing::new(
        (clean.range + model.noise.range_std * nr).max(0.0),
        clean.bearing + model.noise.bearing_std * nb,
    )
}

/// Draws the measurements of time step `t` from the generative model.
pub fn synthesize_frame(truth: &ScenarioTruth, t: usize, seed: u64) -> MeasurementFrame {
    let mut rng = substream(seed, t as u64, Purpose::Measurements);
    let model = &truth.model;
    let agents = &truth.agents[t];
    let mut frame = MeasurementFrame {
        t,
        ..Default::default()
    };
    for (k, s) in agents.iter().enumerate() {
        if let Some(std) = model.noise.nav_pos_std.get(k).copied().flatten() {
            let n = Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            frame.nav.insert(k + 1, s.position + n * std);
        }
    }
    for &rx in &truth.receivers {
        for &tx in &truth.transmitters {
            if rx == tx || truth.outages.iter().any(|o| o.blocks(rx, tx, t)) {
                continue;
            }
            let clean = predict_link(&agents[rx - 1].position, &agents[tx - 1].position, model.range_scale)
                .expect("agents never coincide");
            frame.links.push(LinkMeasurement {
                rx,
                tx,
                value: noisy(clean, model, &mut rng),
            });
        }
    }
    let targets = truth.active_targets(t);
    let clutter = Poisson::new(model.clutter_mean.max(f64::MIN_POSITIVE)).expect("positive mean");
    for pair in truth.pairs() {
        let rx = agents[pair.rx - 1].position;
        let tx = agents[pair.tx - 1].position;
        let geometry = pair.geometry();
        let mut objects: Vec<(ObjectKind, Vec2)> =
            targets.iter().map(|x| (ObjectKind::Target, x.position)).collect();
        if model.agent_reflections {
            objects.extend(agents.iter().enumerate().map(|(k, s)| (ObjectKind::Agent(k + 1), s.position)));
        }
        let mut zs = Vec::new();
        for (kind, x) in objects {
            let pd = detection_probability(kind, pair.rx, pair.tx, model.detection_prob);
            if rng.random::<f64>() < pd {
                if let Ok(clean) = predict_mot(&x, &rx, &tx, geometry, model.range_scale) {
                    zs.push(noisy(clean, model, &mut rng));
                }
            }
        }
        let n_clutter = if model.clutter_mean > 0.0 {
            clutter.sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..n_clutter {
            let p = model.clutter_region.sample(&mut rng);
            if let Ok(z) = predict_mot(&p, &rx, &tx, geometry, model.range_scale) {
                zs.push(z);
            }
        }
        zs.shuffle(&mut rng);
        frame.mot.insert((pair.rx, pair.tx), zs);
    }
    frame
}
