//! Scenario files: TOML documents describing agents, targets, models and
//! tracker settings. Every section is optional and falls back to the
//! reference setup.

use crate::models::{ModelConfig, NoiseSpec, Region, Vec2};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario file: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub detection_prob: f64,
    pub clutter_mean: f64,
    pub clutter_region: [[f64; 2]; 2],
    pub birth_mean: f64,
    pub birth_pos_std: f64,
    pub birth_vel_box: [f64; 2],
    pub survival_prob: f64,
    pub range_scale: f64,
    pub agent_reflections: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            detection_prob: 0.7,
            clutter_mean: 3.0,
            clutter_region: [[-5000.0, -5000.0], [5000.0, 5000.0]],
            birth_mean: 0.1,
            birth_pos_std: 500.0,
            birth_vel_box: [-1.54, 1.54],
            survival_prob: 0.99,
            range_scale: 2.0,
            agent_reflections: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub range_std: f64,
    pub bearing_std: f64,
    pub process_std_agent: f64,
    pub process_std_target: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            range_std: 20.0,
            bearing_std: 1.0,
            process_std_agent: 0.1,
            process_std_target: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerSection {
    pub particles: usize,
    pub pruning_threshold: f64,
    pub existence_threshold: f64,
    pub selfloc_iterations: usize,
    pub da_iterations: usize,
}

impl Default for TrackerSection {
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

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AgentPriorSection {
    pub position_radius: f64,
    pub velocity_half_width: f64,
}

impl Default for AgentPriorSection {
    fn default() -> Self {
        Self {
            position_radius: 150.0,
            velocity_half_width: 2.57,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SpawnSection {
    pub region: [[f64; 2]; 2],
    pub speed_half_width: f64,
}

impl Default for SpawnSection {
    fn default() -> Self {
        Self {
            region: [[-3000.0, -3000.0], [3000.0, 3000.0]],
            speed_half_width: 1.54,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trajectory {
    /// Uniform circular motion; `phase_deg` is the polar angle of the start
    /// point measured counterclockwise from +x.
    Circle {
        center: [f64; 2],
        radius: f64,
        speed: f64,
        phase_deg: f64,
        #[serde(default)]
        clockwise: bool,
    },
    Static {
        position: [f64; 2],
    },
    Linear {
        position: [f64; 2],
        velocity: [f64; 2],
    },
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub id: usize,
    #[serde(default)]
    pub rx: bool,
    #[serde(default)]
    pub tx: bool,
    #[serde(default)]
    pub nav_std: Option<f64>,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// First and last active time step, inclusive.
    pub window: [usize; 2],
    #[serde(default)]
    pub position: Option<[f64; 2]>,
    #[serde(default)]
    pub velocity: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutageSection {
    pub rx: usize,
    pub tx: usize,
    pub window: [usize; 2],
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub tracker: TrackerSection,
    #[serde(default)]
    pub agent_prior: AgentPriorSection,
    #[serde(default)]
    pub target_spawn: SpawnSection,
    #[serde(default)]
    pub agents: Vec<AgentSection>,
    #[serde(default)]
    pub targets: Vec<TargetSection>,
    #[serde(default)]
    pub outages: Vec<OutageSection>,
}

fn default_horizon() -> usize {
    50
}

fn default_dt() -> f64 {
    30.0
}

fn region(r: &[[f64; 2]; 2]) -> Region {
    Region::new(Vec2::new(r[0][0], r[0][1]), Vec2::new(r[1][0], r[1][1]))
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        // without an agent list the reference layout is used, including its
        // targets and outages unless those are given
        let cfg = if cfg.agents.is_empty() {
            let reference = paper_config();
            Self {
                agents: reference.agents,
                targets: if cfg.targets.is_empty() { reference.targets } else { cfg.targets },
                outages: if cfg.outages.is_empty() { reference.outages } else { cfg.outages },
                ..cfg
            }
        } else {
            cfg
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn model_config(&self) -> ModelConfig {
        let max_id = self.agents.iter().map(|a| a.id).max().unwrap_or(0);
        let mut nav = vec![None; max_id];
        for a in &self.agents {
            nav[a.id - 1] = a.nav_std;
        }
        let m = &self.model;
        ModelConfig {
            dt: self.dt,
            detection_prob: m.detection_prob,
            clutter_mean: m.clutter_mean,
            clutter_region: region(&m.clutter_region),
            birth_mean: m.birth_mean,
            birth_pos_std: m.birth_pos_std,
            birth_vel_box: m.birth_vel_box,
            survival_prob: m.survival_prob,
            range_scale: m.range_scale,
            noise: NoiseSpec {
                range_std: self.noise.range_std,
                bearing_std: self.noise.bearing_std,
                process_std_agent: self.noise.process_std_agent,
                process_std_target: self.noise.process_std_target,
                nav_pos_std: nav,
            },
            agent_reflections: m.agent_reflections,
        }
    }

    pub fn spawn_region(&self) -> Region {
        region(&self.target_spawn.region)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.horizon == 0 {
            return bad("horizon must be at least one step".into());
        }
        let mut ids: Vec<usize> = self.agents.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        if ids.is_empty() {
            return bad("no agents".into());
        }
        if ids.iter().enumerate().any(|(k, id)| *id != k + 1) {
            return bad(format!("agent ids must be 1..={} without gaps, got {ids:?}", ids.len()));
        }
        if !self.agents.iter().any(|a| a.rx) || !self.agents.iter().any(|a| a.tx) {
            return bad("need at least one receiver and one transmitter".into());
        }
        for a in &self.agents {
            if let Trajectory::Circle { radius, .. } = a.trajectory {
                if !(radius > 0.0) {
                    return bad(format!("agent {} has non-positive circle radius", a.id));
                }
            }
        }
        for (k, t) in self.targets.iter().enumerate() {
            let [s, e] = t.window;
            if s == 0 || s > e || e > self.horizon {
                return bad(format!("target {} window [{s}, {e}] outside 1..={}", k + 1, self.horizon));
            }
        }
        for o in &self.outages {
            if o.rx == 0 || o.rx > ids.len() || o.tx == 0 || o.tx > ids.len() {
                return bad(format!("outage refers to unknown agent ({}, {})", o.rx, o.tx));
            }
        }
        let tr = &self.tracker;
        if tr.particles == 0 {
            return bad("particle count must be positive".into());
        }
        let open_unit = |p: f64| p > 0.0 && p < 1.0;
        if !open_unit(tr.pruning_threshold) || !open_unit(tr.existence_threshold) {
            return bad("thresholds must lie strictly between 0 and 1".into());
        }
        if tr.pruning_threshold >= tr.existence_threshold {
            return bad("pruning threshold must be below the existence threshold".into());
        }
        if !(self.agent_prior.position_radius >= 0.0) || !(self.agent_prior.velocity_half_width >= 0.0) {
            return bad("agent prior widths must be non-negative".into());
        }
        if !(self.target_spawn.speed_half_width >= 0.0) {
            return bad("spawn speed width must be non-negative".into());
        }
        self.model_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// Reference setup: three receivers circling the origin, one anchored
/// transmitter at the origin, four targets.
pub fn paper_config() -> ScenarioConfig {
    let circle = |phase_deg: f64| Trajectory::Circle {
        center: [0.0, 0.0],
        radius: 3500.0,
        speed: 0.69,
        phase_deg,
        clockwise: false,
    };
    let agents = vec![
        AgentSection {
            id: 1,
            rx: true,
            tx: false,
            nav_std: None,
            trajectory: circle(90.0),
        },
        AgentSection {
            id: 2,
            rx: true,
            tx: false,
            nav_std: None,
            trajectory: circle(210.0),
        },
        AgentSection {
            id: 3,
            rx: true,
            tx: false,
            nav_std: Some(20.0),
            trajectory: circle(330.0),
        },
        AgentSection {
            id: 4,
            rx: false,
            tx: true,
            nav_std: Some(5.0),
            trajectory: Trajectory::Static { position: [0.0, 0.0] },
        },
    ];
    let targets = [[5, 35], [10, 40], [20, 40], [30, 45]]
        .into_iter()
        .map(|window| TargetSection {
            window,
            position: None,
            velocity: None,
        })
        .collect();
    let outages = [1, 2]
        .into_iter()
        .map(|rx| OutageSection {
            rx,
            tx: 4,
            window: [10, 40],
        })
        .collect();
    ScenarioConfig {
        horizon: 50,
        dt: 30.0,
        model: ModelSection::default(),
        noise: NoiseSection::default(),
        tracker: TrackerSection::default(),
        agent_prior: AgentPriorSection::default(),
        target_spawn: SpawnSection::default(),
        agents,
        targets,
        outages,
    }
}
