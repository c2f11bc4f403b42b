//! Evaluation of the association factors of one sensing pair.

use super::TrackerError;
use crate::association::AssociationProblem;
use crate::belief::{AgentBelief, PtBelief, PtLabel};
use crate::models::{
    bearing_difference, bearing_unit, clutter_pdf, gaussian2_pdf, measurement_to_cartesian, sample_birth_velocity,
    Geometry, ModelConfig, RangeBearing, TargetState, Vec2,
};
use crate::scenario::AgentPair;
use crate::selfloc::GATE_SIGMAS;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Lower bound on the clutter density in measurement space, so that
/// likelihood ratios stay finite for measurements mapping outside the
/// clutter region.
pub const CLUTTER_FLOOR: f64 = 1e-30;

/// Paired samples of the receiver and transmitter beliefs.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSamples {
    pub rx_index: Vec<usize>,
    pub tx_index: Vec<usize>,
    pub rx: Vec<Vec2>,
    pub tx: Vec<Vec2>,
    /// Normalized.
    pub weights: Vec<f64>,
}

impl JointSamples {
    /// Receiver sample `q` is paired with transmitter sample
    /// `(q * stride) mod n_tx`; the stride scatters runs of duplicated
    /// particles left by resampling.
    pub fn new(rx: &AgentBelief, tx: &AgentBelief, monostatic: bool) -> Self {
        let n_rx = rx.len();
        let n_tx = tx.len();
        let n = if monostatic { n_rx } else { n_rx.max(n_tx) };
        const STRIDE: usize = 7919;
        let stride = if n_tx.is_multiple_of(STRIDE) { 1 } else { STRIDE };
        let mut s = Self {
            rx_index: Vec::with_capacity(n),
            tx_index: Vec::with_capacity(n),
            rx: Vec::with_capacity(n),
            tx: Vec::with_capacity(n),
            weights: Vec::with_capacity(n),
        };
        for q in 0..n {
            let i = q % n_rx;
            let j = if monostatic { i } else { (q * stride) % n_tx };
            s.rx_index.push(i);
            s.tx_index.push(j);
            s.rx.push(rx.particles[i].position);
            s.tx.push(if monostatic { rx.particles[i].position } else { tx.particles[j].position });
            s.weights.push(if monostatic { rx.weights[i] } else { rx.weights[i] * tx.weights[j] });
        }
        let total: f64 = s.weights.iter().sum();
        if total > 0.0 {
            s.weights.iter_mut().for_each(|w| *w /= total);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn mean(points: &[Vec2], weights: &[f64]) -> Vec2 {
        points.iter().zip(weights).fold(Vec2::zeros(), |acc, (p, w)| acc + p * *w)
    }

    pub fn rx_mean(&self) -> Vec2 {
        Self::mean(&self.rx, &self.weights)
    }

    pub fn tx_mean(&self) -> Vec2 {
        Self::mean(&self.tx, &self.weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Bounds {
    min: Vec2,
    max: Vec2,
}

impl Bounds {
    fn of<'a>(points: impl Iterator<Item = &'a Vec2>) -> Option<Self> {
        let mut it = points.peekable();
        let first = **it.peek()?;
        Some(it.fold(Self { min: first, max: first }, |b, p| Self {
            min: b.min.inf(p),
            max: b.max.sup(p),
        }))
    }

    fn min_distance(&self, o: &Self) -> f64 {
        let gx = (self.min.x - o.max.x).max(o.min.x - self.max.x).max(0.0);
        let gy = (self.min.y - o.max.y).max(o.min.y - self.max.y).max(0.0);
        gx.hypot(gy)
    }

    fn max_distance(&self, o: &Self) -> f64 {
        let gx = (self.max.x - o.min.x).abs().max((o.max.x - self.min.x).abs());
        let gy = (self.max.y - o.min.y).abs().max((o.max.y - self.min.y).abs());
        gx.hypot(gy)
    }

    /// Smallest absolute bearing residual to `measured` over all directions
    /// from a point of `from` to a point of `self`, or `None` when every
    /// direction is possible.
    fn min_bearing_residual(&self, from: &Self, measured: f64) -> Option<f64> {
        let lo = self.min - from.max;
        let hi = self.max - from.min;
        if lo.x <= 0.0 && hi.x >= 0.0 && lo.y <= 0.0 && hi.y >= 0.0 {
            return None;
        }
        let corners = [(lo.x, lo.y), (lo.x, hi.y), (hi.x, lo.y), (hi.x, hi.y)];
        let res: Vec<f64> = corners
            .iter()
            .map(|(x, y)| bearing_difference(x.atan2(*y).to_degrees(), measured))
            .collect();
        let min = res.iter().copied().fold(f64::INFINITY, f64::min);
        let max = res.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max - min <= 180.0 {
            // contiguous interval [min, max]
            Some(if min > 0.0 {
                min
            } else if max < 0.0 {
                -max
            } else {
                0.0
            })
        } else {
            // the interval wraps through 180 degrees
            Some(res.iter().map(|r| r.abs()).fold(f64::INFINITY, f64::min))
        }
    }
}

/// Messages carried by one (object, measurement) entry. `object[p]` is the
/// averaged likelihood ratio at object particle `p`, scaled by `Pd / mu_c`;
/// `agent[q]` the same at joint sample `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryMessages {
    pub object: Vec<f64>,
    pub agent: Vec<f64>,
}

/// A row of the association tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Pt(usize),
    /// A reflecting agent, zero-based.
    Agent(usize),
    /// An agent that cannot be detected at this pair.
    Silent,
}

/// A new potential target drawn from the birth posterior of a measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct NewPt {
    pub label: PtLabel,
    pub particles: Vec<TargetState>,
    /// Normalized.
    pub weights: Vec<f64>,
    /// `mu_n / mu_c` times the averaged birth likelihood ratio.
    pub ratio: f64,
    /// The same ratio at each joint agent sample.
    pub agent_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairEvaluation {
    pub pair: AgentPair,
    pub problem: AssociationProblem,
    pub measurements: Vec<RangeBearing>,
    pub clutter: Vec<f64>,
    pub rows: Vec<RowKind>,
    /// `entries[row][m]`; `None` where the likelihood is zero everywhere.
    pub entries: Vec<Vec<Option<EntryMessages>>>,
    pub births: Vec<NewPt>,
    pub samples: JointSamples,
}

struct KernelSetup {
    z: RangeBearing,
    u: Vec2,
    bistatic: bool,
    range_scale: f64,
    inv_sr: f64,
    inv_sb: f64,
    tan_gate: Option<f64>,
    scale: f64,
}

/// Likelihood-ratio kernel of one object against the joint samples, reduced
/// to its row and column sums. Returns `None` if every entry vanishes.
fn entry_kernel(
    obj: &[Vec2],
    obj_w: &[f64],
    samples: &JointSamples,
    k: &KernelSetup,
) -> Option<EntryMessages> {
    let mut a = vec![0.0; obj.len()];
    let mut b = vec![0.0; samples.len()];
    let mut any = false;
    let (ux, uy) = (k.u.x, k.u.y);
    let rad_to_unit = 180.0 / PI * k.inv_sb;
    for q in 0..samples.len() {
        let vq = samples.weights[q];
        if vq == 0.0 {
            continue;
        }
        let r = samples.rx[q];
        let t = samples.tx[q];
        let mut bq = 0.0;
        for (p, x) in obj.iter().enumerate() {
            let dx = x.x - r.x;
            let dy = x.y - r.y;
            let dot = dx * ux + dy * uy;
            let cross = dx * uy - dy * ux;
            if let Some(tg) = k.tan_gate {
                if dot <= 0.0 || cross.abs() > tg * dot {
                    continue;
                }
            }
            let d1 = (dx * dx + dy * dy).sqrt();
            let range = if k.bistatic {
                d1 + (x.x - t.x).hypot(x.y - t.y)
            } else {
                k.range_scale * d1
            };
            let er = (k.z.range - range) * k.inv_sr;
            if er.abs() > GATE_SIGMAS {
                continue;
            }
            let eb = cross.atan2(dot) * rad_to_unit;
            let v = (-0.5 * (er * er + eb * eb)).exp();
            a[p] += vq * v;
            bq += obj_w[p] * v;
        }
        if bq > 0.0 {
            any = true;
            b[q] = bq * k.scale;
        }
    }
    if !any {
        return None;
    }
    a.iter_mut().for_each(|v| *v *= k.scale);
    Some(EntryMessages { object: a, agent: b })
}

fn object_bounds(particles: &[TargetState], weights: &[f64]) -> Option<Bounds> {
    Bounds::of(
        particles
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(s, _)| &s.position),
    )
}

/// Whether the object box can produce a residual inside the gate.
fn passes_gate(obj: &Bounds, rx: &Bounds, tx: &Bounds, k: &KernelSetup, model: &ModelConfig) -> bool {
    let (lo, hi) = if k.bistatic {
        (
            obj.min_distance(rx) + obj.min_distance(tx),
            obj.max_distance(rx) + obj.max_distance(tx),
        )
    } else {
        (k.range_scale * obj.min_distance(rx), k.range_scale * obj.max_distance(rx))
    };
    let g = GATE_SIGMAS * model.noise.range_std;
    if k.z.range < lo - g || k.z.range > hi + g {
        return false;
    }
    if k.tan_gate.is_some() {
        if let Some(res) = obj.min_bearing_residual(rx, k.z.bearing) {
            if res > GATE_SIGMAS * model.noise.bearing_std {
                return false;
            }
        }
    }
    true
}

fn birth_center(z: &RangeBearing, rx: &Vec2, tx: &Vec2, geometry: Geometry, model: &ModelConfig) -> Vec2 {
    measurement_to_cartesian(z, rx, tx, geometry, model.range_scale)
        .map(|(p, _)| p)
        .unwrap_or(*rx)
}

#[allow(clippy::too_many_arguments)]
fn sample_birth<R: Rng + ?Sized>(
    label: PtLabel,
    z: &RangeBearing,
    fc: f64,
    samples: &JointSamples,
    geometry: Geometry,
    model: &ModelConfig,
    n: usize,
    rng: &mut R,
) -> NewPt {
    let center = birth_center(z, &samples.rx_mean(), &samples.tx_mean(), geometry, model);
    let std = model.birth_pos_std;
    let ratio_scale = model.birth_mean / model.clutter_mean.max(f64::MIN_POSITIVE) / fc;
    // proposal: perturb the measurement by its own noise and map it back
    // through a joint agent sample; the importance weight is then the birth
    // density times the inverse area element
    let mut particles = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut agent_mass = 0.0;
    for q in 0..n {
        let s = q % samples.len();
        let nr: f64 = rng.sample(StandardNormal);
        let nb: f64 = rng.sample(StandardNormal);
        let zq = RangeBearing::new(z.range + model.noise.range_std * nr, z.bearing + model.noise.bearing_std * nb);
        let velocity = sample_birth_velocity(model, rng);
        let w = samples.weights[s];
        agent_mass += w;
        match measurement_to_cartesian(&zq, &samples.rx[s], &samples.tx[s], geometry, model.range_scale) {
            Some((p, jac)) => {
                particles.push(TargetState { position: p, velocity });
                weights.push(w * gaussian2_pdf(&(p - center), std) * jac);
            }
            None => {
                particles.push(TargetState {
                    position: samples.rx[s],
                    velocity,
                });
                weights.push(0.0);
            }
        }
    }
    let total: f64 = weights.iter().sum();
    let ratio = if agent_mass > 0.0 { ratio_scale * total / agent_mass } else { 0.0 };
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    } else {
        let w = 1.0 / n as f64;
        weights.iter_mut().for_each(|x| *x = w);
    }
    let agent_ratio = (0..samples.len())
        .map(|q| {
            measurement_to_cartesian(z, &samples.rx[q], &samples.tx[q], geometry, model.range_scale)
                .map_or(0.0, |(p, jac)| ratio_scale * gaussian2_pdf(&(p - center), std) * jac)
        })
        .collect();
    NewPt {
        label,
        particles,
        weights,
        ratio,
        agent_ratio,
    }
}

/// Builds the association tables of one sensing pair and caches the
/// particle-level messages needed by the belief update.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_pair<R: Rng + ?Sized>(
    agents: &[AgentBelief],
    pts: &[PtBelief],
    pair: AgentPair,
    measurements: &[RangeBearing],
    model: &ModelConfig,
    t: usize,
    n_particles: usize,
    rng: &mut R,
) -> Result<PairEvaluation, TrackerError> {
    let n_agents = agents.len();
    if pair.rx == 0 || pair.rx > n_agents || pair.tx == 0 || pair.tx > n_agents {
        return Err(TrackerError::UnknownAgent(pair.rx.max(pair.tx)));
    }
    let geometry = pair.geometry();
    let monostatic = geometry == Geometry::Monostatic;
    let samples = JointSamples::new(&agents[pair.rx - 1], &agents[pair.tx - 1], monostatic);
    let rx_mean = samples.rx_mean();
    let tx_mean = samples.tx_mean();
    let pd = model.detection_prob;
    let mu_c = model.clutter_mean.max(f64::MIN_POSITIVE);
    let norm = 1.0 / (2.0 * PI * model.noise.range_std * model.noise.bearing_std);
    let tan_gate = {
        let g = GATE_SIGMAS * model.noise.bearing_std;
        (g < 90.0).then(|| g.to_radians().tan())
    };

    let mut rows: Vec<RowKind> = (0..pts.len()).map(RowKind::Pt).collect();
    for a in 0..n_agents {
        let reflecting = model.agent_reflections && a + 1 != pair.rx && a + 1 != pair.tx;
        rows.push(if reflecting { RowKind::Agent(a) } else { RowKind::Silent });
    }
    let rx_bounds = Bounds::of(samples.rx.iter()).expect("non-empty agent belief");
    let tx_bounds = Bounds::of(samples.tx.iter()).expect("non-empty agent belief");

    let m = measurements.len();
    let clutter: Vec<f64> = measurements
        .iter()
        .map(|z| {
            clutter_pdf(z, &rx_mean, &tx_mean, geometry, model.range_scale, &model.clutter_region).max(CLUTTER_FLOOR)
        })
        .collect();
    let setups: Vec<KernelSetup> = measurements
        .iter()
        .zip(&clutter)
        .map(|(z, fc)| KernelSetup {
            z: *z,
            u: bearing_unit(z.bearing),
            bistatic: !monostatic,
            range_scale: model.range_scale,
            inv_sr: 1.0 / model.noise.range_std,
            inv_sb: 1.0 / model.noise.bearing_std,
            tan_gate,
            scale: pd / mu_c * norm / fc,
        })
        .collect();

    let mut xi = Vec::with_capacity(rows.len());
    let mut entries = Vec::with_capacity(rows.len());
    for row in &rows {
        let (particles, weights, existence) = match *row {
            RowKind::Pt(l) => {
                let b = &pts[l];
                (&b.particles, &b.weights, b.existence_mass())
            }
            RowKind::Agent(a) => (&agents[a].particles, &agents[a].weights, 1.0),
            RowKind::Silent => {
                let mut r = vec![0.0; m + 1];
                r[0] = 1.0;
                xi.push(r);
                entries.push(vec![None; m]);
                continue;
            }
        };
        let total = match *row {
            RowKind::Pt(l) => existence + pts[l].nonexistence,
            _ => 1.0,
        };
        let existence = existence / total;
        let mut r = Vec::with_capacity(m + 1);
        r.push((1.0 - pd) * existence + (1.0 - existence));
        let mut row_entries = Vec::with_capacity(m);
        let positions: Vec<Vec2> = particles.iter().map(|s| s.position).collect();
        let w: Vec<f64> = weights.iter().map(|x| x / total).collect();
        let bounds = object_bounds(particles, &w);
        for k in &setups {
            let entry = match bounds {
                Some(ob) if passes_gate(&ob, &rx_bounds, &tx_bounds, k, model) => {
                    entry_kernel(&positions, &w, &samples, k)
                }
                _ => None,
            };
            let value = entry
                .as_ref()
                .map_or(0.0, |e| e.object.iter().zip(&w).map(|(a, b)| a * b).sum());
            r.push(value);
            row_entries.push(entry);
        }
        xi.push(r);
        entries.push(row_entries);
    }

    let births: Vec<NewPt> = measurements
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let label = PtLabel {
                time: t,
                pair: pair.index,
                measurement: k + 1,
            };
            sample_birth(label, z, clutter[k], &samples, geometry, model, n_particles, rng)
        })
        .collect();
    let sigma = births
        .iter()
        .map(|b| {
            let mut r = vec![1.0; rows.len() + 1];
            r[0] = 1.0 + b.ratio;
            r
        })
        .collect();

    Ok(PairEvaluation {
        pair,
        problem: AssociationProblem { xi, sigma },
        measurements: measurements.to_vec(),
        clutter,
        rows,
        entries,
        births,
        samples,
    })
}
