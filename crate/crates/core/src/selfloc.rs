//! Cooperative self-localization by nonparametric belief propagation.
//!
//! Every message is carried by the particles of the agent that receives it.
//! For each link the pairwise likelihood is evaluated once on the product of
//! the two particle sets; each iteration then reduces to matrix-vector
//! products with the extrinsic weights of the other end.

use crate::belief::{AgentBelief, BeliefError};
use crate::models::{bearing_unit, nav_likelihood, AgentState, ModelConfig, ModelError, RangeBearing};
use crate::scenario::MeasurementFrame;
use rand::Rng;
use thiserror::Error;

/// Residuals beyond this many standard deviations contribute exactly zero.
pub const GATE_SIGMAS: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelfLocError {
    #[error("agent {agent}: {source}")]
    Belief { agent: usize, source: BeliefError },
    #[error("measurement refers to unknown agent {0}")]
    UnknownAgent(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfLocConfig {
    pub iterations: usize,
}

impl Default for SelfLocConfig {
    fn default() -> Self {
        Self { iterations: 5 }
    }
}

/// Pushes every particle through the motion model; weights are unchanged.
pub fn predict_agent<R: Rng + ?Sized>(
    prev: &AgentBelief,
    process_std: f64,
    dt: f64,
    rng: &mut R,
) -> Result<AgentBelief, ModelError> {
    let particles = prev
        .particles
        .iter()
        .map(|s| crate::models::ncv_step(s, process_std, dt, rng))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AgentBelief {
        particles,
        weights: prev.weights.clone(),
    })
}

/// Pairwise link likelihood on the product of two particle sets, row-major
/// in the receiver index. Values are scaled so that the largest possible
/// entry is one.
pub fn link_kernel(
    rho: &RangeBearing,
    rx: &[AgentState],
    tx: &[AgentState],
    model: &ModelConfig,
    gate: Option<f64>,
) -> Vec<f64> {
    let sr = model.noise.range_std;
    let sb = model.noise.bearing_std;
    let u = bearing_unit(rho.bearing);
    let scale = model.range_scale;
    let bearing_gate = gate.map(|g| g * sb).filter(|g| *g < 90.0).map(|g| g.to_radians().tan());
    let range_gate = gate.unwrap_or(f64::INFINITY);
    let mut k = vec![0.0; rx.len() * tx.len()];
    for (q, a) in rx.iter().enumerate() {
        let row = &mut k[q * tx.len()..(q + 1) * tx.len()];
        for (r, b) in tx.iter().enumerate() {
            let d = b.position - a.position;
            let dot = d.x * u.x + d.y * u.y;
            let cross = d.x * u.y - d.y * u.x;
            if let Some(tan_g) = bearing_gate {
                if dot <= 0.0 || cross.abs() > tan_g * dot {
                    continue;
                }
            }
            let er = (rho.range - scale * d.norm()) / sr;
            if er.abs() > range_gate {
                continue;
            }
            let eb = cross.atan2(dot).to_degrees() / sb;
            row[r] = (-0.5 * (er * er + eb * eb)).exp();
        }
    }
    k
}

/// Like [`link_kernel`] but without gating and rescaled so that the best
/// particle pair has value one. Used when every gated entry vanishes.
fn link_kernel_rescaled(rho: &RangeBearing, rx: &[AgentState], tx: &[AgentState], model: &ModelConfig) -> Vec<f64> {
    let sr = model.noise.range_std;
    let sb = model.noise.bearing_std;
    let u = bearing_unit(rho.bearing);
    let mut e = Vec::with_capacity(rx.len() * tx.len());
    for a in rx {
        for b in tx {
            let d = b.position - a.position;
            let er = (rho.range - model.range_scale * d.norm()) / sr;
            let eb = (d.x * u.y - d.y * u.x).atan2(d.x * u.x + d.y * u.y).to_degrees() / sb;
            e.push(0.5 * (er * er + eb * eb));
        }
    }
    let min = e.iter().copied().fold(f64::INFINITY, f64::min);
    e.into_iter().map(|v| (min - v).exp()).collect()
}

/// Messages exchanged over one link after the last iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMessages {
    pub rx: usize,
    pub tx: usize,
    /// Extrinsic weights the receiver sent into the link.
    pub from_rx: Vec<f64>,
    /// Extrinsic weights the transmitter sent into the link.
    pub from_tx: Vec<f64>,
    /// Link message evaluated at the receiver's particles.
    pub to_rx: Vec<f64>,
    /// Link message evaluated at the transmitter's particles.
    pub to_tx: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfLocOutput {
    /// Normalized, not resampled.
    pub beliefs: Vec<AgentBelief>,
    pub links: Vec<LinkMessages>,
}

fn scale_to_max(v: &mut [f64]) {
    let m = v.iter().copied().fold(0.0, f64::max);
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
}

fn row_sums(k: &[f64], cols: usize, w: &[f64]) -> Vec<f64> {
    k.chunks_exact(cols)
        .map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum())
        .collect()
}

fn col_sums(k: &[f64], cols: usize, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (row, wq) in k.chunks_exact(cols).zip(w) {
        if *wq == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(row) {
            *o += wq * v;
        }
    }
    out
}

/// Local weights times every incoming message except `skip`, normalized.
///
/// Messages with disjoint support (gated links that disagree) can cancel
/// every particle; the local weights alone are returned then.
pub fn extrinsic_weights(local: &[f64], incoming: &[&[f64]], skip: Option<usize>) -> Vec<f64> {
    let mut w = local.to_vec();
    for (k, msg) in incoming.iter().enumerate() {
        if Some(k) == skip {
            continue;
        }
        w.iter_mut().zip(msg.iter()).for_each(|(a, b)| *a *= b);
    }
    let mut s: f64 = w.iter().sum();
    if !(s > 0.0) {
        w = local.to_vec();
        s = w.iter().sum();
    }
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
    w
}

/// One self-localization round on predicted beliefs: navigation data and
/// inter-agent links are fused over `cfg.iterations` message passes.
pub fn selfloc_round(
    beliefs: &[AgentBelief],
    frame: &MeasurementFrame,
    model: &ModelConfig,
    cfg: &SelfLocConfig,
) -> Result<SelfLocOutput, SelfLocError> {
    let n_agents = beliefs.len();
    let check = |id: usize| {
        if id == 0 || id > n_agents {
            Err(SelfLocError::UnknownAgent(id))
        } else {
            Ok(id - 1)
        }
    };
    // local factors: predicted weight times navigation likelihood
    let mut local: Vec<Vec<f64>> = beliefs.iter().map(|b| b.weights.clone()).collect();
    for (&id, g) in &frame.nav {
        let a = check(id)?;
        let Some(std) = model.noise.nav_pos_std.get(a).copied().flatten() else {
            continue;
        };
        for (w, s) in local[a].iter_mut().zip(&beliefs[a].particles) {
            *w *= nav_likelihood(g, s, std);
        }
        if !local[a].iter().any(|w| *w > 0.0) {
            // navigation fix far outside the predicted cloud: keep its shape
            // through a log-domain rescale
            let logs: Vec<f64> = beliefs[a]
                .particles
                .iter()
                .map(|s| -0.5 * (g - s.position).norm_squared() / (std * std))
                .collect();
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            local[a] = beliefs[a].weights.iter().zip(&logs).map(|(w, l)| w * (l - max).exp()).collect();
        }
    }

    let mut links = Vec::new();
    let mut kernels = Vec::new();
    for l in &frame.links {
        let (a, b) = (check(l.rx)?, check(l.tx)?);
        if a == b {
            continue;
        }
        let mut k = link_kernel(&l.value, &beliefs[a].particles, &beliefs[b].particles, model, Some(GATE_SIGMAS));
        if !k.iter().any(|v| *v > 0.0) {
            k = link_kernel_rescaled(&l.value, &beliefs[a].particles, &beliefs[b].particles, model);
        }
        links.push((a, b));
        kernels.push(k);
    }

    // incident[agent] = list of (link index, agent is receiver)
    let mut incident: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n_agents];
    for (k, (a, b)) in links.iter().enumerate() {
        incident[*a].push((k, true));
        incident[*b].push((k, false));
    }
    let mut to_rx: Vec<Vec<f64>> = links.iter().map(|(a, _)| vec![1.0; beliefs[*a].len()]).collect();
    let mut to_tx: Vec<Vec<f64>> = links.iter().map(|(_, b)| vec![1.0; beliefs[*b].len()]).collect();
    let mut from_rx = to_rx.clone();
    let mut from_tx = to_tx.clone();

    for _ in 0..cfg.iterations {
        for (agent, inc) in incident.iter().enumerate() {
            let msgs: Vec<&[f64]> = inc
                .iter()
                .map(|(k, is_rx)| if *is_rx { to_rx[*k].as_slice() } else { to_tx[*k].as_slice() })
                .collect();
            for (slot, (k, is_rx)) in inc.iter().enumerate() {
                let e = extrinsic_weights(&local[agent], &msgs, Some(slot));
                if *is_rx {
                    from_rx[*k] = e;
                } else {
                    from_tx[*k] = e;
                }
            }
        }
        for (k, (_, b)) in links.iter().enumerate() {
            let cols = beliefs[*b].len();
            let mut m_rx = row_sums(&kernels[k], cols, &from_tx[k]);
            let mut m_tx = col_sums(&kernels[k], cols, &from_rx[k]);
            scale_to_max(&mut m_rx);
            scale_to_max(&mut m_tx);
            to_rx[k] = m_rx;
            to_tx[k] = m_tx;
        }
    }

    let mut out = Vec::with_capacity(n_agents);
    for (agent, inc) in incident.iter().enumerate() {
        let msgs: Vec<&[f64]> = inc
            .iter()
            .map(|(k, is_rx)| if *is_rx { to_rx[*k].as_slice() } else { to_tx[*k].as_slice() })
            .collect();
        let weights = extrinsic_weights(&local[agent], &msgs, None);
        let mut b = AgentBelief {
            particles: beliefs[agent].particles.clone(),
            weights,
        };
        b.normalize().map_err(|source| SelfLocError::Belief {
            agent: agent + 1,
            source,
        })?;
        out.push(b);
    }
    let link_messages = links
        .iter()
        .enumerate()
        .map(|(k, (a, b))| LinkMessages {
            rx: a + 1,
            tx: b + 1,
            from_rx: from_rx[k].clone(),
            from_tx: from_tx[k].clone(),
            to_rx: to_rx[k].clone(),
            to_tx: to_tx[k].clone(),
        })
        .collect();
    Ok(SelfLocOutput {
        beliefs: out,
        links: link_messages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{KinematicState, NoiseSpec, Region, Vec2};
    use crate::scenario::LinkMeasurement;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn model(nav: Vec<Option<f64>>) -> ModelConfig {
        ModelConfig {
            dt: 1.0,
            detection_prob: 0.9,
            clutter_mean: 1.0,
            clutter_region: Region::new(Vec2::new(-5000.0, -5000.0), Vec2::new(5000.0, 5000.0)),
            birth_mean: 0.1,
            birth_pos_std: 500.0,
            birth_vel_box: [-1.0, 1.0],
            survival_prob: 0.99,
            range_scale: 2.0,
            noise: NoiseSpec {
                range_std: 20.0,
                bearing_std: 1.0,
                process_std_agent: 0.1,
                process_std_target: 0.1,
                nav_pos_std: nav,
            },
            agent_reflections: false,
        }
    }

    fn cloud(center: Vec2, spread: f64, n: usize, seed: u64) -> AgentBelief {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, spread).unwrap();
        AgentBelief::uniform(
            (0..n)
                .map(|_| KinematicState {
                    position: center + Vec2::new(d.sample(&mut rng), d.sample(&mut rng)),
                    velocity: Vec2::zeros(),
                })
                .collect(),
        )
    }

    #[test]
    fn tight_nav_pulls_to_truth() {
        let truth = Vec2::new(100.0, -50.0);
        let b = cloud(truth + Vec2::new(30.0, 0.0), 50.0, 2000, 1);
        let mut frame = MeasurementFrame::default();
        frame.nav.insert(1, truth);
        let out = selfloc_round(&[b], &frame, &model(vec![Some(1.0)]), &SelfLocConfig::default()).unwrap();
        let est = out.beliefs[0].mmse_estimate().unwrap();
        // posterior spread is about one meter; allow three over sqrt(N_eff)
        assert!((est.position - truth).norm() < 3.0, "{:?}", est.position);
    }

    #[test]
    fn no_data_leaves_weights_unchanged() {
        let b = cloud(Vec2::zeros(), 10.0, 50, 2);
        let out = selfloc_round(std::slice::from_ref(&b), &MeasurementFrame::default(), &model(vec![None]), &SelfLocConfig::default())
            .unwrap();
        assert_eq!(out.beliefs[0].particles, b.particles);
        for (w, v) in out.beliefs[0].weights.iter().zip(&b.weights) {
            assert!((w - v).abs() < 1e-15);
        }
    }

    #[test]
    fn link_localizes_receiver_against_anchor() {
        let anchor = AgentBelief::point(KinematicState::new(0.0, 0.0, 0.0, 0.0));
        let truth = Vec2::new(3500.0, 0.0);
        let rx = cloud(truth, 100.0, 3000, 3);
        let frame = MeasurementFrame {
            links: vec![LinkMeasurement {
                rx: 1,
                tx: 2,
                value: crate::models::predict_link(&truth, &Vec2::zeros(), 2.0).unwrap(),
            }],
            ..Default::default()
        };
        let out = selfloc_round(&[rx, anchor], &frame, &model(vec![None, None]), &SelfLocConfig::default()).unwrap();
        let est = out.beliefs[0].mmse_estimate().unwrap();
        assert!((est.position - truth).norm() < 20.0, "{:?}", est.position);
    }

    #[test]
    fn extrinsic_message_excludes_own_link() {
        // chain c - a - b: what a sends towards link (a, b) must not depend
        // on the measurement of that link
        let a = cloud(Vec2::new(1000.0, 0.0), 40.0, 300, 4);
        let b = cloud(Vec2::new(1000.0, 1000.0), 5.0, 300, 5);
        let c = cloud(Vec2::zeros(), 5.0, 300, 6);
        let link = |rx, tx, value| LinkMeasurement { rx, tx, value };
        let ca = crate::models::predict_link(&Vec2::new(1000.0, 0.0), &Vec2::zeros(), 2.0).unwrap();
        let run = |ab: RangeBearing| {
            let frame = MeasurementFrame {
                links: vec![link(1, 3, ca), link(1, 2, ab)],
                ..Default::default()
            };
            selfloc_round(
                &[a.clone(), b.clone(), c.clone()],
                &frame,
                &model(vec![None, None, None]),
                &SelfLocConfig { iterations: 3 },
            )
            .unwrap()
        };
        let good = run(RangeBearing::new(2000.0, 0.0));
        let bad = run(RangeBearing::new(2300.0, 10.0));
        assert_eq!(good.links[1].from_rx, bad.links[1].from_rx);
        assert_ne!(good.links[1].to_rx, bad.links[1].to_rx);
    }

    #[test]
    fn far_link_falls_back_to_rescaled_kernel() {
        let a = cloud(Vec2::zeros(), 1.0, 20, 7);
        let b = cloud(Vec2::new(100.0, 0.0), 1.0, 20, 8);
        let rho = RangeBearing::new(5000.0, 270.0);
        let m = model(vec![None, None]);
        assert!(link_kernel(&rho, &a.particles, &b.particles, &m, Some(GATE_SIGMAS)).iter().all(|v| *v == 0.0));
        let frame = MeasurementFrame {
            links: vec![LinkMeasurement { rx: 1, tx: 2, value: rho }],
            ..Default::default()
        };
        assert!(selfloc_round(&[a, b], &frame, &m, &SelfLocConfig::default()).is_ok());
    }

    #[test]
    fn predict_keeps_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut b = cloud(Vec2::zeros(), 1.0, 10, 9);
        b.weights[0] = 0.5;
        let p = predict_agent(&b, 0.1, 30.0, &mut rng).unwrap();
        assert_eq!(p.weights, b.weights);
        assert!(predict_agent(&b, 0.1, 0.0, &mut rng).is_err());
    }
}
