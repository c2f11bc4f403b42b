//! Reference computations shared by the integration tests. None of these use
//! the library's inference code, only its plain data types.

#![allow(dead_code)]

use coop_track::association::AssociationProblem;
use coop_track::models::{KinematicState, ModelConfig, NoiseSpec, Region, Vec2};
use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use rand::Rng;

// ---------------------------------------------------------------------------
// association

/// Marginals of alpha and beta by brute force over `(0..=M)^O`.
pub fn enumerate_marginals(p: &AssociationProblem) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let o = p.xi.len();
    let m = p.sigma.len();
    let mut ea = vec![vec![0.0; m + 1]; o];
    let mut eb = vec![vec![0.0; o + 1]; m];
    let total_events = (m + 1).pow(o as u32);
    let mut alpha = vec![0usize; o];
    for code in 0..total_events {
        let mut c = code;
        for a in alpha.iter_mut() {
            *a = c % (m + 1);
            c /= m + 1;
        }
        let mut beta = vec![0usize; m];
        let mut ok = true;
        for (i, a) in alpha.iter().enumerate() {
            if *a > 0 {
                if beta[a - 1] != 0 {
                    ok = false;
                    break;
                }
                beta[a - 1] = i + 1;
            }
        }
        if !ok {
            continue;
        }
        let mut w = 1.0;
        for (i, a) in alpha.iter().enumerate() {
            w *= p.xi[i][*a];
        }
        for (j, b) in beta.iter().enumerate() {
            w *= p.sigma[j][*b];
        }
        for (i, a) in alpha.iter().enumerate() {
            ea[i][*a] += w;
        }
        for (j, b) in beta.iter().enumerate() {
            eb[j][*b] += w;
        }
    }
    for row in ea.iter_mut().chain(eb.iter_mut()) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    (ea, eb)
}

/// Random association tables shaped like the tracker's: `xi` rows with a
/// positive miss entry and some gated (zero) measurement entries, `sigma`
/// rows `[1 + ratio, 1, ..., 1]` perturbed by a positive factor.
pub fn random_problem<R: Rng>(rng: &mut R, o: usize, m: usize) -> AssociationProblem {
    let log_uniform = |rng: &mut R, lo: f64, hi: f64| rng.random_range(lo..hi).exp();
    let xi = (0..o)
        .map(|_| {
            let mut row = vec![log_uniform(rng, -2.0, 0.0)];
            for _ in 0..m {
                row.push(if rng.random_bool(0.25) {
                    0.0
                } else {
                    log_uniform(rng, -3.0, 3.0)
                });
            }
            row
        })
        .collect();
    let sigma = (0..m)
        .map(|_| {
            let mut row = vec![1.0 + log_uniform(rng, -4.0, 1.0)];
            for _ in 0..o {
                row.push(log_uniform(rng, -0.5, 0.5));
            }
            row
        })
        .collect();
    AssociationProblem { xi, sigma }
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

// ---------------------------------------------------------------------------
// Kalman filter for a constant-velocity agent with position fixes

pub struct Kalman {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl Kalman {
    pub fn predict(&mut self, dt: f64, std: f64) {
        #[rustfmt::skip]
        let f = Matrix4::new(
            1.0, 0.0, dt, 0.0,
            0.0, 1.0, 0.0, dt,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        let (q11, q12, q22) = (dt.powi(4) / 4.0, dt.powi(3) / 2.0, dt * dt);
        #[rustfmt::skip]
        let q = Matrix4::new(
            q11, 0.0, q12, 0.0,
            0.0, q11, 0.0, q12,
            q12, 0.0, q22, 0.0,
            0.0, q12, 0.0, q22,
        ) * (std * std);
        self.mean = f * self.mean;
        self.cov = f * self.cov * f.transpose() + q;
    }

    pub fn update(&mut self, g: Vector2<f64>, std: f64) {
        let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
        let s = h * self.cov * h.transpose() + Matrix2::identity() * (std * std);
        let k = self.cov * h.transpose() * s.try_inverse().expect("innovation covariance");
        self.mean += k * (g - h * self.mean);
        self.cov = (Matrix4::identity() - k * h) * self.cov;
    }
}

// ---------------------------------------------------------------------------
// Bernoulli filter on a fixed grid of static positions, monostatic sensor

pub struct GridFilter {
    pub points: Vec<Vec2>,
    /// Unnormalized spatial density times existence.
    pub mass: Vec<f64>,
    pub nonexistence: f64,
}

fn wrapped(d: f64) -> f64 {
    let r = (d + 180.0).rem_euclid(360.0) - 180.0;
    if r == -180.0 {
        180.0
    } else {
        r
    }
}

/// Monostatic range-bearing density of `z = (range, bearing_deg)` for an
/// object at `x` seen from `s`, written out directly.
pub fn mono_likelihood(z: (f64, f64), x: &Vec2, s: &Vec2, noise: &NoiseSpec, scale: f64) -> f64 {
    let d = x - s;
    let range = scale * d.norm();
    let bearing = d.x.atan2(d.y).to_degrees();
    let er = (z.0 - range) / noise.range_std;
    let eb = wrapped(z.1 - bearing) / noise.bearing_std;
    (-0.5 * (er * er + eb * eb)).exp() / (2.0 * std::f64::consts::PI * noise.range_std * noise.bearing_std)
}

/// Clutter density in (m, deg) for clutter uniform on `region`, monostatic,
/// sensor at `s`.
pub fn mono_clutter_density(z: (f64, f64), s: &Vec2, region: &Region, scale: f64) -> f64 {
    let d = z.0 / scale;
    let b = z.1.to_radians();
    let p = s + Vec2::new(d * b.sin(), d * b.cos());
    if !region.contains(&p) {
        return 0.0;
    }
    // |dx dy| = d dd dtheta = d (dr / scale) (pi / 180) dbeta
    d / scale * std::f64::consts::PI / 180.0 / region.area()
}

impl GridFilter {
    pub fn new(points: Vec<Vec2>, existence: f64) -> Self {
        let n = points.len() as f64;
        Self {
            mass: vec![existence / n; points.len()],
            points,
            nonexistence: 1.0 - existence,
        }
    }

    pub fn existence(&self) -> f64 {
        let e: f64 = self.mass.iter().sum();
        e / (e + self.nonexistence)
    }

    pub fn mean(&self) -> Vec2 {
        let e: f64 = self.mass.iter().sum();
        self.points.iter().zip(&self.mass).map(|(p, w)| p * *w).sum::<Vec2>() / e
    }

    /// Survival, then the measurement update with at most one measurement
    /// and no newly appearing objects.
    pub fn step(&mut self, z: Option<(f64, f64)>, sensor: &Vec2, model: &ModelConfig) {
        let ps = model.survival_prob;
        let e: f64 = self.mass.iter().sum();
        self.nonexistence += (1.0 - ps) * e;
        self.mass.iter_mut().for_each(|w| *w *= ps);
        let pd = model.detection_prob;
        let factor: Vec<f64> = match z {
            None => vec![1.0 - pd; self.points.len()],
            Some(z) => {
                let fc = model.clutter_mean * mono_clutter_density(z, sensor, &model.clutter_region, model.range_scale);
                self.points
                    .iter()
                    .map(|x| (1.0 - pd) + pd * mono_likelihood(z, x, sensor, &model.noise, model.range_scale) / fc)
                    .collect()
            }
        };
        self.mass.iter_mut().zip(&factor).for_each(|(w, f)| *w *= f);
        let total = self.mass.iter().sum::<f64>() + self.nonexistence;
        self.mass.iter_mut().for_each(|w| *w /= total);
        self.nonexistence /= total;
    }
}

pub fn static_state(p: Vec2) -> KinematicState {
    KinematicState {
        position: p,
        velocity: Vec2::zeros(),
    }
}

// ---------------------------------------------------------------------------
// small reference model

pub fn test_model(nav: Vec<Option<f64>>) -> ModelConfig {
    ModelConfig {
        dt: 30.0,
        detection_prob: 0.7,
        clutter_mean: 3.0,
        clutter_region: Region::new(Vec2::new(-5000.0, -5000.0), Vec2::new(5000.0, 5000.0)),
        birth_mean: 0.1,
        birth_pos_std: 500.0,
        birth_vel_box: [-1.54, 1.54],
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
