//! Motion, measurement, clutter and birth models.
//!
//! Bearings are in degrees, measured clockwise from the +y axis (north) and
//! kept in `[0, 360)`. Ranges are in meters. All likelihoods are densities in
//! (meter, degree) space.

use nalgebra::{Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("bearing undefined for coincident points")]
    UndefinedBearing,
    #[error("time step must be positive, got {0}")]
    NonPositiveTimeStep(f64),
    #[error("invalid parameter {name}: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

/// Position and velocity in the plane. Used for both agents and targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub position: Vec2,
    pub velocity: Vec2,
}

pub type AgentState = KinematicState;
pub type TargetState = KinematicState;

impl KinematicState {
    pub fn new(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        Self {
            position: Vec2::new(px, py),
            velocity: Vec2::new(vx, vy),
        }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.position.x, self.position.y, self.velocity.x, self.velocity.y)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// A (range, bearing) pair. The bearing is always wrapped into `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeBearing {
    pub range: f64,
    pub bearing: f64,
}

impl RangeBearing {
    pub fn new(range: f64, bearing: f64) -> Self {
        Self {
            range,
            bearing: wrap_bearing(bearing),
        }
    }
}

/// Wraps an angle in degrees into `[0, 360)`.
pub fn wrap_bearing(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Shortest signed angular difference `a - b` in degrees, in `(-180, 180]`.
pub fn bearing_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Bearing of `to` as seen from `from`.
pub fn bearing(from: &Vec2, to: &Vec2) -> Result<f64, ModelError> {
    let d = to - from;
    if d.x == 0.0 && d.y == 0.0 {
        return Err(ModelError::UndefinedBearing);
    }
    Ok(wrap_bearing(d.x.atan2(d.y).to_degrees()))
}

/// Unit vector pointing along a bearing.
pub fn bearing_unit(bearing_deg: f64) -> Vec2 {
    let b = bearing_deg.to_radians();
    Vec2::new(b.sin(), b.cos())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub range_std: f64,
    pub bearing_std: f64,
    pub process_std_agent: f64,
    pub process_std_target: f64,
    /// Navigation noise per agent index; `None` when the agent has no
    /// navigation data.
    pub nav_pos_std: Vec<Option<f64>>,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [("range_std", self.range_std), ("bearing_std", self.bearing_std)];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        let non_negative = [
            ("process_std_agent", self.process_std_agent),
            ("process_std_target", self.process_std_target),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        for s in self.nav_pos_std.iter().flatten() {
            if !(*s > 0.0 && s.is_finite()) {
                return Err(ModelError::InvalidParameter {
                    name: "nav_pos_std",
                    value: *s,
                });
            }
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in which clutter and births are modelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub min: Vec2,
    pub max: Vec2,
}

impl Region {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Uniform Cartesian clutter density, per square meter.
    pub fn cartesian_density(&self) -> f64 {
        1.0 / self.area()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec2 {
        Vec2::new(
            rng.random_range(self.min.x..self.max.x),
            rng.random_range(self.min.y..self.max.y),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Monostatic,
    Bistatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub dt: f64,
    pub detection_prob: f64,
    pub clutter_mean: f64,
    pub clutter_region: Region,
    pub birth_mean: f64,
    pub birth_pos_std: f64,
    /// Velocity interval, identical on both axes.
    pub birth_vel_box: [f64; 2],
    pub survival_prob: f64,
    pub range_scale: f64,
    pub noise: NoiseSpec,
    /// Whether agents generate MOT measurements at sensing pairs they are
    /// not part of.
    pub agent_reflections: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.dt > 0.0) {
            return Err(ModelError::NonPositiveTimeStep(self.dt));
        }
        let probs = [
            ("detection_prob", self.detection_prob),
            ("survival_prob", self.survival_prob),
        ];
        for (name, value) in probs {
            if !(0.0..=1.0).contains(&value) {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        let non_negative = [("clutter_mean", self.clutter_mean), ("birth_mean", self.birth_mean)];
        for (name, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        if !(self.birth_pos_std > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "birth_pos_std",
                value: self.birth_pos_std,
            });
        }
        if !(self.birth_vel_box[1] > self.birth_vel_box[0]) {
            return Err(ModelError::InvalidParameter {
                name: "birth_vel_box",
                value: self.birth_vel_box[1] - self.birth_vel_box[0],
            });
        }
        if !(self.range_scale > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "range_scale",
                value: self.range_scale,
            });
        }
        if !(self.clutter_region.area() > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "clutter_region",
                value: self.clutter_region.area(),
            });
        }
        self.noise.validate()
    }

    pub fn clutter_cartesian_density(&self) -> f64 {
        self.clutter_region.cartesian_density()
    }
}

/// State transition `A` and noise gain `W` of the constant-velocity model.
pub fn ncv_matrices(dt: f64) -> (Matrix4<f64>, Matrix4x2<f64>) {
    #[rustfmt::skip]
    let a = Matrix4::new(
        1.0, 0.0, dt, 0.0,
        0.0, 1.0, 0.0, dt,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    );
    let h = 0.5 * dt * dt;
    #[rustfmt::skip]
    let w = Matrix4x2::new(
        h, 0.0,
        0.0, h,
        dt, 0.0,
        0.0, dt,
    );
    (a, w)
}

/// Deterministic part of the constant-velocity transition.
#[inline]
pub fn ncv_mean(state: &KinematicState, dt: f64) -> KinematicState {
    KinematicState {
        position: state.position + state.velocity * dt,
        velocity: state.velocity,
    }
}

/// Propagates a state with an acceleration draw of standard deviation `std`.
pub fn ncv_step<R: Rng + ?Sized>(
    state: &KinematicState,
    std: f64,
    dt: f64,
    rng: &mut R,
) -> Result<KinematicState, ModelError> {
    if !(dt > 0.0) {
        return Err(ModelError::NonPositiveTimeStep(dt));
    }
    let mut next = ncv_mean(state, dt);
    if std > 0.0 {
        let ux: f64 = rng.sample::<f64, _>(StandardNormal) * std;
        let uy: f64 = rng.sample::<f64, _>(StandardNormal) * std;
        let h = 0.5 * dt * dt;
        next.position += Vec2::new(h * ux, h * uy);
        next.velocity += Vec2::new(dt * ux, dt * uy);
    }
    Ok(next)
}

/// Process noise covariance `W W^T std^2`.
pub fn ncv_process_covariance(dt: f64, std: f64) -> Matrix4<f64> {
    let (_, w) = ncv_matrices(dt);
    w * w.transpose() * (std * std)
}

/// Linear observation picking the position out of a state vector.
pub fn position_selector() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

#[inline]
pub fn gaussian_pdf(residual: f64, std: f64) -> f64 {
    let e = residual / std;
    (-0.5 * e * e).exp() / ((2.0 * PI).sqrt() * std)
}

/// Isotropic 2D Gaussian density.
#[inline]
pub fn gaussian2_pdf(residual: &Vec2, std: f64) -> f64 {
    let v = std * std;
    (-0.5 * residual.norm_squared() / v).exp() / (2.0 * PI * v)
}

pub fn nav_likelihood(g: &Vec2, state: &AgentState, std: f64) -> f64 {
    gaussian2_pdf(&(g - state.position), std)
}

/// Density of an observed (range, bearing) around a predicted one.
#[inline]
pub fn range_bearing_likelihood(z: &RangeBearing, predicted: &RangeBearing, noise: &NoiseSpec) -> f64 {
    gaussian_pdf(z.range - predicted.range, noise.range_std)
        * gaussian_pdf(bearing_difference(z.bearing, predicted.bearing), noise.bearing_std)
}

/// Noise-free inter-agent measurement: scaled distance and bearing from the
/// receiver towards the transmitter.
pub fn predict_link(rx: &Vec2, tx: &Vec2, range_scale: f64) -> Result<RangeBearing, ModelError> {
    Ok(RangeBearing {
        range: range_scale * (tx - rx).norm(),
        bearing: bearing(rx, tx)?,
    })
}

pub fn inter_agent_likelihood(
    rho: &RangeBearing,
    rx: &AgentState,
    tx: &AgentState,
    noise: &NoiseSpec,
    range_scale: f64,
) -> Result<f64, ModelError> {
    let predicted = predict_link(&rx.position, &tx.position, range_scale)?;
    Ok(range_bearing_likelihood(rho, &predicted, noise))
}

/// Noise-free MOT measurement of an object at `x` seen by receiver `rx` and
/// illuminated by `tx`.
pub fn predict_mot(
    x: &Vec2,
    rx: &Vec2,
    tx: &Vec2,
    geometry: Geometry,
    range_scale: f64,
) -> Result<RangeBearing, ModelError> {
    let range = match geometry {
        Geometry::Monostatic => range_scale * (x - rx).norm(),
        Geometry::Bistatic => (x - rx).norm() + (x - tx).norm(),
    };
    Ok(RangeBearing {
        range,
        bearing: bearing(rx, x)?,
    })
}

pub fn mot_likelihood(
    z: &RangeBearing,
    x: &Vec2,
    rx: &Vec2,
    tx: &Vec2,
    geometry: Geometry,
    noise: &NoiseSpec,
    range_scale: f64,
) -> Result<f64, ModelError> {
    let predicted = predict_mot(x, rx, tx, geometry, range_scale)?;
    Ok(range_bearing_likelihood(z, &predicted, noise))
}

/// Maps a MOT measurement back to the plane.
///
/// Returns the object position and the area element `|dx dy / dr dθ|`
/// (square meters per meter-degree), or `None` when no position is
/// consistent with the range.
pub fn measurement_to_cartesian(
    z: &RangeBearing,
    rx: &Vec2,
    tx: &Vec2,
    geometry: Geometry,
    range_scale: f64,
) -> Option<(Vec2, f64)> {
    let u = bearing_unit(z.bearing);
    let (d, dd_dr) = match geometry {
        Geometry::Monostatic => (z.range / range_scale, 1.0 / range_scale),
        Geometry::Bistatic => {
            let b = rx - tx;
            let b2 = b.norm_squared();
            let c = u.dot(&b);
            let r = z.range;
            let den = r + c;
            if r * r < b2 || den <= 0.0 {
                return None;
            }
            let d = (r * r - b2) / (2.0 * den);
            let dd_dr = (r * r + 2.0 * r * c + b2) / (2.0 * den * den);
            (d, dd_dr)
        }
    };
    if !(d >= 0.0) || !d.is_finite() {
        return None;
    }
    let jac = d * dd_dr * PI / 180.0;
    Some((rx + u * d, jac))
}

/// Density of a clutter measurement at `z` in (meter, degree) space for
/// clutter uniform over the region in the plane.
pub fn clutter_pdf(
    z: &RangeBearing,
    rx: &Vec2,
    tx: &Vec2,
    geometry: Geometry,
    range_scale: f64,
    region: &Region,
) -> f64 {
    match measurement_to_cartesian(z, rx, tx, geometry, range_scale) {
        Some((p, jac)) if region.contains(&p) => region.cartesian_density() * jac,
        _ => 0.0,
    }
}

/// Birth density: Gaussian in position around `center`, uniform in velocity.
pub fn birth_pdf(x: &TargetState, center: &Vec2, model: &ModelConfig) -> f64 {
    let [lo, hi] = model.birth_vel_box;
    let inside = |v: f64| v >= lo && v <= hi;
    if !(inside(x.velocity.x) && inside(x.velocity.y)) {
        return 0.0;
    }
    let w = hi - lo;
    gaussian2_pdf(&(x.position - center), model.birth_pos_std) / (w * w)
}

pub fn sample_birth_velocity<R: Rng + ?Sized>(model: &ModelConfig, rng: &mut R) -> Vec2 {
    let [lo, hi] = model.birth_vel_box;
    Vec2::new(rng.random_range(lo..=hi), rng.random_range(lo..=hi))
}

/// What generated a MOT measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectKind {
    Target,
    Agent(usize),
}

/// Detection probability of an object at the pair `(rx, tx)`. Agents never
/// detect themselves.
pub fn detection_probability(object: ObjectKind, rx: usize, tx: usize, pd: f64) -> f64 {
    match object {
        ObjectKind::Target => pd,
        ObjectKind::Agent(a) if a == rx || a == tx => 0.0,
        ObjectKind::Agent(_) => pd,
    }
}
