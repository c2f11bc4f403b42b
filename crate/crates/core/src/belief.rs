//! Particle representations of agent and potential-target beliefs.

use crate::models::{AgentState, KinematicState, TargetState, Vec2};
use rand::Rng;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeliefError {
    #[error("particle weights sum to zero")]
    Degenerate,
    #[error("belief has no existence mass")]
    NoExistenceSupport,
    #[error("particle set is empty")]
    Empty,
    #[error("{particles} particles but {weights} weights")]
    LengthMismatch { particles: usize, weights: usize },
}

/// Systematic resampling. `weights` must be non-negative with positive sum.
pub fn systematic_indices<R: Rng + ?Sized>(
    weights: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>, BeliefError> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(BeliefError::Degenerate);
    }
    let step = total / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cum = 0.0;
    let mut i = 0;
    let last = weights.len() - 1;
    for _ in 0..n {
        while i < last && cum + weights[i] <= u {
            cum += weights[i];
            i += 1;
        }
        out.push(i);
        u += step;
    }
    Ok(out)
}

fn weighted_mean(particles: &[KinematicState], weights: &[f64]) -> Option<KinematicState> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut p = Vec2::zeros();
    let mut v = Vec2::zeros();
    for (s, w) in particles.iter().zip(weights) {
        p += s.position * *w;
        v += s.velocity * *w;
    }
    Some(KinematicState {
        position: p / total,
        velocity: v / total,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentBelief {
    pub particles: Vec<AgentState>,
    pub weights: Vec<f64>,
}

impl AgentBelief {
    pub fn uniform(particles: Vec<AgentState>) -> Self {
        let w = 1.0 / particles.len() as f64;
        let weights = vec![w; particles.len()];
        Self { particles, weights }
    }

    /// A belief concentrated on a single state.
    pub fn point(state: AgentState) -> Self {
        Self {
            particles: vec![state],
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn check(&self) -> Result<(), BeliefError> {
        if self.particles.is_empty() {
            return Err(BeliefError::Empty);
        }
        if self.particles.len() != self.weights.len() {
            return Err(BeliefError::LengthMismatch {
                particles: self.particles.len(),
                weights: self.weights.len(),
            });
        }
        Ok(())
    }

    pub fn normalize(&mut self) -> Result<(), BeliefError> {
        self.check()?;
        let total: f64 = self.weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(BeliefError::Degenerate);
        }
        self.weights.iter_mut().for_each(|w| *w /= total);
        Ok(())
    }

    pub fn mmse_estimate(&self) -> Result<AgentState, BeliefError> {
        self.check()?;
        weighted_mean(&self.particles, &self.weights).ok_or(BeliefError::Degenerate)
    }

    pub fn resample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Self, BeliefError> {
        self.check()?;
        let idx = systematic_indices(&self.weights, n, rng)?;
        Ok(Self::uniform(idx.into_iter().map(|i| self.particles[i]).collect()))
    }

    /// Effective sample size of the normalized weights.
    pub fn effective_size(&self) -> f64 {
        let total: f64 = self.weights.iter().sum();
        let sq: f64 = self.weights.iter().map(|w| (w / total) * (w / total)).sum();
        1.0 / sq
    }
}

/// Identifies a potential target by the time step, sensing pair and
/// measurement that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PtLabel {
    pub time: usize,
    pub pair: usize,
    pub measurement: usize,
}

impl fmt::Display for PtLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.time, self.pair, self.measurement)
    }
}

/// Potential target belief. Particle weights sum to the existence mass;
/// `nonexistence` carries the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct PtBelief {
    pub label: PtLabel,
    pub particles: Vec<TargetState>,
    pub weights: Vec<f64>,
    pub nonexistence: f64,
}

impl PtBelief {
    /// Particles with equal weights summing to `existence`.
    pub fn with_existence(label: PtLabel, particles: Vec<TargetState>, existence: f64) -> Self {
        let w = existence / particles.len() as f64;
        let weights = vec![w; particles.len()];
        Self {
            label,
            particles,
            weights,
            nonexistence: 1.0 - existence,
        }
    }

    pub fn existence_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn existence_probability(&self) -> f64 {
        let e = self.existence_mass();
        let total = e + self.nonexistence;
        if total > 0.0 {
            e / total
        } else {
            0.0
        }
    }

    pub fn check(&self) -> Result<(), BeliefError> {
        if self.particles.is_empty() {
            return Err(BeliefError::Empty);
        }
        if self.particles.len() != self.weights.len() {
            return Err(BeliefError::LengthMismatch {
                particles: self.particles.len(),
                weights: self.weights.len(),
            });
        }
        Ok(())
    }

    /// Scales the weights and the nonexistence mass to total one. A belief
    /// with no mass at all is demoted to certain nonexistence.
    pub fn normalize(&mut self) {
        let total = self.existence_mass() + self.nonexistence;
        if !(total > 0.0) || !total.is_finite() {
            self.weights.iter_mut().for_each(|w| *w = 0.0);
            self.nonexistence = 1.0;
            return;
        }
        self.weights.iter_mut().for_each(|w| *w /= total);
        self.nonexistence /= total;
    }

    /// State estimate conditioned on existence.
    pub fn mmse_estimate(&self) -> Result<TargetState, BeliefError> {
        self.check()?;
        weighted_mean(&self.particles, &self.weights).ok_or(BeliefError::NoExistenceSupport)
    }

    /// Resamples `n` equally weighted particles; the existence probability
    /// is preserved. A belief without existence mass is returned unchanged.
    pub fn resample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Self, BeliefError> {
        self.check()?;
        let mut b = self.clone();
        b.normalize();
        let e = b.existence_mass();
        if e <= 0.0 {
            return Ok(b);
        }
        let idx = systematic_indices(&b.weights, n, rng)?;
        let particles = idx.into_iter().map(|i| b.particles[i]).collect();
        let mut out = Self::with_existence(self.label, particles, e);
        out.nonexistence = b.nonexistence;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn label() -> PtLabel {
        PtLabel {
            time: 1,
            pair: 1,
            measurement: 1,
        }
    }

    #[test]
    fn systematic_counts_are_proportional() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = [0.5, 0.25, 0.25, 0.0];
        let idx = systematic_indices(&w, 8, &mut rng).unwrap();
        let count = |k| idx.iter().filter(|&&i| i == k).count();
        assert_eq!((count(0), count(1), count(2), count(3)), (4, 2, 2, 0));
        assert!(systematic_indices(&[0.0, 0.0], 4, &mut rng).is_err());
    }

    #[test]
    fn existence_and_estimate() {
        let parts = vec![KinematicState::new(0.0, 0.0, 1.0, 0.0), KinematicState::new(2.0, 0.0, 1.0, 0.0)];
        let mut b = PtBelief::with_existence(label(), parts, 0.6);
        assert_relative_eq!(b.existence_probability(), 0.6);
        assert_relative_eq!(b.mmse_estimate().unwrap().position.x, 1.0);
        b.weights = vec![0.0, 0.0];
        assert_eq!(b.mmse_estimate(), Err(BeliefError::NoExistenceSupport));
        b.nonexistence = 0.0;
        b.normalize();
        assert_eq!(b.nonexistence, 1.0);
    }

    #[test]
    fn resampling_keeps_existence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let parts = (0..10).map(|i| KinematicState::new(i as f64, 0.0, 0.0, 0.0)).collect();
        let mut b = PtBelief::with_existence(label(), parts, 0.3);
        b.weights[0] *= 5.0;
        let e = b.existence_probability();
        let r = b.resample(50, &mut rng).unwrap();
        assert_eq!(r.particles.len(), 50);
        assert_relative_eq!(r.existence_probability(), e, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_agent_belief_is_an_error() {
        let mut a = AgentBelief::uniform(vec![KinematicState::new(0.0, 0.0, 0.0, 0.0); 3]);
        a.weights = vec![0.0; 3];
        assert_eq!(a.normalize(), Err(BeliefError::Degenerate));
    }
}
