//! Particle beliefs for the robot and the obstacles.
//!
//! The robot follows unicycle kinematics with additive actuation noise.
//! Noise particles are paired with state particles by index, so one step
//! costs O(n) regardless of how many noise sources there are.

use serde::{Deserialize, Serialize};

use crate::error::check_count;
use crate::sampling::{validate_weights, WeightedSamples};
use crate::{Error, Result, Vec2};

/// Commanded linear and angular speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub v: f64,
    pub omega: f64,
}

impl Control {
    pub const ZERO: Control = Control { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Control { v, omega }
    }

    pub fn norm_squared(&self) -> f64 {
        self.v * self.v + self.omega * self.omega
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParticle {
    pub position: Vec2,
    pub heading: f64,
    pub velocity: Vec2,
}

impl RobotParticle {
    /// One unicycle step: heading turns first, then the body moves along
    /// the new heading at speed `v` for `dt`.
    pub fn step(&self, v: f64, omega: f64, dt: f64) -> RobotParticle {
        let heading = self.heading + omega * dt;
        let velocity = Vec2::new(v * heading.cos(), v * heading.sin());
        RobotParticle {
            position: self.position + velocity * dt,
            heading,
            velocity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotBelief {
    particles: Vec<RobotParticle>,
    weights: Vec<f64>,
    radius: f64,
}

impl RobotBelief {
    pub fn new(particles: Vec<RobotParticle>, weights: Vec<f64>, radius: f64) -> Result<Self> {
        check_count("robot belief weights", particles.len(), weights.len())?;
        validate_weights(&weights)?;
        check_radius(radius)?;
        Ok(RobotBelief { particles, weights, radius })
    }

    pub fn uniform(particles: Vec<RobotParticle>, radius: f64) -> Result<Self> {
        let n = particles.len();
        if n == 0 {
            return Err(Error::config("particles", "belief needs at least one particle"));
        }
        Self::new(particles, vec![1.0 / n as f64; n], radius)
    }

    pub fn particles(&self) -> &[RobotParticle] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn mean_position(&self) -> Vec2 {
        weighted_mean(self.particles.iter().map(|p| p.position), &self.weights)
    }

    pub fn mean_velocity(&self) -> Vec2 {
        weighted_mean(self.particles.iter().map(|p| p.velocity), &self.weights)
    }

    /// Circular mean of the particle headings.
    pub fn mean_heading(&self) -> f64 {
        let (s, c) = self
            .particles
            .iter()
            .zip(&self.weights)
            .fold((0.0, 0.0), |(s, c), (p, w)| (s + w * p.heading.sin(), c + w * p.heading.cos()));
        if s == 0.0 && c == 0.0 {
            self.particles[0].heading
        } else {
            s.atan2(c)
        }
    }

    pub(crate) fn with_particles(&self, particles: Vec<RobotParticle>) -> RobotBelief {
        debug_assert_eq!(particles.len(), self.particles.len());
        RobotBelief {
            particles,
            weights: self.weights.clone(),
            radius: self.radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleParticle {
    pub position: Vec2,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleBelief {
    id: usize,
    particles: Vec<ObstacleParticle>,
    weights: Vec<f64>,
    radius: f64,
}

impl ObstacleBelief {
    pub fn new(id: usize, particles: Vec<ObstacleParticle>, weights: Vec<f64>, radius: f64) -> Result<Self> {
        check_count("obstacle belief weights", particles.len(), weights.len())?;
        validate_weights(&weights)?;
        check_radius(radius)?;
        Ok(ObstacleBelief { id, particles, weights, radius })
    }

    pub fn uniform(id: usize, particles: Vec<ObstacleParticle>, radius: f64) -> Result<Self> {
        let n = particles.len();
        if n == 0 {
            return Err(Error::config("particles", "belief needs at least one particle"));
        }
        Self::new(id, particles, vec![1.0 / n as f64; n], radius)
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn particles(&self) -> &[ObstacleParticle] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn mean_position(&self) -> Vec2 {
        weighted_mean(self.particles.iter().map(|p| p.position), &self.weights)
    }

    pub fn mean_velocity(&self) -> Vec2 {
        weighted_mean(self.particles.iter().map(|p| p.velocity), &self.weights)
    }

    pub(crate) fn with_particles(&self, particles: Vec<ObstacleParticle>) -> ObstacleBelief {
        debug_assert_eq!(particles.len(), self.particles.len());
        ObstacleBelief {
            id: self.id,
            particles,
            weights: self.weights.clone(),
            radius: self.radius,
        }
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius >= 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::config("radius", format!("radius {radius} must be finite and non-negative")))
    }
}

fn weighted_mean(points: impl Iterator<Item = Vec2>, weights: &[f64]) -> Vec2 {
    points.zip(weights).fold(Vec2::zeros(), |acc, (p, w)| acc + p * *w)
}

/// Applies `u + δ_i` to particle `i` for one step of length `dt`.
pub fn propagate_robot(
    belief: &RobotBelief,
    u: Control,
    noise: &WeightedSamples<Vec2>,
    dt: f64,
) -> Result<RobotBelief> {
    check_count("actuation noise", belief.len(), noise.len())?;
    let particles = belief
        .particles
        .iter()
        .zip(noise.values())
        .map(|(p, d)| p.step(u.v + d.x, u.omega + d.y, dt))
        .collect();
    Ok(belief.with_particles(particles))
}

/// Finite-difference velocity of each tracked particle between two frames.
pub fn estimate_obstacle_velocity(prev: &ObstacleBelief, curr: &ObstacleBelief, dt: f64) -> Result<ObstacleBelief> {
    if !(dt > 0.0) {
        return Err(Error::config("dt", "time step must be positive"));
    }
    check_count("obstacle frames", prev.len(), curr.len())?;
    if prev.id != curr.id {
        return Err(Error::config(
            "id",
            format!("obstacle ids differ ({} vs {})", prev.id, curr.id),
        ));
    }
    let particles = prev
        .particles
        .iter()
        .zip(&curr.particles)
        .map(|(a, b)| ObstacleParticle {
            position: b.position,
            velocity: (b.position - a.position) / dt,
        })
        .collect();
    Ok(curr.with_particles(particles))
}

/// Constant-velocity step with additive per-particle position noise.
pub fn advance_obstacle(
    belief: &ObstacleBelief,
    process_noise: &WeightedSamples<Vec2>,
    dt: f64,
) -> Result<ObstacleBelief> {
    check_count("obstacle process noise", belief.len(), process_noise.len())?;
    let particles = belief
        .particles
        .iter()
        .zip(process_noise.values())
        .map(|(p, n)| ObstacleParticle {
            position: p.position + p.velocity * dt + n,
            velocity: p.velocity,
        })
        .collect();
    Ok(belief.with_particles(particles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn robot_at_origin(n: usize) -> RobotBelief {
        let p = RobotParticle {
            position: Vec2::zeros(),
            heading: 0.0,
            velocity: Vec2::zeros(),
        };
        RobotBelief::uniform(vec![p; n], 0.3).unwrap()
    }

    fn zero_noise(n: usize) -> WeightedSamples<Vec2> {
        WeightedSamples::uniform(vec![Vec2::zeros(); n])
    }

    #[test]
    fn straight_step() {
        let b = propagate_robot(&robot_at_origin(3), Control::new(1.0, 0.0), &zero_noise(3), 0.1).unwrap();
        for p in b.particles() {
            assert_eq!(p.velocity, Vec2::new(1.0, 0.0));
            assert_abs_diff_eq!(p.position.x, 0.1, epsilon = 1e-12);
            assert_eq!(p.position.y, 0.0);
        }
    }

    #[test]
    fn quarter_turn_points_velocity_up() {
        let dt = 0.1;
        let b = propagate_robot(&robot_at_origin(1), Control::new(1.0, FRAC_PI_2 / dt), &zero_noise(1), dt).unwrap();
        let v = b.particles()[0].velocity;
        assert_abs_diff_eq!(v.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.y, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_speed_only_turns() {
        let b = propagate_robot(&robot_at_origin(2), Control::new(0.0, 0.7), &zero_noise(2), 0.5).unwrap();
        for p in b.particles() {
            assert_eq!(p.position, Vec2::zeros());
            assert_abs_diff_eq!(p.heading, 0.35, epsilon = 1e-15);
        }
    }

    #[test]
    fn noise_is_paired_by_index() {
        let noise = WeightedSamples::uniform(vec![Vec2::new(0.5, 0.0), Vec2::new(-0.5, 0.0)]);
        let b = propagate_robot(&robot_at_origin(2), Control::new(1.0, 0.0), &noise, 1.0).unwrap();
        assert_abs_diff_eq!(b.particles()[0].velocity.norm(), 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b.particles()[1].velocity.norm(), 0.5, epsilon = 1e-12);
        assert_eq!(b.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn noise_count_mismatch() {
        let err = propagate_robot(&robot_at_origin(3), Control::ZERO, &zero_noise(2), 0.1).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 3, actual: 2, .. }));
    }

    fn obstacle(points: &[(f64, f64)], velocity: Vec2) -> ObstacleBelief {
        let ps = points
            .iter()
            .map(|&(x, y)| ObstacleParticle { position: Vec2::new(x, y), velocity })
            .collect();
        ObstacleBelief::uniform(0, ps, 0.3).unwrap()
    }

    #[test]
    fn stationary_obstacle_has_zero_velocity() {
        let a = obstacle(&[(1.0, 2.0), (3.0, 4.0)], Vec2::new(9.0, 9.0));
        let v = estimate_obstacle_velocity(&a, &a, 0.1).unwrap();
        assert!(v.particles().iter().all(|p| p.velocity == Vec2::zeros()));
    }

    #[test]
    fn finite_difference_velocity() {
        let a = obstacle(&[(0.0, 0.0)], Vec2::zeros());
        let b = obstacle(&[(1.0, 0.0)], Vec2::zeros());
        let v = estimate_obstacle_velocity(&a, &b, 0.5).unwrap();
        assert_eq!(v.particles()[0].velocity, Vec2::new(2.0, 0.0));
        assert_eq!(v.particles()[0].position, Vec2::new(1.0, 0.0));
    }

    #[test]
    fn velocity_estimate_errors() {
        let a = obstacle(&[(0.0, 0.0)], Vec2::zeros());
        let b = obstacle(&[(0.0, 0.0), (1.0, 1.0)], Vec2::zeros());
        assert!(matches!(estimate_obstacle_velocity(&a, &b, 0.1), Err(Error::Dimension { .. })));
        assert!(matches!(estimate_obstacle_velocity(&a, &a, 0.0), Err(Error::Config { .. })));
    }

    #[test]
    fn advance_and_reestimate_recovers_velocity() {
        let a = obstacle(&[(0.0, 0.0), (2.0, 1.0)], Vec2::new(1.0, 0.0));
        let moved = advance_obstacle(&a, &zero_noise(2), 1.0).unwrap();
        assert_eq!(moved.particles()[0].position, Vec2::new(1.0, 0.0));
        assert_eq!(moved.particles()[1].position, Vec2::new(3.0, 1.0));
        let est = estimate_obstacle_velocity(&a, &moved, 1.0).unwrap();
        assert!(est.particles().iter().all(|p| p.velocity == Vec2::new(1.0, 0.0)));

        let still = obstacle(&[(0.0, 0.0)], Vec2::zeros());
        assert_eq!(advance_obstacle(&still, &zero_noise(1), 0.3).unwrap(), still);
    }

    #[test]
    fn symmetric_noise_keeps_mean_shift() {
        let a = obstacle(&[(0.0, 0.0), (0.0, 0.0)], Vec2::new(2.0, 0.0));
        let noise = WeightedSamples::uniform(vec![Vec2::new(0.3, 0.0), Vec2::new(-0.3, 0.0)]);
        let moved = advance_obstacle(&a, &noise, 0.5).unwrap();
        assert_abs_diff_eq!(moved.mean_position().x, 1.0, epsilon = 1e-12);
        assert_eq!(moved.mean_position().y, 0.0);
    }

    #[test]
    fn circular_mean_wraps() {
        let mk = |h: f64| RobotParticle { position: Vec2::zeros(), heading: h, velocity: Vec2::zeros() };
        let b = RobotBelief::uniform(vec![mk(3.1), mk(-3.1)], 0.1).unwrap();
        assert_abs_diff_eq!(b.mean_heading().abs(), std::f64::consts::PI, epsilon = 1e-12);
    }
}
