//! Gaussian-approximation baselines.
//!
//! Both baselines summarize each constraint by a mean and a variance and
//! accept a control only if the one-sided Cantelli surrogate
//! `mean + k·σ ≤ 0`, `k = √(η / (1 − η))`, holds for every constraint. They
//! differ in how the summary is obtained:
//!
//! * [`BaselineVariant::Linearized`] pushes the sample covariance of the
//!   stacked relative position and velocity through a first-order expansion
//!   of the collision cone about the means.
//! * [`BaselineVariant::SampleMoment`] takes the mean and variance of the
//!   constraint samples directly.

use nalgebra::{Matrix2, Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{
    collision_cone, collision_distribution, corridor_distances, corridor_distribution, empirical_eta, ConstraintKind,
    CorridorSpec, MIN_RELATIVE_SPEED,
};
use crate::desired::MeanState;
use crate::kinematics::{propagate_robot, Control, ObstacleBelief, RobotBelief};
use crate::planner::{argmin_index, PlanningProblem};
use crate::{Error, Result, Vec2};

/// Default satisfaction probability for the surrogate constraints.
pub const DEFAULT_ETA: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSummary {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianSummary {
    pub fn new(mean: f64, variance: f64) -> Self {
        GaussianSummary {
            mean,
            variance: variance.max(0.0),
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineVariant {
    Linearized,
    SampleMoment,
}

/// Analytic gradient of the collision cone with respect to the relative
/// position and velocity.
/// The combined radius only shifts the value, so it does not appear.
pub fn collision_cone_gradient(r: Vec2, v: Vec2) -> (Vec2, Vec2) {
    let vv = v.norm_squared();
    if vv.sqrt() < MIN_RELATIVE_SPEED {
        return (-2.0 * r, Vec2::zeros());
    }
    let rv = r.dot(&v);
    let grad_r = v * (2.0 * rv / vv) - r * 2.0;
    let grad_v = r * (2.0 * rv / vv) - v * (2.0 * rv * rv / (vv * vv));
    (grad_r, grad_v)
}

/// First-order Gaussian summary of the collision cone for index-paired
/// particles of the propagated robot belief and an obstacle belief.
pub fn linearized_cone_summary(robot: &RobotBelief, obstacle: &ObstacleBelief) -> Result<GaussianSummary> {
    crate::error::check_count("obstacle particles", robot.len(), obstacle.len())?;
    let stacked: Vec<Vector4<f64>> = robot
        .particles()
        .iter()
        .zip(obstacle.particles())
        .map(|(a, b)| {
            let r = a.position - b.position;
            let v = a.velocity - b.velocity;
            Vector4::new(r.x, r.y, v.x, v.y)
        })
        .collect();
    let weights = robot.weights();
    let mean = stacked.iter().zip(weights).fold(Vector4::zeros(), |acc, (z, w)| acc + z * *w);
    let cov = stacked.iter().zip(weights).fold(Matrix4::zeros(), |acc, (z, w)| {
        let d = z - mean;
        acc + d * d.transpose() * *w
    });
    let r = Vec2::new(mean[0], mean[1]);
    let v = Vec2::new(mean[2], mean[3]);
    let combined = robot.radius() + obstacle.radius();
    let (gr, gv) = collision_cone_gradient(r, v);
    let g = Vector4::new(gr.x, gr.y, gv.x, gv.y);
    Ok(GaussianSummary::new(collision_cone(r, v, combined), (g.transpose() * cov * g)[0]))
}

/// Gaussian summaries of `d1`, `d2`. The distances are affine in position so
/// the linearization is exact.
pub fn linearized_corridor_summary(robot: &RobotBelief, corridor: &CorridorSpec) -> (GaussianSummary, GaussianSummary) {
    let mean = robot.mean_position();
    let cov = robot.particles().iter().zip(robot.weights()).fold(Matrix2::zeros(), |acc, (p, w)| {
        let d = p.position - mean;
        acc + d * d.transpose() * *w
    });
    let (d1, d2) = corridor_distances(mean, corridor);
    let var = |a: f64, b: f64| {
        let n = Vec2::new(a, b) / a.hypot(b);
        (n.transpose() * cov * n)[0]
    };
    (
        GaussianSummary::new(d1, var(corridor.line1.a, corridor.line1.b)),
        GaussianSummary::new(d2, var(corridor.line2.a, corridor.line2.b)),
    )
}

/// Cantelli multiplier `√(η / (1 − η))`.
pub fn cantelli_factor(eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::config("eta", format!("{eta} is outside (0, 1)")));
    }
    Ok((eta / (1.0 - eta)).sqrt())
}

/// Surrogate margin: `mean + kσ` for `≤ 0` constraints, `kσ − mean` for
/// `≥ 0` ones. Non-positive means satisfied.
fn surrogate_margin(summary: &GaussianSummary, k: f64, sense: ConstraintKind) -> f64 {
    match sense {
        ConstraintKind::CollisionCone | ConstraintKind::CorridorLower => summary.mean + k * summary.std_dev(),
        ConstraintKind::CorridorUpper => k * summary.std_dev() - summary.mean,
    }
}

/// Deterministic surrogate for `Pr(constraint satisfied) ≥ η`.
pub fn surrogate_satisfied(summary: &GaussianSummary, eta: f64, sense: ConstraintKind) -> Result<bool> {
    let k = cantelli_factor(eta)?;
    Ok(surrogate_margin(summary, k, sense) <= 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineDiagnostics {
    pub index: usize,
    /// False when no control met every surrogate; the choice then minimizes
    /// the summed positive margins.
    pub feasible: bool,
    pub feasible_count: usize,
    pub tracking: Vec<f64>,
    /// Summed positive surrogate margins per control.
    pub violation: Vec<f64>,
    /// Empirical η per obstacle at the chosen control.
    pub eta: Vec<f64>,
}

/// Grid argmin of the tracking cost over controls whose surrogate chance
/// constraints all hold.
pub fn baseline_plan_step(problem: &PlanningProblem, variant: BaselineVariant, eta: f64) -> Result<(Control, BaselineDiagnostics)> {
    problem.validate()?;
    let k = cantelli_factor(eta)?;
    let mean = MeanState::from_belief(problem.robot, problem.noise);

    let (tracking, violation): (Vec<f64>, Vec<f64>) = problem
        .grid
        .controls()
        .par_iter()
        .map(|&u| {
            let next = propagate_robot(problem.robot, u, problem.noise, problem.dt)?;
            let margins = summarize(problem, &next, variant)?
                .iter()
                .map(|(kind, s)| surrogate_margin(s, k, *kind).max(0.0))
                .sum::<f64>();
            Ok((problem.tracking_cost(u, &mean), margins))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();

    let feasible_count = violation.iter().filter(|&&v| v <= 0.0).count();
    let feasible_tracking = tracking
        .iter()
        .zip(&violation)
        .map(|(&j, &v)| if v <= 0.0 { j } else { f64::NAN });
    let (index, feasible) = match argmin_index(feasible_tracking) {
        Some(i) => (i, true),
        None => (argmin_index(violation.iter().copied()).unwrap_or(0), false),
    };

    let u = problem.grid.controls()[index];
    let next = propagate_robot(problem.robot, u, problem.noise, problem.dt)?;
    let eta_at_choice = problem
        .obstacles
        .iter()
        .map(|o| collision_distribution(&next, o).map(|s| empirical_eta(&s)))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        u,
        BaselineDiagnostics {
            index,
            feasible,
            feasible_count,
            tracking,
            violation,
            eta: eta_at_choice,
        },
    ))
}

fn summarize(problem: &PlanningProblem, next: &RobotBelief, variant: BaselineVariant) -> Result<Vec<(ConstraintKind, GaussianSummary)>> {
    let mut out = Vec::with_capacity(problem.obstacles.len() + 2);
    for o in problem.obstacles {
        let s = match variant {
            BaselineVariant::Linearized => linearized_cone_summary(next, o)?,
            BaselineVariant::SampleMoment => {
                let c = collision_distribution(next, o)?;
                GaussianSummary::new(c.samples.mean(), c.samples.variance())
            }
        };
        out.push((ConstraintKind::CollisionCone, s));
    }
    if let Some(corridor) = problem.corridor {
        let (lo, hi) = match variant {
            BaselineVariant::Linearized => linearized_corridor_summary(next, corridor),
            BaselineVariant::SampleMoment => {
                let (d1, d2) = corridor_distribution(next, corridor);
                (
                    GaussianSummary::new(d1.samples.mean(), d1.samples.variance()),
                    GaussianSummary::new(d2.samples.mean(), d2.samples.variance()),
                )
            }
        };
        out.push((ConstraintKind::CorridorLower, lo));
        out.push((ConstraintKind::CorridorUpper, hi));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{ObstacleParticle, RobotParticle};
    use approx::assert_abs_diff_eq;

    #[test]
    fn cantelli_examples() {
        let k = ConstraintKind::CollisionCone;
        assert!(surrogate_satisfied(&GaussianSummary::new(-2.0, 1.0), 0.8, k).unwrap());
        assert!(!surrogate_satisfied(&GaussianSummary::new(-1.9, 1.0), 0.8, k).unwrap());
        assert!(surrogate_satisfied(&GaussianSummary::new(-1e-9, 0.0), 0.99, k).unwrap());
        assert!(!surrogate_satisfied(&GaussianSummary::new(1e-9, 0.0), 0.01, k).unwrap());
        assert!(!surrogate_satisfied(&GaussianSummary::new(0.0, 0.3), 0.6, k).unwrap());
        let up = ConstraintKind::CorridorUpper;
        assert!(surrogate_satisfied(&GaussianSummary::new(2.0, 1.0), 0.8, up).unwrap());
        assert!(!surrogate_satisfied(&GaussianSummary::new(1.9, 1.0), 0.8, up).unwrap());
    }

    #[test]
    fn eta_must_be_open_interval() {
        for eta in [0.0, 1.0, -0.2, 1.5] {
            assert!(matches!(cantelli_factor(eta), Err(Error::Config { field, .. }) if field == "eta"));
        }
        assert_abs_diff_eq!(cantelli_factor(0.8).unwrap(), 2.0, epsilon = 1e-12);
    }

    fn point_beliefs(r: Vec2, v: Vec2) -> (RobotBelief, ObstacleBelief) {
        let robot = RobotBelief::uniform(
            vec![RobotParticle { position: r, heading: 0.0, velocity: v }; 3],
            0.5,
        )
        .unwrap();
        let obstacle = ObstacleBelief::uniform(
            0,
            vec![ObstacleParticle { position: Vec2::zeros(), velocity: Vec2::zeros() }; 3],
            0.5,
        )
        .unwrap();
        (robot, obstacle)
    }

    #[test]
    fn point_mass_has_zero_variance() {
        let (r, o) = point_beliefs(Vec2::new(-4.0, 0.3), Vec2::new(1.0, 0.1));
        let s = linearized_cone_summary(&r, &o).unwrap();
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.mean, collision_cone(Vec2::new(-4.0, 0.3), Vec2::new(1.0, 0.1), 1.0));
    }

    #[test]
    fn isotropic_position_noise_head_on_has_variance() {
        // lateral offset 0.3 < combined radius 1.0: still on a collision course,
        // and off the symmetry axis where the gradient vanishes
        let offsets = [(0.1, 0.0), (-0.1, 0.0), (0.0, 0.1), (0.0, -0.1)];
        let robot = RobotBelief::uniform(
            offsets
                .iter()
                .map(|&(x, y)| RobotParticle {
                    position: Vec2::new(-5.0 + x, 0.3 + y),
                    heading: 0.0,
                    velocity: Vec2::new(1.0, 0.0),
                })
                .collect(),
            0.5,
        )
        .unwrap();
        let obstacle = ObstacleBelief::uniform(
            0,
            vec![ObstacleParticle { position: Vec2::zeros(), velocity: Vec2::new(-1.0, 0.0) }; 4],
            0.5,
        )
        .unwrap();
        let s = linearized_cone_summary(&robot, &obstacle).unwrap();
        assert!(s.mean > 0.0);
        assert!(s.variance > 0.0);
    }

    #[test]
    fn corridor_summary_is_exact() {
        let c = CorridorSpec::new(crate::constraints::Line::new(0.0, 1.0, -1.0), crate::constraints::Line::new(0.0, 1.0, 1.0)).unwrap();
        let robot = RobotBelief::uniform(
            [0.2, -0.2]
                .iter()
                .map(|&y| RobotParticle { position: Vec2::new(0.0, y), heading: 0.0, velocity: Vec2::zeros() })
                .collect(),
            0.1,
        )
        .unwrap();
        let (lo, hi) = linearized_corridor_summary(&robot, &c);
        assert_abs_diff_eq!(lo.mean, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hi.mean, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(lo.variance, 0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(hi.variance, 0.04, epsilon = 1e-12);
    }
}
