//! Desired (collision-free) constraint distributions.
//!
//! A nominal control is found by grid search on the mean states. The
//! constraint samples it produces across the particles are then filtered to
//! the satisfying side. When nothing survives the filter the particles are
//! pulled toward their mean along [`SHRINK_SCHEDULE`] until some do.

use serde::{Deserialize, Serialize};

use crate::constraints::{
    collision_cone, collision_distribution, corridor_distances, corridor_distribution, ConstraintKind,
    ConstraintSamples, CorridorSpec,
};
use crate::error::check_count;
use crate::kinematics::{propagate_robot, Control, ObstacleBelief, ObstacleParticle, RobotBelief, RobotParticle};
use crate::planner::{argmin_index, ControlGrid};
use crate::sampling::WeightedSamples;
use crate::{Error, Result, Vec2};

/// Contraction factors applied to particle deviations from the mean.
pub const SHRINK_SCHEDULE: [f64; 5] = [1.0, 0.5, 0.25, 0.1, 0.0];

/// Robot state collapsed to its mean, plus the mean actuation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanState {
    pub position: Vec2,
    pub heading: f64,
    pub actuation_bias: Vec2,
}

impl MeanState {
    pub fn from_belief(robot: &RobotBelief, noise: &WeightedSamples<Vec2>) -> Self {
        MeanState {
            position: robot.mean_position(),
            heading: robot.mean_heading(),
            actuation_bias: noise.mean(),
        }
    }

    fn particle(&self) -> RobotParticle {
        RobotParticle {
            position: self.position,
            heading: self.heading,
            velocity: Vec2::zeros(),
        }
    }

    /// Mean state after one step under `u` (plus the mean actuation noise).
    pub fn propagate(&self, u: Control, dt: f64) -> RobotParticle {
        self.particle()
            .step(u.v + self.actuation_bias.x, u.omega + self.actuation_bias.y, dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleMean {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

impl ObstacleMean {
    pub fn from_belief(b: &ObstacleBelief) -> Self {
        ObstacleMean {
            id: b.id(),
            position: b.mean_position(),
            velocity: b.mean_velocity(),
            radius: b.radius(),
        }
    }
}

/// Deterministic counterpart of the planning problem.
#[derive(Debug, Clone)]
pub struct MeanScene<'a> {
    pub robot: MeanState,
    pub robot_radius: f64,
    pub obstacles: Vec<ObstacleMean>,
    pub corridor: Option<&'a CorridorSpec>,
    pub dt: f64,
}

impl<'a> MeanScene<'a> {
    pub fn new(
        robot: &RobotBelief,
        noise: &WeightedSamples<Vec2>,
        obstacles: &[ObstacleBelief],
        corridor: Option<&'a CorridorSpec>,
        dt: f64,
    ) -> Self {
        MeanScene {
            robot: MeanState::from_belief(robot, noise),
            robot_radius: robot.radius(),
            obstacles: obstacles.iter().map(ObstacleMean::from_belief).collect(),
            corridor,
            dt,
        }
    }

    /// Constraint values on the means: one collision-cone value per obstacle,
    /// then `d1`, `d2` when a corridor is present.
    pub fn constraint_values(&self, u: Control) -> Vec<(ConstraintKind, f64)> {
        let next = self.robot.propagate(u, self.dt);
        let mut out: Vec<(ConstraintKind, f64)> = self
            .obstacles
            .iter()
            .map(|o| {
                let f = collision_cone(
                    next.position - o.position,
                    next.velocity - o.velocity,
                    self.robot_radius + o.radius,
                );
                (ConstraintKind::CollisionCone, f)
            })
            .collect();
        if let Some(c) = self.corridor {
            let (d1, d2) = corridor_distances(next.position, c);
            out.push((ConstraintKind::CorridorLower, d1));
            out.push((ConstraintKind::CorridorUpper, d2));
        }
        out
    }

    pub fn total_violation(&self, u: Control) -> f64 {
        self.constraint_values(u).into_iter().map(|(k, v)| k.violation(v)).sum()
    }

    pub fn is_feasible(&self, u: Control) -> bool {
        self.constraint_values(u).into_iter().all(|(k, v)| k.is_satisfied(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalSolution {
    pub control: Control,
    pub index: usize,
    /// False when no grid control satisfies the mean constraints; the control
    /// is then the one with least total violation.
    pub feasible: bool,
}

/// Grid argmin of `cost` subject to the mean-state constraints. Ties go to the
/// lowest grid index.
pub fn solve_nominal(scene: &MeanScene, grid: &ControlGrid, cost: impl Fn(Control) -> f64) -> Result<NominalSolution> {
    if grid.is_empty() {
        return Err(Error::config("grid", "control grid is empty"));
    }
    let feasible_cost = grid
        .controls()
        .iter()
        .map(|&u| if scene.is_feasible(u) { cost(u) } else { f64::NAN });
    if let Some(index) = argmin_index(feasible_cost) {
        return Ok(NominalSolution {
            control: grid.controls()[index],
            index,
            feasible: true,
        });
    }
    let index = argmin_index(grid.controls().iter().map(|&u| scene.total_violation(u))).unwrap_or(0);
    Ok(NominalSolution {
        control: grid.controls()[index],
        index,
        feasible: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesiredSet {
    pub samples: ConstraintSamples,
    /// Contraction factor at which satisfying samples were found.
    pub contraction: f64,
    /// Set when even the mean sample violated; the set is then a single zero.
    pub degenerate: bool,
}

impl DesiredSet {
    pub fn values(&self) -> &[f64] {
        self.samples.values()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesiredDistributions {
    pub nominal: NominalSolution,
    /// One set per obstacle, in obstacle order.
    pub collision: Vec<DesiredSet>,
    pub corridor_lower: Option<DesiredSet>,
    pub corridor_upper: Option<DesiredSet>,
}

impl DesiredDistributions {
    pub fn any_degenerate(&self) -> bool {
        self.collision
            .iter()
            .chain(self.corridor_lower.iter())
            .chain(self.corridor_upper.iter())
            .any(|s| s.degenerate)
    }
}

/// Evaluates the constraints at the nominal control across all particles and
/// keeps the satisfying samples, contracting toward the mean when needed.
pub fn build_desired(
    nominal: NominalSolution,
    robot: &RobotBelief,
    obstacles: &[ObstacleBelief],
    corridor: Option<&CorridorSpec>,
    noise: &WeightedSamples<Vec2>,
    dt: f64,
) -> Result<DesiredDistributions> {
    check_count("actuation noise", robot.len(), noise.len())?;
    for o in obstacles {
        check_count("obstacle particles", robot.len(), o.len())?;
    }
    let u = nominal.control;
    let shrink = Shrinker::new(robot, noise);

    let collision = obstacles
        .iter()
        .map(|obstacle| {
            let mean = ObstacleMean::from_belief(obstacle);
            filter_with_fallback(ConstraintKind::CollisionCone, Some(obstacle.id()), |c| {
                let r = shrink.propagate(c, u, dt);
                let o = contract_obstacle(obstacle, &mean, c);
                collision_distribution(&r, &o).map(|s| s.samples)
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let (corridor_lower, corridor_upper) = match corridor {
        Some(spec) => {
            let lower = filter_with_fallback(ConstraintKind::CorridorLower, None, |c| {
                Ok(corridor_distribution(&shrink.propagate(c, u, dt), spec).0.samples)
            })?;
            let upper = filter_with_fallback(ConstraintKind::CorridorUpper, None, |c| {
                Ok(corridor_distribution(&shrink.propagate(c, u, dt), spec).1.samples)
            })?;
            (Some(lower), Some(upper))
        }
        None => (None, None),
    };

    Ok(DesiredDistributions {
        nominal,
        collision,
        corridor_lower,
        corridor_upper,
    })
}

fn filter_with_fallback(
    kind: ConstraintKind,
    obstacle: Option<usize>,
    mut evaluate: impl FnMut(f64) -> Result<WeightedSamples<f64>>,
) -> Result<DesiredSet> {
    for &c in &SHRINK_SCHEDULE {
        let all = evaluate(c)?;
        if let Some(kept) = keep_satisfying(kind, &all) {
            return Ok(DesiredSet {
                samples: ConstraintSamples {
                    kind,
                    obstacle,
                    samples: kept,
                },
                contraction: c,
                degenerate: false,
            });
        }
    }
    Ok(DesiredSet {
        samples: ConstraintSamples {
            kind,
            obstacle,
            samples: WeightedSamples::uniform(vec![0.0]),
        },
        contraction: 0.0,
        degenerate: true,
    })
}

/// Satisfying samples with their weights renormalized, or `None` if no
/// satisfying sample carries weight.
fn keep_satisfying(kind: ConstraintKind, all: &WeightedSamples<f64>) -> Option<WeightedSamples<f64>> {
    let (values, weights): (Vec<f64>, Vec<f64>) = all.iter().filter(|(v, _)| kind.is_satisfied(**v)).map(|(v, w)| (*v, w)).unzip();
    let total: f64 = weights.iter().sum();
    if values.is_empty() || !(total > 0.0) {
        return None;
    }
    let weights = weights.into_iter().map(|w| w / total).collect();
    WeightedSamples::new(values, weights).ok()
}

/// Robot particles and noise samples contracted toward their means.
struct Shrinker<'a> {
    robot: &'a RobotBelief,
    noise: &'a WeightedSamples<Vec2>,
    mean: MeanState,
}

impl<'a> Shrinker<'a> {
    fn new(robot: &'a RobotBelief, noise: &'a WeightedSamples<Vec2>) -> Self {
        Shrinker {
            robot,
            noise,
            mean: MeanState::from_belief(robot, noise),
        }
    }

    fn propagate(&self, c: f64, u: Control, dt: f64) -> RobotBelief {
        if c == 1.0 {
            return propagate_robot(self.robot, u, self.noise, dt).expect("counts checked");
        }
        let m = &self.mean;
        let particles = self
            .robot
            .particles()
            .iter()
            .map(|p| RobotParticle {
                position: m.position + (p.position - m.position) * c,
                heading: m.heading + wrap_angle(p.heading - m.heading) * c,
                velocity: p.velocity,
            })
            .collect();
        let noise = self.noise.map(|d| m.actuation_bias + (d - m.actuation_bias) * c);
        propagate_robot(&self.robot.with_particles(particles), u, &noise, dt).expect("counts checked")
    }
}

fn contract_obstacle(obstacle: &ObstacleBelief, mean: &ObstacleMean, c: f64) -> ObstacleBelief {
    if c == 1.0 {
        return obstacle.clone();
    }
    let particles = obstacle
        .particles()
        .iter()
        .map(|p| ObstacleParticle {
            position: mean.position + (p.position - mean.position) * c,
            velocity: mean.velocity + (p.velocity - mean.velocity) * c,
        })
        .collect();
    obstacle.with_particles(particles)
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a.rem_euclid(two_pi);
    if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::build_grid;

    fn set(values: Vec<f64>) -> WeightedSamples<f64> {
        WeightedSamples::uniform(values)
    }

    #[test]
    fn filter_keeps_satisfying_samples() {
        let all = set(vec![-3.0, -1.0, 0.5]);
        let kept = keep_satisfying(ConstraintKind::CollisionCone, &all).unwrap();
        assert_eq!(kept.values(), &[-3.0, -1.0]);
        assert_eq!(kept.weights(), &[0.5, 0.5]);
        let all = set(vec![0.0, 2.0]);
        assert_eq!(keep_satisfying(ConstraintKind::CorridorUpper, &all).unwrap(), all);
        assert!(keep_satisfying(ConstraintKind::CorridorLower, &set(vec![0.1])).is_none());
    }

    #[test]
    fn fallback_contracts_then_degenerates() {
        // only the fully contracted evaluation has satisfying samples
        let ds = filter_with_fallback(ConstraintKind::CollisionCone, Some(0), |c| {
            Ok(WeightedSamples::uniform(if c == 0.0 { vec![-0.1, 0.2] } else { vec![c, 2.0 * c] }))
        })
        .unwrap();
        assert_eq!(ds.contraction, 0.0);
        assert!(!ds.degenerate);

        let ds = filter_with_fallback(ConstraintKind::CollisionCone, Some(0), |_| Ok(WeightedSamples::uniform(vec![1.0, 2.0]))).unwrap();
        assert!(ds.degenerate);
        assert_eq!(ds.values(), &[0.0]);
    }

    #[test]
    fn empty_grid_is_config_error() {
        let robot = RobotBelief::uniform(
            vec![RobotParticle { position: Vec2::zeros(), heading: 0.0, velocity: Vec2::zeros() }],
            0.3,
        )
        .unwrap();
        let noise = WeightedSamples::uniform(vec![Vec2::zeros()]);
        let scene = MeanScene::new(&robot, &noise, &[], None, 0.1);
        let grid = ControlGrid::from_controls(vec![]);
        assert!(matches!(solve_nominal(&scene, &grid, |_| 0.0), Err(Error::Config { .. })));
        let grid = build_grid((0.0, 1.0), (-1.0, 1.0), 2, 2).unwrap();
        let sol = solve_nominal(&scene, &grid, |u| (u.v - 0.5).powi(2) + u.omega.powi(2)).unwrap();
        assert!(sol.feasible);
        assert_eq!(sol.control, Control::new(0.5, 0.0));
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.5) - (3.5 - std::f64::consts::TAU)).abs() < 1e-12);
        assert_eq!(wrap_angle(0.25), 0.25);
        assert!((wrap_angle(-3.5) - (-3.5 + std::f64::consts::TAU)).abs() < 1e-12);
    }
}
