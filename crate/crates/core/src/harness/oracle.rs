//! All-pairs collision oracle, independent of the index-paired estimator.

use crate::kinematics::{Control, ObstacleBelief, RobotBelief};
use crate::sampling::WeightedSamples;
use crate::{Result, Vec2};

/// Weighted fraction of robot-particle × obstacle-particle pairs whose
/// collision cone is non-positive after the robot applies `u`.
///
/// The robot particles are stepped with their paired actuation noise, then
/// every one of them is tested against every obstacle particle.
pub fn brute_force_eta(
    robot: &RobotBelief,
    obstacle: &ObstacleBelief,
    u: Control,
    noise: &WeightedSamples<Vec2>,
    dt: f64,
) -> Result<f64> {
    let next = crate::kinematics::propagate_robot(robot, u, noise, dt)?;
    Ok(all_pairs_eta(&next, obstacle))
}

/// [`brute_force_eta`] on an already propagated robot belief.
pub fn all_pairs_eta(robot: &RobotBelief, obstacle: &ObstacleBelief) -> f64 {
    let reach = robot.radius() + obstacle.radius();
    let mut satisfied = 0.0;
    for (rp, rw) in robot.particles().iter().zip(robot.weights()) {
        for (op, ow) in obstacle.particles().iter().zip(obstacle.weights()) {
            if cone(rp.position - op.position, rp.velocity - op.velocity, reach) <= 0.0 {
                satisfied += rw * ow;
            }
        }
    }
    satisfied.clamp(0.0, 1.0)
}

// Written out separately from the planner's version on purpose.
fn cone(r: Vec2, v: Vec2, reach: f64) -> f64 {
    let speed2 = v.x * v.x + v.y * v.y;
    let dist2 = r.x * r.x + r.y * r.y;
    if speed2.sqrt() < 1e-9 {
        return reach * reach - dist2;
    }
    let along = r.x * v.x + r.y * v.y;
    along * along / speed2 - dist2 + reach * reach
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{collision_distribution, empirical_eta};
    use crate::kinematics::{ObstacleParticle, RobotParticle};

    fn robot(points: &[(f64, f64, f64, f64)], radius: f64) -> RobotBelief {
        let ps = points
            .iter()
            .map(|&(x, y, vx, vy)| RobotParticle {
                position: Vec2::new(x, y),
                heading: 0.0,
                velocity: Vec2::new(vx, vy),
            })
            .collect();
        RobotBelief::uniform(ps, radius).unwrap()
    }

    fn obstacle(points: &[(f64, f64, f64, f64)], radius: f64) -> ObstacleBelief {
        let ps = points
            .iter()
            .map(|&(x, y, vx, vy)| ObstacleParticle {
                position: Vec2::new(x, y),
                velocity: Vec2::new(vx, vy),
            })
            .collect();
        ObstacleBelief::uniform(0, ps, radius).unwrap()
    }

    #[test]
    fn point_masses_match_paired_estimate() {
        let r = robot(&[(0.0, 0.0, 1.0, 0.0); 4], 1.0);
        let o = obstacle(&[(5.0, 0.0, 0.0, 0.0); 4], 1.0);
        let paired = empirical_eta(&collision_distribution(&r, &o).unwrap());
        assert_eq!(all_pairs_eta(&r, &o), paired);
        assert_eq!(paired, 0.0);
    }

    #[test]
    fn hand_count_over_pairs() {
        // robot moving +x from the origin, R_sum = 2; obstacle particles at
        // lateral offsets 0, 1, 3, 5, -4 are hit iff |offset| < 2.
        let r = robot(&[(0.0, 0.0, 1.0, 0.0); 5], 1.0);
        let o = obstacle(
            &[(5.0, 0.0, 0.0, 0.0), (5.0, 1.0, 0.0, 0.0), (5.0, 3.0, 0.0, 0.0), (5.0, 5.0, 0.0, 0.0), (5.0, -4.0, 0.0, 0.0)],
            1.0,
        );
        assert!((all_pairs_eta(&r, &o) - 3.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn propagates_before_testing() {
        let r = robot(&[(0.0, 0.0, 0.0, 0.0); 2], 0.5);
        let o = obstacle(&[(5.0, 0.0, 0.0, 0.0); 2], 0.5);
        let noise = WeightedSamples::uniform(vec![Vec2::zeros(); 2]);
        assert_eq!(brute_force_eta(&r, &o, Control::new(1.0, 0.0), &noise, 0.1).unwrap(), 0.0);
        assert_eq!(brute_force_eta(&r, &o, Control::new(1.0, 3.0), &noise, 0.1).unwrap(), 1.0);
    }
}
