//! Velocity-obstacle collision cone and corridor boundary distances,
//! evaluated per particle to form empirical constraint distributions.

use serde::{Deserialize, Serialize};

use crate::error::check_count;
use crate::kinematics::{ObstacleBelief, RobotBelief};
use crate::sampling::WeightedSamples;
use crate::{Error, Result, Vec2};

/// Relative speeds below this use the static overlap test instead of the cone.
pub const MIN_RELATIVE_SPEED: f64 = 1e-9;

/// Collision-cone indicator for relative position `r` (robot minus obstacle)
/// and relative velocity `v`. Positive means the relative motion line passes
/// within `combined_radius` of the obstacle centre.
pub fn collision_cone(r: Vec2, v: Vec2, combined_radius: f64) -> f64 {
    let vv = v.norm_squared();
    let rr = r.norm_squared();
    let rsq = combined_radius * combined_radius;
    if vv.sqrt() < MIN_RELATIVE_SPEED {
        return rsq - rr;
    }
    let rv = r.dot(&v);
    rv * rv / vv - rr + rsq
}

/// A line `a·x + b·y + c = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Line {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Line { a, b, c }
    }

    pub fn signed_distance(&self, p: Vec2) -> f64 {
        (self.a * p.x + self.b * p.y + self.c) / self.a.hypot(self.b)
    }

    fn normal(&self) -> Vec2 {
        Vec2::new(self.a, self.b)
    }
}

/// Two boundary lines. The interior is `{d1 ≤ 0} ∩ {d2 ≥ 0}` where `d1` and
/// `d2` are the signed distances to `line1` and `line2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorSpec {
    pub line1: Line,
    pub line2: Line,
}

impl CorridorSpec {
    pub fn new(line1: Line, line2: Line) -> Result<Self> {
        let spec = CorridorSpec { line1, line2 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let (d1, d2) = corridor_distances(p, self);
        d1 <= 0.0 && d2 >= 0.0
    }

    /// Rejects degenerate lines and corridors with an empty interior. The
    /// interior is probed at a set of candidate points built from the two
    /// lines (feet of the perpendiculars, their midpoint, the crossing point
    /// and small offsets around it) plus a coarse grid.
    pub fn validate(&self) -> Result<()> {
        for (name, line) in [("corridor.line1", self.line1), ("corridor.line2", self.line2)] {
            if !(line.a.is_finite() && line.b.is_finite() && line.c.is_finite()) {
                return Err(Error::config(name, "coefficients must be finite"));
            }
            if line.a == 0.0 && line.b == 0.0 {
                return Err(Error::config(name, "(a, b) must not both be zero"));
            }
        }
        if self.probe_points().into_iter().any(|p| self.contains(p)) {
            Ok(())
        } else {
            Err(Error::config("corridor", "corridor interior is empty"))
        }
    }

    fn probe_points(&self) -> Vec<Vec2> {
        let foot = |l: &Line| -l.normal() * l.c / l.normal().norm_squared();
        let f1 = foot(&self.line1);
        let f2 = foot(&self.line2);
        let mut pts = vec![f1, f2, (f1 + f2) * 0.5];
        let det = self.line1.a * self.line2.b - self.line2.a * self.line1.b;
        let scale = 1.0 + f1.norm().max(f2.norm());
        if det.abs() > 1e-12 {
            let x = (self.line1.b * self.line2.c - self.line2.b * self.line1.c) / det;
            let y = (self.line2.a * self.line1.c - self.line1.a * self.line2.c) / det;
            let cross = Vec2::new(x, y);
            for k in 0..16 {
                let ang = k as f64 * std::f64::consts::PI / 8.0;
                for r in [1e-3, 1.0, scale] {
                    pts.push(cross + Vec2::new(ang.cos(), ang.sin()) * r);
                }
            }
        }
        for i in -10..=10 {
            for j in -10..=10 {
                pts.push(Vec2::new(i as f64, j as f64) * (scale / 5.0));
            }
        }
        pts
    }
}

/// Signed distances `(d1, d2)` of `position` to the two corridor lines.
pub fn corridor_distances(position: Vec2, spec: &CorridorSpec) -> (f64, f64) {
    (spec.line1.signed_distance(position), spec.line2.signed_distance(position))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// `f ≤ 0`
    CollisionCone,
    /// `d1 ≤ 0`
    CorridorLower,
    /// `d2 ≥ 0`
    CorridorUpper,
}

impl ConstraintKind {
    pub fn is_satisfied(self, value: f64) -> bool {
        match self {
            ConstraintKind::CollisionCone | ConstraintKind::CorridorLower => value <= 0.0,
            ConstraintKind::CorridorUpper => value >= 0.0,
        }
    }

    /// Amount by which `value` is on the wrong side of zero.
    pub fn violation(self, value: f64) -> f64 {
        match self {
            ConstraintKind::CollisionCone | ConstraintKind::CorridorLower => value.max(0.0),
            ConstraintKind::CorridorUpper => (-value).max(0.0),
        }
    }
}

/// Empirical distribution of one constraint function across particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSamples {
    pub kind: ConstraintKind,
    /// Obstacle id for collision-cone samples.
    pub obstacle: Option<usize>,
    pub samples: WeightedSamples<f64>,
}

impl ConstraintSamples {
    pub fn values(&self) -> &[f64] {
        self.samples.values()
    }
}

/// Collision-cone samples pairing robot particle `i` with obstacle particle `i`.
pub fn collision_distribution(robot: &RobotBelief, obstacle: &ObstacleBelief) -> Result<ConstraintSamples> {
    check_count("obstacle particles", robot.len(), obstacle.len())?;
    let combined = robot.radius() + obstacle.radius();
    let values = robot
        .particles()
        .iter()
        .zip(obstacle.particles())
        .map(|(r, o)| collision_cone(r.position - o.position, r.velocity - o.velocity, combined))
        .collect();
    Ok(ConstraintSamples {
        kind: ConstraintKind::CollisionCone,
        obstacle: Some(obstacle.id()),
        samples: WeightedSamples::new(values, robot.weights().to_vec())?,
    })
}

/// Corridor distance samples `(D1, D2)` at the robot particle positions.
pub fn corridor_distribution(robot: &RobotBelief, corridor: &CorridorSpec) -> (ConstraintSamples, ConstraintSamples) {
    let (d1, d2): (Vec<f64>, Vec<f64>) = robot
        .particles()
        .iter()
        .map(|p| corridor_distances(p.position, corridor))
        .unzip();
    let weights = robot.weights().to_vec();
    let mk = |kind, values| ConstraintSamples {
        kind,
        obstacle: None,
        samples: WeightedSamples::new(values, weights.clone()).expect("belief weights are normalized"),
    };
    (mk(ConstraintKind::CorridorLower, d1), mk(ConstraintKind::CorridorUpper, d2))
}

/// Weighted fraction of samples on the satisfied side of the constraint
/// (the empirical η).
pub fn empirical_eta(samples: &ConstraintSamples) -> f64 {
    let p: f64 = samples
        .samples
        .iter()
        .filter(|(v, _)| samples.kind.is_satisfied(**v))
        .map(|(_, w)| w)
        .sum();
    p.clamp(0.0, 1.0)
}
