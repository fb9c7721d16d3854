//! Control grid and the MMD-augmented one-step planner.
//!
//! Every grid control is scored as
//!
//! ```text
//! q(u) = J(u) + λ Σ_j MMD²(F_j(u), F_j^des) + λ_c1 MMD²(D1(u), D1^des) + λ_c2 MMD²(D2(u), D2^des)
//! ```
//!
//! and the lowest score wins, ties going to the lowest grid index. The sweep
//! over the grid runs on the ambient rayon pool; results are reduced in grid
//! order so the choice does not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{collision_distribution, corridor_distribution, empirical_eta, ConstraintSamples, CorridorSpec};
use crate::desired::{build_desired, solve_nominal, DesiredDistributions, MeanScene, MeanState, NominalSolution};
use crate::error::check_count;
use crate::kinematics::{propagate_robot, Control, ObstacleBelief, RobotBelief};
use crate::rkhs::{mmd_squared, KernelConfig};
use crate::sampling::WeightedSamples;
use crate::{Error, Result, Vec2};

/// Scores closer than this are treated as equal when picking the argmin.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// The feasible control set as an ordered `(v, ω)` grid, row-major in `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    controls: Vec<Control>,
    v_steps: usize,
    omega_steps: usize,
}

impl ControlGrid {
    /// Grid from an explicit control list (one row, `len` columns).
    pub fn from_controls(controls: Vec<Control>) -> Self {
        ControlGrid {
            v_steps: usize::from(!controls.is_empty()),
            omega_steps: controls.len(),
            controls,
        }
    }

    pub fn controls(&self) -> &[Control] {
        &self.controls
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.v_steps, self.omega_steps)
    }
}

/// `V(i) = v_lb + i·(v_ub − v_lb)/N_v` for `i = 1..=N_v`, likewise for `ω`;
/// the lower bounds themselves are never sampled.
pub fn build_grid(v_bounds: (f64, f64), omega_bounds: (f64, f64), v_steps: usize, omega_steps: usize) -> Result<ControlGrid> {
    if !(v_bounds.1 > v_bounds.0) {
        return Err(Error::config("grid.v_bounds", "upper bound must exceed lower bound"));
    }
    if !(omega_bounds.1 > omega_bounds.0) {
        return Err(Error::config("grid.omega_bounds", "upper bound must exceed lower bound"));
    }
    if v_steps == 0 {
        return Err(Error::config("grid.v_steps", "must be at least 1"));
    }
    if omega_steps == 0 {
        return Err(Error::config("grid.omega_steps", "must be at least 1"));
    }
    let axis = |(lb, ub): (f64, f64), n: usize| -> Vec<f64> {
        (1..=n).map(|i| if i == n { ub } else { lb + i as f64 * (ub - lb) / n as f64 }).collect()
    };
    let vs = axis(v_bounds, v_steps);
    let ws = axis(omega_bounds, omega_steps);
    let controls = vs
        .iter()
        .flat_map(|&v| ws.iter().map(move |&w| Control::new(v, w)))
        .collect();
    Ok(ControlGrid {
        controls,
        v_steps,
        omega_steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerWeights {
    /// λ, shared by every obstacle's collision-cone term.
    pub collision: f64,
    /// λ_c1 for the `d1 ≤ 0` boundary.
    pub corridor_lower: f64,
    /// λ_c2 for the `d2 ≥ 0` boundary.
    pub corridor_upper: f64,
    pub goal: f64,
    pub control: f64,
}

impl Default for PlannerWeights {
    fn default() -> Self {
        PlannerWeights {
            collision: 20.0,
            corridor_lower: 20.0,
            corridor_upper: 20.0,
            goal: 1.0,
            control: 0.05,
        }
    }
}

impl PlannerWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("weights.collision", self.collision),
            ("weights.corridor_lower", self.corridor_lower),
            ("weights.corridor_upper", self.corridor_upper),
            ("weights.goal", self.goal),
            ("weights.control", self.control),
        ] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::config(name, "weights must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Same weights with every distribution-matching term switched off.
    pub fn tracking_only(&self) -> Self {
        PlannerWeights {
            collision: 0.0,
            corridor_lower: 0.0,
            corridor_upper: 0.0,
            ..*self
        }
    }
}

/// How the tracking term of `J` is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackingMode {
    /// Mean velocity after the step versus the desired velocity toward the goal.
    #[default]
    Velocity,
    /// Mean position after the step versus the goal position.
    Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub position: Vec2,
    pub preferred_speed: f64,
}

impl GoalSpec {
    /// Preferred speed along the unit vector from `from` toward the goal.
    pub fn desired_velocity(&self, from: Vec2) -> Vec2 {
        let d = self.position - from;
        let n = d.norm();
        if n == 0.0 {
            Vec2::zeros()
        } else {
            d * (self.preferred_speed / n)
        }
    }
}

/// `J(u) = w_goal·‖x̂(u) − x_d‖² + w_ctrl·(v² + ω²)` on the mean state.
pub fn tracking_cost(u: Control, mean: &MeanState, goal: &GoalSpec, weights: &PlannerWeights, mode: TrackingMode, dt: f64) -> f64 {
    let next = mean.propagate(u, dt);
    let err = match mode {
        TrackingMode::Velocity => (next.velocity - goal.desired_velocity(mean.position)).norm_squared(),
        TrackingMode::Position => (next.position - goal.position).norm_squared(),
    };
    weights.goal * err + weights.control * u.norm_squared()
}

/// Everything one planning step reads. All of it is borrowed read-only.
#[derive(Debug, Clone, Copy)]
pub struct PlanningProblem<'a> {
    pub robot: &'a RobotBelief,
    pub obstacles: &'a [ObstacleBelief],
    pub corridor: Option<&'a CorridorSpec>,
    pub goal: &'a GoalSpec,
    pub grid: &'a ControlGrid,
    pub kernel: KernelConfig,
    pub weights: PlannerWeights,
    pub tracking: TrackingMode,
    /// Actuation noise samples, paired with robot particles by index.
    pub noise: &'a WeightedSamples<Vec2>,
    pub dt: f64,
}

impl<'a> PlanningProblem<'a> {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::config("grid", "control grid is empty"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("dt", "time step must be positive"));
        }
        self.kernel.validate()?;
        self.weights.validate()?;
        check_count("actuation noise", self.robot.len(), self.noise.len())?;
        for o in self.obstacles {
            check_count("obstacle particles", self.robot.len(), o.len())?;
        }
        Ok(())
    }

    pub fn mean_scene(&self) -> MeanScene<'a> {
        MeanScene::new(self.robot, self.noise, self.obstacles, self.corridor, self.dt)
    }

    pub fn tracking_cost(&self, u: Control, mean: &MeanState) -> f64 {
        tracking_cost(u, mean, self.goal, &self.weights, self.tracking, self.dt)
    }

    /// Same problem with all distribution-matching weights at zero.
    pub fn tracking_only(&self) -> Self {
        PlanningProblem {
            weights: self.weights.tracking_only(),
            ..*self
        }
    }
}

/// Score breakdown for one grid control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlScore {
    pub tracking: f64,
    /// Unweighted MMD² per obstacle.
    pub collision_mmd: Vec<f64>,
    pub corridor_lower_mmd: f64,
    pub corridor_upper_mmd: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub index: usize,
    pub scores: Vec<ControlScore>,
    pub desired: DesiredDistributions,
    /// Collision-cone samples at the chosen control, one set per obstacle.
    pub collision_at_choice: Vec<ConstraintSamples>,
    /// Empirical η per obstacle at the chosen control.
    pub eta: Vec<f64>,
}

impl PlanDiagnostics {
    pub fn chosen_score(&self) -> f64 {
        self.scores[self.index].total
    }

    pub fn nominal(&self) -> NominalSolution {
        self.desired.nominal
    }
}

/// Index of the smallest value; a later entry must beat the incumbent by more
/// than [`TIE_TOLERANCE`] to replace it.
pub fn argmin_index(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, q) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if !(q < b - TIE_TOLERANCE) => {}
            _ if q.is_nan() => {}
            _ => best = Some((i, q)),
        }
    }
    best.map(|(i, _)| i)
}

/// One step of the distribution-matching planner.
pub fn plan_step(problem: &PlanningProblem) -> Result<(Control, PlanDiagnostics)> {
    problem.validate()?;
    let scene = problem.mean_scene();
    let mean = scene.robot;
    let nominal = solve_nominal(&scene, problem.grid, |u| problem.tracking_cost(u, &mean))?;
    let desired = build_desired(nominal, problem.robot, problem.obstacles, problem.corridor, problem.noise, problem.dt)?;

    let scores: Vec<ControlScore> = problem
        .grid
        .controls()
        .par_iter()
        .map(|&u| score_control(problem, &mean, &desired, u))
        .collect::<Result<_>>()?;

    let index = argmin_index(scores.iter().map(|s| s.total))
        .ok_or_else(|| Error::config("grid", "every control scored NaN"))?;
    let u = problem.grid.controls()[index];
    let next = propagate_robot(problem.robot, u, problem.noise, problem.dt)?;
    let collision_at_choice = problem
        .obstacles
        .iter()
        .map(|o| collision_distribution(&next, o))
        .collect::<Result<Vec<_>>>()?;
    let eta = collision_at_choice.iter().map(empirical_eta).collect();
    Ok((
        u,
        PlanDiagnostics {
            index,
            scores,
            desired,
            collision_at_choice,
            eta,
        },
    ))
}

fn score_control(problem: &PlanningProblem, mean: &MeanState, desired: &DesiredDistributions, u: Control) -> Result<ControlScore> {
    let w = &problem.weights;
    let tracking = problem.tracking_cost(u, mean);
    let next = propagate_robot(problem.robot, u, problem.noise, problem.dt)?;

    let mut collision_mmd = vec![0.0; problem.obstacles.len()];
    if w.collision > 0.0 {
        for ((o, des), out) in problem.obstacles.iter().zip(&desired.collision).zip(&mut collision_mmd) {
            let current = collision_distribution(&next, o)?;
            *out = mmd_squared(&current.samples, &des.samples.samples, &problem.kernel);
        }
    }

    let (mut lower, mut upper) = (0.0, 0.0);
    if let (Some(corridor), Some(des_lo), Some(des_hi)) = (problem.corridor, &desired.corridor_lower, &desired.corridor_upper) {
        if w.corridor_lower > 0.0 || w.corridor_upper > 0.0 {
            let (d1, d2) = corridor_distribution(&next, corridor);
            if w.corridor_lower > 0.0 {
                lower = mmd_squared(&d1.samples, &des_lo.samples.samples, &problem.kernel);
            }
            if w.corridor_upper > 0.0 {
                upper = mmd_squared(&d2.samples, &des_hi.samples.samples, &problem.kernel);
            }
        }
    }

    let total = tracking
        + w.collision * collision_mmd.iter().sum::<f64>()
        + w.corridor_lower * lower
        + w.corridor_upper * upper;
    Ok(ControlScore {
        tracking,
        collision_mmd,
        corridor_lower_mmd: lower,
        corridor_upper_mmd: upper,
        total,
    })
}

/// Grid argmin of the tracking cost alone (the goal-greedy control).
pub fn greedy_control(problem: &PlanningProblem) -> Result<(Control, usize)> {
    problem.validate()?;
    let mean = MeanState::from_belief(problem.robot, problem.noise);
    let index = argmin_index(problem.grid.controls().iter().map(|&u| problem.tracking_cost(u, &mean)))
        .ok_or_else(|| Error::config("grid", "every control scored NaN"))?;
    Ok((problem.grid.controls()[index], index))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub v: f64,
    pub omega: f64,
    pub q: f64,
}

/// `q(u)` for every grid control in grid order.
pub fn cost_surface(problem: &PlanningProblem) -> Result<Vec<SurfaceRow>> {
    let (_, diag) = plan_step(problem)?;
    Ok(problem
        .grid
        .controls()
        .iter()
        .zip(&diag.scores)
        .map(|(u, s)| SurfaceRow {
            v: u.v,
            omega: u.omega,
            q: s.total,
        })
        .collect())
}

/// Tab-separated `v ω q` rows, one per control.
pub fn format_surface(rows: &[SurfaceRow]) -> String {
    rows.iter().map(|r| format!("{}\t{}\t{}\n", r.v, r.omega, r.q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_examples() {
        let g = build_grid((0.0, 1.0), (-1.0, 1.0), 2, 2).unwrap();
        let expect = [(0.5, 0.0), (0.5, 1.0), (1.0, 0.0), (1.0, 1.0)];
        assert_eq!(g.len(), 4);
        for (u, (v, w)) in g.controls().iter().zip(expect) {
            assert_eq!((u.v, u.omega), (v, w));
        }
        let g = build_grid((0.0, 1.0), (-1.0, 1.0), 1, 1).unwrap();
        assert_eq!(g.controls(), &[Control::new(1.0, 1.0)]);
        let g = build_grid((0.0, 1.0), (-1.0, 1.0), 4, 1).unwrap();
        let vs: Vec<f64> = g.controls().iter().map(|u| u.v).collect();
        assert_eq!(vs, vec![0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn grid_rejects_inverted_bounds() {
        assert!(matches!(build_grid((1.0, 0.0), (-1.0, 1.0), 2, 2), Err(Error::Config { field, .. }) if field == "grid.v_bounds"));
        assert!(matches!(build_grid((0.0, 1.0), (1.0, 1.0), 2, 2), Err(Error::Config { field, .. }) if field == "grid.omega_bounds"));
        assert!(build_grid((0.0, 1.0), (-1.0, 1.0), 0, 2).is_err());
    }

    fn mean_at_origin() -> MeanState {
        MeanState {
            position: Vec2::zeros(),
            heading: 0.0,
            actuation_bias: Vec2::zeros(),
        }
    }

    #[test]
    fn tracking_cost_examples() {
        let goal = GoalSpec {
            position: Vec2::new(5.0, 0.0),
            preferred_speed: 1.0,
        };
        let only_goal = PlannerWeights {
            control: 0.0,
            ..PlannerWeights::default()
        };
        let m = mean_at_origin();
        assert_eq!(tracking_cost(Control::new(1.0, 0.0), &m, &goal, &only_goal, TrackingMode::Velocity, 0.1), 0.0);
        let unit = PlannerWeights {
            goal: 1.0,
            control: 1.0,
            ..PlannerWeights::default()
        };
        assert_abs_diff_eq!(tracking_cost(Control::ZERO, &m, &goal, &unit, TrackingMode::Velocity, 0.1), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn doubling_control_quadruples_control_term() {
        // zero goal weight isolates the control term: c·‖2u‖² − c·‖u‖² = 3c‖u‖²
        let goal = GoalSpec {
            position: Vec2::new(5.0, 0.0),
            preferred_speed: 1.0,
        };
        let w = PlannerWeights {
            goal: 0.0,
            control: 0.4,
            ..PlannerWeights::default()
        };
        let u = Control::new(0.3, -0.7);
        let m = mean_at_origin();
        let j1 = tracking_cost(u, &m, &goal, &w, TrackingMode::Velocity, 0.1);
        let j2 = tracking_cost(Control::new(0.6, -1.4), &m, &goal, &w, TrackingMode::Velocity, 0.1);
        assert_abs_diff_eq!(j2 - j1, 3.0 * u.norm_squared() * 0.4, epsilon = 1e-12);
    }

    #[test]
    fn position_mode_measures_distance_to_goal() {
        let goal = GoalSpec {
            position: Vec2::new(1.0, 0.0),
            preferred_speed: 1.0,
        };
        let w = PlannerWeights {
            goal: 1.0,
            control: 0.0,
            ..PlannerWeights::default()
        };
        let j = tracking_cost(Control::new(1.0, 0.0), &mean_at_origin(), &goal, &w, TrackingMode::Position, 0.5);
        assert_abs_diff_eq!(j, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn argmin_breaks_ties_low() {
        assert_eq!(argmin_index([3.0, 1.0, 1.0 + 1e-13, 1.0]), Some(1));
        assert_eq!(argmin_index([2.0, 1.0, 0.5]), Some(2));
        assert_eq!(argmin_index([f64::NAN, 2.0]), Some(1));
        assert_eq!(argmin_index(std::iter::empty()), None);
    }

    #[test]
    fn surface_format() {
        let rows = [SurfaceRow { v: 0.5, omega: -1.0, q: 2.25 }];
        assert_eq!(format_surface(&rows), "0.5\t-1\t2.25\n");
    }
}
