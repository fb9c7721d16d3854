//! Closed-loop simulation: plan, apply with fresh noise, advance obstacles,
//! re-estimate their velocities, repeat.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::scenario::{CorridorFile, Method, ScenarioSpec};
use crate::baselines::{baseline_plan_step, BaselineVariant};
use crate::constraints::{collision_distribution, corridor_distances, empirical_eta, CorridorSpec};
use crate::desired::DesiredDistributions;
use crate::kinematics::{
    advance_obstacle, estimate_obstacle_velocity, propagate_robot, Control, ObstacleBelief, ObstacleParticle,
    RobotBelief, RobotParticle,
};
use crate::planner::{cost_surface, greedy_control, plan_step, ControlGrid, PlanningProblem, SurfaceRow};
use crate::sampling::{derive_seed, draw_planar, draw_scalar, WeightedSamples};
use crate::{Error, Result, Vec2};

const STREAM_ROBOT_POSITION: u64 = 1;
const STREAM_ROBOT_HEADING: u64 = 2;
const STREAM_PLAN: u64 = 3;
const STREAM_APPLY: u64 = 4;
const STREAM_OBSTACLE_BASE: u64 = 16;

fn obstacle_stream(j: usize, which: u64) -> u64 {
    STREAM_OBSTACLE_BASE + 4 * j as u64 + which
}

/// Particle positions at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub robot_positions: Vec<Vec2>,
    pub robot_mean: Vec2,
    /// One list per obstacle.
    pub obstacle_positions: Vec<Vec<Vec2>>,
    pub obstacle_means: Vec<Vec2>,
}

/// Desired sets used at one planning step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesiredRecord {
    pub nominal: Control,
    pub nominal_feasible: bool,
    /// Ids of the obstacles that were active at this step.
    pub collision_obstacles: Vec<usize>,
    /// Desired collision-cone samples, one list per active obstacle.
    pub collision: Vec<Vec<f64>>,
    pub corridor_lower: Option<Vec<f64>>,
    pub corridor_upper: Option<Vec<f64>>,
    pub degenerate: bool,
}

impl From<&DesiredDistributions> for DesiredRecord {
    fn from(d: &DesiredDistributions) -> Self {
        DesiredRecord {
            nominal: d.nominal.control,
            nominal_feasible: d.nominal.feasible,
            collision_obstacles: d.collision.iter().filter_map(|s| s.samples.obstacle).collect(),
            collision: d.collision.iter().map(|s| s.values().to_vec()).collect(),
            corridor_lower: d.corridor_lower.as_ref().map(|s| s.values().to_vec()),
            corridor_upper: d.corridor_upper.as_ref().map(|s| s.values().to_vec()),
            degenerate: d.any_degenerate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub control: Control,
    /// Planner objective at the chosen control (tracking cost for baselines).
    pub cost: f64,
    /// Empirical η per obstacle at the chosen control.
    pub eta: Vec<f64>,
    /// False when no grid control met the method's constraints.
    pub feasible: bool,
    /// Collision-cone samples at the chosen control, one list per obstacle.
    pub collision_samples: Vec<Vec<f64>>,
    pub desired: Option<DesiredRecord>,
    /// State after the control was applied.
    pub after: Snapshot,
    /// Fraction of robot × obstacle particle pairs that overlap, after the step.
    pub colliding_pair_fraction: f64,
    /// Weighted fraction of robot particles outside the corridor, after the step.
    pub corridor_violation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: usize,
    pub reached_goal: bool,
    pub sim_time: f64,
    pub path_length: f64,
    /// Path length plus remaining distance to the goal, minus the straight
    /// start-goal distance. Never negative.
    pub deviation: f64,
    /// Σ (v² + ω²) over executed steps.
    pub control_cost: f64,
    /// Smallest mean-disc gap to any obstacle; absent without obstacles.
    pub min_clearance: Option<f64>,
    /// Steps at which some mean disc overlapped the robot's.
    pub collision_events: usize,
    pub infeasible_steps: usize,
    pub degenerate_steps: usize,
    pub max_colliding_pair_fraction: f64,
    pub max_corridor_violation_fraction: f64,
}

/// One JSON document per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub scenario: String,
    pub method: Method,
    pub degree: u32,
    pub seed: u64,
    pub samples: usize,
    pub dt: f64,
    pub robot_radius: f64,
    pub obstacle_radii: Vec<f64>,
    pub start: Vec2,
    pub goal: Vec2,
    pub corridor: Option<CorridorFile>,
    pub initial: Snapshot,
    pub steps: Vec<StepRecord>,
    pub metrics: RunMetrics,
}

impl RunLog {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }
}

/// What one planning call decided.
#[derive(Debug, Clone)]
pub struct Decision {
    pub control: Control,
    pub cost: f64,
    pub eta: Vec<f64>,
    pub feasible: bool,
    pub collision_samples: Vec<Vec<f64>>,
    pub desired: Option<DesiredRecord>,
}

/// Mutable world state of a run. Steps are strictly sequential.
#[derive(Debug, Clone)]
pub struct Simulation {
    spec: ScenarioSpec,
    grid: ControlGrid,
    corridor: Option<CorridorSpec>,
    robot: RobotBelief,
    /// Simulated obstacle particles; velocities stay at their drawn values.
    truth: Vec<ObstacleBelief>,
    /// What the planner sees: velocities re-estimated from the last two frames.
    estimated: Vec<ObstacleBelief>,
    /// The subset of `estimated` that is not receding from the robot.
    active: Vec<ObstacleBelief>,
    step: usize,
}

impl Simulation {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let seed = spec.seed;
        let n = spec.samples;
        let pos = draw_planar(&spec.noise(&spec.robot.position_noise), derive_seed(seed, STREAM_ROBOT_POSITION, 0))?;
        let heading = draw_scalar(&spec.noise(&spec.robot.heading_noise), derive_seed(seed, STREAM_ROBOT_HEADING, 0))?;
        let particles = pos
            .values()
            .iter()
            .zip(heading.values())
            .map(|(p, h)| RobotParticle {
                position: spec.robot.position + p,
                heading: spec.robot.heading + h,
                velocity: Vec2::zeros(),
            })
            .collect();
        let robot = RobotBelief::uniform(particles, spec.robot.radius)?;

        let mut truth = Vec::with_capacity(spec.obstacles.len());
        for (j, o) in spec.obstacles.iter().enumerate() {
            let p = draw_planar(&spec.noise(&o.position_noise), derive_seed(seed, obstacle_stream(j, 0), 0))?;
            let v = draw_planar(&spec.noise(&o.velocity_noise), derive_seed(seed, obstacle_stream(j, 1), 0))?;
            let particles = p
                .values()
                .iter()
                .zip(v.values())
                .map(|(dp, dv)| ObstacleParticle {
                    position: o.position + dp,
                    velocity: o.velocity + dv,
                })
                .collect();
            truth.push(ObstacleBelief::uniform(j, particles, o.radius)?);
        }
        debug_assert!(truth.iter().all(|o| o.len() == n));

        let mut sim = Simulation {
            grid: spec.control_grid()?,
            corridor: spec.corridor_spec()?,
            spec: spec.clone(),
            robot,
            estimated: truth.clone(),
            active: Vec::new(),
            truth,
            step: 0,
        };
        sim.refresh_active();
        Ok(sim)
    }

    /// Keeps the obstacles whose mean distance to the robot is not growing
    /// under the current mean velocities. The collision cone has no sense of
    /// direction, so without this an obstacle that has already been passed
    /// keeps repelling the robot from its own line of travel.
    fn refresh_active(&mut self) {
        let (p, v) = (self.robot.mean_position(), self.robot.mean_velocity());
        self.active = self
            .estimated
            .iter()
            .filter(|o| (p - o.mean_position()).dot(&(v - o.mean_velocity())) <= 0.0)
            .cloned()
            .collect();
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn robot(&self) -> &RobotBelief {
        &self.robot
    }

    /// Every obstacle as the planner estimates it.
    pub fn obstacles(&self) -> &[ObstacleBelief] {
        &self.estimated
    }

    /// Obstacles that enter the planning problem at the current step.
    pub fn active_obstacles(&self) -> &[ObstacleBelief] {
        &self.active
    }

    pub fn goal_reached(&self) -> bool {
        (self.robot.mean_position() - self.spec.goal.position).norm() <= self.spec.goal_tolerance
    }

    /// Actuation-noise samples the planner uses at the current step.
    pub fn planning_noise(&self) -> Result<WeightedSamples<Vec2>> {
        let spec = self.spec.noise(&self.spec.robot.actuation_noise);
        draw_planar(&spec, derive_seed(self.spec.seed, STREAM_PLAN, self.step as u64))
    }

    pub fn problem<'a>(&'a self, noise: &'a WeightedSamples<Vec2>) -> PlanningProblem<'a> {
        PlanningProblem {
            robot: &self.robot,
            obstacles: &self.active,
            corridor: self.corridor.as_ref(),
            goal: &self.spec.goal,
            grid: &self.grid,
            kernel: self.spec.kernel,
            weights: self.spec.weights,
            tracking: self.spec.tracking,
            noise,
            dt: self.spec.dt,
        }
    }

    /// Runs the scenario's method on the current state. The reported η and
    /// collision samples cover every obstacle, active or not.
    pub fn decide(&self) -> Result<Decision> {
        let noise = self.planning_noise()?;
        let problem = self.problem(&noise);
        let all = PlanningProblem {
            obstacles: &self.estimated,
            ..problem
        };
        let decision = match self.spec.method {
            Method::Rkhs => {
                let (u, d) = plan_step(&problem)?;
                let (eta, samples) = collision_at(&all, u)?;
                Decision {
                    control: u,
                    cost: d.chosen_score(),
                    eta,
                    feasible: d.desired.nominal.feasible,
                    collision_samples: samples,
                    desired: Some(DesiredRecord::from(&d.desired)),
                }
            }
            Method::GaussLin | Method::GaussMoment => {
                let variant = if self.spec.method == Method::GaussLin {
                    BaselineVariant::Linearized
                } else {
                    BaselineVariant::SampleMoment
                };
                let (u, d) = baseline_plan_step(&problem, variant, self.spec.baseline.eta)?;
                let (eta, samples) = collision_at(&all, u)?;
                Decision {
                    control: u,
                    cost: d.tracking[d.index],
                    eta,
                    feasible: d.feasible,
                    collision_samples: samples,
                    desired: None,
                }
            }
            Method::Greedy => {
                let (u, _) = greedy_control(&problem)?;
                let mean = problem.mean_scene().robot;
                let (eta, samples) = collision_at(&all, u)?;
                Decision {
                    control: u,
                    cost: problem.tracking_cost(u, &mean),
                    eta,
                    feasible: true,
                    collision_samples: samples,
                    desired: None,
                }
            }
        };
        Ok(decision)
    }

    /// Applies `u` with freshly drawn actuation noise and advances the obstacles.
    pub fn apply(&mut self, u: Control) -> Result<()> {
        let (seed, k, dt) = (self.spec.seed, self.step as u64, self.spec.dt);
        let actuation = draw_planar(&self.spec.noise(&self.spec.robot.actuation_noise), derive_seed(seed, STREAM_APPLY, k))?;
        self.robot = propagate_robot(&self.robot, u, &actuation, dt)?;

        let mut truth = Vec::with_capacity(self.truth.len());
        let mut estimated = Vec::with_capacity(self.truth.len());
        for (j, (prev, o)) in self.truth.iter().zip(&self.spec.obstacles).enumerate() {
            let process = draw_planar(&self.spec.noise(&o.process_noise), derive_seed(seed, obstacle_stream(j, 2), k))?;
            let next = advance_obstacle(prev, &process, dt)?;
            estimated.push(estimate_obstacle_velocity(prev, &next, dt)?);
            truth.push(next);
        }
        self.truth = truth;
        self.estimated = estimated;
        self.refresh_active();
        self.step += 1;
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            robot_positions: self.robot.particles().iter().map(|p| p.position).collect(),
            robot_mean: self.robot.mean_position(),
            obstacle_positions: self
                .truth
                .iter()
                .map(|o| o.particles().iter().map(|p| p.position).collect())
                .collect(),
            obstacle_means: self.truth.iter().map(ObstacleBelief::mean_position).collect(),
        }
    }

    /// Smallest gap between the robot's mean disc and any obstacle's.
    pub fn mean_clearance(&self) -> Option<f64> {
        let r = self.robot.mean_position();
        self.truth
            .iter()
            .map(|o| (r - o.mean_position()).norm() - self.robot.radius() - o.radius())
            .reduce(f64::min)
    }

    /// Fraction of all robot × obstacle particle pairs (over every obstacle)
    /// whose discs overlap.
    pub fn colliding_pair_fraction(&self) -> f64 {
        if self.truth.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for o in &self.truth {
            let reach = self.robot.radius() + o.radius();
            for (rp, rw) in self.robot.particles().iter().zip(self.robot.weights()) {
                for (op, ow) in o.particles().iter().zip(o.weights()) {
                    if (rp.position - op.position).norm() < reach {
                        total += rw * ow;
                    }
                }
            }
        }
        (total / self.truth.len() as f64).clamp(0.0, 1.0)
    }

    pub fn corridor_violation_fraction(&self) -> f64 {
        let Some(c) = &self.corridor else { return 0.0 };
        self.robot
            .particles()
            .iter()
            .zip(self.robot.weights())
            .filter(|(p, _)| {
                let (d1, d2) = corridor_distances(p.position, c);
                d1 > 0.0 || d2 < 0.0
            })
            .fold(0.0, |acc, (_, w)| acc + w)
            .clamp(0.0, 1.0)
    }
}

fn collision_at(problem: &PlanningProblem, u: Control) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let next = propagate_robot(problem.robot, u, problem.noise, problem.dt)?;
    let mut eta = Vec::with_capacity(problem.obstacles.len());
    let mut samples = Vec::with_capacity(problem.obstacles.len());
    for o in problem.obstacles {
        let c = collision_distribution(&next, o)?;
        eta.push(empirical_eta(&c));
        samples.push(c.values().to_vec());
    }
    Ok((eta, samples))
}

/// A finished run plus its wall-clock time. The time is kept out of the log
/// so logs stay byte-identical across runs.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: RunLog,
    pub wall_clock: Duration,
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunOutcome> {
    let started = Instant::now();
    let mut sim = Simulation::new(spec)?;
    let initial = sim.snapshot();
    let start = initial.robot_mean;

    let mut steps = Vec::new();
    let mut min_clearance = sim.mean_clearance();
    let mut collision_events = usize::from(min_clearance.is_some_and(|c| c < 0.0));
    let (mut path_length, mut control_cost) = (0.0, 0.0);
    let (mut infeasible_steps, mut degenerate_steps) = (0, 0);
    let (mut max_pair, mut max_corridor) = (0.0f64, 0.0f64);

    while !sim.goal_reached() && sim.step_index() < spec.max_steps {
        let decision = sim.decide()?;
        let before = sim.robot().mean_position();
        let k = sim.step_index();
        sim.apply(decision.control)?;
        let after = sim.snapshot();

        path_length += (after.robot_mean - before).norm();
        control_cost += decision.control.norm_squared();
        infeasible_steps += usize::from(!decision.feasible);
        degenerate_steps += usize::from(decision.desired.as_ref().is_some_and(|d| d.degenerate));
        if let Some(c) = sim.mean_clearance() {
            min_clearance = Some(min_clearance.map_or(c, |m| m.min(c)));
            collision_events += usize::from(c < 0.0);
        }
        let pair = sim.colliding_pair_fraction();
        let corridor = sim.corridor_violation_fraction();
        max_pair = max_pair.max(pair);
        max_corridor = max_corridor.max(corridor);

        steps.push(StepRecord {
            step: k,
            control: decision.control,
            cost: decision.cost,
            eta: decision.eta,
            feasible: decision.feasible,
            collision_samples: decision.collision_samples,
            desired: decision.desired,
            after,
            colliding_pair_fraction: pair,
            corridor_violation_fraction: corridor,
        });
    }

    let goal = spec.goal.position;
    let end = sim.robot().mean_position();
    let deviation = (path_length + (goal - end).norm() - (goal - start).norm()).max(0.0);
    let metrics = RunMetrics {
        steps: steps.len(),
        reached_goal: sim.goal_reached(),
        sim_time: steps.len() as f64 * spec.dt,
        path_length,
        deviation,
        control_cost,
        min_clearance,
        collision_events,
        infeasible_steps,
        degenerate_steps,
        max_colliding_pair_fraction: max_pair,
        max_corridor_violation_fraction: max_corridor,
    };
    let log = RunLog {
        scenario: spec.name.clone(),
        method: spec.method,
        degree: spec.kernel.degree,
        seed: spec.seed,
        samples: spec.samples,
        dt: spec.dt,
        robot_radius: spec.robot.radius,
        obstacle_radii: spec.obstacles.iter().map(|o| o.radius).collect(),
        start,
        goal,
        corridor: spec.corridor,
        initial,
        steps,
        metrics,
    };
    Ok(RunOutcome {
        log,
        wall_clock: started.elapsed(),
    })
}

/// Same as [`run_scenario`] inside a dedicated thread pool of `threads`
/// workers. The log does not depend on the thread count.
pub fn run_scenario_with_threads(spec: &ScenarioSpec, threads: usize) -> Result<RunOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    pool.install(|| run_scenario(spec))
}

/// `q(u)` over the grid at step `k` of the scenario's closed loop.
pub fn surface_at_step(spec: &ScenarioSpec, k: usize) -> Result<Vec<SurfaceRow>> {
    let mut sim = Simulation::new(spec)?;
    while sim.step_index() < k {
        if sim.goal_reached() {
            return Err(Error::config("step", format!("run reached the goal after {} steps", sim.step_index())));
        }
        let d = sim.decide()?;
        sim.apply(d.control)?;
    }
    let noise = sim.planning_noise()?;
    cost_surface(&sim.problem(&noise))
}
