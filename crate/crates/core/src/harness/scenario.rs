//! Scenario files (TOML) and the canonical scenario library.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::DEFAULT_ETA;
use crate::constraints::{CorridorSpec, Line};
use crate::planner::{build_grid, ControlGrid, GoalSpec, PlannerWeights, TrackingMode};
use crate::rkhs::KernelConfig;
use crate::sampling::{NoiseModel, NoiseSpec, DEFAULT_SAMPLE_COUNT};
use crate::{Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Distribution matching in the kernel space.
    Rkhs,
    /// Cantelli surrogate on a linearized Gaussian collision cone.
    GaussLin,
    /// Cantelli surrogate on sample mean and variance of the collision cone.
    GaussMoment,
    /// Tracking cost only; ignores obstacles and corridor.
    Greedy,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Rkhs, Method::GaussLin, Method::GaussMoment, Method::Greedy];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rkhs => "rkhs",
            Method::GaussLin => "gauss-lin",
            Method::GaussMoment => "gauss-moment",
            Method::Greedy => "greedy",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("method", format!("unknown method `{s}` (expected rkhs, gauss-lin, gauss-moment or greedy)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    pub position: Vec2,
    #[serde(default)]
    pub heading: f64,
    pub radius: f64,
    #[serde(default)]
    pub position_noise: Option<NoiseModel>,
    #[serde(default)]
    pub heading_noise: Option<NoiseModel>,
    #[serde(default)]
    pub actuation_noise: Option<NoiseModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub position: Vec2,
    #[serde(default = "Vec2::zeros")]
    pub velocity: Vec2,
    pub radius: f64,
    #[serde(default)]
    pub position_noise: Option<NoiseModel>,
    #[serde(default)]
    pub velocity_noise: Option<NoiseModel>,
    /// Per-step additive position noise of the simulated motion.
    #[serde(default)]
    pub process_noise: Option<NoiseModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub v_bounds: (f64, f64),
    pub omega_bounds: (f64, f64),
    #[serde(default = "default_steps")]
    pub v_steps: usize,
    #[serde(default = "default_steps")]
    pub omega_steps: usize,
}

fn default_steps() -> usize {
    15
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            v_bounds: (0.0, 1.0),
            omega_bounds: (-2.0, 2.0),
            v_steps: 15,
            omega_steps: 15,
        }
    }
}

/// Corridor lines as `[a, b, c]` coefficient triples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorFile {
    pub line1: [f64; 3],
    pub line2: [f64; 3],
}

impl CorridorFile {
    pub fn to_spec(&self) -> Result<CorridorSpec> {
        let l = |c: [f64; 3]| Line::new(c[0], c[1], c[2]);
        CorridorSpec::new(l(self.line1), l(self.line2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSpec {
    pub eta: f64,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        BaselineSpec { eta: DEFAULT_ETA }
    }
}

/// Declarative world description for one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub dt: f64,
    pub max_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Particles per belief; every noise source draws this many samples.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
    #[serde(default)]
    pub tracking: TrackingMode,
    pub robot: RobotSpec,
    pub goal: GoalSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub weights: PlannerWeights,
    #[serde(default)]
    pub baseline: BaselineSpec,
    #[serde(default)]
    pub corridor: Option<CorridorFile>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
}

fn default_method() -> Method {
    Method::Rkhs
}

fn default_samples() -> usize {
    DEFAULT_SAMPLE_COUNT
}

/// Mean-position distance at which the goal counts as reached.
pub const DEFAULT_GOAL_TOLERANCE: f64 = 0.2;

fn default_goal_tolerance() -> f64 {
    DEFAULT_GOAL_TOLERANCE
}

impl ScenarioSpec {
    /// Parses TOML text. Relative external-sample paths resolve against
    /// `base_dir`.
    pub fn from_toml_str(text: &str, origin: &Path, base_dir: Option<&Path>) -> Result<Self> {
        let mut spec: ScenarioSpec = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                reason: e.message().to_string(),
            }
        })?;
        if let Some(base) = base_dir {
            spec.resolve_paths(base);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path, path.parent())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |m: &mut Option<NoiseModel>| {
            if let Some(model) = m {
                let mut s = NoiseSpec {
                    model: model.clone(),
                    samples: 1,
                };
                s.resolve_paths(base);
                *model = s.model;
            }
        };
        fix(&mut self.robot.position_noise);
        fix(&mut self.robot.heading_noise);
        fix(&mut self.robot.actuation_noise);
        for o in &mut self.obstacles {
            fix(&mut o.position_noise);
            fix(&mut o.velocity_noise);
            fix(&mut o.process_noise);
        }
    }

    /// Noise spec with the scenario's sample count; omitted models are a
    /// point mass at zero.
    pub fn noise(&self, model: &Option<NoiseModel>) -> NoiseSpec {
        match model {
            Some(m) => NoiseSpec {
                model: m.clone(),
                samples: self.samples,
            },
            None => NoiseSpec::zero(self.samples),
        }
    }

    pub fn control_grid(&self) -> Result<ControlGrid> {
        build_grid(self.grid.v_bounds, self.grid.omega_bounds, self.grid.v_steps, self.grid.omega_steps)
    }

    pub fn corridor_spec(&self) -> Result<Option<CorridorSpec>> {
        self.corridor.as_ref().map(CorridorFile::to_spec).transpose()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config("dt", "time step must be positive"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps", "must be at least 1"));
        }
        if self.samples == 0 {
            return Err(Error::config("samples", "must be at least 1"));
        }
        if !(self.goal_tolerance > 0.0) {
            return Err(Error::config("goal_tolerance", "must be positive"));
        }
        if !(self.robot.radius >= 0.0) {
            return Err(Error::config("robot.radius", "must be non-negative"));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius >= 0.0) {
                return Err(Error::config(format!("obstacles[{i}].radius"), "must be non-negative"));
            }
        }
        self.control_grid()?;
        let (lb, ub) = self.grid.v_bounds;
        let speed = self.goal.preferred_speed;
        if !(speed > lb && speed <= ub) {
            return Err(Error::config(
                "goal.preferred_speed",
                format!("{speed} is outside the grid speed range ({lb}, {ub}]"),
            ));
        }
        self.kernel.validate()?;
        self.weights.validate()?;
        if !(self.baseline.eta > 0.0 && self.baseline.eta < 1.0) {
            return Err(Error::config("baseline.eta", "must lie in (0, 1)"));
        }
        self.corridor_spec()?;

        let check = |field: String, model: &Option<NoiseModel>, dim: usize| -> Result<()> {
            self.noise(model).validate(dim).map_err(|e| match e {
                Error::Config { field: inner, reason } => Error::config(format!("{field}.{inner}"), reason),
                other => other,
            })
        };
        check("robot.position_noise".into(), &self.robot.position_noise, 2)?;
        check("robot.heading_noise".into(), &self.robot.heading_noise, 1)?;
        check("robot.actuation_noise".into(), &self.robot.actuation_noise, 2)?;
        for (i, o) in self.obstacles.iter().enumerate() {
            check(format!("obstacles[{i}].position_noise"), &o.position_noise, 2)?;
            check(format!("obstacles[{i}].velocity_noise"), &o.velocity_noise, 2)?;
            check(format!("obstacles[{i}].process_noise"), &o.process_noise, 2)?;
        }
        Ok(())
    }
}

/// Canonical scenarios shipped with the crate, by name.
pub mod canonical {
    use super::*;

    pub const HEAD_ON: &str = include_str!("../../scenarios/head_on.toml");
    pub const CROSSING: &str = include_str!("../../scenarios/crossing.toml");
    pub const FIVE_OBSTACLES: &str = include_str!("../../scenarios/five_obstacles.toml");
    pub const STATIC_CLUSTER: &str = include_str!("../../scenarios/static_cluster.toml");
    pub const CORRIDOR: &str = include_str!("../../scenarios/corridor.toml");
    pub const BOXED_IN: &str = include_str!("../../scenarios/boxed_in.toml");

    pub const NAMES: [&str; 6] = ["head_on", "crossing", "five_obstacles", "static_cluster", "corridor", "boxed_in"];

    pub fn source(name: &str) -> Option<&'static str> {
        Some(match name {
            "head_on" => HEAD_ON,
            "crossing" => CROSSING,
            "five_obstacles" => FIVE_OBSTACLES,
            "static_cluster" => STATIC_CLUSTER,
            "corridor" => CORRIDOR,
            "boxed_in" => BOXED_IN,
            _ => return None,
        })
    }

    pub fn load(name: &str) -> Result<ScenarioSpec> {
        let text = source(name).ok_or_else(|| Error::config("scenario", format!("no canonical scenario `{name}`")))?;
        ScenarioSpec::from_toml_str(text, Path::new(&format!("<canonical:{name}>")), None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_scenarios_parse() {
        for name in canonical::NAMES {
            let s = canonical::load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let s = canonical::load("corridor").unwrap();
        let text = s.to_toml_string().unwrap();
        let back = ScenarioSpec::from_toml_str(&text, Path::new("x"), None).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "name = \"x\"\ndt = 0.1\nmax_steps = \"many\"\n";
        match ScenarioSpec::from_toml_str(text, Path::new("bad.toml"), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn with(edit: impl FnOnce(&mut ScenarioSpec)) -> Result<()> {
        let mut s = canonical::load("head_on").unwrap();
        edit(&mut s);
        s.validate()
    }

    fn field_of(r: Result<()>) -> String {
        match r {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_fields_are_named() {
        assert_eq!(field_of(with(|s| s.dt = 0.0)), "dt");
        assert_eq!(field_of(with(|s| s.max_steps = 0)), "max_steps");
        assert_eq!(field_of(with(|s| s.goal.preferred_speed = 5.0)), "goal.preferred_speed");
        assert_eq!(field_of(with(|s| s.grid.v_bounds = (1.0, 0.0))), "grid.v_bounds");
        assert_eq!(field_of(with(|s| s.kernel.degree = 0)), "kernel.degree");
        assert_eq!(field_of(with(|s| s.baseline.eta = 1.0)), "baseline.eta");
        assert_eq!(
            field_of(with(|s| s.robot.actuation_noise = Some(NoiseModel::Gaussian { mean: vec![0.0; 3], spread: vec![0.1] }))),
            "robot.actuation_noise.mean"
        );
        assert_eq!(
            field_of(with(|s| s.corridor = Some(CorridorFile { line1: [0.0, 1.0, -1.0], line2: [0.0, 1.0, -2.0] }))),
            "corridor"
        );
    }

    #[test]
    fn unknown_method_rejected() {
        assert!("rkhs".parse::<Method>().is_ok());
        assert!(matches!("kld".parse::<Method>(), Err(Error::Config { .. })));
    }
}
