//! Batches of independent runs over (method, degree, seed) and the flat CSV
//! metrics table.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::{Method, ScenarioSpec};
use super::sim::{run_scenario, RunMetrics};
use crate::{Error, Result};

/// One run's metrics plus the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub method: Method,
    pub degree: u32,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub wall_clock_s: f64,
}

/// Runs every `(method, degree, seed)` combination. Runs execute in parallel;
/// rows come back in nested loop order (method, then degree, then seed).
///
/// Baseline and greedy methods ignore the kernel degree, so they run once per
/// seed with the scenario's own degree recorded.
pub fn ablation_sweep(spec: &ScenarioSpec, degrees: &[u32], methods: &[Method], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let mut jobs = Vec::new();
    for &method in methods {
        let ds: Vec<u32> = if method == Method::Rkhs { degrees.to_vec() } else { vec![spec.kernel.degree] };
        for d in ds {
            for &seed in seeds {
                let mut s = spec.clone();
                s.method = method;
                s.kernel.degree = d;
                s.seed = seed;
                jobs.push(s);
            }
        }
    }
    for job in &jobs {
        job.validate()?;
    }
    jobs.par_iter()
        .map(|s| {
            let out = run_scenario(s)?;
            Ok(SweepRow {
                scenario: s.name.clone(),
                method: s.method,
                degree: s.kernel.degree,
                seed: s.seed,
                metrics: out.log.metrics,
                wall_clock_s: out.wall_clock.as_secs_f64(),
            })
        })
        .collect()
}

/// Column order of the metrics CSV.
pub const CSV_HEADER: [&str; 18] = [
    "scenario",
    "method",
    "degree",
    "seed",
    "steps",
    "reached_goal",
    "sim_time",
    "path_length",
    "deviation",
    "control_cost",
    "min_clearance",
    "collision_events",
    "infeasible_steps",
    "degenerate_steps",
    "max_colliding_pair_fraction",
    "max_corridor_violation_fraction",
    "wall_clock_s",
    "steps_per_s",
];

pub fn write_metrics_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Serialize(e.to_string());
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in rows {
        let m = &r.metrics;
        let rate = if r.wall_clock_s > 0.0 { m.steps as f64 / r.wall_clock_s } else { 0.0 };
        w.write_record([
            r.scenario.clone(),
            r.method.to_string(),
            r.degree.to_string(),
            r.seed.to_string(),
            m.steps.to_string(),
            m.reached_goal.to_string(),
            m.sim_time.to_string(),
            m.path_length.to_string(),
            m.deviation.to_string(),
            m.control_cost.to_string(),
            m.min_clearance.map(|c| c.to_string()).unwrap_or_default(),
            m.collision_events.to_string(),
            m.infeasible_steps.to_string(),
            m.degenerate_steps.to_string(),
            m.max_colliding_pair_fraction.to_string(),
            m.max_corridor_violation_fraction.to_string(),
            r.wall_clock_s.to_string(),
            rate.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Serialize(e.to_string()))
}

/// Per (method, degree) means over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub degree: u32,
    pub runs: usize,
    pub mean_deviation: f64,
    pub mean_control_cost: f64,
    pub mean_steps: f64,
    /// Mean over runs that had obstacles.
    pub mean_min_clearance: Option<f64>,
    pub collision_events: usize,
    pub infeasible_steps: usize,
    pub reached_goal: usize,
}

pub fn aggregate(rows: &[SweepRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(Method, u32)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.method, r.degree)) {
            keys.push((r.method, r.degree));
        }
    }
    keys.into_iter()
        .map(|(method, degree)| {
            let group: Vec<&RunMetrics> = rows
                .iter()
                .filter(|r| r.method == method && r.degree == degree)
                .map(|r| &r.metrics)
                .collect();
            let n = group.len() as f64;
            let mean = |f: fn(&RunMetrics) -> f64| group.iter().map(|m| f(m)).sum::<f64>() / n;
            let clearances: Vec<f64> = group.iter().filter_map(|m| m.min_clearance).collect();
            AggregateRow {
                method,
                degree,
                runs: group.len(),
                mean_deviation: mean(|m| m.deviation),
                mean_control_cost: mean(|m| m.control_cost),
                mean_steps: mean(|m| m.steps as f64),
                mean_min_clearance: (!clearances.is_empty())
                    .then(|| clearances.iter().sum::<f64>() / clearances.len() as f64),
                collision_events: group.iter().map(|m| m.collision_events).sum(),
                infeasible_steps: group.iter().map(|m| m.infeasible_steps).sum(),
                reached_goal: group.iter().filter(|m| m.reached_goal).count(),
            }
        })
        .collect()
}

/// Fixed-width text table of [`aggregate`] output.
pub fn format_aggregate(rows: &[AggregateRow]) -> String {
    let mut s = format!(
        "{:<13} {:>6} {:>5} {:>10} {:>12} {:>8} {:>13} {:>10} {:>11} {:>7}\n",
        "method", "degree", "runs", "deviation", "control_cost", "steps", "min_clearance", "collisions", "infeasible", "reached"
    );
    for r in rows {
        let clearance = r.mean_min_clearance.map(|c| format!("{c:.4}")).unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:<13} {:>6} {:>5} {:>10.4} {:>12.4} {:>8.1} {:>13} {:>10} {:>11} {:>7}\n",
            r.method.as_str(),
            r.degree,
            r.runs,
            r.mean_deviation,
            r.mean_control_cost,
            r.mean_steps,
            clearance,
            r.collision_events,
            r.infeasible_steps,
            r.reached_goal
        ));
    }
    s
}
