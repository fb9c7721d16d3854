//! Scenarios, closed-loop runs, metrics and log files.
//!
//! Output formats:
//!
//! * run log: one pretty-printed JSON document per run ([`RunLog`]);
//! * metrics table: CSV with the columns in [`CSV_HEADER`], one row per run;
//! * cost surface: tab-separated `v ω q` rows, see
//!   [`format_surface`](crate::planner::format_surface).

mod oracle;
mod scenario;
mod sim;
mod sweep;

use std::path::Path;

pub use oracle::{all_pairs_eta, brute_force_eta};
pub use scenario::{
    canonical, BaselineSpec, CorridorFile, GridSpec, Method, ObstacleSpec, RobotSpec, ScenarioSpec,
    DEFAULT_GOAL_TOLERANCE,
};
pub use sim::{
    run_scenario, run_scenario_with_threads, surface_at_step, Decision, DesiredRecord, RunLog, RunMetrics, RunOutcome,
    Simulation, Snapshot, StepRecord,
};
pub use sweep::{ablation_sweep, aggregate, format_aggregate, write_metrics_csv, AggregateRow, SweepRow, CSV_HEADER};

use crate::{Error, Result};

/// Writes text to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// File name used for a run log: `<scenario>_<method>_d<degree>_s<seed>.json`.
pub fn log_file_name(log: &RunLog) -> String {
    format!("{}_{}_d{}_s{}.json", log.scenario, log.method, log.degree, log.seed)
}
