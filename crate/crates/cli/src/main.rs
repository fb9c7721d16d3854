use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hilbert_avoid::harness::{
    ablation_sweep, aggregate, canonical, format_aggregate, log_file_name, run_scenario, surface_at_step,
    write_file, write_metrics_csv, Method, RunMetrics, ScenarioSpec,
};
use hilbert_avoid::planner::format_surface;
use hilbert_avoid::Error;

/// Distribution-matching collision avoidance: closed-loop scenario runs,
/// ablations and cost surfaces.
#[derive(Debug, Parser)]
#[command(name = "hilbert-avoid", version)]
struct Cli {
    /// Worker threads for planning and sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its JSON log.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Directory for the run log.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sweep kernel degrees over seeds with the distribution-matching planner.
    Ablate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        degrees: Vec<u32>,
        /// Number of seeds, starting at the scenario seed.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Metrics CSV path; the summary table always goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare planners over seeds.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_delimiter = ',', default_value = "rkhs,gauss-lin,gauss-moment")]
        methods: Vec<String>,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump q(u) over the control grid at one step of the closed loop.
    Surface {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 0)]
        step: usize,
        /// TSV path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario TOML file, or the name of a built-in scenario.
    #[arg(long)]
    scenario: String,
    /// Override the scenario's method (rkhs, gauss-lin, gauss-moment, greedy).
    #[arg(long)]
    method: Option<String>,
    /// Override the kernel degree.
    #[arg(long)]
    degree: Option<u32>,
    /// Override the seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the baseline surrogate probability.
    #[arg(long)]
    eta: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioSpec, Error> {
        let path = Path::new(&self.scenario);
        let mut spec = if path.exists() {
            ScenarioSpec::load(path)?
        } else if canonical::source(&self.scenario).is_some() {
            canonical::load(&self.scenario)?
        } else {
            return Err(Error::config(
                "scenario",
                format!("`{}` is neither a file nor a built-in scenario", self.scenario),
            ));
        };
        if let Some(m) = &self.method {
            spec.method = m.parse()?;
        }
        if let Some(d) = self.degree {
            spec.kernel.degree = d;
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(eta) = self.eta {
            spec.baseline.eta = eta;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { scenario, out } => {
            let spec = scenario.load()?;
            let outcome = run_scenario(&spec)?;
            let path = out.join(log_file_name(&outcome.log));
            write_file(&path, &outcome.log.to_json()?)?;
            print_metrics(&outcome.log.metrics);
            println!("wall_clock_s     {:.3}", outcome.wall_clock.as_secs_f64());
            println!("log              {}", path.display());
            Ok(())
        }
        Command::Ablate {
            scenario,
            degrees,
            seeds,
            out,
        } => {
            let spec = scenario.load()?;
            sweep(&spec, &degrees, &[Method::Rkhs], seeds, out.as_deref())
        }
        Command::Compare {
            scenario,
            methods,
            seeds,
            out,
        } => {
            let spec = scenario.load()?;
            let methods = methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>, _>>()?;
            sweep(&spec, &[spec.kernel.degree], &methods, seeds, out.as_deref())
        }
        Command::Surface { scenario, step, out } => {
            let spec = scenario.load()?;
            let text = format_surface(&surface_at_step(&spec, step)?);
            match out {
                Some(path) => write_file(&path, &text),
                None => io::stdout()
                    .write_all(text.as_bytes())
                    .map_err(|e| Error::io("<stdout>", e)),
            }
        }
        Command::Scenarios => {
            for name in canonical::NAMES {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn sweep(spec: &ScenarioSpec, degrees: &[u32], methods: &[Method], seeds: u64, out: Option<&Path>) -> Result<(), Error> {
    if seeds == 0 {
        return Err(Error::config("seeds", "need at least one seed"));
    }
    let seeds: Vec<u64> = (0..seeds).map(|i| spec.seed.wrapping_add(i)).collect();
    let rows = ablation_sweep(spec, degrees, methods, &seeds)?;
    if let Some(path) = out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        write_metrics_csv(&rows, file)?;
    }
    print!("{}", format_aggregate(&aggregate(&rows)));
    Ok(())
}

fn print_metrics(m: &RunMetrics) {
    println!("steps            {}", m.steps);
    println!("reached_goal     {}", m.reached_goal);
    println!("deviation        {:.4}", m.deviation);
    println!("control_cost     {:.4}", m.control_cost);
    match m.min_clearance {
        Some(c) => println!("min_clearance    {c:.4}"),
        None => println!("min_clearance    -"),
    }
    println!("collision_events {}", m.collision_events);
    println!("infeasible_steps {}", m.infeasible_steps);
}
