//! Command-line driver.
//!
//! Subcommands: `generate` (instance files), `solve` (one instance, one
//! method, solution + transport plans), `bench` (generated suite, records
//! and summaries as CSV). Logs go to stderr, data to stdout and files.
//!
//! Exit codes: 0 success, 2 usage or parameter error, 3 no incumbent within
//! the limits, 4 infeasible; 1 for other failures.

use clap::{Parser, Subcommand, ValueEnum};
use prpmi::bench::{
    build_suite, run_suite, summarize, write_boxplot_csv, write_records_csv, write_summary_csv,
    Method,
};
use prpmi::heuristics::{
    full_milp_method, greedy_heuristic, two_step_heuristic, GreedyConfig, MethodOutcome,
};
use prpmi::instance::{
    generate_instance, load_instance, save_instance, DissatisfactionProfile, GenerationSpec,
    InstanceError,
};
use prpmi::model::build_full_model;
use prpmi::planning::{derive_transport_plans, write_plans_csv};
use prpmi::solver::{run_external, SolveLimits, SolveStatus, EFFORT_UNITS_PER_SECOND};
use prpmi::teg::build_teg;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (model schema 1)");

#[derive(Parser)]
#[command(name = "prpmi", version = VERSION, about = "Production routing with mobile inventories")]
struct Cli {
    /// TOML file providing defaults for limit, gap, seed, workers, outdir, scr.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file from suite parameters.
    Generate {
        /// Number of sources (1 to 7).
        #[arg(long)]
        sources: usize,
        /// Destinations per source, in [4.33, 8.5].
        #[arg(long, default_value_t = 6.0)]
        dest_ratio: f64,
        /// Storages per destination, in [1.26, 1.5].
        #[arg(long, default_value_t = 1.4)]
        storage_ratio: f64,
        /// Average weekday demand per destination (85 or 130 kg).
        #[arg(long, default_value_t = 85.0)]
        magnitude: f64,
        #[arg(long, value_enum, default_value_t = ProfileArg::Standard)]
        dissatisfaction: ProfileArg,
        #[arg(long)]
        seed: Option<u64>,
        /// Days in the horizon.
        #[arg(long, default_value_t = 7)]
        horizon: usize,
        /// Output instance file.
        #[arg(long, short = 'o')]
        output: PathBuf,
    },
    /// Solve one instance with one method; writes solution and plans.
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Nominal limit in seconds (deterministic effort budget).
        #[arg(long)]
        limit: Option<f64>,
        /// Relative optimality gap tolerance.
        #[arg(long)]
        gap: Option<f64>,
        /// Critical stock threshold of the greedy dispatch.
        #[arg(long)]
        scr: Option<f64>,
        #[arg(long)]
        outdir: Option<PathBuf>,
        /// External MILP solver invoked on the exported model (method ma).
        #[arg(long)]
        solver_command: Option<String>,
    },
    /// Generate a suite and benchmark the requested methods over it.
    Bench {
        /// Suite size; split evenly over the four size bins.
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long)]
        limit: Option<f64>,
        /// Comma-separated subset of ma, rh, gh.
        #[arg(long, required = true, value_delimiter = ',')]
        methods: Vec<MethodArg>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Standard,
    Elevated,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ma,
    Rh,
    Gh,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Ma => Method::Ma,
            MethodArg::Rh => Method::Rh,
            MethodArg::Gh => Method::Gh,
        }
    }
}

/// Defaults that a `--config` TOML file may override.
#[derive(Debug, Default, Deserialize)]
struct FileConfig {
    limit: Option<f64>,
    gap: Option<f64>,
    seed: Option<u64>,
    workers: Option<usize>,
    outdir: Option<PathBuf>,
    scr: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, String> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load_config(cli.config.as_deref()) {
        Ok(config) => config,
        Err(message) => {
            eprintln!("error: {message}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command, config) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command, config: FileConfig) -> Result<ExitCode, String> {
    match command {
        Command::Generate {
            sources,
            dest_ratio,
            storage_ratio,
            magnitude,
            dissatisfaction,
            seed,
            horizon,
            output,
        } => {
            let spec = GenerationSpec {
                n_sources: sources,
                dest_ratio,
                storage_ratio,
                demand_magnitude: magnitude,
                dissatisfaction_profile: match dissatisfaction {
                    ProfileArg::Standard => DissatisfactionProfile::Standard,
                    ProfileArg::Elevated => DissatisfactionProfile::Elevated,
                },
                rng_seed: seed.or(config.seed).unwrap_or(0),
                horizon,
            };
            let instance = match generate_instance(&spec) {
                Ok(instance) => instance,
                Err(InstanceError::Parameter(message)) => {
                    eprintln!("error: {message}");
                    return Ok(ExitCode::from(2));
                }
                Err(e) => return Err(e.to_string()),
            };
            let violations = instance.validate();
            if violations.is_empty() {
                eprintln!(
                    "validation: clean ({} sources, {} destinations, {} storages, {} days)",
                    instance.n_sources(),
                    instance.n_destinations(),
                    instance.storage_count(),
                    instance.horizon
                );
            } else {
                for v in &violations {
                    eprintln!("validation: {v}");
                }
            }
            save_instance(&instance, &output).map_err(|e| e.to_string())?;
            eprintln!("wrote {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve { instance, method, limit, gap, scr, outdir, solver_command } => {
            let path = instance;
            let instance = match load_instance(&path) {
                Ok(instance) => instance,
                Err(e @ (InstanceError::Schema(_) | InstanceError::Invalid(_))) => {
                    eprintln!("error: {e}");
                    return Ok(ExitCode::from(2));
                }
                Err(e) => return Err(e.to_string()),
            };
            let limit = limit.or(config.limit).unwrap_or(60.0);
            let mut limits = SolveLimits::from_seconds(limit);
            if let Some(gap) = gap.or(config.gap) {
                limits.gap_tolerance = gap;
            }
            let outdir = outdir.or(config.outdir).unwrap_or_else(|| PathBuf::from("out"));
            std::fs::create_dir_all(&outdir).map_err(|e| e.to_string())?;

            let teg = build_teg(&instance);
            let outcome: MethodOutcome = match (method, &solver_command) {
                (MethodArg::Ma, Some(command)) => {
                    let model = build_full_model(&instance, &teg).map_err(|e| e.to_string())?;
                    let external = run_external(&model.milp, command, &limits);
                    match external.incumbent {
                        Some(inc) => {
                            let solution = model.extract_solution(&instance, &teg, &inc.assignment);
                            MethodOutcome {
                                value: solution.cost.total(),
                                solution,
                                bound: Some(external.best_bound.max(0.0)),
                                gap: None,
                                status: external.status,
                                effort_used: 0,
                            }
                        }
                        None => {
                            eprintln!(
                                "external solver failed: {}",
                                external.message.unwrap_or_default()
                            );
                            return Ok(ExitCode::from(3));
                        }
                    }
                }
                (MethodArg::Ma, None) => {
                    full_milp_method(&instance, &teg, &limits).map_err(|e| e.to_string())?
                }
                (MethodArg::Rh, _) => {
                    two_step_heuristic(&instance, &teg, &limits).map_err(|e| e.to_string())?
                }
                (MethodArg::Gh, _) => {
                    let config = match scr.or(config.scr) {
                        Some(threshold) => GreedyConfig { critical_threshold: threshold },
                        None => GreedyConfig::for_instance(&instance),
                    };
                    greedy_heuristic(&instance, &teg, &config, &limits).map_err(|e| e.to_string())?
                }
            };

            match outcome.status {
                SolveStatus::Infeasible => {
                    eprintln!("model infeasible");
                    return Ok(ExitCode::from(4));
                }
                SolveStatus::Error => {
                    eprintln!("no incumbent found within the limits");
                    return Ok(ExitCode::from(3));
                }
                _ => {}
            }

            let plans =
                derive_transport_plans(&teg, &outcome.solution).map_err(|e| e.to_string())?;
            let plans_path = outdir.join("plans.csv");
            let mut file = std::fs::File::create(&plans_path).map_err(|e| e.to_string())?;
            write_plans_csv(&instance, &teg, &outcome.solution, &plans, &mut file)
                .map_err(|e| e.to_string())?;

            let cost = &outcome.solution.cost;
            let report = serde_json::json!({
                "instance": path.display().to_string(),
                "method": format!("{}", Method::from(method)),
                "status": format!("{:?}", outcome.status),
                "cost": {
                    "transport": cost.transport,
                    "refill": cost.refill,
                    "variable_dissatisfaction": cost.variable_dissatisfaction,
                    "fixed_dissatisfaction": cost.fixed_dissatisfaction,
                    "total": cost.total(),
                },
                "bound": outcome.bound,
                "gap": outcome.gap,
                "effort_seconds": outcome.effort_used as f64 / EFFORT_UNITS_PER_SECOND as f64,
                "plans": plans_path.display().to_string(),
                "storages": plans.len(),
            });
            let text = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            std::fs::write(outdir.join("solution.json"), &text).map_err(|e| e.to_string())?;
            println!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { count, limit, methods, seed, workers, outdir } => {
            let limit = limit.or(config.limit).unwrap_or(60.0);
            let limits = SolveLimits::from_seconds(limit);
            let seed = seed.or(config.seed).unwrap_or(0);
            let workers = workers.or(config.workers).unwrap_or(0);
            let outdir = outdir.or(config.outdir).unwrap_or_else(|| PathBuf::from("bench_out"));
            std::fs::create_dir_all(&outdir).map_err(|e| e.to_string())?;
            let methods: Vec<Method> = methods.into_iter().map(Method::from).collect();

            let suite = match build_suite(seed, count) {
                Ok(suite) => suite,
                Err(InstanceError::Parameter(message)) => {
                    eprintln!("error: {message}");
                    return Ok(ExitCode::from(2));
                }
                Err(e) => return Err(e.to_string()),
            };
            eprintln!("suite of {} instances, methods {:?}, limit {limit}s", suite.len(), methods);
            let records = run_suite(&suite, &methods, &limits, workers);
            for r in &records {
                eprintln!(
                    "{} {} cost={} bound={:?} gap={:?} [{}]",
                    r.instance_id,
                    r.method,
                    r.cost,
                    r.bound,
                    r.gap,
                    r.error.as_deref().unwrap_or("ok"),
                );
            }
            let summary = summarize(&records);

            let write = |name: &str, f: &dyn Fn(&mut Vec<u8>) -> std::io::Result<()>| {
                let mut buffer = Vec::new();
                f(&mut buffer).map_err(|e| e.to_string())?;
                std::fs::write(outdir.join(name), buffer).map_err(|e| e.to_string())
            };
            write("records.csv", &|out| write_records_csv(&records, out))?;
            write("summary.csv", &|out| write_summary_csv(&summary, out))?;
            write("boxplot.csv", &|out| write_boxplot_csv(&summary, out))?;
            eprintln!("wrote {}/records.csv, summary.csv, boxplot.csv", outdir.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
