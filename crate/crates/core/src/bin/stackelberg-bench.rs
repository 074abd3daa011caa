use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;
use serde_json::json;

use stackelberg::config::{self, ExperimentConfig, PreferenceSweep};
use stackelberg::experiment::{self, OUT_DIR_ENV};
use stackelberg::Error;

#[derive(Parser, Debug)]
#[command(name = "stackelberg-bench", version, about = "Learning dynamics in decision-maker / strategic-agent Stackelberg games")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Override the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Divide every run's epoch count by this factor.
    #[arg(long, global = true, conflicts_with = "full_scale")]
    scale: Option<usize>,
    /// Run the full horizons (same as --scale 1).
    #[arg(long, global = true)]
    full_scale: bool,
    /// Output directory (overrides the STACKELBERG_OUT_DIR environment variable).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Maximum number of concurrent runs or oracle threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run both orders of play for one config (a JSON file or a preset name).
    Run { config: String },
    /// Run every config matching a glob, optionally over several seeds.
    Sweep {
        pattern: String,
        /// Number of consecutive seeds per config.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Print both Stackelberg equilibria of a config's game.
    Equilibria { config: String },
    /// Fit the log-log slope of cumulative regret against the horizon.
    RegretSlope {
        #[arg(required = true, num_args = 1..)]
        traces: Vec<PathBuf>,
        /// Results document whose game and equilibria define the targets.
        #[arg(long)]
        targets: PathBuf,
    },
    /// Risk differences between the two orders of play over a parameter grid.
    PreferenceTable { config: PathBuf },
    /// List preset names, or print one preset expanded.
    Presets { name: Option<String> },
}

fn load_config(source: &str, global: &Global) -> stackelberg::Result<ExperimentConfig> {
    let path = Path::new(source);
    let text = if path.exists() {
        fs::read_to_string(path)?
    } else if config::preset(source).is_some() {
        json!({ "preset": source }).to_string()
    } else {
        return Err(Error::config(format!("{source}: no such file or preset")));
    };
    let mut config = config::parse_config(&text)?;
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    if global.full_scale {
        config.scale = 1;
    } else if let Some(scale) = global.scale {
        if scale == 0 {
            return Err(Error::config("--scale must be at least 1"));
        }
        config.scale = scale;
    }
    Ok(config)
}

fn out_dir(global: &Global, config: Option<&ExperimentConfig>) -> PathBuf {
    match config {
        Some(c) => experiment::resolve_out_dir(global.out.as_deref(), c),
        None => global
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(".")),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> stackelberg::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cli: &Cli) -> stackelberg::Result<ExitCode> {
    let global = &cli.global;
    match &cli.command {
        Command::Run { config } => {
            let config = load_config(config, global)?;
            let dir = out_dir(global, Some(&config));
            let outcome = experiment::run_experiment(&config, &dir)?;
            for run in &outcome.document.runs {
                match (&run.terminal, &run.aborted) {
                    (_, Some(reason)) => println!("{}: aborted ({reason})", run.order.label()),
                    (Some(t), None) => println!(
                        "{}: T = {}, terminal running-average L = {:.6}, R = {:.6}",
                        run.order.label(),
                        run.epochs_completed,
                        t.window_avg_dm,
                        t.window_avg_agents
                    ),
                    (None, None) => {}
                }
            }
            println!("{}", outcome.results_path.display());
            Ok(if outcome.document.aborted() { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Sweep { pattern, seeds } => {
            let mut configs = Vec::new();
            let paths = glob::glob(pattern).map_err(|e| Error::config(format!("bad glob {pattern:?}: {e}")))?;
            for path in paths {
                let path = path.map_err(|e| Error::Io(e.into()))?;
                configs.push(load_config(&path.display().to_string(), global)?);
            }
            if configs.is_empty() {
                return Err(Error::config(format!("no config matches {pattern:?}")));
            }
            let dir = out_dir(global, None);
            let workers = global.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let entries = experiment::run_sweep(&configs, *seeds, workers, &dir)?;
            let summary = dir.join("sweep-summary.json");
            experiment::write_json(&summary, &entries)?;
            println!("{}", summary.display());
            let failed = entries.iter().any(|e| !e.errors.is_empty() || e.averages.iter().any(|a| a.aborted_runs > 0));
            Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Equilibria { config } => {
            let config = load_config(config, global)?;
            let table = experiment::compute_equilibria(&config.game, &config.oracle)?;
            print_json(&table)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::RegretSlope { traces, targets } => {
            let targets = experiment::read_results(targets)?;
            let fit = experiment::regret_slope_from_files(traces, &targets)?;
            for w in &fit.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&fit)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::PreferenceTable { config } => {
            let sweep = PreferenceSweep::parse(&fs::read_to_string(config)?)?;
            let dir = out_dir(global, None);
            fs::create_dir_all(&dir)?;
            let rows = experiment::export_preference_table(&sweep)?;
            let path = dir.join(format!("{}.preference.csv", sweep.name));
            experiment::write_preference_csv(&path, &rows)?;
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets { name: None } => {
            for name in config::preset_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets { name: Some(name) } => {
            let config = load_config(name, global)?;
            print_json(&config)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if let Some(workers) = cli.global.workers {
        // also bounds the grid-search threads of the equilibrium oracles
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build_global();
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(Error::Validation(errors)) => {
            eprintln!("invalid config:");
            for e in errors {
                eprintln!("  {e}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
