use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rydberg_mirror_cli::output::write_outputs;
use rydberg_mirror_cli::{figure_runs, run_scenario, CliError, Config, RunOptions, Scenario};

/// Scenario runner for the Rydberg-switched atomic mirror simulator.
#[derive(Debug, Parser)]
#[command(name = "sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML config; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `global.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `global.output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Histogram band mode: per-bin mean and sd over independent runs.
    #[arg(long)]
    band: bool,
    /// Worker threads; overrides `global.threads` (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    Blockade(RunArgs),
    Spectrum(RunArgs),
    SwitchedSpectrum(RunArgs),
    Spatial(RunArgs),
    Rabi(RunArgs),
    Lifetime(RunArgs),
    Histogram(RunArgs),
    Exchange(RunArgs),
    Bloch(RunArgs),
    Calibrate(RunArgs),
    /// Runs the scenarios behind a figure with pinned defaults.
    Reproduce {
        #[arg(long, value_parser = ["2a", "2b", "3", "4", "5a", "5b", "S3", "S4c", "S5", "S8", "S9"])]
        figure: String,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Prints the default config as TOML.
    Defaults,
}

fn execute(runs: Vec<(Scenario, Config)>, args: &RunArgs) -> Result<(), CliError> {
    let global = &runs[0].1.global;
    let seed = args.seed.unwrap_or(global.seed);
    let threads = args.threads.unwrap_or(global.threads);
    let out_dir = args.out.clone().unwrap_or_else(|| global.output_dir.clone());
    let opts = RunOptions { seed, band: args.band };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let results = pool.install(|| {
        runs.iter()
            .map(|(sc, cfg)| run_scenario(cfg, *sc, opts).map(|o| (sc.name().to_string(), o)))
            .collect::<Result<Vec<_>, _>>()
    })?;
    for path in write_outputs(&out_dir, &results)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn load(args: &RunArgs) -> Result<Config, CliError> {
    match &args.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Defaults => {
            print!("{}", Config::default().to_toml());
            Ok(())
        }
        Command::Reproduce { figure, args } => figure_runs(&figure).and_then(|runs| execute(runs, &args)),
        cmd => {
            let (scenario, args) = match cmd {
                Command::Blockade(a) => (Scenario::Blockade, a),
                Command::Spectrum(a) => (Scenario::Spectrum, a),
                Command::SwitchedSpectrum(a) => (Scenario::SwitchedSpectrum, a),
                Command::Spatial(a) => (Scenario::Spatial, a),
                Command::Rabi(a) => (Scenario::Rabi, a),
                Command::Lifetime(a) => (Scenario::Lifetime, a),
                Command::Histogram(a) => (Scenario::Histogram, a),
                Command::Exchange(a) => (Scenario::Exchange, a),
                Command::Bloch(a) => (Scenario::Bloch, a),
                Command::Calibrate(a) => (Scenario::Calibrate, a),
                Command::Defaults | Command::Reproduce { .. } => unreachable!(),
            };
            load(&args).and_then(|cfg| execute(vec![(scenario, cfg)], &args))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
