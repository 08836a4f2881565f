use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use geodual_cli::{cmd_run, cmd_solve, cmd_verify, load_config, CliError, RunConfig};
use geodual_core::export::fmt_f64;

#[derive(Parser)]
#[command(name = "geodual", version, about = "Free-surface semi-geostrophic dual solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for the column sweep (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, overriding `output_dir` in the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the weights once at t = 0.
    Solve { config: PathBuf },
    /// Integrate the flow to the configured horizon.
    Run { config: PathBuf },
    /// Run the property battery and print a pass/fail table.
    Verify { config: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve { .. } => "solve",
            Command::Run { .. } => "run",
            Command::Verify { .. } => "verify",
        }
    }

    fn config(&self) -> &Path {
        match self {
            Command::Solve { config } | Command::Run { config } | Command::Verify { config } => config,
        }
    }
}

fn execute(command: &Command, cfg: &RunConfig) -> Result<ExitCode, CliError> {
    match command {
        Command::Solve { .. } => {
            let s = cmd_solve(cfg)?;
            println!("energy {}", fmt_f64(s.energy));
            println!("mass residual {} after {} iterations", fmt_f64(s.mass_residual), s.iterations);
            if let (Some(h), Some(p)) = (s.crosscheck_height_residual, s.crosscheck_pressure_residual) {
                println!("surface cross-check: height {}, pressure {}", fmt_f64(h), fmt_f64(p));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { .. } => {
            let s = cmd_run(cfg)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "energy drift {} after {} steps (max {})",
                fmt_f64(s.final_energy_drift),
                s.steps,
                fmt_f64(s.max_abs_energy_drift)
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { .. } => {
            let report = cmd_verify(cfg)?;
            print!("{}", report.table());
            if report.passed {
                Ok(ExitCode::SUCCESS)
            } else {
                let failed: Vec<&str> = report.failures().map(|p| p.name.as_str()).collect();
                eprintln!("failed: {}", failed.join(", "));
                Ok(ExitCode::from(1))
            }
        }
    }
}

fn write_error(dir: &Path, command: &str, err: &CliError) {
    if std::fs::create_dir_all(dir).is_err() {
        return;
    }
    if let Ok(mut text) = geodual_cli::json::to_pretty(&err.record(command)) {
        text.push('\n');
        let _ = std::fs::write(dir.join("error.json"), text);
    }
}

fn launch(cli: &Cli, out_dir: &mut PathBuf) -> Result<ExitCode, CliError> {
    let mut cfg = load_config(cli.command.config())?;
    if let Some(dir) = &cli.output {
        cfg.output_dir = dir.clone();
    }
    *out_dir = cfg.output_dir.clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Threads(e.to_string()))?;
    pool.install(|| execute(&cli.command, &cfg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out_dir = cli.output.clone().unwrap_or_else(|| PathBuf::from("output"));
    match launch(&cli, &mut out_dir) {
        Ok(code) => code,
        Err(e) => {
            write_error(&out_dir, cli.command.name(), &e);
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
