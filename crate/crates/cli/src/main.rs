use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use spinlimit::config::{presets, ConfigError, RunConfig, MAX_CONFIG_BYTES};
use spinlimit::harness::{run, HarnessError};
use spinlimit::identities::run_identity_suite;

/// Semiclassical Dirac spin transport: orbits, spin precession, BMT
/// comparison and a split-step Dirac solver.
#[derive(Debug, Parser)]
#[command(name = "spinlimit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the scenario described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write SVG plots.
        #[arg(long)]
        plots: bool,
    },
    /// Print the built-in scenario presets as JSON.
    Scenarios,
    /// Run the randomized identity suite and print its report.
    Identities {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        points: usize,
        /// Also write identities.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(e: &HarnessError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn read_config(path: &PathBuf) -> Result<RunConfig, HarnessError> {
    let meta = std::fs::metadata(path).map_err(|e| ConfigError {
        message: format!("cannot read {}: {e}", path.display()),
        key: None,
    })?;
    if meta.len() > MAX_CONFIG_BYTES as u64 {
        return Err(ConfigError {
            message: format!("config exceeds {MAX_CONFIG_BYTES} bytes"),
            key: None,
        }
        .into());
    }
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        message: format!("cannot read {}: {e}", path.display()),
        key: None,
    })?;
    Ok(RunConfig::from_json(&text)?)
}

/// Prints to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = json!({ "error": { "kind": "usage", "message": e.to_string().trim(), "exit_code": 2 } });
            eprintln!("{err}");
            return ExitCode::from(2);
        }
    };
    match cli.command {
        Command::Run { config, out, plots } => {
            let cfg = match read_config(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            match run(&cfg, &dir, plots) {
                Ok(summary) => {
                    emit(&serde_json::to_string_pretty(&summary).expect("summary serializes"));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Scenarios => {
            emit(&serde_json::to_string_pretty(&presets()).expect("presets serialize"));
            ExitCode::SUCCESS
        }
        Command::Identities { seed, points, out } => {
            let rep = match run_identity_suite(seed, points) {
                Ok(r) => r,
                Err(e) => return fail(&e.into()),
            };
            let text = serde_json::to_string_pretty(&rep).expect("report serializes");
            if let Some(dir) = out {
                let written = std::fs::create_dir_all(&dir)
                    .and_then(|_| std::fs::write(dir.join("identities.json"), format!("{text}\n")));
                if let Err(e) = written {
                    return fail(&HarnessError::Io(format!("{}: {e}", dir.display())));
                }
            }
            emit(&text);
            if rep.passed {
                ExitCode::SUCCESS
            } else {
                fail(&HarnessError::IdentityFailure { failures: rep.failures })
            }
        }
    }
}
