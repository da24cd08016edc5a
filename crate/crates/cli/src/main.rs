use std::path::PathBuf;
use std::process::ExitCode;

use bkap_cli::config::{parse_override, parse_pairs, resolve, ConfigError, RunConfig};
use bkap_cli::runner::run;
use bkap_core::problems::Preset;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bkap", version, about = "Bipolar Boltzmann-Poisson solvers with random inputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Preset experiment to start from.
    #[arg(long)]
    preset: Option<Preset>,
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a single key, e.g. `--set solver.dt=1e-6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV artifacts.
    Run(ConfigArgs),
    /// List the built-in presets.
    ListPresets,
    /// Resolve and check a configuration without running it.
    Validate(ConfigArgs),
}

fn load(args: &ConfigArgs) -> Result<RunConfig, ConfigError> {
    let mut pairs = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            parse_pairs(&text)?
        }
        None => Vec::new(),
    };
    if let Some(p) = args.preset {
        if !pairs.iter().any(|(k, _)| k == "experiment") {
            pairs.insert(0, ("experiment".into(), p.name().into()));
        }
    }
    for s in &args.overrides {
        pairs.push(parse_override(s)?);
    }
    if let Some(out) = &args.out {
        pairs.push(("output.dir".into(), out.display().to_string()));
    }
    resolve(args.preset, &pairs)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListPresets => {
            for p in Preset::ALL {
                println!("{:<8} {}", p.name(), p.description());
            }
            ExitCode::SUCCESS
        }
        Command::Validate(args) => match load(&args) {
            Ok(cfg) => {
                print!("{}", bkap_cli::emit_config(&cfg));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run(args) => {
            let cfg = match load(&args) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            match run(&cfg) {
                Ok(report) => {
                    for f in &report.files {
                        println!("wrote {}", f.display());
                    }
                    for (k, v) in &report.summary {
                        println!("{k} = {v:.6e}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
