mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prestrain::Error;

use crate::commands::{Outcome, Run};
use crate::config::Config;
use crate::output::{config_hash, Sink};

#[derive(Parser)]
#[command(name = "prestrain", version, about = "Thin prestrained plates: geometry, strain solves, bending functional and thickness studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fundamental forms, director and admissibility of the prestrain metric.
    Geometry(Common),
    /// Solve the linearized strain equation for the configured strain.
    Strain(Common),
    /// Evaluate (and optionally minimize) the bending functional.
    Functional(Common),
    /// Build recovery deformations and their diagnostics.
    Recover(Common),
    /// Thickness study of the scaled 3D energy.
    Converge(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized inputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of grid halvings beyond the configured resolution.
    #[arg(long, default_value_t = 0)]
    grid_refine: u32,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::UnsupportedOrder(_) => 1,
        Error::Metric(_) | Error::FrameDegenerate { .. } => 2,
        Error::NotElliptic(_) => 3,
        Error::IllPosed(_) | Error::Solver(_) | Error::Inconsistent { .. } | Error::NonFinite { .. } | Error::ConstraintViolation { .. } => 4,
    }
}

type Handler = fn(&Run, &mut Sink) -> prestrain::Result<Outcome>;

fn execute(name: &str, args: &Common, f: Handler) -> prestrain::Result<(Outcome, Sink)> {
    let bytes = std::fs::read(&args.config).map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Config("config is not UTF-8".into()))?;
    let config = Config::parse(&text)?;
    if args.grid_refine > 6 {
        return Err(Error::Config(format!("--grid-refine {} is too large (at most 6)", args.grid_refine)));
    }
    let dir = args.out.clone().or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out").join(name));
    let mut sink = Sink::create(&dir, config_hash(&bytes))?;
    let run = Run { config, seed: args.seed, grid_refine: args.grid_refine };
    let outcome = f(&run, &mut sink)?;
    Ok((outcome, sink))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, args, f): (&str, &Common, Handler) = match &cli.command {
        Command::Geometry(a) => ("geometry", a, commands::geometry),
        Command::Strain(a) => ("strain", a, commands::strain),
        Command::Functional(a) => ("functional", a, commands::functional),
        Command::Recover(a) => ("recover", a, commands::recover),
        Command::Converge(a) => ("converge", a, commands::converge),
    };
    match execute(name, args, f) {
        Ok((outcome, sink)) => {
            println!("{name}: {}", outcome.summary);
            for p in sink.written() {
                println!("  wrote {}", p.display());
            }
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
