use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dhl_core::config::RunConfig;
use dhl_core::run::{self, Command, EXIT_VALIDATION};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Solve,
    Sweep,
    Verify,
    Geometry,
}

/// Degenerate Hessian and curvature equation laboratory.
#[derive(Parser, Debug)]
#[command(name = "dhl", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Nodes across the longest extent of the domain.
    #[arg(long)]
    resolution: Option<usize>,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    eps_schedule: Option<Vec<f64>>,
}

fn fail(code: i32, reason: &str) -> ExitCode {
    eprintln!("{}", run::failure_line(code, reason));
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(EXIT_VALIDATION, &e.to_string()),
    };
    if let Some(n) = std::env::var("DHL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_VALIDATION, &format!("cannot read {}: {e}", cli.config.display())),
    };
    let mut cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_VALIDATION, &e.to_string()),
    };
    if let Some(dir) = cli.out {
        cfg.out_dir = dir;
    }
    if let Some(r) = cli.resolution {
        cfg.solver.resolution = r;
    }
    if let Some(s) = cli.eps_schedule {
        cfg.solver.eps_schedule = s;
    }
    let cmd = match cli.command {
        Cmd::Solve => Command::Solve,
        Cmd::Sweep => Command::Sweep,
        Cmd::Verify => Command::Verify,
        Cmd::Geometry => Command::Geometry,
    };
    match run::execute(cmd, &cfg) {
        Ok(out) => {
            print!("{}", out.report);
            match out.reason {
                Some(r) => fail(out.code, &r),
                None => ExitCode::from(out.code as u8),
            }
        }
        Err(e) => fail(run::exit_code(&e), &e.to_string()),
    }
}
