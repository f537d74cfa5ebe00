mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use config::{Overrides, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Wings,
    Consistency,
    Shoot,
    Figure,
    Mc,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Wings => "wings",
            Command::Consistency => "consistency",
            Command::Shoot => "shoot",
            Command::Figure => "figure",
            Command::Mc => "mc",
        }
    }
}

/// Most-likely-volatility asymptotics: wing slopes, Heston cross-checks,
/// Hamiltonian shooting, Fourier local variance and Monte-Carlo checks.
#[derive(Debug, Parser)]
#[command(name = "volwings", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit rows as a JSON array instead of CSV.
    #[arg(long)]
    json: bool,
    /// With `shoot`, also write every extremal to `<out>.trajectory.csv`.
    #[arg(long)]
    trajectory: bool,
    /// Overrides the seed of the `sim` and `shoot` blocks.
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_FAIL: u8 = 1;
const EXIT_INVALID: u8 = 2;

fn invalid(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_INVALID)
}

fn setup_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("VOLWINGS_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("VOLWINGS_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn trajectory_path(out: &Path, json: bool) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(if json {
        ".trajectory.json"
    } else {
        ".trajectory.csv"
    });
    PathBuf::from(s)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = setup_threads() {
        return invalid(e);
    }
    if cli.trajectory && !matches!(cli.command, Command::Shoot) {
        return invalid("--trajectory only applies to shoot");
    }
    if cli.trajectory && cli.out.is_none() {
        return invalid("--trajectory needs --out");
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return invalid(format!("{}: {e}", cli.config.display())),
    };
    let cfg: RunConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => return invalid(format!("{}: {e}", cli.config.display())),
    };
    let plan = match config::plan(cli.command.name(), &cfg, Overrides { seed: cli.seed }) {
        Ok(p) => p,
        Err(e) => return invalid(e),
    };

    let outcome = match commands::run(&plan) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAIL);
        }
    };
    if let Err(e) = emit(cli.out.as_deref(), &outcome.table.render(cli.json)) {
        return invalid(e);
    }
    if cli.trajectory {
        if let (Some(out), Some(tr)) = (&cli.out, &outcome.trajectory) {
            if let Err(e) = emit(Some(&trajectory_path(out, cli.json)), &tr.render(cli.json)) {
                return invalid(e);
            }
        }
    }
    if outcome.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}
