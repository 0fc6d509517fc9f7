mod commands;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Outcome, SweepSpec};
use config::{ConfigError, ScenarioConfig};

#[derive(Parser)]
#[command(name = "bidwars", version, about = "Auction-format equilibria for autobidding platforms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the advertiser subgame for one format profile.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated formats, e.g. SPA,FPA.
        #[arg(long)]
        profile: Option<String>,
    },
    /// Build the platforms' payoff matrix and its equilibria.
    Game {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep the scenario parameter and emit a CSV table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "alpha")]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        steps: usize,
        /// `csv` writes to stdout; anything else is taken as an output path.
        #[arg(long, default_value = "csv")]
        out: String,
    },
    /// Compare analytic solutions against the brute-force oracle.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn threads() -> Result<(), ConfigError> {
    let Ok(raw) = std::env::var("BIDWARS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| ConfigError::Invalid(format!("BIDWARS_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError::Invalid(e.to_string()))
}

fn emit_json(value: &serde_json::Value) {
    let mut out = std::io::stdout().lock();
    let text = serde_json::to_string_pretty(value).expect("json report");
    let _ = writeln!(out, "{text}");
}

fn fail(command: &str, config: Option<&ScenarioConfig>, err: CliError) -> ExitCode {
    eprintln!("error: {err}");
    if command != "sweep" {
        emit_json(&commands::envelope(
            command,
            config,
            serde_json::Value::Null,
            serde_json::Value::Null,
            Vec::new(),
            Some(&err),
        ));
    }
    ExitCode::from(err.exit_code() as u8)
}

fn report(command: &str, cfg: &ScenarioConfig, outcome: Result<Outcome, CliError>) -> ExitCode {
    match outcome {
        Ok(o) => {
            for w in &o.warnings {
                eprintln!("warning: {w}");
            }
            let code = o.failure.as_ref().map_or(0, |e| e.exit_code());
            if let Some(e) = &o.failure {
                eprintln!("error: {e}");
            }
            emit_json(&commands::envelope(
                command,
                Some(cfg),
                o.result,
                o.residuals,
                o.warnings,
                o.failure.as_ref(),
            ));
            ExitCode::from(code as u8)
        }
        Err(e) => fail(command, Some(cfg), e),
    }
}

fn run_sweep(cfg: &ScenarioConfig, param: &str, spec: SweepSpec, out: &str) -> Result<(), CliError> {
    if param != "alpha" {
        return Err(ConfigError::Invalid(format!("unknown sweep parameter `{param}`; only alpha is supported")).into());
    }
    let text = commands::sweep(cfg, &spec)?;
    if out == "csv" {
        let _ = std::io::stdout().lock().write_all(text.as_bytes());
        Ok(())
    } else {
        std::fs::write(Path::new(out), text).map_err(|e| CliError::Solver(format!("cannot write {out}: {e}")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, path) = match &cli.command {
        Command::Solve { config, .. } => ("solve", config),
        Command::Game { config } => ("game", config),
        Command::Sweep { config, .. } => ("sweep", config),
        Command::Verify { config } => ("verify", config),
    };
    if let Err(e) = threads() {
        return fail(name, None, e.into());
    }
    let cfg = match ScenarioConfig::load(path) {
        Ok(c) => c,
        Err(e) => return fail(name, None, e.into()),
    };
    match cli.command {
        Command::Solve { profile, .. } => {
            let profile = match profile.as_deref().map(commands::parse_profile).transpose() {
                Ok(p) => p,
                Err(e) => return fail(name, Some(&cfg), e),
            };
            report(name, &cfg, commands::solve(&cfg, profile))
        }
        Command::Game { .. } => report(name, &cfg, commands::game(&cfg)),
        Command::Verify { .. } => report(name, &cfg, commands::verify(&cfg)),
        Command::Sweep { param, from, to, steps, out, .. } => {
            match run_sweep(&cfg, &param, SweepSpec { from, to, steps }, &out) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(name, Some(&cfg), e),
            }
        }
    }
}
