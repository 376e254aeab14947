//! `qbc`: formula sweeps, protocol sessions and relay-routing scenarios.
//!
//! Every subcommand reads one JSON document (`--config`), falls back to
//! built-in defaults where that makes sense, and writes CSV or JSON to
//! `--out`, `-` for stdout, or `$QBC_OUT_DIR/<name>` (default `./out`).

mod route;
mod sweeps;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use qbc_core::protocol::{run_session, SessionConfig, SessionVerdict};
use serde::de::DeserializeOwned;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_REJECT: u8 = 2;
pub const EXIT_NO_COMMIT_FRAME: u8 = 3;
pub const EXIT_UNREACHABLE: u8 = 4;
pub const EXIT_NO_VIABLE_CIRCUIT: u8 = 5;
pub const EXIT_USAGE: u8 = 64;

const OUT_DIR_ENV: &str = "QBC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "qbc", version, about = "BB84-embedded bit commitment: sweeps, sessions, routing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// JSON configuration document for the subcommand.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed override (simulate, and full-mode reservations in route).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file, or `-` for stdout. Defaults to $QBC_OUT_DIR/<subcommand>.<ext>.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// r and r' over a (Q_tol, p) grid as CSV: q_tol,p,r,r_prime.
    Rates {
        /// Frame parameter N.
        #[arg(long)]
        n_quarter: Option<u32>,
    },
    /// Binding bound over (p, N_tol, E_tol, variant) grids as CSV:
    /// p,n_tol,e_tol,variant,eps_b.
    Binding,
    /// Run one commitment session and write its transcript.
    ///
    /// Exit status: 0 accept, 2 reject, 3 no commitment frame.
    Simulate,
    /// Discover paths, select one and (for vc) reserve it.
    ///
    /// Exit status: 4 unreachable destination, 5 no viable circuit.
    Route {
        #[arg(long, value_enum)]
        mode: Option<route::Mode>,
        /// Hop penalty for vc selection.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum)]
        reserve: Option<route::Reserve>,
    },
}

/// Failures carry the exit status they map to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Status(u8, String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

pub fn usage(what: impl std::fmt::Display) -> Failure {
    Failure::Usage(what.to_string())
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    match path {
        None => Ok(T::default()),
        Some(p) => load_required(p),
    }
}

pub fn load_required<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_output(out: Option<&Path>, default_name: &str, body: &[u8]) -> Result<(), Failure> {
    let path = match out {
        Some(p) if p == Path::new("-") => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body)?;
            stdout.flush()?;
            return Ok(());
        }
        Some(p) => p.to_path_buf(),
        None => {
            let dir = std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from);
            dir.join(default_name)
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn to_json<T: serde::Serialize>(v: &T) -> Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_vec_pretty(v).context("serialising output")?;
    s.push(b'\n');
    Ok(s)
}

fn simulate(g: &Global) -> Result<u8, Failure> {
    let mut cfg: SessionConfig = load_config(g.config.as_deref())?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(usage)?;
    let t = run_session(&cfg).context("running session")?;
    write_output(g.out.as_deref(), "simulate.json", &to_json(&t)?)?;
    eprintln!("verdict: {:?}", t.verdict);
    Ok(match t.verdict {
        SessionVerdict::Accept0 | SessionVerdict::Accept1 => EXIT_OK,
        SessionVerdict::Reject => EXIT_REJECT,
        SessionVerdict::NoCommitFrame => EXIT_NO_COMMIT_FRAME,
    })
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let g = &cli.global;
    match cli.command {
        Command::Rates { n_quarter } => {
            let mut cfg: sweeps::RatesConfig = load_config(g.config.as_deref())?;
            if let Some(n) = n_quarter {
                cfg.n_quarter = n;
            }
            write_output(g.out.as_deref(), "rates.csv", &sweeps::rates_csv(&cfg)?)?;
            Ok(EXIT_OK)
        }
        Command::Binding => {
            let cfg: sweeps::BindingConfig = load_config(g.config.as_deref())?;
            write_output(g.out.as_deref(), "binding.csv", &sweeps::binding_csv(&cfg)?)?;
            Ok(EXIT_OK)
        }
        Command::Simulate => simulate(g),
        Command::Route { mode, alpha, reserve } => {
            let path = g
                .config
                .as_deref()
                .ok_or_else(|| usage("route needs --config with a network document"))?;
            let mut cfg: route::RouteConfig = load_required(path)?;
            cfg.mode = mode.unwrap_or(cfg.mode);
            cfg.alpha = alpha.unwrap_or(cfg.alpha);
            cfg.reserve = reserve.unwrap_or(cfg.reserve);
            if let Some(seed) = g.seed {
                cfg.session.get_or_insert_with(route::circuit_session).seed = seed;
            }
            let report = route::run(cfg)?;
            write_output(g.out.as_deref(), "route.json", &to_json(&report)?)?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Status(code, msg)) => {
            eprintln!("{msg}");
            ExitCode::from(code)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::{CommandFactory, ValueEnum};

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn mode_names() {
        assert_eq!(route::Mode::from_str("vc", true).unwrap(), route::Mode::Vc);
    }
}
