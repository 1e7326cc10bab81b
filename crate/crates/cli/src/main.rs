//! `kohler`: homogenized magneto-transport of periodic composites.

mod config;
mod oracle;
mod pipeline;
mod sweep;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use config::{parse_list, parse_vec3, RunConfig};
use kohler_core::io::save_grid;
use kohler_core::solver::{SolverConfig, SolverError};
use kohler_core::verify::{self, Suite};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 1;
const EXIT_NO_CONVERGENCE: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "kohler", version, about = "Homogenized conductivity, Hall matrix and magneto-resistance of periodic composites")]
struct Cli {
    /// Run config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Grid resolution per axis, overrides the config.
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// Magnetic field `x,y,z`, overrides the config.
    #[arg(long, global = true, value_parser = parse_vec3, allow_hyphen_values = true)]
    h: Option<[f64; 3]>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed of a smooth random material, overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Corrector cache directory, overrides the config.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the cell problems and write a JSON report.
    Solve,
    /// Evaluate a closed-form result.
    Oracle(oracle::OracleArgs),
    /// One report row per parameter value, as CSV.
    Sweep {
        /// `resolution`, `h1`, `h2`, `h3` or a scalar material parameter.
        #[arg(long)]
        axis: String,
        /// Comma-separated values; may be empty.
        #[arg(long, default_value = "", allow_hyphen_values = true)]
        values: String,
    },
    /// Run acceptance suites; `all` runs every suite.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Sample a material and write the grid blob.
    Generate,
}

enum Failure {
    Error(anyhow::Error),
    Verify,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Error(e)
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let no_conv = e.chain().any(|c| {
        matches!(c.downcast_ref::<SolverError>(), Some(SolverError::NoConvergence { .. }))
            || c.downcast_ref::<kohler_core::effective::EffectiveError>().is_some_and(|x| {
                matches!(
                    x,
                    kohler_core::effective::EffectiveError::Solver(SolverError::NoConvergence { .. })
                )
            })
    });
    if no_conv {
        EXIT_NO_CONVERGENCE
    } else {
        EXIT_CONFIG
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().context("--config is required")?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(n) = cli.resolution {
        cfg.resolution = n;
    }
    if let Some(h) = cli.h {
        cfg.h = h;
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed)?;
    }
    if let Some(c) = &cli.cache {
        cfg.cache = Some(c.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Write to `path` atomically, or to standard output.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
        Some(p) => {
            let tmp = p.with_extension("partial");
            std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
            std::fs::rename(&tmp, p).with_context(|| format!("writing {}", p.display()))?;
            Ok(())
        }
    }
}

fn solve(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli).map_err(Failure::Error)?;
    let report = pipeline::run(&cfg)?;
    let mut text = serde_json::to_string_pretty(&pipeline::filtered(&report, &cfg.outputs)?)
        .map_err(anyhow::Error::from)?;
    text.push('\n');
    let out = cli.out.as_ref().or(cfg.out.as_ref());
    emit(out.map(PathBuf::as_path), text.as_bytes())?;
    if !report.gap_psd {
        log::warn!("gap has eigenvalue {:e} below -{:e}", report.gap_eigenvalues[0], report.gap_tolerance);
    }
    Ok(())
}

fn sweep(cli: &Cli, axis: &str, values: &str) -> Result<(), Failure> {
    let values = parse_list(values).map_err(|e| anyhow::anyhow!("--values: {e}"))?;
    let cfg = load_config(cli).map_err(Failure::Error)?;
    let mut buf = Vec::new();
    let failed = sweep::run(&cfg, axis, &values, &mut buf).map_err(Failure::Error)?;
    if failed > 0 {
        log::warn!("{failed} of {} rows failed", values.len());
    }
    emit(cli.out.as_deref(), &buf)?;
    Ok(())
}

fn verify_cmd(cli: &Cli, name: &str) -> Result<(), Failure> {
    let suites: Vec<Suite> = if name == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![name.parse::<Suite>().map_err(|e| Failure::Error(e.into()))?]
    };
    let cfg = match &cli.config {
        Some(_) => load_config(cli).map_err(Failure::Error)?.solver,
        None => SolverConfig::default(),
    };
    let mut all_ok = true;
    let mut lines = String::new();
    for s in suites {
        let report = verify::run(s, &cfg).map_err(anyhow::Error::from)?;
        for c in &report.checks {
            println!("{c}");
            lines.push_str(&format!("{c}\n"));
        }
        let status = if report.passed() { "PASS" } else { "FAIL" };
        println!("suite {s} (criterion {}): {status} in {:.2} s", s.criterion(), report.elapsed);
        lines.push_str(&format!("suite {s}: {status}\n"));
        all_ok &= report.passed();
    }
    if let Some(p) = &cli.out {
        emit(Some(p), lines.as_bytes())?;
    }
    if all_ok {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn generate(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli).map_err(Failure::Error)?;
    let Some(out) = cli.out.as_ref().or(cfg.out.as_ref()) else {
        return Err(Failure::Error(anyhow::anyhow!("generate needs --out")));
    };
    let field = pipeline::sample_config(&cfg)?;
    let tmp = out.with_extension("partial");
    save_grid(&tmp, &field).map_err(anyhow::Error::from)?;
    std::fs::rename(&tmp, out).map_err(anyhow::Error::from)?;
    log::info!("wrote {:?} grid to {}", field.dims(), out.display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(Failure::Error(anyhow::anyhow!("--threads must be positive")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::Error(e.into()))?;
    }
    match &cli.command {
        Command::Solve => solve(cli),
        Command::Oracle(args) => oracle::run(args, cli.h, cli.config.as_ref()).map_err(Failure::Error),
        Command::Sweep { axis, values } => sweep(cli, axis, values),
        Command::Verify { suite } => verify_cmd(cli, suite),
        Command::Generate => generate(cli),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify) => {
            eprintln!("verification failed");
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
