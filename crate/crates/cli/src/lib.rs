//! `nlma`: runs the nonlocal-ma experiments from a TOML config and writes
//! JSON reports, CSV tables and a manifest per run.
//!
//! Exit codes: 0 on success, 1 for configuration or input errors, 2 when an
//! experiment fails its own checks or the library reports a failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::commands::{Context, Outcome};
use crate::config::RunConfig;
use crate::error::Result;
use crate::output::{Artifacts, Manifest, Versions};

#[derive(Debug, Parser)]
#[command(name = "nlma", version, about = "Nonlocal Monge-Ampère kernel experiments")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Less log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub quiet: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output directory; overrides NLMA_OUT_DIR and `output.dir`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Clone)]
pub enum Command {
    /// Engulfing, normalisation and doubling probes of sections.
    Sections(Common),
    /// Evaluate M⁻, M⁺ and the Isaacs operator on a grid function file.
    Operator {
        #[command(flatten)]
        common: Common,
        /// CSV grid function (`x,value` or `x,y,value`); overrides `operator.input`.
        #[arg(short, long)]
        input: Option<PathBuf>,
    },
    /// Solve the Dirichlet problem on the configured grid.
    Solve(Common),
    /// Envelope, contact set and covering pipeline at several resolutions.
    Abp(Common),
    /// Superlevel tail decay of a nonnegative supersolution.
    Leps(Common),
    /// Harnack ratio across data, orders and resolutions.
    Harnack(Common),
    /// Hölder exponent fit of a solution.
    Holder(Common),
    /// Kernel shift check followed by a gradient oscillation fit.
    C1alpha(Common),
    /// Monte Carlo exit payoffs, cross-checked against the solver.
    #[command(name = "mc-validate")]
    McValidate(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sections(_) => "sections",
            Self::Operator { .. } => "operator",
            Self::Solve(_) => "solve",
            Self::Abp(_) => "abp",
            Self::Leps(_) => "leps",
            Self::Harnack(_) => "harnack",
            Self::Holder(_) => "holder",
            Self::C1alpha(_) => "c1alpha",
            Self::McValidate(_) => "mc-validate",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Self::Operator { common, .. } => common,
            Self::Sections(c)
            | Self::Solve(c)
            | Self::Abp(c)
            | Self::Leps(c)
            | Self::Harnack(c)
            | Self::Holder(c)
            | Self::C1alpha(c)
            | Self::McValidate(c) => c,
        }
    }
}

pub fn log_level(verbose: u8, quiet: u8) -> log::LevelFilter {
    match 2 + verbose as i32 - quiet as i32 {
        i32::MIN..=0 => log::LevelFilter::Off,
        1 => log::LevelFilter::Error,
        2 => log::LevelFilter::Warn,
        3 => log::LevelFilter::Info,
        4 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    }
}

#[derive(Serialize)]
struct FailureReport<'a> {
    subcommand: &'a str,
    exit_code: i32,
    error: Option<String>,
    failed_checks: Vec<&'a nonlocal_ma::regularity::Check>,
}

fn dispatch(cmd: &Command, cfg: &RunConfig, ctx: &Context, art: &mut Artifacts) -> Result<Outcome> {
    match cmd {
        Command::Sections(_) => commands::sections(cfg, art),
        Command::Operator { .. } => commands::operator(cfg, ctx, art),
        Command::Solve(_) => commands::solve(cfg, art),
        Command::Abp(_) => commands::abp(cfg, art),
        Command::Leps(_) => commands::leps(cfg, art),
        Command::Harnack(_) => commands::harnack(cfg, art),
        Command::Holder(_) => commands::holder(cfg, art),
        Command::C1alpha(_) => commands::c1alpha(cfg, art),
        Command::McValidate(_) => commands::mc_validate(cfg, art),
    }
}

/// Runs one subcommand and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let cmd = &cli.command;
    let common = cmd.common();
    let start = Instant::now();
    let (cfg, bytes) = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let dir = output::resolve_out_dir(common.out.as_deref(), cfg.output.dir.as_deref());
    let mut art = match Artifacts::create(&dir, cmd.name()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let ctx = Context {
        base_dir: common.config.parent().map_or_else(PathBuf::new, Path::to_path_buf),
        input: match cmd {
            Command::Operator { input, .. } => input.clone(),
            _ => None,
        },
    };
    log::info!("{} with {}", cmd.name(), common.config.display());
    let result = dispatch(cmd, &cfg, &ctx, &mut art);
    let (code, stages) = match &result {
        Ok(o) if o.failures().is_empty() => (0, o.stage_runtimes.clone()),
        Ok(o) => {
            for c in o.failures() {
                eprintln!("check failed: {} = {} (tolerance {})", c.name, c.value, c.tolerance);
            }
            (2, o.stage_runtimes.clone())
        }
        Err(e) => {
            eprintln!("error: {e}");
            (e.exit_code(), vec![])
        }
    };
    if code == 2 {
        let failure = FailureReport {
            subcommand: cmd.name(),
            exit_code: code,
            error: result.as_ref().err().map(|e| e.to_string()),
            failed_checks: result.as_ref().map(|o| o.failures()).unwrap_or_default(),
        };
        if let Err(e) = art.json(".failure", &failure) {
            eprintln!("error: {e}");
        }
    }
    let manifest = Manifest {
        subcommand: cmd.name().into(),
        config_path: common.config.display().to_string(),
        config_sha256: output::sha256_hex(&bytes),
        seed: cfg.seed,
        versions: Versions::current(),
        exit_code: code,
        runtime_seconds: start.elapsed().as_secs_f64(),
        stage_runtimes: stages,
        timestamp_unix: output::unix_now(),
        artifacts: art.written().to_vec(),
    };
    if let Err(e) = art.manifest(&manifest) {
        eprintln!("error: {e}");
        return 1;
    }
    code
}

