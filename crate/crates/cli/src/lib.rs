//! Command-line experiments over the `cotlab-core` library.

pub mod commands;
pub mod config;
pub mod csv;
pub mod svg;

use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, Mode};

#[derive(Debug, Parser)]
#[command(name = "cotlab", version, about = "Exact checks of ambiguity bounds for in-context prompting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a fixture or random model as JSON.
    GenModel(ExperimentConfig),
    /// Sample one chain per seed as JSON lines.
    Sample(ExperimentConfig),
    /// Chain and input ambiguity of one sampled chain per seed.
    Ambiguity(ExperimentConfig),
    /// Check the gap bound on sampled instances for every (N, seed).
    Verify(ExperimentConfig),
    /// Gap against N with examples filtered to ambiguity at most delta.
    SweepN(ExperimentConfig),
    /// Length threshold of ambiguity profiles along sampled trajectories.
    LemmaThreshold(ExperimentConfig),
    /// Compare Monte Carlo marginals with exact values.
    McCheck(ExperimentConfig),
}

impl Command {
    fn split(self) -> (Mode, ExperimentConfig) {
        match self {
            Command::GenModel(c) => (Mode::GenModel, c),
            Command::Sample(c) => (Mode::Sample, c),
            Command::Ambiguity(c) => (Mode::Ambiguity, c),
            Command::Verify(c) => (Mode::Verify, c),
            Command::SweepN(c) => (Mode::SweepN, c),
            Command::LemmaThreshold(c) => (Mode::LemmaThreshold, c),
            Command::McCheck(c) => (Mode::McCheck, c),
        }
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_VIOLATION: u8 = 2;

/// Caps the worker pool from `COTLAB_THREADS`.
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("COTLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .with_context(|| format!("environment variable `COTLAB_THREADS` must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool from `COTLAB_THREADS`")
}

pub fn run(cli: Cli) -> anyhow::Result<u8> {
    configure_threads()?;
    let (mode, flags) = cli.command.split();
    let cfg = flags.merged()?.resolve(mode)?;
    let out = commands::run(&cfg)?;
    csv::emit(&out.text, cfg.out.as_deref())?;
    if let (Some(svg), Some(path)) = (&out.svg, &cfg.svg) {
        std::fs::write(path, svg).with_context(|| format!("writing `{}`", path.display()))?;
    }
    eprintln!(
        "{}: {} rows, {} violations ({})",
        mode.name(),
        out.rows,
        out.violations,
        cfg.model.label
    );
    Ok(if out.violations > 0 { EXIT_VIOLATION } else { EXIT_OK })
}

pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
