//! Command-line scenario runner.
//!
//! Exit status: 0 when the run passes its checks, 1 when an audit or
//! scenario check fails, 2 on configuration, I/O or solver errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mesomag::config::{Config, Overrides};
use mesomag::experiments::{run_mode, Mode, RunOutput};

#[derive(Debug, Parser)]
#[command(name = "mesomag", version, about = "Mesoscopic thermo-magnetic scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Time-stepped evolution with per-step audit.
    Evolve(RunArgs),
    /// Static minimizer at the initial temperature and field.
    Static(RunArgs),
    /// Static minimizers along a penalty ladder.
    KappaSweep(RunArgs),
    /// Successive time-step halvings compared at common checkpoints.
    TauStudy(RunArgs),
    /// Isothermal cyclic loading at the configured temperatures.
    Hysteresis(RunArgs),
    /// Static minimizers over a temperature ladder.
    CurieSweep(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Seed for the audit's sampled test directions.
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
    /// Time step override.
    #[arg(long, value_name = "X")]
    tau: Option<f64>,
    /// Penalty strength override.
    #[arg(long, value_name = "X")]
    kappa: Option<f64>,
    /// Number of steps: with --tau the horizon becomes steps·tau, otherwise tau becomes t_end/steps.
    #[arg(long, value_name = "N")]
    steps: Option<usize>,
}

impl Command {
    fn split(&self) -> (Mode, &RunArgs) {
        match self {
            Command::Evolve(a) => (Mode::Evolve, a),
            Command::Static(a) => (Mode::Static, a),
            Command::KappaSweep(a) => (Mode::KappaSweep, a),
            Command::TauStudy(a) => (Mode::TauStudy, a),
            Command::Hysteresis(a) => (Mode::Hysteresis, a),
            Command::CurieSweep(a) => (Mode::CurieSweep, a),
        }
    }
}

fn write_outputs(dir: &Path, cfg: &Config, out: &RunOutput) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let resolved = cfg.to_toml().map_err(|e| e.to_string())?;
    let mut files = vec![("config.toml".to_string(), resolved)];
    files.extend(out.files.iter().cloned());
    for (name, contents) in &files {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, String> {
    let (mode, args) = cli.command.split();
    let mut cfg = Config::load(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    cfg.apply(&Overrides {
        tau: args.tau,
        kappa: args.kappa,
        steps: args.steps,
    })
    .map_err(|e| e.to_string())?;
    let out = run_mode(mode, &cfg, args.seed).map_err(|e| e.to_string())?;
    write_outputs(&args.out, &cfg, &out)?;
    for m in &out.messages {
        eprintln!("{m}");
    }
    println!(
        "{:?}: {} files written to {}; {}",
        mode,
        out.files.len() + 1,
        args.out.display(),
        if out.passed { "PASS" } else { "FAIL" }
    );
    Ok(out.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
