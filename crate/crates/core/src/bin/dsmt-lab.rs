use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dsmt_lab::harness::{parse_config, run_experiment, spectra_for, sweep, write_outputs, ExperimentConfig};
use dsmt_lab::matrix_io::fmt_f64;
use dsmt_lab::{LabError, Result};

#[derive(Parser, Debug)]
#[command(name = "dsmt-lab", version, about = "Decentralized stochastic optimization experiments")]
struct Cli {
    /// Run all trials on the calling thread.
    #[arg(long, global = true)]
    serial: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every algorithm and trial, writing CSVs and a manifest.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat a run for several agent counts, one subdirectory per value.
    Sweep {
        config: PathBuf,
        /// Values to sweep, e.g. `n=8,16,32`.
        #[arg(long)]
        vary: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print λ, 1−λ, η_w and ρ̃_w of the configured mixing matrix.
    Spectra { config: PathBuf },
    /// Check a config without running it.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_config(&text)
}

fn parse_vary(spec: &str) -> Result<Vec<usize>> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| LabError::Parse(format!("--vary expects key=list, got '{spec}'")))?;
    if key.trim() != "n" {
        return Err(LabError::Parse(format!("--vary supports only n, got '{key}'")));
    }
    values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| LabError::Parse(format!("--vary: '{v}' is not a positive integer")))
        })
        .collect()
}

fn execute(cli: Cli) -> Result<()> {
    let parallel = !cli.serial;
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let output = run_experiment(&cfg, parallel)?;
            for path in write_outputs(&output, &out)? {
                println!("{}", path.display());
            }
            for run in &output.runs {
                let d = run.divergences().len();
                if d > 0 {
                    eprintln!("warning: {}: {d} of {} trials diverged", run.resolved.spec.label, cfg.trials);
                }
            }
        }
        Command::Sweep { config, vary, out } => {
            let cfg = load(&config)?;
            let ns = parse_vary(&vary)?;
            for dir in sweep(&cfg, &ns, &out, parallel)? {
                println!("{}", dir.display());
            }
        }
        Command::Spectra { config } => {
            let s = spectra_for(&load(&config)?)?;
            println!("n = {}", s.n);
            println!("lambda = {}", fmt_f64(s.lambda));
            println!("spectral_gap = {}", fmt_f64(s.spectral_gap));
            println!("eta_w = {}", fmt_f64(s.eta_w));
            println!("rho_tilde_w = {}", fmt_f64(s.rho_tilde_w));
            println!("min_eigenvalue = {}", fmt_f64(s.min_eigenvalue));
            println!("psd_certified = {}", s.psd_certified);
        }
        Command::Validate { config } => {
            load(&config)?;
            println!("ok: {}", config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
