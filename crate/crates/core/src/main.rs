use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use utopk::experiment::{run_experiment_with, ExperimentConfig, Mode};
use utopk::simulation::{generate_trace, write_trace, TraceParams};
use utopk::Error;

#[derive(Parser)]
#[command(name = "utopk", version, about = "Probabilistic Top-K experiments with a simulated oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and emit a JSON metrics report.
    Run {
        /// JSON config; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        thres: Option<f64>,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        window_size: Option<usize>,
        #[arg(long)]
        sample_fraction: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON-lines trace to load instead of generating one.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a synthetic JSON-lines trace.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig, Failure> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, k, thres, mode, window_size, sample_fraction, batch, seed, trace, report } => {
            let mut cfg = load_config(config.as_ref())?;
            cfg.k = k.unwrap_or(cfg.k);
            cfg.thres = thres.unwrap_or(cfg.thres);
            cfg.mode = mode.unwrap_or(cfg.mode);
            cfg.window_size = window_size.unwrap_or(cfg.window_size);
            cfg.sample_fraction = sample_fraction.unwrap_or(cfg.sample_fraction);
            cfg.batch = batch.unwrap_or(cfg.batch);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.trace = trace.or(cfg.trace);
            cfg.report = report.or(cfg.report);
            cfg.validate()?;

            let metrics = run_experiment_with(&cfg, &mut |msg| eprintln!("[utopk] {msg}"))?;
            let json = metrics.to_json()?;
            match &cfg.report {
                Some(path) => {
                    fs::write(path, json).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
                    eprintln!("[utopk] report written to {}", path.display());
                }
                None => print!("{json}"),
            }
        }
        Command::Gen { seed, frames, out } => {
            let params = TraceParams { seed, frames, ..TraceParams::default() };
            params.validate()?;
            let trace = generate_trace(&params)?;
            let file = File::create(&out).map_err(|e| Failure::Data(format!("{}: {e}", out.display())))?;
            let mut writer = BufWriter::new(file);
            write_trace(&mut writer, &trace)?;
            writer.flush().map_err(|e| Failure::Data(e.to_string()))?;
            eprintln!("[utopk] wrote {} frames to {}", trace.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("utopk: configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("utopk: data error: {msg}");
            ExitCode::from(3)
        }
    }
}
