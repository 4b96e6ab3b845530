use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use vocalpath::error::Error;
use vocalpath::pipeline::{exit_code, run, Command, PipelineConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Stage {
    Segment,
    Train,
    Embed,
    Analyze,
    Visualize,
    All,
}

impl From<Stage> for Command {
    fn from(s: Stage) -> Self {
        match s {
            Stage::Segment => Command::Segment,
            Stage::Train => Command::Train,
            Stage::Embed => Command::Embed,
            Stage::Analyze => Command::Analyze,
            Stage::Visualize => Command::Visualize,
            Stage::All => Command::All,
        }
    }
}

/// Segment, embed and analyze animal vocal sequences.
#[derive(Parser, Debug)]
#[command(name = "vocalpath", version)]
struct Cli {
    #[arg(value_enum)]
    command: Stage,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Band-pass lower edge in Hz.
    #[arg(long)]
    lowcut: Option<f64>,
    /// Band-pass upper edge in Hz.
    #[arg(long)]
    highcut: Option<f64>,
    /// Resample to this rate (Hz) before analysis.
    #[arg(long)]
    resample: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    threshold_db: Option<f64>,
    /// Minimum unit duration in seconds.
    #[arg(long)]
    min_dur: Option<f64>,
    /// Gaps shorter than this (seconds) are merged.
    #[arg(long)]
    min_gap: Option<f64>,
}

fn load(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(v) = cli.lowcut {
        cfg.lowcut_hz = v;
    }
    if cli.highcut.is_some() {
        cfg.highcut_hz = cli.highcut;
    }
    if cli.resample.is_some() {
        cfg.resample_hz = cli.resample;
    }
    if let Some(v) = cli.threshold_db {
        cfg.threshold_db = v;
    }
    if let Some(v) = cli.min_dur {
        cfg.min_dur_s = v;
    }
    if let Some(v) = cli.min_gap {
        cfg.min_gap_s = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| run(cli.command.into(), &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vocalpath: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
