//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input/usage error, 3 data-consistency error,
//! 4 training divergence.

pub mod commands;
pub mod config;
pub mod image;

pub use commands::*;
pub use config::{ConfigError, PipelineConfig};
pub use image::{encode_pgm, encode_png, render_overlay, ImageError};

use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }

    fn with_message(self, m: String) -> Self {
        match self {
            CliError::Usage(_) => CliError::Usage(m),
            CliError::Data(_) => CliError::Data(m),
            CliError::Diverged(_) => CliError::Diverged(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lungcad",
    version,
    about = "Lung CT segmentation and fibrosis pattern classification"
)]
pub struct Cli {
    /// key=value configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Write the effective configuration here
    #[arg(long, global = true)]
    pub dump_config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment lungs in a DICOM series
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_mask: PathBuf,
        #[arg(long)]
        ref_mask: Option<PathBuf>,
    },
    /// Extract balanced training blocks for one patient
    Blocks {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 1)]
        patient_id: u16,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from block files
    Train {
        #[arg(long, required = true, num_args = 1..)]
        blocks: Vec<PathBuf>,
        #[arg(long)]
        out_model: PathBuf,
    },
    /// Per-ROI class maps for a series
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Leave-one-patient-out evaluation over patient directories
    Evaluate {
        #[arg(long, required = true, num_args = 1..)]
        patients: Vec<PathBuf>,
        /// ID=reason, repeatable
        #[arg(long)]
        exclude: Vec<String>,
    },
    /// Write synthetic patients
    Phantom {
        #[arg(long, default_value_t = 4)]
        patients: usize,
        #[arg(long, default_value_t = 256)]
        rows: usize,
        #[arg(long, default_value_t = 256)]
        cols: usize,
        #[arg(long, default_value_t = 8)]
        slices: usize,
    },
    /// Render a class map over a slice as PNG
    Overlay {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        class_map: PathBuf,
        #[arg(long, default_value_t = 0)]
        slice: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Config file (if any) with the `--seed` override applied.
pub fn effective_config(
    path: Option<&Path>,
    seed: Option<u64>,
) -> Result<PipelineConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            PipelineConfig::parse(&text)?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli) -> Result<&Path, CliError> {
    cli.out_dir
        .as_deref()
        .ok_or_else(|| CliError::Usage("--out-dir is required".into()))
}

/// Runs a parsed command line, printing results to stdout.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = effective_config(cli.config.as_deref(), cli.seed)?;
    if let Some(path) = &cli.dump_config {
        std::fs::write(path, cfg.dump())
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    let Some(command) = &cli.command else {
        return if cli.dump_config.is_some() {
            Ok(())
        } else {
            Err(CliError::Usage("no subcommand given (see --help)".into()))
        };
    };
    match command {
        Command::Segment {
            input,
            out_mask,
            ref_mask,
        } => {
            let dice = cmd_segment(
                &cfg,
                SegmentArgs {
                    input,
                    out_mask,
                    ref_mask: ref_mask.as_deref(),
                    out_dir: cli.out_dir.as_deref(),
                },
            )?;
            if let Some(d) = dice {
                println!("dice={d:.3}");
            }
        }
        Command::Blocks {
            input,
            labels,
            patient_id,
            out,
        } => {
            let [hc, gg, h] = cmd_blocks(&cfg, input, labels, *patient_id, out)?;
            println!("honeycombing={hc} groundglass={gg} healthy={h}");
        }
        Command::Train { blocks, out_model } => cmd_train(&cfg, blocks, out_model)?,
        Command::Predict { model, input } => {
            let n = cmd_predict(&cfg, model, input, out_dir(cli)?)?;
            println!("slices={n}");
        }
        Command::Evaluate { patients, exclude } => {
            let exclusions = exclude
                .iter()
                .map(|s| parse_exclusion(s))
                .collect::<Result<Vec<_>, _>>()?;
            print!(
                "{}",
                cmd_evaluate(&cfg, patients, &exclusions, out_dir(cli)?)?
            );
        }
        Command::Phantom {
            patients,
            rows,
            cols,
            slices,
        } => {
            for dir in cmd_phantom(&cfg, *patients, *rows, *cols, *slices, out_dir(cli)?)? {
                println!("{}", dir.display());
            }
        }
        Command::Overlay {
            input,
            class_map,
            slice,
            out,
        } => cmd_overlay(&cfg, input, class_map, *slice, out)?,
    }
    Ok(())
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
