//! `bevtrack`: simulate scenes, run the lifting + tracking pipeline, score
//! the output and draw it.
//!
//! Exit codes: 0 success, 1 input or I/O error, 2 metric undefined (no
//! ground truth).

mod commands;
mod plot;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use bevtrack::lifting::LiftMethod;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "bevtrack", version, about = "Multi-camera BEV detection and tracking on simulated scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Detection,
    Tracking,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scene to calibration, ground truth and per-camera feature maps.
    Simulate {
        /// Scene config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scene seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Lift, detect and track a simulated sequence; writes a track CSV.
    Track {
        /// Directory written by `simulate`.
        #[arg(long)]
        input: PathBuf,
        /// Output track CSV.
        #[arg(long)]
        out: PathBuf,
        /// Pipeline config (JSON). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the configured lifting method.
        #[arg(long, value_parser = parse_method)]
        method: Option<LiftMethod>,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Writes a run report (track counts plus provenance) here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Writes each frame's score map as a feature-map file into this directory.
        #[arg(long)]
        score_dir: Option<PathBuf>,
    },
    /// Score a hypothesis CSV against ground truth.
    Evaluate {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long, value_enum, default_value = "tracking")]
        mode: Mode,
        /// Output run report (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Matching radius in meters; 0.5 for detection and 1.0 for tracking by default.
        #[arg(long)]
        radius: Option<f64>,
        /// Recorded in the report provenance.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw a feature map as PGM, or tracks and ground truth as SVG.
    Plot {
        /// Feature-map file for `.pgm` output, track CSV for `.svg` output.
        #[arg(long)]
        input: PathBuf,
        /// `.pgm` or `.svg`.
        #[arg(long)]
        out: PathBuf,
        /// Channel to draw (PGM).
        #[arg(long, default_value_t = 0)]
        channel: usize,
        /// Ground-truth CSV drawn as circles (SVG).
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Pipeline config whose grid frames the SVG. Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_method(s: &str) -> Result<LiftMethod, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate { config, out, seed } => commands::simulate(&config, &out, seed),
        Command::Track { input, out, config, method, seed, report, score_dir } => commands::track(commands::TrackArgs {
            input: &input,
            out: &out,
            config: config.as_deref(),
            method,
            seed,
            report: report.as_deref(),
            score_dir: score_dir.as_deref(),
        }),
        Command::Evaluate { gt, hyp, mode, out, radius, seed } => commands::evaluate(&gt, &hyp, mode, &out, radius, seed),
        Command::Plot { input, out, channel, gt, config } => commands::plot(&input, &out, channel, gt.as_deref(), config.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
