//! `navlab`: operator surface for the navigation lab.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration or input error.

mod bench;
mod config;
mod dataset;
mod render;
mod run;
mod tlog;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "navlab", version, about = "Desk-scale hierarchical image-goal navigation lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Evaluate a checkpoint, or the scripted baseline, and write trajectory logs.
    Run {
        /// Run config, one JSON document.
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the executor; optionally sweep the penalty weight.
    Train {
        /// Run config, one JSON document.
        #[arg(long)]
        config: PathBuf,
        /// One run per lambda_w in 1.0, 0.8, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1.
        #[arg(long)]
        sweep: bool,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run the three annotation quality gates over a corpus.
    Validate {
        /// Trajectory manifest, one JSON record per line.
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of `<trajectory id>.txt` annotation blocks.
        #[arg(long)]
        annotations: PathBuf,
        /// Canned judge replies, one JSON object per line; omit to skip the semantic gate.
        #[arg(long)]
        judge: Option<PathBuf>,
        /// Frames sampled per interval for the judge.
        #[arg(long, default_value_t = 4)]
        frames: usize,
        /// Output directory for reports.jsonl and quality.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Label planning samples from annotations that pass format and temporal checks.
    MakeDataset {
        /// Trajectory manifest, one JSON record per line.
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of `<trajectory id>.txt` annotation blocks.
        #[arg(long)]
        annotations: PathBuf,
        /// Look-ahead window in frames.
        #[arg(long, default_value_t = 4, allow_negative_numbers = true)]
        window: i64,
        /// History frames per sample.
        #[arg(long, default_value_t = 15)]
        history: usize,
        /// Output directory for samples.jsonl and dataset_summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure amortized per-step latency against a delayed stub planner.
    Bench {
        /// Comma-separated planning intervals.
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,30,60")]
        k: Vec<u32>,
        /// Artificial planner delay in milliseconds.
        #[arg(long, default_value_t = 374.0)]
        t_slow_ms: f64,
        /// Executor steps per interval.
        #[arg(long, default_value_t = 5000)]
        steps: u32,
        /// Map for the workload (`builtin:<name>` or a path).
        #[arg(long, default_value = "builtin:two-room")]
        map: String,
        /// Seed for the workload episodes and network weights.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Latency CSV to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a logged episode over its map as SVG.
    Render {
        /// Trajectory log written by `run`.
        #[arg(long)]
        log: PathBuf,
        /// Map the log was recorded on (`builtin:<name>` or a path).
        #[arg(long)]
        map: String,
        /// Episode to draw; defaults to the first one on the map.
        #[arg(long)]
        episode: Option<String>,
        /// SVG file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample stratified start/goal episodes for a map.
    SampleEpisodes {
        /// `builtin:<name>` or a map file.
        #[arg(long)]
        map: String,
        /// Episodes per difficulty stratum.
        #[arg(long, default_value_t = 5)]
        n_per_stratum: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Episode JSONL to write; a `.meta.json` sidecar goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

pub type CmdResult = Result<(), Failure>;

/// Attach an exit class to any error.
pub trait Classify<T> {
    fn input(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { config } => run::cmd_run(&config),
        Cmd::Train { config, sweep, resume } => train::cmd_train(&config, sweep, resume.as_deref()),
        Cmd::Validate { manifest, annotations, judge, frames, out } => {
            dataset::cmd_validate(&manifest, &annotations, judge.as_deref(), frames, &out)
        }
        Cmd::MakeDataset { manifest, annotations, window, history, out } => {
            dataset::cmd_make_dataset(&manifest, &annotations, window, history, &out)
        }
        Cmd::Bench { k, t_slow_ms, steps, map, seed, out } => {
            bench::cmd_bench(&bench::BenchArgs { k, t_slow_ms, steps, map, seed }, &out)
        }
        Cmd::Render { log, map, episode, out } => render::cmd_render(&log, &map, episode.as_deref(), &out),
        Cmd::SampleEpisodes { map, n_per_stratum, seed, out } => run::cmd_sample_episodes(&map, n_per_stratum, seed, &out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(e) | Failure::Runtime(e)) = &f;
            eprintln!("navlab: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
