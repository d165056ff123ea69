use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Subcommand, ValueEnum};
use vanet_core::engine::{TraceLevel, TraceSink};
use vanet_core::harness::compare::{compare, Axis, Metric};
use vanet_core::harness::matrix::{read_rows, RESULTS_FILE};
use vanet_core::{run_matrix, run_scenario, ScenarioConfig};

#[derive(Subcommand)]
pub enum SimCommand {
    /// Runs one scenario and prints its results row.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `scenario.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Writes a tab-separated trace log here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also trace every processed event.
        #[arg(long, requires = "trace")]
        trace_events: bool,
    },
    /// Runs every point of the config's `[matrix]`.
    Matrix {
        #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Orig-vs-mod comparison of a results directory.
    Compare {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "pause_time")]
        by: String,
        /// Output directory; defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Preset {
    Desk,
    Full,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn run(cmd: SimCommand) -> Result<ExitCode> {
    match cmd {
        SimCommand::Run {
            config,
            seed,
            trace,
            trace_events,
        } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.scenario.seed = seed;
            }
            let sink = match &trace {
                Some(path) => {
                    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
                    let level = if trace_events { TraceLevel::Events } else { TraceLevel::Metrics };
                    Some(TraceSink::new(Box::new(BufWriter::new(file)), level))
                }
                None => None,
            };
            let result = run_scenario(&cfg, sink).context("run aborted")?;
            let mut out = csv::Writer::from_writer(io::stdout().lock());
            out.serialize(&result.row)?;
            out.flush()?;
            Ok(ExitCode::SUCCESS)
        }
        SimCommand::Matrix {
            config,
            preset,
            jobs,
            out,
        } => {
            let template = match (config, preset) {
                (Some(path), _) => ScenarioConfig::load(&path)?,
                (None, Some(Preset::Desk)) => ScenarioConfig::desk_preset(),
                (None, Some(Preset::Full)) => ScenarioConfig::full_preset(),
                (None, None) => bail!("--config or --preset is required"),
            };
            let summary = run_matrix(&template, jobs, Some(&out))?;
            eprintln!(
                "{} runs, {} failed; results in {}",
                summary.rows.len(),
                summary.failed,
                out.join(RESULTS_FILE).display()
            );
            Ok(if summary.failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        SimCommand::Compare { input, by, out } => {
            let axis: Axis = by.parse()?;
            let rows = read_rows(&input)?;
            let report = compare(&rows, axis);
            let dir = out.unwrap_or_else(|| if input.is_dir() { input.clone() } else { PathBuf::from(".") });
            report.write(&dir)?;
            for metric in Metric::ALL {
                println!("# {}", metric.label());
                print!("{}", report.plot_table(metric));
            }
            for s in &report.skipped {
                eprintln!("skipped: {s}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
