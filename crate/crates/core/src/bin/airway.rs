//! Command-line driver. Exit codes: 0 success, 2 invalid scenario, 3 some request
//! could not be served, 4 any other failure.

use airway::pipeline::{run_pipeline_with, PipelineOptions, RunMode};
use airway::plot::{emit_plots, PlotKind};
use airway::scenario::{load_scenario, ScenarioDocument};
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "airway",
    version,
    about = "Stream-function air corridors and UAS corridor allocation"
)]
struct Cli {
    /// Directory for run artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    /// Reserved; every stage is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file against the schema.
    Validate { scenario: PathBuf },
    /// Solve and dump the stream function of every layer.
    SolveField { scenario: PathBuf },
    /// Solve and write corridor geometry.
    GenCorridors { scenario: PathBuf },
    /// Allocate the request events only.
    Plan { scenario: PathBuf },
    /// Run the full event stream.
    Simulate {
        scenario: PathBuf,
        /// Also render every plot.
        #[arg(long)]
        plots: bool,
    },
    /// Render plots from an existing run directory (defaults to --out-dir).
    Plot {
        run_dir: Option<PathBuf>,
        /// Comma-separated subset of field, corridors, paths.
        #[arg(long, value_delimiter = ',', default_value = "field,corridors,paths")]
        which: Vec<String>,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

fn load(path: &Path) -> Result<ScenarioDocument, ExitCode> {
    load_scenario(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        ExitCode::from(EXIT_VALIDATION)
    })
}

fn run(doc: &ScenarioDocument, out: &Path, mode: RunMode, plots: Vec<PlotKind>) -> ExitCode {
    let opts = PipelineOptions {
        mode,
        plots,
        ..PipelineOptions::default()
    };
    match run_pipeline_with(doc, out, &opts) {
        Ok(a) => {
            if let Ok(s) = std::fs::read_to_string(out.join(&a.summary_file)) {
                print!("{s}");
            }
            let unserved = a.unserved();
            if !unserved.is_empty() {
                eprintln!("unserved UAS: {unserved:?}");
                return ExitCode::from(EXIT_INFEASIBLE);
            }
            if a.audit.as_ref().is_some_and(|r| !r.passed()) {
                eprintln!("reservation audit failed");
                return ExitCode::from(EXIT_INTERNAL);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .init();
    log::debug!("seed {} (unused)", cli.seed);
    let out = cli.out_dir.as_path();
    let (scenario, mode, plots) = match cli.command {
        Command::Validate { scenario } => {
            return match load(&scenario) {
                Ok(doc) => {
                    println!(
                        "{}: valid, {} layers, {} obstacles, {} events ({} requests)",
                        scenario.display(),
                        doc.layers.altitudes.len(),
                        doc.obstacles.len(),
                        doc.events.len(),
                        doc.request_count()
                    );
                    ExitCode::SUCCESS
                }
                Err(code) => code,
            };
        }
        Command::Plot { run_dir, which } => {
            let mut kinds = Vec::new();
            for w in &which {
                match PlotKind::parse(w.trim()) {
                    Some(k) => kinds.push(k),
                    None => {
                        eprintln!("unknown plot kind {w:?}");
                        return ExitCode::from(EXIT_VALIDATION);
                    }
                }
            }
            let dir = run_dir.unwrap_or_else(|| out.to_path_buf());
            return match emit_plots(&dir, &kinds) {
                Ok(files) => {
                    for f in files {
                        println!("{}", f.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(EXIT_INTERNAL)
                }
            };
        }
        Command::SolveField { scenario } => (scenario, RunMode::Fields, Vec::new()),
        Command::GenCorridors { scenario } => (scenario, RunMode::Corridors, Vec::new()),
        Command::Plan { scenario } => (scenario, RunMode::Plan, Vec::new()),
        Command::Simulate { scenario, plots } => (
            scenario,
            RunMode::Simulate,
            if plots {
                PlotKind::ALL.to_vec()
            } else {
                Vec::new()
            },
        ),
    };
    match load(&scenario) {
        Ok(doc) => run(&doc, out, mode, plots),
        Err(code) => code,
    }
}
