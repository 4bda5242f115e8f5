//! End-to-end driver: merge, section, grid, solve, corridors, then the event loop,
//! writing every artifact of the run into one directory.

use crate::airspace::{build_grid, merge_proximal_obstacles, LayerStack, ObstaclePolygon};
use crate::engine::{AuditReport, Engine, EngineError, StepOutcome, UasStatus};
use crate::export::{self, ExportError, LOG_FILE, SUMMARY_FILE};
use crate::flow::{solve_stream_function, BoundaryConditionSpec, FlowField};
use crate::network::{CorridorNetwork, NetworkError};
use crate::plot::{emit_plots, PlotError, PlotKind};
use crate::scenario::ScenarioDocument;
use rayon::prelude::*;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Merge,
    Section,
    Grid,
    Solve,
    Corridors,
    Events,
    Write,
    Plot,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::Merge => "merge",
            Stage::Section => "section",
            Stage::Grid => "grid",
            Stage::Solve => "solve",
            Stage::Corridors => "corridors",
            Stage::Events => "events",
            Stage::Write => "write",
            Stage::Plot => "plot",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("stage {stage}: {source}")]
    Engine { stage: Stage, source: EngineError },
    #[error("stage write: {0}")]
    Export(#[from] ExportError),
    #[error("stage plot: {0}")]
    Plot(#[from] PlotError),
}

impl PipelineError {
    pub fn stage(&self) -> Stage {
        match self {
            PipelineError::Engine { stage, .. } => *stage,
            PipelineError::Export(_) => Stage::Write,
            PipelineError::Plot(_) => Stage::Plot,
        }
    }
}

/// Stage attribution for errors raised while building the initial engine.
fn setup_stage(e: &EngineError) -> Stage {
    match e {
        EngineError::Network(NetworkError::Grid { .. }) => Stage::Grid,
        EngineError::Network(NetworkError::Flow { .. }) => Stage::Solve,
        _ => Stage::Corridors,
    }
}

/// How far [`run_pipeline_with`] goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RunMode {
    /// Stream functions only.
    Fields,
    /// Fields and corridors.
    Corridors,
    /// Corridors plus the request events, in order, with everything else skipped.
    Plan,
    /// The full event stream.
    Simulate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub mode: RunMode,
    pub write_fields: bool,
    pub plots: Vec<PlotKind>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            mode: RunMode::Simulate,
            write_fields: true,
            plots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub merge: Duration,
    pub section: Duration,
    pub grid: Duration,
    pub solve: Duration,
    pub corridors: Duration,
    pub events: Duration,
    pub write: Duration,
}

/// Files written by a run, relative to `out_dir`, plus the in-memory results.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub field_files: Vec<PathBuf>,
    pub section_files: Vec<PathBuf>,
    pub corridor_files: Vec<PathBuf>,
    pub path_files: Vec<PathBuf>,
    pub log_file: Option<PathBuf>,
    pub summary_file: PathBuf,
    pub plot_files: Vec<PathBuf>,
    pub timings: StageTimings,
    pub merged_obstacles: Vec<ObstaclePolygon>,
    pub engine: Option<Engine>,
    pub outcomes: Vec<StepOutcome>,
    pub audit: Option<AuditReport>,
}

impl RunArtifacts {
    /// Requests that never received a path, plus UAS left queued or held.
    pub fn unserved(&self) -> Vec<u32> {
        let Some(engine) = &self.engine else {
            return Vec::new();
        };
        engine
            .records()
            .iter()
            .filter(|(_, r)| {
                r.revisions.is_empty() || matches!(r.status, UasStatus::Queued | UasStatus::Held)
            })
            .map(|(id, _)| id.0)
            .collect()
    }
}

fn merged_and_sectioned(
    doc: &ScenarioDocument,
    t: &mut StageTimings,
) -> (Vec<ObstaclePolygon>, LayerStack) {
    let clock = Instant::now();
    let merged = merge_proximal_obstacles(&doc.obstacles(), doc.merge_distance());
    t.merge = clock.elapsed();
    let clock = Instant::now();
    let layers = doc
        .layer_stack()
        .expect("validated layer table")
        .with_sections(&merged);
    t.section = clock.elapsed();
    (merged, layers)
}

fn solve_only(
    doc: &ScenarioDocument,
    layers: &LayerStack,
    t: &mut StageTimings,
) -> Result<Vec<FlowField>, PipelineError> {
    let cfg = doc.network_config();
    let clock = Instant::now();
    let grids = layers
        .layers()
        .par_iter()
        .map(|l| {
            build_grid(cfg.region, &l.sections, cfg.dx, cfg.dy, cfg.inflation).map_err(|source| {
                PipelineError::Engine {
                    stage: Stage::Grid,
                    source: NetworkError::Grid {
                        layer: l.index,
                        source,
                    }
                    .into(),
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    t.grid = clock.elapsed();
    let clock = Instant::now();
    let fields = grids
        .par_iter()
        .zip(layers.layers().par_iter())
        .map(|(g, l)| {
            let bc = BoundaryConditionSpec::centered(&cfg.region, l.axis());
            solve_stream_function(g, &bc, &cfg.solve).map_err(|source| PipelineError::Engine {
                stage: Stage::Solve,
                source: NetworkError::Flow {
                    layer: l.index,
                    source,
                }
                .into(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    t.solve = clock.elapsed();
    Ok(fields)
}

fn write_network_files(
    out: &Path,
    layers: &LayerStack,
    fields: &[FlowField],
    net: Option<&CorridorNetwork>,
    write_fields: bool,
    a: &mut RunArtifacts,
) -> Result<(), ExportError> {
    for (n, l) in layers.layers().iter().enumerate() {
        let rel = export::section_file(l.index);
        export::write_records(&out.join(&rel), &export::section_records(l))?;
        a.section_files.push(rel);
        if write_fields {
            let rel = export::field_file(l.index);
            export::write_field(&out.join(&rel), l, &fields[n])?;
            a.field_files.push(rel);
        }
        if let Some(net) = net {
            let rel = export::corridor_file(l.index);
            export::write_records(&out.join(&rel), &export::corridor_records(&net.sets[n]))?;
            a.corridor_files.push(rel);
        }
    }
    Ok(())
}

pub fn run_pipeline(doc: &ScenarioDocument, out_dir: &Path) -> Result<RunArtifacts, PipelineError> {
    run_pipeline_with(doc, out_dir, &PipelineOptions::default())
}

pub fn run_pipeline_with(
    doc: &ScenarioDocument,
    out_dir: &Path,
    opts: &PipelineOptions,
) -> Result<RunArtifacts, PipelineError> {
    let mut t = StageTimings::default();
    let (merged, layers) = merged_and_sectioned(doc, &mut t);
    log::info!(
        "{} obstacles merged into {} across {} layers",
        doc.obstacles.len(),
        merged.len(),
        layers.len()
    );
    let mut a = RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        field_files: Vec::new(),
        section_files: Vec::new(),
        corridor_files: Vec::new(),
        path_files: Vec::new(),
        log_file: None,
        summary_file: PathBuf::from(SUMMARY_FILE),
        plot_files: Vec::new(),
        timings: t,
        merged_obstacles: merged.clone(),
        engine: None,
        outcomes: Vec::new(),
        audit: None,
    };
    fs::create_dir_all(out_dir).map_err(|e| ExportError::Io {
        path: out_dir.display().to_string(),
        message: e.to_string(),
    })?;

    if opts.mode == RunMode::Fields {
        let fields = solve_only(doc, &layers, &mut a.timings)?;
        let clock = Instant::now();
        write_network_files(out_dir, &layers, &fields, None, true, &mut a)?;
        a.timings.write = clock.elapsed();
    } else {
        let mut engine = Engine::new(doc.engine_config(), merged, &layers).map_err(|source| {
            PipelineError::Engine {
                stage: setup_stage(&source),
                source,
            }
        })?;
        let nt = engine.network().times;
        a.timings.grid = nt.grid;
        a.timings.solve = nt.solve;
        a.timings.corridors = nt.corridors;
        log::info!(
            "corridors ready: {} waypoints, {} planning states",
            engine.space().n_spatial(),
            engine.space().len()
        );

        if opts.mode >= RunMode::Plan {
            let clock = Instant::now();
            for doc_event in &doc.events {
                let event = doc_event.to_event();
                if opts.mode == RunMode::Plan
                    && !matches!(event.kind, crate::engine::EventKind::NewRequest(_))
                {
                    continue;
                }
                let out = engine
                    .step(&event)
                    .map_err(|source| PipelineError::Engine {
                        stage: Stage::Events,
                        source,
                    })?;
                for e in &out.errors {
                    log::warn!("t={}: {e}", out.t);
                }
                log::debug!("t={} states {:?}", out.t, out.states);
                a.outcomes.push(out);
            }
            a.timings.events = clock.elapsed();
            a.audit = Some(engine.audit());
        }

        let clock = Instant::now();
        let net = engine.network();
        write_network_files(
            out_dir,
            &net.layers,
            &net.fields,
            Some(net),
            opts.write_fields,
            &mut a,
        )?;
        if opts.mode >= RunMode::Plan {
            a.path_files = export::write_paths(out_dir, engine.records())?;
            export::write_records(&out_dir.join(LOG_FILE), &export::log_records(engine.log()))?;
            a.log_file = Some(PathBuf::from(LOG_FILE));
        }
        a.timings.write = clock.elapsed();
        a.engine = Some(engine);
    }

    let summary = summary_text(doc, &a);
    fs::write(out_dir.join(SUMMARY_FILE), summary).map_err(|e| ExportError::Io {
        path: out_dir.join(SUMMARY_FILE).display().to_string(),
        message: e.to_string(),
    })?;
    if !opts.plots.is_empty() {
        a.plot_files = emit_plots(out_dir, &opts.plots)?;
    }
    Ok(a)
}

/// Human-readable exit summary with per-stage timings and the audit result.
pub fn summary_text(doc: &ScenarioDocument, a: &RunArtifacts) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "scenario: {}",
        doc.name.as_deref().unwrap_or("(unnamed)")
    );
    let _ = writeln!(
        s,
        "obstacles: {} input, {} after merging",
        doc.obstacles.len(),
        a.merged_obstacles.len()
    );
    if let Some(engine) = &a.engine {
        let net = engine.network();
        let lines: usize = net.sets.iter().map(|c| c.len()).sum();
        let _ = writeln!(
            s,
            "layers: {}, streamlines: {lines}, waypoints: {}",
            net.sets.len(),
            engine.space().n_spatial()
        );
        let _ = writeln!(s, "events processed: {}", a.outcomes.len());
        for (id, r) in engine.records() {
            match r.path() {
                Some(p) => {
                    let _ = writeln!(
                        s,
                        "uas {id}: {:?}, revisions {}, cost {:.3}, start t={}, arrival t={}, layer changes {}",
                        r.status,
                        r.revisions.len(),
                        p.cost,
                        p.start(),
                        p.arrival(),
                        p.layer_changes()
                    );
                }
                None => {
                    let _ = writeln!(s, "uas {id}: {:?}, no path", r.status);
                }
            }
        }
    }
    let t = &a.timings;
    for (name, d) in [
        ("merge", t.merge),
        ("section", t.section),
        ("grid", t.grid),
        ("solve", t.solve),
        ("corridors", t.corridors),
        ("events", t.events),
        ("write", t.write),
    ] {
        let _ = writeln!(s, "stage {name}: {:.3} s", d.as_secs_f64());
    }
    match &a.audit {
        Some(r) => {
            let _ = writeln!(
                s,
                "audit: {} ({} paths, {} separation conflicts, {} zone violations, {} unreserved cells)",
                if r.passed() { "passed" } else { "FAILED" },
                r.paths_checked,
                r.separation.len(),
                r.zone.len(),
                r.unreserved.len()
            );
        }
        None => {
            let _ = writeln!(s, "audit: not run");
        }
    }
    s
}
