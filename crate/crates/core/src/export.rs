//! Run artifacts on disk: field dumps, corridor and section tables, path files
//! and the allocation log. Layouts are documented in `docs/formats.md`.

use crate::airspace::{Layer, NodeClass, ObstacleKind};
use crate::corridor::CorridorSet;
use crate::engine::{LogEntry, UasRecord};
use crate::flow::FlowField;
use crate::planner::PlannedPath;
use crate::reservation::UasId;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExportError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExportError {
    ExportError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> ExportError {
    ExportError::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn corridor_file(layer: usize) -> PathBuf {
    PathBuf::from("corridors").join(format!("layer_{layer}.csv"))
}

pub fn section_file(layer: usize) -> PathBuf {
    PathBuf::from("sections").join(format!("layer_{layer}.csv"))
}

pub fn field_file(layer: usize) -> PathBuf {
    PathBuf::from("fields").join(format!("layer_{layer}.txt"))
}

/// Final path of a UAS.
pub fn path_file(uas: UasId) -> PathBuf {
    PathBuf::from("paths").join(format!("uas_{}.csv", uas.0))
}

pub fn revision_file(uas: UasId, revision: usize) -> PathBuf {
    PathBuf::from("paths").join(format!("uas_{}_r{revision}.csv", uas.0))
}

pub const LOG_FILE: &str = "allocation_log.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorRecord {
    pub layer: usize,
    pub streamline: usize,
    pub level: f64,
    pub k: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionRecord {
    pub layer: usize,
    pub obstacle: usize,
    pub kind: ObstacleKind,
    pub vertex: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub t: u32,
    pub layer: usize,
    pub streamline: usize,
    pub k: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// `a1`..`a4`, empty on the final step.
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: u32,
    pub uas: u32,
    pub outcome: String,
    pub revision: Option<usize>,
    pub path_file: String,
    pub detail: String,
}

fn ensure_parent(path: &Path) -> Result<(), ExportError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    Ok(())
}

pub fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ExportError> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ExportError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| csv_err(path, e))
}

pub fn corridor_records(set: &CorridorSet) -> Vec<CorridorRecord> {
    set.streamlines
        .iter()
        .zip(&set.waypoints)
        .flat_map(|(s, wps)| {
            wps.iter().map(move |w| CorridorRecord {
                layer: w.key.layer,
                streamline: w.key.streamline,
                level: s.level,
                k: w.key.k,
                x: w.x,
                y: w.y,
                z: w.z,
            })
        })
        .collect()
}

pub fn section_records(layer: &Layer) -> Vec<SectionRecord> {
    layer
        .sections
        .iter()
        .enumerate()
        .flat_map(|(o, poly)| {
            poly.vertices()
                .iter()
                .enumerate()
                .map(move |(v, p)| SectionRecord {
                    layer: layer.index,
                    obstacle: o,
                    kind: poly.kind,
                    vertex: v,
                    x: p.x,
                    y: p.y,
                })
        })
        .collect()
}

pub fn path_records(path: &PlannedPath) -> Vec<PathRecord> {
    path.steps
        .iter()
        .map(|s| PathRecord {
            t: s.t,
            layer: s.key.layer,
            streamline: s.key.streamline,
            k: s.key.k,
            x: s.x,
            y: s.y,
            z: s.z,
            action: s.action.map(|a| a.label().to_string()).unwrap_or_default(),
        })
        .collect()
}

/// Log rows; `path_file` is relative to the run directory.
pub fn log_records(log: &[LogEntry]) -> Vec<LogRecord> {
    log.iter()
        .map(|e| LogRecord {
            t: e.t,
            uas: e.uas.0,
            outcome: e.outcome.label().to_string(),
            revision: e.revision,
            path_file: e
                .revision
                .map(|r| slash_path(&revision_file(e.uas, r)))
                .unwrap_or_default(),
            detail: e.detail.clone(),
        })
        .collect()
}

fn slash_path(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Writes every revision plus the final path of each UAS that has one.
/// Returns the relative paths written.
pub fn write_paths(
    out: &Path,
    records: &BTreeMap<UasId, UasRecord>,
) -> Result<Vec<PathBuf>, ExportError> {
    let mut written = Vec::new();
    for (&id, rec) in records {
        for (r, p) in rec.revisions.iter().enumerate() {
            let rel = revision_file(id, r);
            write_records(&out.join(&rel), &path_records(p))?;
            written.push(rel);
        }
        if let Some(p) = rec.path() {
            let rel = path_file(id);
            write_records(&out.join(&rel), &path_records(p))?;
            written.push(rel);
        }
    }
    Ok(written)
}

fn class_char(c: NodeClass) -> char {
    match c {
        NodeClass::Boundary => 'B',
        NodeClass::Interior => 'I',
        NodeClass::Obstacle => 'O',
    }
}

/// Stream function samples on the node grid, as read back from a dump.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub layer: usize,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub x_min: f64,
    pub y_min: f64,
    /// Row-major from the bottom row, `psi[j * nx + i]`.
    pub psi: Vec<f64>,
    /// `B`, `I` or `O` per node, same order as `psi`.
    pub classes: Vec<char>,
}

/// Text dump: a comment line, the grid header, `ny` value rows from the bottom
/// up, then `ny` class rows.
pub fn write_field(path: &Path, layer: &Layer, field: &FlowField) -> Result<(), ExportError> {
    let g = &field.grid;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# field layer={} altitude={} heading={}",
        layer.index,
        layer.altitude,
        layer.heading.label()
    );
    let _ = writeln!(
        s,
        "{} {} {:e} {:e} {:e} {:e}",
        g.nx,
        g.ny,
        g.dx,
        g.dy,
        g.x(0),
        g.y(0)
    );
    for j in 0..g.ny {
        let row: Vec<String> = (0..g.nx)
            .map(|i| format!("{:e}", field.psi[g.id(i, j)]))
            .collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    for j in 0..g.ny {
        let row: String = (0..g.nx).map(|i| class_char(g.class(g.id(i, j)))).collect();
        let _ = writeln!(s, "{row}");
    }
    ensure_parent(path)?;
    fs::write(path, s).map_err(|e| io_err(path, e))
}

pub fn read_field(path: &Path) -> Result<FieldDump, ExportError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let bad = |line: usize, message: String| ExportError::Format {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
    let (n, comment) = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let layer = comment
        .split_whitespace()
        .find_map(|w| w.strip_prefix("layer="))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(n, "missing layer= in comment line".into()))?;
    let (n, header) = lines
        .next()
        .ok_or_else(|| bad(2, "missing header".into()))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 6 {
        return Err(bad(n, format!("header has {} fields, expected 6", h.len())));
    }
    let int = |s: &str| s.parse::<usize>().map_err(|e| bad(n, e.to_string()));
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(n, e.to_string()));
    let (nx, ny) = (int(h[0])?, int(h[1])?);
    let (dx, dy, x_min, y_min) = (num(h[2])?, num(h[3])?, num(h[4])?, num(h[5])?);
    let mut psi = Vec::with_capacity(nx * ny);
    for _ in 0..ny {
        let (n, row) = lines
            .next()
            .ok_or_else(|| bad(0, "truncated value rows".into()))?;
        let vals = row
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|e| bad(n, e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if vals.len() != nx {
            return Err(bad(n, format!("{} values, expected {nx}", vals.len())));
        }
        psi.extend(vals);
    }
    let mut classes = Vec::with_capacity(nx * ny);
    for _ in 0..ny {
        let (n, row) = lines
            .next()
            .ok_or_else(|| bad(0, "truncated class rows".into()))?;
        if row.chars().count() != nx || row.chars().any(|c| !matches!(c, 'B' | 'I' | 'O')) {
            return Err(bad(n, "class row must hold nx of B, I, O".into()));
        }
        classes.extend(row.chars());
    }
    Ok(FieldDump {
        layer,
        nx,
        ny,
        dx,
        dy,
        x_min,
        y_min,
        psi,
        classes,
    })
}
