//! Static SVG renderings of a run directory. Every image is drawn from the
//! files written by [`crate::export`], so re-emitting gives identical bytes.

use crate::export::{
    corridor_file, field_file, read_field, read_records, section_file, CorridorRecord, ExportError,
    FieldDump, PathRecord, SectionRecord,
};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlotError {
    #[error("missing artifact {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Export(#[from] ExportError),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlotKind {
    Field,
    Corridors,
    Paths,
}

impl PlotKind {
    pub const ALL: [PlotKind; 3] = [PlotKind::Field, PlotKind::Corridors, PlotKind::Paths];

    pub fn parse(s: &str) -> Option<PlotKind> {
        match s {
            "field" => Some(PlotKind::Field),
            "corridors" => Some(PlotKind::Corridors),
            "paths" => Some(PlotKind::Paths),
            _ => None,
        }
    }
}

const PANEL: f64 = 360.0;
const PAD: f64 = 24.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// Maps a data rectangle onto a square panel, y up.
#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    y0: f64,
    scale: f64,
    ox: f64,
    oy: f64,
    h: f64,
}

impl Frame {
    fn new(lo: (f64, f64), hi: (f64, f64), ox: f64, oy: f64) -> Frame {
        let w = (hi.0 - lo.0).max(1e-9);
        let h = (hi.1 - lo.1).max(1e-9);
        let scale = PANEL / w.max(h);
        Frame {
            x0: lo.0,
            y0: lo.1,
            scale,
            ox,
            oy,
            h: h * scale,
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.ox + (x - self.x0) * self.scale,
            self.oy + self.h - (y - self.y0) * self.scale,
        )
    }

    fn points(&self, pts: impl Iterator<Item = (f64, f64)>) -> String {
        pts.map(|(x, y)| {
            let (u, v) = self.px(x, y);
            format!("{u:.2},{v:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
    }
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn require(path: &Path) -> Result<(), PlotError> {
    if path.exists() {
        Ok(())
    } else {
        Err(PlotError::MissingArtifact(path.display().to_string()))
    }
}

fn save(path: &Path, svg: &str) -> Result<(), PlotError> {
    let io = |e: std::io::Error| PlotError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(io)?;
    }
    fs::write(path, svg).map_err(io)
}

/// Layer indices with a file matching `dir/layer_<i>.<ext>`, ascending.
fn layer_files(dir: &Path, ext: &str) -> Vec<usize> {
    let mut out: Vec<usize> = fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.strip_prefix("layer_")?
                .strip_suffix(&format!(".{ext}"))?
                .parse()
                .ok()
        })
        .collect();
    out.sort_unstable();
    out
}

fn section_polygons(rows: &[SectionRecord]) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut by: BTreeMap<usize, (String, Vec<(f64, f64)>)> = BTreeMap::new();
    for r in rows {
        let kind = format!("{:?}", r.kind);
        by.entry(r.obstacle)
            .or_insert_with(|| (kind, Vec::new()))
            .1
            .push((r.x, r.y));
    }
    by.into_values().collect()
}

fn fill_for(kind: &str) -> &'static str {
    match kind {
        "Building" => "#9e9e9e",
        "AtmNoFly" => "#f4a6a6",
        _ => "#f6d365",
    }
}

fn draw_sections(s: &mut String, f: &Frame, rows: &[SectionRecord]) {
    for (kind, pts) in section_polygons(rows) {
        let _ = writeln!(
            s,
            "<polygon points=\"{}\" fill=\"{}\" stroke=\"#555\" stroke-width=\"0.6\"/>",
            f.points(pts.into_iter()),
            fill_for(&kind)
        );
    }
}

fn draw_streamlines(s: &mut String, f: &Frame, rows: &[CorridorRecord], stroke: &str) {
    let mut by: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        by.entry(r.streamline).or_default().push((r.x, r.y));
    }
    for pts in by.into_values() {
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"0.9\"/>",
            f.points(pts.into_iter())
        );
    }
}

fn field_extent(d: &FieldDump) -> ((f64, f64), (f64, f64)) {
    (
        (d.x_min, d.y_min),
        (
            d.x_min + (d.nx - 1) as f64 * d.dx,
            d.y_min + (d.ny - 1) as f64 * d.dy,
        ),
    )
}

/// Twelve-band blue to red ramp.
fn band_color(t: f64) -> String {
    let b = (t.clamp(0.0, 1.0) * 11.999).floor() / 11.0;
    let r = (40.0 + 200.0 * b) as u8;
    let g = (90.0 + 120.0 * (1.0 - (2.0 * b - 1.0).abs())) as u8;
    let bl = (240.0 - 200.0 * b) as u8;
    format!("#{r:02x}{g:02x}{bl:02x}")
}

fn field_svg(d: &FieldDump, sections: &[SectionRecord], corridors: &[CorridorRecord]) -> String {
    let (lo, hi) = field_extent(d);
    let f = Frame::new(lo, hi, PAD, PAD);
    let mut s = svg_open(PANEL + 2.0 * PAD, f.h + 2.0 * PAD + 14.0);
    let fixed: Vec<f64> = d
        .psi
        .iter()
        .zip(&d.classes)
        .filter(|(_, &c)| c != 'I')
        .map(|(&v, _)| v)
        .collect();
    let vmin = fixed.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = fixed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (vmax - vmin).max(1e-300);
    // one rect per run of equal colour in a row of node-centred cells
    for j in 0..d.ny {
        let mut i = 0;
        while i < d.nx {
            let id = j * d.nx + i;
            let color = if d.classes[id] == 'O' {
                "#bdbdbd".to_string()
            } else {
                band_color((d.psi[id] - vmin) / span)
            };
            let mut end = i + 1;
            while end < d.nx {
                let n = j * d.nx + end;
                let c = if d.classes[n] == 'O' {
                    "#bdbdbd".to_string()
                } else {
                    band_color((d.psi[n] - vmin) / span)
                };
                if c != color {
                    break;
                }
                end += 1;
            }
            let x = d.x_min + (i as f64 - 0.5) * d.dx;
            let y = d.y_min + (j as f64 + 0.5) * d.dy;
            let (u, v) = f.px(x.max(lo.0), y.min(hi.1));
            let (u2, v2) = f.px(
                (d.x_min + (end as f64 - 0.5) * d.dx).min(hi.0),
                (y - d.dy).max(lo.1),
            );
            let _ = writeln!(
                s,
                "<rect x=\"{u:.2}\" y=\"{v:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\"/>",
                u2 - u,
                v2 - v
            );
            i = end;
        }
    }
    draw_sections(&mut s, &f, sections);
    draw_streamlines(&mut s, &f, corridors, "#000");
    let _ = writeln!(
        s,
        "<text x=\"{PAD}\" y=\"{:.0}\">layer {} stream function [{vmin:.3e}, {vmax:.3e}]</text>\n</svg>",
        f.h + 2.0 * PAD + 8.0,
        d.layer
    );
    s
}

fn read_optional<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PlotError> {
    if path.exists() {
        Ok(read_records(path)?)
    } else {
        Ok(Vec::new())
    }
}

fn emit_field(run: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let layers = layer_files(&run.join("fields"), "txt");
    if layers.is_empty() {
        return Err(PlotError::MissingArtifact(
            run.join("fields").display().to_string(),
        ));
    }
    let mut out = Vec::new();
    for l in layers {
        let d = read_field(&run.join(field_file(l)))?;
        let sec = read_optional(&run.join(section_file(l)))?;
        let cor = read_optional(&run.join(corridor_file(l)))?;
        let p = run.join("plots").join(format!("field_layer_{l}.svg"));
        save(&p, &field_svg(&d, &sec, &cor))?;
        out.push(p);
    }
    Ok(out)
}

fn extent(points: impl Iterator<Item = (f64, f64)>) -> ((f64, f64), (f64, f64)) {
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (x, y) in points {
        lo = (lo.0.min(x), lo.1.min(y));
        hi = (hi.0.max(x), hi.1.max(y));
    }
    if !lo.0.is_finite() {
        return ((0.0, 0.0), (1.0, 1.0));
    }
    (lo, hi)
}

fn emit_corridors(run: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let dir = run.join("corridors");
    let layers = layer_files(&dir, "csv");
    if layers.is_empty() {
        return Err(PlotError::MissingArtifact(dir.display().to_string()));
    }
    let mut data = Vec::new();
    for &l in &layers {
        let cor: Vec<CorridorRecord> = read_records(&run.join(corridor_file(l)))?;
        let sec: Vec<SectionRecord> = read_optional(&run.join(section_file(l)))?;
        data.push((l, cor, sec));
    }
    let (lo, hi) = extent(data.iter().flat_map(|(_, c, s)| {
        c.iter()
            .map(|r| (r.x, r.y))
            .chain(s.iter().map(|r| (r.x, r.y)))
    }));
    let cols = layers.len().min(4);
    let rows = layers.len().div_ceil(cols);
    let cell = PANEL + 2.0 * PAD;
    let probe = Frame::new(lo, hi, 0.0, 0.0);
    let cell_h = probe.h + 2.0 * PAD;
    let mut s = svg_open(cell * cols as f64, cell_h * rows as f64);
    for (n, (l, cor, sec)) in data.iter().enumerate() {
        let ox = (n % cols) as f64 * cell + PAD;
        let oy = (n / cols) as f64 * cell_h + PAD;
        let f = Frame::new(lo, hi, ox, oy);
        let (a, b) = f.px(lo.0, hi.1);
        let _ = writeln!(
            s,
            "<rect x=\"{a:.2}\" y=\"{b:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#ccc\"/>",
            (hi.0 - lo.0) * f.scale,
            f.h
        );
        draw_sections(&mut s, &f, sec);
        draw_streamlines(&mut s, &f, cor, PALETTE[(l - 1) % PALETTE.len()]);
        let z = cor.first().map(|r| r.z).unwrap_or(f64::NAN);
        let _ = writeln!(
            s,
            "<text x=\"{ox:.0}\" y=\"{:.0}\">layer {l} ({z} m)</text>",
            oy - 6.0
        );
    }
    s.push_str("</svg>\n");
    let p = run.join("plots").join("corridors.svg");
    save(&p, &s)?;
    Ok(vec![p])
}

/// Final path files `paths/uas_<id>.csv`, ascending by id.
fn final_paths(run: &Path) -> Vec<(u32, PathBuf)> {
    let mut v: Vec<(u32, PathBuf)> = fs::read_dir(run.join("paths"))
        .into_iter()
        .flatten()
        .flatten()
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            let id = name
                .strip_prefix("uas_")?
                .strip_suffix(".csv")?
                .parse()
                .ok()?;
            Some((id, e.path()))
        })
        .collect();
    v.sort();
    v
}

fn emit_paths(run: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let files = final_paths(run);
    if files.is_empty() {
        return Err(PlotError::MissingArtifact(
            run.join("paths").display().to_string(),
        ));
    }
    let mut paths = Vec::new();
    for (id, p) in files {
        paths.push((id, read_records::<PathRecord>(&p)?));
    }
    // obstacles of the lowest layer give the plan-view backdrop
    let first = layer_files(&run.join("sections"), "csv").into_iter().next();
    let sec: Vec<SectionRecord> = match first {
        Some(l) => read_records(&run.join(section_file(l)))?,
        None => Vec::new(),
    };
    let cor_layers = layer_files(&run.join("corridors"), "csv");
    let mut backdrop = Vec::new();
    for l in &cor_layers {
        backdrop.extend(read_records::<CorridorRecord>(
            &run.join(corridor_file(*l)),
        )?);
    }
    let (lo, hi) = extent(
        paths
            .iter()
            .flat_map(|(_, r)| r.iter().map(|s| (s.x, s.y)))
            .chain(backdrop.iter().map(|r| (r.x, r.y)))
            .chain(sec.iter().map(|r| (r.x, r.y))),
    );
    let plan = Frame::new(lo, hi, PAD, PAD);
    let (zlo, zhi) = {
        let zs = paths.iter().flat_map(|(_, r)| r.iter().map(|s| s.z));
        let (a, b) = zs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| {
            (a.min(z), b.max(z))
        });
        (a - 5.0, b + 5.0)
    };
    let side_ox = PANEL + 3.0 * PAD;
    let side_scale_x = PANEL / (hi.0 - lo.0).max(1e-9);
    let side_scale_z = plan.h / (zhi - zlo).max(1e-9);
    let side = |x: f64, z: f64| {
        (
            side_ox + (x - lo.0) * side_scale_x,
            PAD + plan.h - (z - zlo) * side_scale_z,
        )
    };
    let mut s = svg_open(2.0 * PANEL + 4.0 * PAD, plan.h + 2.0 * PAD + 14.0);
    draw_sections(&mut s, &plan, &sec);
    draw_streamlines(&mut s, &plan, &backdrop, "#e6e6e6");
    let _ = writeln!(
        s,
        "<rect x=\"{side_ox:.2}\" y=\"{PAD:.2}\" width=\"{PANEL:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#ccc\"/>",
        plan.h
    );
    for (n, (id, rows)) in paths.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>",
            plan.points(rows.iter().map(|r| (r.x, r.y)))
        );
        let profile: Vec<String> = rows
            .iter()
            .map(|r| {
                let (u, v) = side(r.x, r.z);
                format!("{u:.2},{v:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.6\"/>",
            profile.join(" ")
        );
        for w in rows.windows(2) {
            if w[0].layer != w[1].layer {
                let (u, v) = plan.px(w[1].x, w[1].y);
                let (a, b) = side(w[1].x, w[1].z);
                let _ = writeln!(
                    s,
                    "<circle cx=\"{u:.2}\" cy=\"{v:.2}\" r=\"3\" fill=\"none\" stroke=\"{color}\"/>\n<circle cx=\"{a:.2}\" cy=\"{b:.2}\" r=\"3\" fill=\"none\" stroke=\"{color}\"/>"
                );
            }
        }
        if let Some(r) = rows.first() {
            let (u, v) = plan.px(r.x, r.y);
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"{color}\">{id}</text>",
                u + 4.0,
                v - 4.0
            );
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{PAD}\" y=\"{:.0}\">plan view</text>\n<text x=\"{side_ox:.0}\" y=\"{:.0}\">altitude profile (x, z)</text>\n</svg>",
        plan.h + 2.0 * PAD + 8.0,
        plan.h + 2.0 * PAD + 8.0
    );
    let p = run.join("plots").join("paths.svg");
    save(&p, &s)?;
    Ok(vec![p])
}

/// Renders the requested plots into `run/plots/`, returning the files written.
pub fn emit_plots(run: &Path, which: &[PlotKind]) -> Result<Vec<PathBuf>, PlotError> {
    require(run)?;
    let mut out = Vec::new();
    for k in which {
        out.extend(match k {
            PlotKind::Field => emit_field(run)?,
            PlotKind::Corridors => emit_corridors(run)?,
            PlotKind::Paths => emit_paths(run)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_directory_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_plots(dir.path(), &[PlotKind::Corridors]),
            Err(PlotError::MissingArtifact(_))
        ));
        assert!(matches!(
            emit_plots(&dir.path().join("nope"), &[PlotKind::Paths]),
            Err(PlotError::MissingArtifact(_))
        ));
    }

    #[test]
    fn band_colors_are_stable() {
        assert_eq!(band_color(0.0), band_color(0.01));
        assert_ne!(band_color(0.0), band_color(1.0));
    }
}
