//! Air corridors: streamlines of each layer's stream function, oriented along the
//! layer heading and cut into evenly spaced waypoints.

use crate::airspace::{Axis, Direction, Heading, Layer, LayerStack};
use crate::contour::{trace_from_inflow, Exit};
use crate::flow::FlowField;
use crate::geometry::{polyline_length, Point2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorridorError {
    #[error("level {level} is the obstacle level")]
    LevelOnObstacle { level: f64 },
    #[error("level {level} is not strictly inside the fixed range [{lo}, {hi}]")]
    LevelOutOfRange { level: f64, lo: f64, hi: f64 },
    #[error("contour at level {level} does not span the domain: {reason}")]
    BrokenContour { level: f64, reason: String },
    #[error("contour at level {level} enters an obstacle at ({x:.3}, {y:.3})")]
    ContourInObstacle { level: f64, x: f64, y: f64 },
    #[error("polyline of length {length} is shorter than the spacing {spacing}")]
    DegeneratePolyline { length: f64, spacing: f64 },
    #[error("{fields} fields given for {layers} layers")]
    FieldCountMismatch { fields: usize, layers: usize },
    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<CorridorError>,
    },
}

/// Identifies a waypoint: layer (1-based), streamline index within the layer and
/// position index along the streamline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WaypointKey {
    pub layer: usize,
    pub streamline: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub key: WaypointKey,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Waypoint {
    pub fn planar(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    pub layer_index: usize,
    /// Position of the streamline within its corridor set.
    pub index: usize,
    pub level: f64,
    pub altitude: f64,
    /// Points ordered along the layer heading.
    pub polyline: Vec<Point2>,
}

impl Streamline {
    pub fn length(&self) -> f64 {
        polyline_length(&self.polyline)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorridorSet {
    pub layer_index: usize,
    pub altitude: f64,
    pub heading: Heading,
    /// Ordered by increasing level.
    pub streamlines: Vec<Streamline>,
    /// `waypoints[s][k]` belongs to streamline `s`.
    pub waypoints: Vec<Vec<Waypoint>>,
}

impl CorridorSet {
    pub fn len(&self) -> usize {
        self.streamlines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streamlines.is_empty()
    }

    pub fn waypoint(&self, streamline: usize, k: usize) -> Option<&Waypoint> {
        self.waypoints.get(streamline).and_then(|w| w.get(k))
    }

    pub fn all_waypoints(&self) -> impl Iterator<Item = &Waypoint> + '_ {
        self.waypoints.iter().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorConfig {
    pub streamlines_odd: usize,
    pub streamlines_even: usize,
    /// Waypoint spacing along each streamline, meters.
    pub spacing: f64,
}

impl Default for CorridorConfig {
    fn default() -> Self {
        Self {
            streamlines_odd: 10,
            streamlines_even: 18,
            spacing: 10.0,
        }
    }
}

impl CorridorConfig {
    pub fn streamlines_for(&self, layer_index: usize) -> usize {
        if layer_index % 2 == 1 {
            self.streamlines_odd
        } else {
            self.streamlines_even
        }
    }
}

/// `n` levels spread across the boundary range of `field`. When the range straddles
/// the obstacle level 0, the levels are split between the two signs so that the
/// nearest level keeps at least one level gap of clearance from 0.
pub fn default_levels(field: &FlowField, n: usize) -> Vec<f64> {
    let (lo, hi) = field.boundary_range();
    levels_in_range(lo, hi, n)
}

fn levels_in_range(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 0 || !(hi > lo) {
        return Vec::new();
    }
    if !(lo < 0.0 && 0.0 < hi) {
        let step = (hi - lo) / (n + 1) as f64;
        return (0..n).map(|k| lo + step * (k + 1) as f64).collect();
    }
    // With n_pos levels above 0 at gap g the top one sits at g·(n_pos + 0.5),
    // so g ≤ hi / (n_pos + 1) keeps it half a gap inside the boundary.
    let (mut best_pos, mut best_gap) = (0, f64::NEG_INFINITY);
    for n_pos in 0..=n {
        let n_neg = n - n_pos;
        let gap = (hi / (n_pos + 1) as f64).min(-lo / (n_neg + 1) as f64);
        if gap >= best_gap {
            best_gap = gap;
            best_pos = n_pos;
        }
    }
    let n_neg = n - best_pos;
    let mut levels: Vec<f64> = (0..n_neg)
        .rev()
        .map(|k| -best_gap * (1.5 + k as f64))
        .collect();
    levels.extend((0..best_pos).map(|k| best_gap * (1.5 + k as f64)));
    levels
}

fn axis_coord(p: Point2, axis: Axis) -> f64 {
    match axis {
        Axis::X => p.x,
        Axis::Y => p.y,
    }
}

/// Traces one streamline per level on `layer`, in the order given.
pub fn extract_streamlines(
    field: &FlowField,
    levels: &[f64],
    layer: &Layer,
) -> Result<Vec<Streamline>, CorridorError> {
    let (lo, hi) = field.fixed_range();
    let axis = layer.axis();
    levels
        .iter()
        .enumerate()
        .map(|(index, &level)| {
            if level == 0.0 {
                return Err(CorridorError::LevelOnObstacle { level });
            }
            if !(lo < level && level < hi) {
                return Err(CorridorError::LevelOutOfRange { level, lo, hi });
            }
            let broken = |reason: &str| CorridorError::BrokenContour {
                level,
                reason: reason.to_string(),
            };
            let trace = trace_from_inflow(&field.grid, &field.psi, level, axis)
                .ok_or_else(|| broken("level does not cross the inflow side"))?;
            match trace.exit {
                Exit::Opposite => {}
                Exit::Elsewhere => return Err(broken("contour leaves through a side wall")),
                Exit::Looped => return Err(broken("contour closes on itself")),
            }
            let mut points = trace.points;
            if let Some(w) = points
                .windows(2)
                .find(|w| axis_coord(w[1], axis) <= axis_coord(w[0], axis))
            {
                return Err(broken(&format!(
                    "not monotone along the travel axis near ({:.3}, {:.3})",
                    w[1].x, w[1].y
                )));
            }
            if let Some(p) = points.iter().find(|&&p| field.grid.in_obstacle(p)) {
                return Err(CorridorError::ContourInObstacle {
                    level,
                    x: p.x,
                    y: p.y,
                });
            }
            if layer.direction() == Direction::Negative {
                points.reverse();
            }
            Ok(Streamline {
                layer_index: layer.index,
                index,
                level,
                altitude: layer.altitude,
                polyline: points,
            })
        })
        .collect()
}

/// Waypoints at arc lengths 0, spacing, 2·spacing, ... from the first polyline point.
pub fn discretize(streamline: &Streamline, spacing: f64) -> Result<Vec<Waypoint>, CorridorError> {
    let line = &streamline.polyline;
    let length = polyline_length(line);
    if !(spacing > 0.0) || line.len() < 2 || length < spacing * (1.0 - 1e-9) {
        return Err(CorridorError::DegeneratePolyline { length, spacing });
    }
    let count = (length / spacing + 1e-9).floor() as usize + 1;
    let make = |k: usize, p: Point2| Waypoint {
        key: WaypointKey {
            layer: streamline.layer_index,
            streamline: streamline.index,
            k,
        },
        x: p.x,
        y: p.y,
        z: streamline.altitude,
    };
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..count {
        let target = k as f64 * spacing;
        while seg + 1 < line.len() - 1 && seg_start + line[seg].distance(line[seg + 1]) < target {
            seg_start += line[seg].distance(line[seg + 1]);
            seg += 1;
        }
        let (a, b) = (line[seg], line[seg + 1]);
        let seg_len = a.distance(b);
        let t = if seg_len > 0.0 {
            ((target - seg_start) / seg_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(make(k, a + (b - a) * t));
    }
    Ok(out)
}

fn layer_corridors(
    field: &FlowField,
    layer: &Layer,
    config: &CorridorConfig,
) -> Result<CorridorSet, CorridorError> {
    let levels = default_levels(field, config.streamlines_for(layer.index));
    let streamlines = extract_streamlines(field, &levels, layer)?;
    let waypoints = streamlines
        .iter()
        .map(|s| discretize(s, config.spacing))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CorridorSet {
        layer_index: layer.index,
        altitude: layer.altitude,
        heading: layer.heading,
        streamlines,
        waypoints,
    })
}

/// Corridor sets for every layer, one field per layer in stack order. Layers are
/// processed in parallel.
pub fn build_corridor_sets(
    fields: &[FlowField],
    layers: &LayerStack,
    config: &CorridorConfig,
) -> Result<Vec<CorridorSet>, CorridorError> {
    if fields.len() != layers.len() {
        return Err(CorridorError::FieldCountMismatch {
            fields: fields.len(),
            layers: layers.len(),
        });
    }
    fields
        .par_iter()
        .zip(layers.layers().par_iter())
        .map(|(field, layer)| {
            layer_corridors(field, layer, config).map_err(|e| CorridorError::Layer {
                layer: layer.index,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airspace::{build_grid, ObstacleKind, ObstaclePolygon, Region};
    use crate::flow::{solve_stream_function, BoundaryConditionSpec, SolveOptions};

    fn straight(layer: usize, from: Point2, to: Point2) -> Streamline {
        Streamline {
            layer_index: layer,
            index: 0,
            level: 1.0,
            altitude: 20.0,
            polyline: vec![from, to],
        }
    }

    fn solved(region: Region, sections: &[ObstaclePolygon], h: f64, axis: Axis) -> FlowField {
        let grid = build_grid(region, sections, h, h, h).unwrap();
        let bc = BoundaryConditionSpec::centered(&region, axis);
        solve_stream_function(&grid, &bc, &SolveOptions::default()).unwrap()
    }

    #[test]
    fn levels_for_positive_span() {
        assert_eq!(levels_in_range(0.0, 1.0, 1), vec![0.5]);
        let ten = levels_in_range(0.0, 1.0, 10);
        assert_eq!(ten.len(), 10);
        for (k, v) in ten.iter().enumerate() {
            assert!((v - (k + 1) as f64 / 11.0).abs() < 1e-15);
        }
    }

    #[test]
    fn levels_keep_guard_band_around_zero() {
        let levels = levels_in_range(-1.0, 1.0, 4);
        assert_eq!(levels.len(), 4);
        let gap = levels[3] - levels[2];
        assert!(levels.iter().all(|l| l.abs() > gap));
        assert!(levels.windows(2).all(|w| w[0] < w[1]));
        assert!(levels.iter().all(|&l| -1.0 < l && l < 1.0));
        // asymmetric span puts more levels on the wider side
        let levels = levels_in_range(-1.0, 3.0, 8);
        let pos = levels.iter().filter(|&&l| l > 0.0).count();
        assert!(pos > 4);
    }

    #[test]
    fn discretize_straight_lines() {
        let s = straight(1, Point2::new(0.0, 0.0), Point2::new(100.0, 0.0));
        let w = discretize(&s, 10.0).unwrap();
        assert_eq!(w.len(), 11);
        assert!((w[10].x - 100.0).abs() < 1e-12);
        assert_eq!(w[3].key.k, 3);
        assert_eq!(discretize(&s, 100.0).unwrap().len(), 2);
        assert!(matches!(
            discretize(&s, 150.0),
            Err(CorridorError::DegeneratePolyline { .. })
        ));
    }

    #[test]
    fn discretize_curve_of_95_m() {
        // quarter circle of radius r with arc length 95
        let r = 95.0 / std::f64::consts::FRAC_PI_2;
        let polyline: Vec<Point2> = (0..=2000)
            .map(|i| {
                let t = std::f64::consts::FRAC_PI_2 * i as f64 / 2000.0;
                Point2::new(r * t.sin(), r * (1.0 - t.cos()))
            })
            .collect();
        let s = Streamline {
            polyline,
            ..straight(1, Point2::new(0.0, 0.0), Point2::new(1.0, 0.0))
        };
        let w = discretize(&s, 10.0).unwrap();
        assert_eq!(w.len(), 10);
        // last waypoint sits at arc length 90: angle 90/r
        let t = 90.0 / r;
        let expect = Point2::new(r * t.sin(), r * (1.0 - t.cos()));
        assert!(w[9].planar().distance(expect) < 1e-2);
    }

    #[test]
    fn horizontal_line_on_linear_field() {
        let region = Region::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let grid = build_grid(region, &[], 0.1, 0.1, 0.0).unwrap();
        let bc = BoundaryConditionSpec::along_x(&region, 1.0, 0.0);
        let field = solve_stream_function(&grid, &bc, &SolveOptions::default()).unwrap();
        let stack = LayerStack::standard(&[20.0]).unwrap();
        let lines = extract_streamlines(&field, &[0.5], &stack.layers()[0]).unwrap();
        assert!(lines[0].polyline.iter().all(|p| (p.y - 0.5).abs() < 1e-9));
        assert!((lines[0].polyline[0].x).abs() < 1e-12);
        assert!(matches!(
            extract_streamlines(&field, &[0.0], &stack.layers()[0]),
            Err(CorridorError::LevelOnObstacle { .. })
        ));
        assert!(matches!(
            extract_streamlines(&field, &[1.5], &stack.layers()[0]),
            Err(CorridorError::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn eight_free_layers_have_expected_counts_and_orientation() {
        let region = Region::new(0.0, 200.0, 0.0, 200.0).unwrap();
        let alts = [20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0, 55.0];
        let stack = LayerStack::standard(&alts).unwrap();
        let fields: Vec<FlowField> = stack
            .layers()
            .iter()
            .map(|l| solved(region, &[], 5.0, l.axis()))
            .collect();
        let sets = build_corridor_sets(&fields, &stack, &CorridorConfig::default()).unwrap();
        assert_eq!(sets.len(), 8);
        for set in &sets {
            let expect = if set.layer_index % 2 == 1 { 10 } else { 18 };
            assert_eq!(set.len(), expect);
            let sign = set.heading.direction.sign();
            for w in &set.waypoints {
                assert_eq!(w.len(), 21);
                let (a, b) = (w[0].planar(), w[1].planar());
                let d = match set.heading.axis {
                    Axis::X => {
                        assert!((a.y - b.y).abs() < 1e-9);
                        b.x - a.x
                    }
                    Axis::Y => {
                        assert!((a.x - b.x).abs() < 1e-9);
                        b.y - a.y
                    }
                };
                assert!((d - 10.0 * sign).abs() < 1e-9);
                assert!(w.iter().all(|p| p.z == set.altitude));
            }
        }
        assert_eq!(sets[0].heading, Heading::PLUS_X);
        assert_eq!(sets[1].heading, Heading::MINUS_Y);
        assert_eq!(sets[2].heading, Heading::MINUS_X);
        assert_eq!(sets[3].heading, Heading::PLUS_Y);
    }

    #[test]
    fn streamlines_wrap_obstacle_with_clearance() {
        let region = Region::new(0.0, 300.0, 0.0, 200.0).unwrap();
        let cyl = ObstaclePolygon::cylinder(
            Point2::new(150.0, 100.0),
            25.0,
            0.0,
            100.0,
            ObstacleKind::Building,
        )
        .unwrap();
        let field = solved(region, std::slice::from_ref(&cyl), 2.5, Axis::X);
        let stack = LayerStack::standard(&[20.0])
            .unwrap()
            .with_sections(std::slice::from_ref(&cyl));
        let layer = &stack.layers()[0];
        let levels = default_levels(&field, 10);
        let lines = extract_streamlines(&field, &levels, layer).unwrap();
        for s in &lines {
            for &p in &s.polyline {
                let inside = cyl.contains(p);
                let dist = crate::geometry::distance_to_boundary(p, cyl.vertices());
                assert!(!inside && dist >= 2.5 - 1e-9, "point {p:?} too close");
            }
        }
        for (a, b) in lines.iter().zip(lines.iter().skip(1)) {
            assert!(!crate::geometry::polylines_intersect(
                &a.polyline,
                &b.polyline
            ));
        }
    }
}
