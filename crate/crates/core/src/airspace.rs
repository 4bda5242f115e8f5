//! Layered airspace: domain rectangle, obstacle footprints, altitude layers and the
//! node-classified finite-difference grid.

use crate::geometry::{self, BBox, Point2};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// Vertex count used when a cylinder is turned into a polygon.
pub const CYLINDER_SIDES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AirspaceError {
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid obstacle polygon: {0}")]
    InvalidPolygon(String),
    #[error("invalid layer stack: {0}")]
    InvalidLayers(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("an obstacle blocks every channel between opposite domain sides")]
    ObstacleTouchesBoundary,
}

/// Labels of the four sides of the rectangular domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// ∂C₁, y = y_min
    Bottom,
    /// ∂C₂, x = x_max
    Right,
    /// ∂C₃, y = y_max
    Top,
    /// ∂C₄, x = x_min
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self, AirspaceError> {
        let r = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), AirspaceError> {
        let finite = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(AirspaceError::InvalidRegion(format!(
                "need x_min < x_max and y_min < y_max, got [{}, {}] x [{}, {}]",
                self.x_min, self.x_max, self.y_min, self.y_max
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> Point2 {
        Point2::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    Building,
    AtmNoFly,
    FailedUas,
}

/// Footprint of an unplanned zone, extruded between two altitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstaclePolygon {
    vertices: Vec<Point2>,
    pub base_altitude: f64,
    pub top_altitude: f64,
    pub kind: ObstacleKind,
}

impl ObstaclePolygon {
    /// Validates the ring and stores it counterclockwise.
    pub fn new(
        vertices: Vec<Point2>,
        base_altitude: f64,
        top_altitude: f64,
        kind: ObstacleKind,
    ) -> Result<Self, AirspaceError> {
        if vertices.len() < 3 {
            return Err(AirspaceError::InvalidPolygon(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices
            .iter()
            .any(|p| !p.x.is_finite() || !p.y.is_finite())
        {
            return Err(AirspaceError::InvalidPolygon("non-finite vertex".into()));
        }
        if !geometry::is_simple(&vertices) {
            return Err(AirspaceError::InvalidPolygon(
                "polygon is self-intersecting or degenerate".into(),
            ));
        }
        if !(base_altitude < top_altitude) {
            return Err(AirspaceError::InvalidPolygon(format!(
                "base altitude {base_altitude} must be below top altitude {top_altitude}"
            )));
        }
        let mut vertices = vertices;
        if geometry::signed_area2(&vertices) < 0.0 {
            vertices.reverse();
        }
        Ok(Self {
            vertices,
            base_altitude,
            top_altitude,
            kind,
        })
    }

    /// Vertical circular cylinder as a 32-gon that encloses the disk.
    pub fn cylinder(
        center: Point2,
        radius: f64,
        base_altitude: f64,
        top_altitude: f64,
        kind: ObstacleKind,
    ) -> Result<Self, AirspaceError> {
        Self::regular(
            center,
            radius,
            CYLINDER_SIDES,
            base_altitude,
            top_altitude,
            kind,
        )
    }

    pub fn regular(
        center: Point2,
        radius: f64,
        sides: usize,
        base_altitude: f64,
        top_altitude: f64,
        kind: ObstacleKind,
    ) -> Result<Self, AirspaceError> {
        if !(radius > 0.0) || sides < 3 {
            return Err(AirspaceError::InvalidPolygon(format!(
                "cylinder needs radius > 0 and >= 3 sides, got r={radius}, sides={sides}"
            )));
        }
        Self::new(
            geometry::circumscribed_polygon(center, radius, sides),
            base_altitude,
            top_altitude,
            kind,
        )
    }

    pub fn rectangle(
        min: Point2,
        max: Point2,
        base_altitude: f64,
        top_altitude: f64,
        kind: ObstacleKind,
    ) -> Result<Self, AirspaceError> {
        Self::new(
            vec![
                min,
                Point2::new(max.x, min.y),
                max,
                Point2::new(min.x, max.y),
            ],
            base_altitude,
            top_altitude,
            kind,
        )
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn bbox(&self) -> BBox {
        BBox::of(&self.vertices)
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.bbox().contains(p) && geometry::point_in_polygon(p, &self.vertices)
    }

    /// Membership in the polygon grown by `inflation` (Minkowski sum with a disk).
    pub fn contains_inflated(&self, p: Point2, inflation: f64) -> bool {
        if !self.bbox().expanded(inflation).contains(p) {
            return false;
        }
        geometry::point_in_polygon(p, &self.vertices)
            || (inflation > 0.0 && geometry::distance_to_boundary(p, &self.vertices) <= inflation)
    }

    pub fn spans_altitude(&self, h: f64) -> bool {
        self.base_altitude <= h && h <= self.top_altitude
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }
}

/// Travel axis and sense of a layer, written `+x`, `-y`, ...
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Heading {
    pub axis: Axis,
    pub direction: Direction,
}

impl Heading {
    pub const PLUS_X: Heading = Heading {
        axis: Axis::X,
        direction: Direction::Positive,
    };
    pub const MINUS_X: Heading = Heading {
        axis: Axis::X,
        direction: Direction::Negative,
    };
    pub const PLUS_Y: Heading = Heading {
        axis: Axis::Y,
        direction: Direction::Positive,
    };
    pub const MINUS_Y: Heading = Heading {
        axis: Axis::Y,
        direction: Direction::Negative,
    };

    /// Heading pattern +x, -y, -x, +y repeated upward from layer 1.
    pub fn standard(index: usize) -> Heading {
        match (index - 1) % 4 {
            0 => Heading::PLUS_X,
            1 => Heading::MINUS_Y,
            2 => Heading::MINUS_X,
            _ => Heading::PLUS_Y,
        }
    }

    pub fn parse(s: &str) -> Option<Heading> {
        match s.trim() {
            "+x" => Some(Heading::PLUS_X),
            "-x" => Some(Heading::MINUS_X),
            "+y" => Some(Heading::PLUS_Y),
            "-y" => Some(Heading::MINUS_Y),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match (self.axis, self.direction) {
            (Axis::X, Direction::Positive) => "+x",
            (Axis::X, Direction::Negative) => "-x",
            (Axis::Y, Direction::Positive) => "+y",
            (Axis::Y, Direction::Negative) => "-y",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// 1-based layer index.
    pub index: usize,
    pub altitude: f64,
    pub heading: Heading,
    pub sections: Vec<ObstaclePolygon>,
}

impl Layer {
    pub fn axis(&self) -> Axis {
        self.heading.axis
    }

    pub fn direction(&self) -> Direction {
        self.heading.direction
    }
}

/// Altitude layers ordered bottom to top.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    layers: Vec<Layer>,
}

impl LayerStack {
    /// Odd layers must travel along x and even layers along y; altitudes strictly increase.
    pub fn new(altitudes: &[f64], headings: &[Heading]) -> Result<Self, AirspaceError> {
        if altitudes.is_empty() {
            return Err(AirspaceError::InvalidLayers("no layers".into()));
        }
        if altitudes.len() != headings.len() {
            return Err(AirspaceError::InvalidLayers(format!(
                "{} altitudes but {} headings",
                altitudes.len(),
                headings.len()
            )));
        }
        if altitudes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(AirspaceError::InvalidLayers(
                "layer altitudes must be strictly increasing".into(),
            ));
        }
        let mut layers = Vec::with_capacity(altitudes.len());
        for (i, (&altitude, &heading)) in altitudes.iter().zip(headings).enumerate() {
            let index = i + 1;
            let expected = if index % 2 == 1 { Axis::X } else { Axis::Y };
            if heading.axis != expected {
                return Err(AirspaceError::InvalidLayers(format!(
                    "layer {index} must travel along {expected:?}, got {}",
                    heading.label()
                )));
            }
            layers.push(Layer {
                index,
                altitude,
                heading,
                sections: Vec::new(),
            });
        }
        Ok(Self { layers })
    }

    /// Wraps already validated layers, possibly a subset of a stack.
    pub(crate) fn from_layers(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn standard(altitudes: &[f64]) -> Result<Self, AirspaceError> {
        let headings: Vec<Heading> = (1..=altitudes.len()).map(Heading::standard).collect();
        Self::new(altitudes, &headings)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer(&self, index: usize) -> Option<&Layer> {
        index.checked_sub(1).and_then(|i| self.layers.get(i))
    }

    /// Replaces each layer's sections with the cross-sections of `obstacles`.
    pub fn with_sections(&self, obstacles: &[ObstaclePolygon]) -> LayerStack {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                sections: section_layer(obstacles, l.altitude),
                ..l.clone()
            })
            .collect();
        LayerStack { layers }
    }

    /// Index of the layer whose altitude is closest to `z`.
    pub fn nearest_layer(&self, z: f64) -> usize {
        self.layers
            .iter()
            .min_by(|a, b| (a.altitude - z).abs().total_cmp(&(b.altitude - z).abs()))
            .map(|l| l.index)
            .unwrap_or(1)
    }
}

/// Combines obstacles whose outlines come within `merge_distance` of each other into
/// their convex hull, repeating until every pair of outputs is farther apart.
pub fn merge_proximal_obstacles(
    polys: &[ObstaclePolygon],
    merge_distance: f64,
) -> Vec<ObstaclePolygon> {
    let mut current: Vec<ObstaclePolygon> = polys.to_vec();
    loop {
        let n = current.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut merged_any = false;
        for i in 0..n {
            let bi = current[i].bbox().expanded(merge_distance);
            for j in (i + 1)..n {
                let bj = current[j].bbox();
                let boxes_apart = bj.min.x > bi.max.x
                    || bj.max.x < bi.min.x
                    || bj.min.y > bi.max.y
                    || bj.max.y < bi.min.y;
                if boxes_apart {
                    continue;
                }
                if geometry::polygon_distance(current[i].vertices(), current[j].vertices())
                    <= merge_distance
                {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                        merged_any = true;
                    }
                }
            }
        }
        if !merged_any {
            return current;
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut group_of_root = vec![usize::MAX; n];
        for i in 0..n {
            let r = find(&mut parent, i);
            if group_of_root[r] == usize::MAX {
                group_of_root[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[group_of_root[r]].push(i);
        }
        current = groups
            .into_iter()
            .map(|members| {
                if members.len() == 1 {
                    return current[members[0]].clone();
                }
                let points: Vec<Point2> = members
                    .iter()
                    .flat_map(|&m| current[m].vertices().iter().copied())
                    .collect();
                let base = members
                    .iter()
                    .map(|&m| current[m].base_altitude)
                    .fold(f64::INFINITY, f64::min);
                let top = members
                    .iter()
                    .map(|&m| current[m].top_altitude)
                    .fold(f64::NEG_INFINITY, f64::max);
                ObstaclePolygon {
                    vertices: geometry::convex_hull(&points),
                    base_altitude: base,
                    top_altitude: top,
                    kind: current[members[0]].kind,
                }
            })
            .collect();
    }
}

/// Obstacles whose altitude range contains `h`, in input order.
pub fn section_layer(polys: &[ObstaclePolygon], h: f64) -> Vec<ObstaclePolygon> {
    polys
        .iter()
        .filter(|p| p.spans_altitude(h))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeClass {
    Boundary,
    Interior,
    Obstacle,
}

/// Uniform node grid over a region with every node classified as boundary,
/// interior or obstacle. Node `(i, j)` has id `j * nx + i`.
#[derive(Debug, Clone)]
pub struct Grid {
    pub region: Region,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub inflation: f64,
    sections: Vec<ObstaclePolygon>,
    classes: Vec<NodeClass>,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn id(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn ij(&self, id: usize) -> (usize, usize) {
        (id % self.nx, id / self.nx)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.region.x_min + i as f64 * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        self.region.y_min + j as f64 * self.dy
    }

    pub fn point(&self, id: usize) -> Point2 {
        let (i, j) = self.ij(id);
        Point2::new(self.x(i), self.y(j))
    }

    pub fn class(&self, id: usize) -> NodeClass {
        self.classes[id]
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    pub fn sections(&self) -> &[ObstaclePolygon] {
        &self.sections
    }

    pub fn count(&self, class: NodeClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn m_b(&self) -> usize {
        self.count(NodeClass::Boundary)
    }

    pub fn m_i(&self) -> usize {
        self.count(NodeClass::Interior)
    }

    pub fn m_o(&self) -> usize {
        self.count(NodeClass::Obstacle)
    }

    pub fn side_of(&self, id: usize) -> Option<Side> {
        let (i, j) = self.ij(id);
        if i == 0 {
            Some(Side::Left)
        } else if i == self.nx - 1 {
            Some(Side::Right)
        } else if j == 0 {
            Some(Side::Bottom)
        } else if j == self.ny - 1 {
            Some(Side::Top)
        } else {
            None
        }
    }

    /// 4-neighbors as `[west, east, south, north]`; `None` off the grid.
    pub fn neighbors(&self, id: usize) -> [Option<usize>; 4] {
        let (i, j) = self.ij(id);
        [
            (i > 0).then(|| id - 1),
            (i + 1 < self.nx).then(|| id + 1),
            (j > 0).then(|| id - self.nx),
            (j + 1 < self.ny).then(|| id + self.nx),
        ]
    }

    /// Undirected 4-neighbor edges, each listed once.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |id| {
            let [_, east, _, north] = self.neighbors(id);
            east.into_iter().chain(north).map(move |n| (id, n))
        })
    }

    #[cfg(test)]
    pub(crate) fn set_class(&mut self, id: usize, class: NodeClass) {
        self.classes[id] = class;
    }

    /// Point lies inside some obstacle section grown by the grid inflation.
    pub fn in_obstacle(&self, p: Point2) -> bool {
        self.sections
            .iter()
            .any(|s| s.contains_inflated(p, self.inflation))
    }
}

/// Discretizes `region` and classifies nodes. Spacings are adjusted so that the
/// grid lines land exactly on the region sides.
pub fn build_grid(
    region: Region,
    sections: &[ObstaclePolygon],
    dx: f64,
    dy: f64,
    inflation: f64,
) -> Result<Grid, AirspaceError> {
    region.validate()?;
    if !(dx > 0.0 && dy > 0.0) || !(inflation >= 0.0) {
        return Err(AirspaceError::InvalidGrid(format!(
            "need dx, dy > 0 and inflation >= 0, got dx={dx}, dy={dy}, inflation={inflation}"
        )));
    }
    let nx = (region.width() / dx).round() as usize + 1;
    let ny = (region.height() / dy).round() as usize + 1;
    if nx < 3 || ny < 3 {
        return Err(AirspaceError::InvalidGrid(format!(
            "grid needs at least 3 nodes per axis, got {nx} x {ny}"
        )));
    }
    let dx = region.width() / (nx - 1) as f64;
    let dy = region.height() / (ny - 1) as f64;

    let mut grid = Grid {
        region,
        nx,
        ny,
        dx,
        dy,
        inflation,
        sections: sections.to_vec(),
        classes: vec![NodeClass::Interior; nx * ny],
    };
    for j in 0..ny {
        for i in 0..nx {
            let id = grid.id(i, j);
            grid.classes[id] = if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                NodeClass::Boundary
            } else if grid.in_obstacle(Point2::new(grid.x(i), grid.y(j))) {
                NodeClass::Obstacle
            } else {
                NodeClass::Interior
            };
        }
    }
    if !interior_connects(&grid, Axis::X) || !interior_connects(&grid, Axis::Y) {
        return Err(AirspaceError::ObstacleTouchesBoundary);
    }
    Ok(grid)
}

/// Whether interior nodes link the first interior column to the last one (axis x),
/// or the first interior row to the last one (axis y).
fn interior_connects(grid: &Grid, axis: Axis) -> bool {
    let (nx, ny) = (grid.nx, grid.ny);
    let starts: Vec<usize> = match axis {
        Axis::X => (1..ny - 1).map(|j| grid.id(1, j)).collect(),
        Axis::Y => (1..nx - 1).map(|i| grid.id(i, 1)).collect(),
    };
    let reached_end = |id: usize| {
        let (i, j) = grid.ij(id);
        match axis {
            Axis::X => i == nx - 2,
            Axis::Y => j == ny - 2,
        }
    };
    let mut seen = vec![false; grid.len()];
    let mut queue = VecDeque::new();
    for s in starts {
        if grid.class(s) == NodeClass::Interior {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(id) = queue.pop_front() {
        if reached_end(id) {
            return true;
        }
        for n in grid.neighbors(id).into_iter().flatten() {
            if !seen[n] && grid.class(n) == NodeClass::Interior {
                seen[n] = true;
                queue.push_back(n);
            }
        }
    }
    false
}
