//! Single-contour marching squares on a nodal grid.
//!
//! A contour is traced cell by cell from one side of the domain until it leaves
//! through another. Crossings are placed by linear interpolation along cell
//! edges; a node whose value equals the level counts as above it. Saddle cells
//! are split by the cell-average rule.

use crate::airspace::{Axis, Grid};
use crate::geometry::Point2;

/// Where a traced contour left the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    /// Far side opposite the start side.
    Opposite,
    /// Any other side of the domain.
    Elsewhere,
    /// Trace ran longer than the cell count (closed loop).
    Looped,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub points: Vec<Point2>,
    pub exit: Exit,
}

// Cell corners: 0 = (i, j), 1 = (i+1, j), 2 = (i+1, j+1), 3 = (i, j+1).
// Edge e joins corner e and corner (e+1) % 4: 0 bottom, 1 right, 2 top, 3 left.
const BOTTOM: usize = 0;
const RIGHT: usize = 1;
const TOP: usize = 2;
const LEFT: usize = 3;

struct Cell<'a> {
    grid: &'a Grid,
    values: &'a [f64],
    level: f64,
}

impl Cell<'_> {
    fn corner(&self, i: usize, j: usize, c: usize) -> usize {
        let (di, dj) = [(0, 0), (1, 0), (1, 1), (0, 1)][c];
        self.grid.id(i + di, j + dj)
    }

    fn above(&self, node: usize) -> bool {
        self.values[node] >= self.level
    }

    fn crosses(&self, i: usize, j: usize, e: usize) -> bool {
        let a = self.corner(i, j, e);
        let b = self.corner(i, j, (e + 1) % 4);
        self.above(a) != self.above(b)
    }

    fn crossing_point(&self, i: usize, j: usize, e: usize) -> Point2 {
        let a = self.corner(i, j, e);
        let b = self.corner(i, j, (e + 1) % 4);
        let (va, vb) = (self.values[a], self.values[b]);
        let t = ((self.level - va) / (vb - va)).clamp(0.0, 1.0);
        let (pa, pb) = (self.grid.point(a), self.grid.point(b));
        pa + (pb - pa) * t
    }

    /// Edge through which a contour entering at `entry` leaves the cell.
    fn exit_edge(&self, i: usize, j: usize, entry: usize) -> Option<usize> {
        let crossing: Vec<usize> = (0..4).filter(|&e| self.crosses(i, j, e)).collect();
        match crossing.len() {
            2 => crossing.into_iter().find(|&e| e != entry),
            4 => {
                let mean = (0..4)
                    .map(|c| self.values[self.corner(i, j, c)])
                    .sum::<f64>()
                    / 4.0;
                let centre_above = mean >= self.level;
                // Corners on the other side of the centre are cut off by the
                // contour; each pairs its two adjacent edges.
                (0..4)
                    .filter(|&c| self.above(self.corner(i, j, c)) != centre_above)
                    .map(|c| ((c + 3) % 4, c))
                    .find_map(|(e1, e2)| {
                        if e1 == entry {
                            Some(e2)
                        } else if e2 == entry {
                            Some(e1)
                        } else {
                            None
                        }
                    })
            }
            _ => None,
        }
    }
}

/// Traces the `level` contour that starts on the inflow side for `axis`
/// (left side for x, bottom side for y). Returns `None` when the level does not
/// cross that side.
pub fn trace_from_inflow(grid: &Grid, values: &[f64], level: f64, axis: Axis) -> Option<Trace> {
    let cell = Cell {
        grid,
        values,
        level,
    };
    let (cx, cy) = (grid.nx - 1, grid.ny - 1);
    let (mut i, mut j, mut entry) = match axis {
        Axis::X => {
            let j = (0..cy).find(|&j| cell.crosses(0, j, LEFT))?;
            (0, j, LEFT)
        }
        Axis::Y => {
            let i = (0..cx).find(|&i| cell.crosses(i, 0, BOTTOM))?;
            (i, 0, BOTTOM)
        }
    };
    let mut points = vec![cell.crossing_point(i, j, entry)];
    let limit = 2 * cx * cy + 4;
    for _ in 0..limit {
        let Some(exit) = cell.exit_edge(i, j, entry) else {
            return Some(Trace {
                points,
                exit: Exit::Elsewhere,
            });
        };
        let p = cell.crossing_point(i, j, exit);
        if points
            .last()
            .is_none_or(|q| q.distance(p) > 1e-12 * (1.0 + p.norm()))
        {
            points.push(p);
        }
        let next = match exit {
            BOTTOM if j > 0 => Some((i, j - 1, TOP)),
            RIGHT if i + 1 < cx => Some((i + 1, j, LEFT)),
            TOP if j + 1 < cy => Some((i, j + 1, BOTTOM)),
            LEFT if i > 0 => Some((i - 1, j, RIGHT)),
            _ => None,
        };
        match next {
            Some((ni, nj, ne)) => {
                i = ni;
                j = nj;
                entry = ne;
            }
            None => {
                let opposite = matches!((axis, exit), (Axis::X, RIGHT) | (Axis::Y, TOP));
                let exit = if opposite {
                    Exit::Opposite
                } else {
                    Exit::Elsewhere
                };
                return Some(Trace { points, exit });
            }
        }
    }
    Some(Trace {
        points,
        exit: Exit::Looped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airspace::{build_grid, Region};

    #[test]
    fn linear_field_gives_straight_line() {
        let region = Region::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let g = build_grid(region, &[], 0.1, 0.1, 0.0).unwrap();
        let values: Vec<f64> = (0..g.len()).map(|id| g.point(id).y).collect();
        let t = trace_from_inflow(&g, &values, 0.55, Axis::X).unwrap();
        assert_eq!(t.exit, Exit::Opposite);
        assert_eq!(t.points.len(), 11);
        for p in &t.points {
            assert!((p.y - 0.55).abs() < 1e-12);
        }
        assert!((t.points[0].x - 0.0).abs() < 1e-12);
        assert!((t.points[10].x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn axis_y_trace_runs_bottom_to_top() {
        let region = Region::new(0.0, 2.0, 0.0, 1.0).unwrap();
        let g = build_grid(region, &[], 0.25, 0.25, 0.0).unwrap();
        let values: Vec<f64> = (0..g.len()).map(|id| g.point(id).x).collect();
        let t = trace_from_inflow(&g, &values, 1.1, Axis::Y).unwrap();
        assert_eq!(t.exit, Exit::Opposite);
        assert!(t.points.iter().all(|p| (p.x - 1.1).abs() < 1e-12));
        assert!(t.points.windows(2).all(|w| w[1].y > w[0].y));
    }

    #[test]
    fn contour_turning_back_is_reported() {
        // circle of radius ~0.55 about the centre leaves through the top or bottom
        let region = Region::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let g = build_grid(region, &[], 0.05, 0.05, 0.0).unwrap();
        let values: Vec<f64> = (0..g.len())
            .map(|id| {
                let p = g.point(id);
                (p.x - 0.5).powi(2) + (p.y - 0.5).powi(2)
            })
            .collect();
        let t = trace_from_inflow(&g, &values, 0.3, Axis::X).unwrap();
        assert_eq!(t.exit, Exit::Elsewhere);
    }

    #[test]
    fn saddle_uses_cell_average() {
        let region = Region::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let g = build_grid(region, &[], 0.5, 0.5, 0.0).unwrap();
        let mut values = vec![0.0; g.len()];
        // cell (0,0): corners bl=1, br=0, tr=1, tl=0 -> saddle at level 0.5
        values[g.id(0, 0)] = 1.0;
        values[g.id(1, 0)] = 0.0;
        values[g.id(1, 1)] = 1.0;
        values[g.id(0, 1)] = 0.0;
        let cell = Cell {
            grid: &g,
            values: &values,
            level: 0.5,
        };
        // mean 0.5 >= level: centre above, low corners 1 and 3 are cut off
        assert_eq!(cell.exit_edge(0, 0, BOTTOM), Some(RIGHT));
        assert_eq!(cell.exit_edge(0, 0, LEFT), Some(TOP));
        let cell = Cell {
            grid: &g,
            values: &values,
            level: 0.6,
        };
        // mean below: high corners 0 and 2 are cut off
        assert_eq!(cell.exit_edge(0, 0, BOTTOM), Some(LEFT));
        assert_eq!(cell.exit_edge(0, 0, RIGHT), Some(TOP));
    }
}
