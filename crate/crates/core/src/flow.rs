//! Stream-function fields over one layer.
//!
//! Two routes are provided: the closed-form doublet superposition for circular
//! zones, and a finite-difference solve of the Laplace equation on a classified
//! grid for arbitrary polygonal zones. Boundary nodes carry a linear profile that
//! makes the domain sides streamlines; obstacle nodes are pinned at zero.
//!
//! Interior nodes next to an obstacle can use a cut-cell stencil: the neighbor
//! arm is shortened to the distance at which the grown obstacle outline is met,
//! which keeps the scheme second order near curved outlines. Away from
//! obstacles (and with [`BoundaryTreatment::Staircase`]) the plain 5-point
//! stencil is used.

use crate::airspace::{Axis, Grid, NodeClass, Region, Side};
use crate::geometry::Point2;
use crate::linsolve::{self, CsrMatrix};
use num_complex::Complex64;
use thiserror::Error;

/// Corner agreement tolerance for boundary constants.
pub const CORNER_TOL: f64 = 1e-9;
/// Default solver tolerance, relative to the span of fixed values.
pub const DEFAULT_TOL: f64 = 1e-8;
/// Systems up to this many unknowns are factored directly.
pub const DIRECT_LIMIT: usize = 250_000;
pub const SOR_OMEGA: f64 = 1.8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("query point ({x}, {y}) coincides with a doublet center")]
    SingularPoint { x: f64, y: f64 },
    #[error("invalid analytic flow spec: {0}")]
    InvalidAnalyticSpec(String),
    #[error("invalid boundary condition: {0}")]
    InvalidBoundarySpec(String),
    #[error("boundary formulas disagree at corner ({x}, {y}) by {gap:e}")]
    InconsistentCorners { x: f64, y: f64, gap: f64 },
    #[error("fixed value vector has {got} entries, grid has {expected}")]
    FixedValueMismatch { expected: usize, got: usize },
    #[error("solver stopped at relative defect {defect:e} (tol {tol:e}) after {sweeps} sweeps")]
    SolverDiverged {
        defect: f64,
        tol: f64,
        sweeps: usize,
    },
    #[error("field carries no potential function")]
    PhiAbsent,
}

/// Constants of the linear boundary profile.
///
/// For `Axis::X` the left and right sides carry `K1*y + K2` (with `K3 = 0`), the
/// bottom side carries the constant `K4`, and the top side carries the constant
/// that continues the profile to `y_max`. For `Axis::Y` the bottom and top carry
/// `K3*x + K4` (with `K1 = 0`), the left side carries `K2`, and the right side
/// the matching constant at `x_max`. Corners must agree with both sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryConditionSpec {
    pub axis: Axis,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

impl BoundaryConditionSpec {
    /// Streamlines along x with `Psi = k1*y + k2` on the inflow/outflow sides.
    pub fn along_x(region: &Region, k1: f64, k2: f64) -> Self {
        Self {
            axis: Axis::X,
            k1,
            k2,
            k3: 0.0,
            k4: k1 * region.y_min + k2,
        }
    }

    /// Streamlines along y with `Psi = k3*x + k4` on the inflow/outflow sides.
    pub fn along_y(region: &Region, k3: f64, k4: f64) -> Self {
        Self {
            axis: Axis::Y,
            k1: 0.0,
            k2: k3 * region.x_min + k4,
            k3,
            k4,
        }
    }

    /// Unit slope with the zero level on the domain midline, so obstacles sit on
    /// the dividing streamline.
    pub fn centered(region: &Region, axis: Axis) -> Self {
        let c = region.center();
        match axis {
            Axis::X => Self::along_x(region, 1.0, -c.y),
            Axis::Y => Self::along_y(region, 1.0, -c.x),
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let ok = match self.axis {
            Axis::X => self.k3 == 0.0 && self.k1 != 0.0,
            Axis::Y => self.k1 == 0.0 && self.k3 != 0.0,
        };
        if !ok
            || ![self.k1, self.k2, self.k3, self.k4]
                .iter()
                .all(|k| k.is_finite())
        {
            return Err(FlowError::InvalidBoundarySpec(format!(
                "axis {:?} requires {}",
                self.axis,
                match self.axis {
                    Axis::X => "K3 = 0 and K1 != 0",
                    Axis::Y => "K1 = 0 and K3 != 0",
                }
            )));
        }
        Ok(())
    }

    /// Value prescribed at a boundary point on `side`.
    fn side_value(&self, region: &Region, side: Side, p: Point2) -> f64 {
        match (self.axis, side) {
            (Axis::X, Side::Left | Side::Right) => self.k1 * p.y + self.k2,
            (Axis::X, Side::Bottom) => self.k4,
            (Axis::X, Side::Top) => self.k4 + self.k1 * region.height(),
            (Axis::Y, Side::Bottom | Side::Top) => self.k3 * p.x + self.k4,
            (Axis::Y, Side::Left) => self.k2,
            (Axis::Y, Side::Right) => self.k2 + self.k3 * region.width(),
        }
    }

    fn check_corners(&self, region: &Region) -> Result<(), FlowError> {
        let corners = [
            (
                Point2::new(region.x_min, region.y_min),
                Side::Left,
                Side::Bottom,
            ),
            (
                Point2::new(region.x_max, region.y_min),
                Side::Right,
                Side::Bottom,
            ),
            (
                Point2::new(region.x_max, region.y_max),
                Side::Right,
                Side::Top,
            ),
            (
                Point2::new(region.x_min, region.y_max),
                Side::Left,
                Side::Top,
            ),
        ];
        for (p, vertical, horizontal) in corners {
            let a = self.side_value(region, vertical, p);
            let b = self.side_value(region, horizontal, p);
            let gap = (a - b).abs();
            if gap > CORNER_TOL * (1.0 + a.abs().max(b.abs())) {
                return Err(FlowError::InconsistentCorners {
                    x: p.x,
                    y: p.y,
                    gap,
                });
            }
        }
        Ok(())
    }
}

/// Fixed values for every boundary and obstacle node; `None` for interior nodes.
pub fn boundary_values(
    grid: &Grid,
    bc: &BoundaryConditionSpec,
) -> Result<Vec<Option<f64>>, FlowError> {
    bc.validate()?;
    bc.check_corners(&grid.region)?;
    // Corners take the inflow/outflow-side formula.
    let corner_side = |i: usize, j: usize| -> Option<Side> {
        let (left, right) = (i == 0, i == grid.nx - 1);
        let (bottom, top) = (j == 0, j == grid.ny - 1);
        match bc.axis {
            Axis::X if left => Some(Side::Left),
            Axis::X if right => Some(Side::Right),
            Axis::X if bottom => Some(Side::Bottom),
            Axis::X if top => Some(Side::Top),
            Axis::Y if bottom => Some(Side::Bottom),
            Axis::Y if top => Some(Side::Top),
            Axis::Y if left => Some(Side::Left),
            Axis::Y if right => Some(Side::Right),
            _ => None,
        }
    };
    Ok((0..grid.len())
        .map(|id| match grid.class(id) {
            NodeClass::Interior => None,
            NodeClass::Obstacle => Some(0.0),
            NodeClass::Boundary => {
                let (i, j) = grid.ij(id);
                let side = corner_side(i, j).expect("boundary node lies on a side");
                Some(bc.side_value(&grid.region, side, grid.point(id)))
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTreatment {
    /// Plain 5-point stencil; obstacle nodes act at full grid distance.
    Staircase,
    /// Shortened stencil arms ending on the grown obstacle outline.
    CutCell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Direct up to [`DIRECT_LIMIT`] unknowns, SOR above.
    Auto,
    Direct,
    Sor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub method: SolverMethod,
    pub treatment: BoundaryTreatment,
    pub omega: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            method: SolverMethod::Auto,
            treatment: BoundaryTreatment::CutCell,
            omega: SOR_OMEGA,
        }
    }
}

/// Stencil equations over the interior nodes, with fixed neighbor values moved to
/// the right-hand side.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    /// Grid node id of each unknown, in row order.
    pub unknowns: Vec<usize>,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    row_of: Vec<Option<usize>>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.unknowns.len()
    }

    pub fn row_of(&self, node: usize) -> Option<usize> {
        self.row_of[node]
    }

    /// Largest diagonal-scaled stencil defect of a full nodal vector.
    pub fn defect(&self, psi: &[f64]) -> f64 {
        let x: Vec<f64> = self.unknowns.iter().map(|&n| psi[n]).collect();
        (0..self.dim())
            .map(|r| ((self.matrix.mul_row(r, &x) - self.rhs[r]) / self.matrix.diag(r)).abs())
            .fold(0.0, f64::max)
    }
}

/// Fraction of the arm from `from` toward the obstacle node `to` at which the
/// grown obstacle outline is reached.
fn cut_fraction(grid: &Grid, from: Point2, to: Point2) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        if grid.in_obstacle(from + (to - from) * mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi.max(1e-6)
}

/// Assembles the interior system. `fixed` must hold a value for every boundary and
/// obstacle node.
pub fn assemble_system(
    grid: &Grid,
    fixed: &[Option<f64>],
    treatment: BoundaryTreatment,
) -> Result<LinearSystem, FlowError> {
    if fixed.len() != grid.len() {
        return Err(FlowError::FixedValueMismatch {
            expected: grid.len(),
            got: fixed.len(),
        });
    }
    // Order unknowns along the longer axis first so the band stays narrow.
    let order: Vec<usize> = if grid.nx <= grid.ny {
        (0..grid.ny)
            .flat_map(|j| (0..grid.nx).map(move |i| (i, j)))
            .map(|(i, j)| grid.id(i, j))
            .collect()
    } else {
        (0..grid.nx)
            .flat_map(|i| (0..grid.ny).map(move |j| (i, j)))
            .map(|(i, j)| grid.id(i, j))
            .collect()
    };
    let unknowns: Vec<usize> = order
        .into_iter()
        .filter(|&id| grid.class(id) == NodeClass::Interior)
        .collect();
    let mut row_of = vec![None; grid.len()];
    for (r, &id) in unknowns.iter().enumerate() {
        row_of[id] = Some(r);
    }

    let mut matrix = CsrMatrix::new(unknowns.len());
    let mut rhs = Vec::with_capacity(unknowns.len());
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(5);
    for (r, &id) in unknowns.iter().enumerate() {
        let [west, east, south, north] = grid.neighbors(id);
        let p = grid.point(id);
        entries.clear();
        let mut diag = 0.0;
        let mut b = 0.0;
        for (pair, h) in [([west, east], grid.dx), ([south, north], grid.dy)] {
            // Arm lengths as fractions of h, then the 1-D second difference
            // 2/(a+b) * ((u_plus - u)/b - (u - u_minus)/a).
            let arms: Vec<(usize, f64)> = pair
                .iter()
                .map(|n| {
                    let n = n.expect("interior nodes have four neighbors");
                    let theta = if treatment == BoundaryTreatment::CutCell
                        && grid.class(n) == NodeClass::Obstacle
                    {
                        cut_fraction(grid, p, grid.point(n))
                    } else {
                        1.0
                    };
                    (n, theta * h)
                })
                .collect();
            let (a, bb) = (arms[0].1, arms[1].1);
            for &(n, arm) in &arms {
                let w = 2.0 / (arm * (a + bb));
                diag += w;
                match row_of[n] {
                    Some(c) => entries.push((c, -w)),
                    None => {
                        let v = fixed[n].ok_or(FlowError::FixedValueMismatch {
                            expected: grid.len(),
                            got: fixed.len(),
                        })?;
                        b += w * v;
                    }
                }
            }
        }
        entries.push((r, diag));
        entries.sort_by_key(|e| e.0);
        matrix.push_row(&entries);
        rhs.push(b);
    }
    Ok(LinearSystem {
        unknowns,
        matrix,
        rhs,
        row_of,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverUsed {
    Direct,
    Sor { sweeps: usize },
}

/// Nodal stream-function values on a grid.
#[derive(Debug, Clone)]
pub struct FlowField {
    pub grid: Grid,
    pub psi: Vec<f64>,
    /// Potential function, present only for analytic fields.
    pub phi: Option<Vec<f64>>,
    /// Max stencil defect over interior nodes, relative to the fixed-value span.
    pub residual: f64,
    pub bc: Option<BoundaryConditionSpec>,
    pub solver: Option<SolverUsed>,
}

impl FlowField {
    /// Min and max over boundary and obstacle nodes.
    pub fn fixed_range(&self) -> (f64, f64) {
        self.range_over(|c| c != NodeClass::Interior)
    }

    /// Min and max over boundary nodes only.
    pub fn boundary_range(&self) -> (f64, f64) {
        self.range_over(|c| c == NodeClass::Boundary)
    }

    fn range_over(&self, keep: impl Fn(NodeClass) -> bool) -> (f64, f64) {
        self.psi
            .iter()
            .zip(self.grid.classes())
            .filter(|(_, &c)| keep(c))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&v, _)| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Bilinear interpolation of psi; points outside the region are clamped.
    pub fn psi_at(&self, p: Point2) -> f64 {
        let g = &self.grid;
        let fx = ((p.x - g.region.x_min) / g.dx).clamp(0.0, (g.nx - 1) as f64);
        let fy = ((p.y - g.region.y_min) / g.dy).clamp(0.0, (g.ny - 1) as f64);
        let i = (fx.floor() as usize).min(g.nx - 2);
        let j = (fy.floor() as usize).min(g.ny - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let v = |i, j| self.psi[g.id(i, j)];
        (1.0 - tx) * (1.0 - ty) * v(i, j)
            + tx * (1.0 - ty) * v(i + 1, j)
            + tx * ty * v(i + 1, j + 1)
            + (1.0 - tx) * ty * v(i, j + 1)
    }
}

fn span(fixed: &[Option<f64>]) -> f64 {
    let (lo, hi) = fixed
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi > lo {
        hi - lo
    } else {
        1.0
    }
}

/// Solves for psi on the interior nodes given fixed values elsewhere.
pub fn solve_with_fixed(
    grid: &Grid,
    fixed: &[Option<f64>],
    opts: &SolveOptions,
) -> Result<FlowField, FlowError> {
    if !(opts.tol > 0.0) {
        return Err(FlowError::InvalidBoundarySpec(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let system = assemble_system(grid, fixed, opts.treatment)?;
    let scale = span(fixed);
    let n = system.dim();
    let use_direct = match opts.method {
        SolverMethod::Direct => true,
        SolverMethod::Sor => false,
        SolverMethod::Auto => n <= DIRECT_LIMIT,
    };
    let mut psi: Vec<f64> = fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
    let solver = if use_direct {
        let x = linsolve::band_lu_solve(&system.matrix, &system.rhs).ok_or(
            FlowError::SolverDiverged {
                defect: f64::INFINITY,
                tol: opts.tol,
                sweeps: 0,
            },
        )?;
        for (r, &id) in system.unknowns.iter().enumerate() {
            psi[id] = x[r];
        }
        SolverUsed::Direct
    } else {
        // Start from the mean fixed value.
        let count = fixed.iter().flatten().count().max(1);
        let mean = fixed.iter().flatten().sum::<f64>() / count as f64;
        let mut x = vec![mean; n];
        let report = linsolve::sor_solve(
            &system.matrix,
            &system.rhs,
            &mut x,
            opts.omega,
            50 * n.max(1),
            opts.tol * scale,
        );
        for (r, &id) in system.unknowns.iter().enumerate() {
            psi[id] = x[r];
        }
        SolverUsed::Sor {
            sweeps: report.sweeps,
        }
    };
    let residual = system.defect(&psi) / scale;
    if !(residual <= opts.tol) {
        return Err(FlowError::SolverDiverged {
            defect: residual,
            tol: opts.tol,
            sweeps: match solver {
                SolverUsed::Sor { sweeps } => sweeps,
                SolverUsed::Direct => 0,
            },
        });
    }
    Ok(FlowField {
        grid: grid.clone(),
        psi,
        phi: None,
        residual,
        bc: None,
        solver: Some(solver),
    })
}

/// Stream function of one layer under the linear boundary profile `bc`.
pub fn solve_stream_function(
    grid: &Grid,
    bc: &BoundaryConditionSpec,
    opts: &SolveOptions,
) -> Result<FlowField, FlowError> {
    let fixed = boundary_values(grid, bc)?;
    let mut field = solve_with_fixed(grid, &fixed, opts)?;
    field.bc = Some(*bc);
    Ok(field)
}

/// Circular zones wrapped by superposed uniform-flow-plus-doublet terms.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticFlowSpec {
    pub centers: Vec<Point2>,
    pub radii: Vec<f64>,
}

impl AnalyticFlowSpec {
    pub fn new(centers: Vec<Point2>, radii: Vec<f64>) -> Result<Self, FlowError> {
        if centers.len() != radii.len() || centers.is_empty() {
            return Err(FlowError::InvalidAnalyticSpec(
                "need one radius per center and at least one zone".into(),
            ));
        }
        if radii.iter().any(|&r| !(r > 0.0)) {
            return Err(FlowError::InvalidAnalyticSpec(
                "radii must be positive".into(),
            ));
        }
        for i in 0..centers.len() {
            for j in (i + 1)..centers.len() {
                if centers[i].distance(centers[j]) <= radii[i] + radii[j] {
                    return Err(FlowError::InvalidAnalyticSpec(format!(
                        "wrapping circles {i} and {j} overlap"
                    )));
                }
            }
        }
        Ok(Self { centers, radii })
    }

    /// `f(z) = sum_i (z - z_i + r_i^2 / (z - z_i))`.
    pub fn complex_potential(&self, p: Point2) -> Result<Complex64, FlowError> {
        let z = Complex64::new(p.x, p.y);
        let mut f = Complex64::new(0.0, 0.0);
        for (c, &r) in self.centers.iter().zip(&self.radii) {
            let w = z - Complex64::new(c.x, c.y);
            if w.norm() == 0.0 {
                return Err(FlowError::SingularPoint { x: p.x, y: p.y });
            }
            f += w + r * r / w;
        }
        Ok(f)
    }
}

/// `(phi, psi)` at each query point.
pub fn analytic_field(
    spec: &AnalyticFlowSpec,
    points: &[Point2],
) -> Result<Vec<(f64, f64)>, FlowError> {
    points
        .iter()
        .map(|&p| spec.complex_potential(p).map(|f| (f.re, f.im)))
        .collect()
}

/// Analytic field sampled on a grid. Obstacle nodes are set to zero in both
/// functions, matching the numerical convention.
pub fn analytic_flow_field(spec: &AnalyticFlowSpec, grid: &Grid) -> Result<FlowField, FlowError> {
    let mut psi = vec![0.0; grid.len()];
    let mut phi = vec![0.0; grid.len()];
    for id in 0..grid.len() {
        if grid.class(id) == NodeClass::Obstacle {
            continue;
        }
        let f = spec.complex_potential(grid.point(id))?;
        phi[id] = f.re;
        psi[id] = f.im;
    }
    Ok(FlowField {
        grid: grid.clone(),
        psi,
        phi: Some(phi),
        residual: 0.0,
        bc: None,
        solver: None,
    })
}

/// Largest central-difference Cauchy–Riemann defect over interior nodes whose
/// neighbors are all free of obstacles.
pub fn verify_cauchy_riemann(field: &FlowField) -> Result<f64, FlowError> {
    let phi = field.phi.as_ref().ok_or(FlowError::PhiAbsent)?;
    let g = &field.grid;
    let psi = &field.psi;
    let mut worst = 0.0_f64;
    for id in 0..g.len() {
        if g.class(id) != NodeClass::Interior {
            continue;
        }
        let [w, e, s, n] = g.neighbors(id).map(|n| n.expect("interior node"));
        if [w, e, s, n]
            .iter()
            .any(|&k| g.class(k) == NodeClass::Obstacle)
        {
            continue;
        }
        let phi_x = (phi[e] - phi[w]) / (2.0 * g.dx);
        let phi_y = (phi[n] - phi[s]) / (2.0 * g.dy);
        let psi_x = (psi[e] - psi[w]) / (2.0 * g.dx);
        let psi_y = (psi[n] - psi[s]) / (2.0 * g.dy);
        worst = worst.max((phi_x - psi_y).abs()).max((phi_y + psi_x).abs());
    }
    Ok(worst)
}
