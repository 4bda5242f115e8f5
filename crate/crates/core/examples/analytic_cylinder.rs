//! Numerical stream function around a unit circle against the closed-form
//! doublet flow, with the observed convergence order and the Cauchy–Riemann
//! defect of the closed form.

use airway::airspace::{build_grid, NodeClass, ObstacleKind, ObstaclePolygon, Region};
use airway::flow::{
    analytic_flow_field, solve_with_fixed, verify_cauchy_riemann, AnalyticFlowSpec,
    BoundaryTreatment, SolveOptions,
};
use airway::geometry::Point2;

/// Max interior error of the cut-cell solve at spacing `h`.
fn max_error(spec: &AnalyticFlowSpec, region: Region, circle: &ObstaclePolygon, h: f64) -> f64 {
    let grid = build_grid(region, std::slice::from_ref(circle), h, h, 0.0).unwrap();
    let exact = analytic_flow_field(spec, &grid).unwrap();
    let fixed: Vec<Option<f64>> = (0..grid.len())
        .map(|id| match grid.class(id) {
            NodeClass::Interior => None,
            NodeClass::Obstacle => Some(0.0),
            NodeClass::Boundary => Some(exact.psi[id]),
        })
        .collect();
    let opts = SolveOptions {
        treatment: BoundaryTreatment::CutCell,
        ..SolveOptions::default()
    };
    let field = solve_with_fixed(&grid, &fixed, &opts).unwrap();
    (0..grid.len())
        .filter(|&id| grid.class(id) == NodeClass::Interior)
        .map(|id| (field.psi[id] - exact.psi[id]).abs())
        .fold(0.0, f64::max)
}

fn main() {
    let region = Region::new(-4.0, 4.0, -2.0, 2.0).unwrap();
    let origin = Point2::new(0.0, 0.0);
    let spec = AnalyticFlowSpec::new(vec![origin], vec![1.0]).unwrap();
    // fine enough that the polygon sits within 5e-6 of the circle
    let circle =
        ObstaclePolygon::regular(origin, 1.0, 1024, 0.0, 1.0, ObstacleKind::Building).unwrap();

    let hs = [0.1, 0.05, 0.025];
    let errors: Vec<f64> = hs
        .iter()
        .map(|&h| max_error(&spec, region, &circle, h))
        .collect();
    for (h, e) in hs.iter().zip(&errors) {
        println!("h = {h:<6} max interior error = {e:.3e}");
    }
    for w in errors.windows(2) {
        println!("observed order {:.2}", (w[0] / w[1]).log2());
    }

    let grid = build_grid(region, &[circle], 0.01, 0.01, 0.0).unwrap();
    let exact = analytic_flow_field(&spec, &grid).unwrap();
    println!(
        "Cauchy-Riemann defect at h = 0.01: {:.3e}",
        verify_cauchy_riemann(&exact).unwrap()
    );
}
