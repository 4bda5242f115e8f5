//! Stream function of one layer around two buildings, then streamline
//! extraction and waypoint discretization.

use airway::airspace::{build_grid, LayerStack, ObstacleKind, ObstaclePolygon, Region};
use airway::corridor::{default_levels, discretize, extract_streamlines};
use airway::flow::{solve_stream_function, BoundaryConditionSpec, SolveOptions};
use airway::geometry::Point2;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let region = Region::new(0.0, 300.0, 0.0, 200.0)?;
    let buildings = [
        ObstaclePolygon::new(
            vec![
                Point2::new(80.0, 70.0),
                Point2::new(130.0, 80.0),
                Point2::new(120.0, 130.0),
                Point2::new(90.0, 120.0),
            ],
            0.0,
            40.0,
            ObstacleKind::Building,
        )?,
        ObstaclePolygon::cylinder(
            Point2::new(210.0, 60.0),
            18.0,
            0.0,
            40.0,
            ObstacleKind::Building,
        )?,
    ];
    let stack = LayerStack::standard(&[20.0])?.with_sections(&buildings);
    let layer = &stack.layers()[0];

    let grid = build_grid(region, &layer.sections, 5.0, 5.0, 5.0)?;
    let bc = BoundaryConditionSpec::centered(&region, layer.axis());
    let field = solve_stream_function(&grid, &bc, &SolveOptions::default())?;
    println!(
        "{} x {} nodes, {} interior, relative residual {:.1e}",
        grid.nx,
        grid.ny,
        grid.m_i(),
        field.residual
    );

    let levels = default_levels(&field, 8);
    for line in extract_streamlines(&field, &levels, layer)? {
        let wps = discretize(&line, 10.0)?;
        let worst = line
            .polyline
            .iter()
            .map(|&p| (field.psi_at(p) - line.level).abs())
            .fold(0.0, f64::max);
        println!(
            "level {:>7.2}: length {:>6.1} m, {:>2} waypoints, y {:>6.1} -> {:>6.1}, |psi - level| <= {worst:.1e}",
            line.level,
            line.length(),
            wps.len(),
            wps[0].y,
            wps[wps.len() - 1].y
        );
    }
    Ok(())
}
