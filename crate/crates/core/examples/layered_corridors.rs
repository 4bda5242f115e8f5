//! Corridor network over four layers with alternating headings. A tall building
//! cuts every layer, a low one only the bottom two.

use airway::airspace::{LayerStack, ObstacleKind, ObstaclePolygon, Region};
use airway::corridor::CorridorConfig;
use airway::flow::SolveOptions;
use airway::geometry::Point2;
use airway::network::{build_network, NetworkConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = NetworkConfig {
        region: Region::new(0.0, 300.0, 0.0, 300.0)?,
        dx: 5.0,
        dy: 5.0,
        inflation: 5.0,
        solve: SolveOptions::default(),
        corridors: CorridorConfig::default(),
    };
    let buildings = [
        ObstaclePolygon::rectangle(
            Point2::new(120.0, 130.0),
            Point2::new(160.0, 170.0),
            0.0,
            60.0,
            ObstacleKind::Building,
        )?,
        ObstaclePolygon::cylinder(
            Point2::new(220.0, 80.0),
            20.0,
            0.0,
            27.0,
            ObstacleKind::Building,
        )?,
    ];
    let stack = LayerStack::standard(&[20.0, 25.0, 30.0, 35.0])?.with_sections(&buildings);
    let net = build_network(&cfg, stack)?;
    for (layer, set) in net.layers.layers().iter().zip(&net.sets) {
        let waypoints: usize = set.waypoints.iter().map(Vec::len).sum();
        println!(
            "layer {} at {} m heading {}: {} sections, {} streamlines, {} waypoints",
            layer.index,
            layer.altitude,
            layer.heading.label(),
            layer.sections.len(),
            set.len(),
            waypoints
        );
    }
    println!(
        "grid {:?}, solve {:?}, corridors {:?}",
        net.times.grid, net.times.solve, net.times.corridors
    );
    Ok(())
}
