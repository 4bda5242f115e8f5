//! One UAS planned by value iteration on a three-layer corridor network, with
//! and without the layer-change penalty.

use airway::airspace::{LayerStack, ObstacleKind, ObstaclePolygon, Region};
use airway::corridor::CorridorConfig;
use airway::flow::SolveOptions;
use airway::geometry::{Point2, Point3};
use airway::mdp::ValueIterationConfig;
use airway::network::{build_network, NetworkConfig};
use airway::planner::{build_state_space, plan_path, CostModel, PlanRequest, TransitionModel};
use airway::reservation::{ReservationTable, UasId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = NetworkConfig {
        region: Region::new(0.0, 200.0, 0.0, 200.0)?,
        dx: 5.0,
        dy: 5.0,
        inflation: 5.0,
        solve: SolveOptions::default(),
        corridors: CorridorConfig {
            streamlines_odd: 6,
            streamlines_even: 6,
            spacing: 10.0,
        },
    };
    let tower = ObstaclePolygon::cylinder(
        Point2::new(100.0, 60.0),
        25.0,
        0.0,
        22.0,
        ObstacleKind::Building,
    )?;
    let net = build_network(
        &cfg,
        LayerStack::standard(&[20.0, 25.0, 30.0])?.with_sections(&[tower]),
    )?;
    let space = build_state_space(&net.sets, 1, TransitionModel::default())?;

    let lane = &net.sets[0].waypoints[1];
    let (first, last) = (lane[0], lane[lane.len() - 1]);
    let start = space
        .snap(Point3::new(first.x, first.y, first.z))
        .ok_or("start off the network")?;
    let goal = space
        .snap(Point3::new(last.x, last.y, last.z))
        .ok_or("goal off the network")?;
    println!(
        "{} spatial states; start {:?}, goal {:?}",
        space.n_spatial(),
        space.key(start),
        space.key(goal)
    );

    for j0 in [0.0, 15.0] {
        let req = PlanRequest {
            uas: UasId(1),
            start,
            goal,
            t0: 0,
            airborne: false,
        };
        let path = plan_path(
            &space,
            CostModel::new(j0, cfg.corridors.spacing),
            &ValueIterationConfig::default(),
            &ReservationTable::new(),
            &req,
        )?;
        let actions: String = path
            .steps
            .iter()
            .filter_map(|s| s.action)
            .map(|a| a.label().trim_start_matches('a').to_string())
            .collect();
        println!(
            "J0 = {j0:>4}: cost {:.2}, {} steps, {} layer changes, actions {actions}",
            path.cost,
            path.steps.len(),
            path.layer_changes()
        );
    }
    Ok(())
}
