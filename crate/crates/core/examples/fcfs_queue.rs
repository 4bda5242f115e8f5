//! Three UAS ask for the same entry point at the same tick. The first keeps its
//! optimal path, the later ones are deconflicted around the reservations.

use airway::airspace::{LayerStack, Region};
use airway::corridor::CorridorConfig;
use airway::engine::{Engine, EngineConfig, Event, EventKind, RequestKind, UasRequest};
use airway::flow::SolveOptions;
use airway::geometry::Point3;
use airway::mdp::ValueIterationConfig;
use airway::network::NetworkConfig;
use airway::planner::TransitionModel;
use airway::reservation::UasId;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EngineConfig {
        network: NetworkConfig {
            region: Region::new(0.0, 200.0, 0.0, 200.0)?,
            dx: 5.0,
            dy: 5.0,
            inflation: 5.0,
            solve: SolveOptions::default(),
            corridors: CorridorConfig {
                streamlines_odd: 4,
                streamlines_even: 4,
                spacing: 10.0,
            },
        },
        transition: TransitionModel::default(),
        j0: 15.0,
        vi: ValueIterationConfig::default(),
        horizon: 60,
    };
    let mut engine = Engine::new(cfg, Vec::new(), &LayerStack::standard(&[20.0, 25.0, 30.0])?)?;
    let y = engine.network().sets[0].waypoints[1][0].y;
    for uas in 1..=3 {
        let req = UasRequest {
            uas: UasId(uas),
            entry: Point3::new(0.0, y, 20.0),
            goal: Point3::new(200.0, y, 20.0),
            kind: RequestKind::Enter,
        };
        engine.step(&Event {
            t: 0,
            kind: EventKind::NewRequest(req),
        })?;
    }
    for (id, rec) in engine.records() {
        let p = rec.path().ok_or("no path")?;
        println!(
            "UAS {id}: entry delay {}, arrival t={}, cost {:.2}, layer changes {}, time-expanded {}",
            p.entry_delay,
            p.arrival(),
            p.cost,
            p.layer_changes(),
            p.time_expanded
        );
    }
    println!(
        "{} reserved cells, audit passed: {}",
        engine.reservations().len(),
        engine.audit().passed()
    );
    Ok(())
}
