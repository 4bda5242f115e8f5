//! A UAS fails mid-flight. Its failure zone is cut into the nearby layers, the
//! corridors there are regenerated and the UAS behind it is replanned.

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
    let request = |uas| UasRequest {
        uas: UasId(uas),
        entry: Point3::new(0.0, y, 20.0),
        goal: Point3::new(200.0, y, 20.0),
        kind: RequestKind::Enter,
    };
    let events = [
        Event {
            t: 0,
            kind: EventKind::NewRequest(request(1)),
        },
        Event {
            t: 0,
            kind: EventKind::NewRequest(request(2)),
        },
        Event {
            t: 8,
            kind: EventKind::UasFailure {
                uas: UasId(1),
                position: None,
            },
        },
    ];
    for ev in &events {
        let out = engine.step(ev)?;
        println!(
            "t={:>2} {:?}: states {:?}, changed layers {:?}, replanned {:?}, held {:?}",
            out.t,
            out.branch(),
            out.states.iter().map(|s| s.label()).collect::<Vec<_>>(),
            out.changed_layers,
            out.replanned,
            out.held
        );
    }
    for (id, rec) in engine.records() {
        let p = rec.path().ok_or("no path")?;
        println!(
            "UAS {id}: {:?}, {} revisions, last step t={} at ({:.1}, {:.1}, {:.1})",
            rec.status,
            rec.revisions.len(),
            p.arrival(),
            p.steps.last().unwrap().x,
            p.steps.last().unwrap().y,
            p.steps.last().unwrap().z
        );
    }
    for entry in engine.log() {
        println!(
            "log t={} uas {} {} {}",
            entry.t,
            entry.uas,
            entry.outcome.label(),
            entry.detail
        );
    }
    println!("audit passed: {}", engine.audit().passed());
    Ok(())
}
