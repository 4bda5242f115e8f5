//! Shared fixtures for the integration tests: seeded random corridor instances
//! and an independent shortest-path oracle.

#![allow(dead_code)]

use airway::airspace::{LayerStack, ObstacleKind, ObstaclePolygon, Region};
use airway::corridor::{CorridorConfig, CorridorSet, WaypointKey};
use airway::flow::SolveOptions;
use airway::geometry::Point2;
use airway::network::{build_network, CorridorNetwork, NetworkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Up to `max_obstacles` cylinders and quadrilaterals kept clear of the domain
/// sides and of each other.
pub fn random_obstacles(
    rng: &mut impl Rng,
    region: &Region,
    max_obstacles: usize,
    clearance: f64,
) -> Vec<ObstaclePolygon> {
    let n = rng.gen_range(0..=max_obstacles);
    let mut out: Vec<(Point2, f64, ObstaclePolygon)> = Vec::new();
    let scale = region.width().min(region.height());
    for _ in 0..40 {
        if out.len() == n {
            break;
        }
        let r = rng.gen_range(0.04..0.12) * scale;
        let margin = r + clearance;
        if region.width() <= 2.0 * margin || region.height() <= 2.0 * margin {
            continue;
        }
        let c = Point2::new(
            rng.gen_range(region.x_min + margin..region.x_max - margin),
            rng.gen_range(region.y_min + margin..region.y_max - margin),
        );
        if out
            .iter()
            .any(|(o, ro, _)| o.distance(c) < r + ro + 2.0 * clearance)
        {
            continue;
        }
        let top = rng.gen_range(22.0..60.0);
        let poly = if rng.gen_bool(0.5) {
            ObstaclePolygon::cylinder(c, r, 0.0, top, ObstacleKind::Building).unwrap()
        } else {
            // a convex quadrilateral inscribed in the disk
            let a0: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let pts = (0..4)
                .map(|k| {
                    let a = a0 + k as f64 * std::f64::consts::FRAC_PI_2 + rng.gen_range(-0.3..0.3);
                    Point2::new(c.x + r * a.cos(), c.y + r * a.sin())
                })
                .collect();
            ObstaclePolygon::new(pts, 0.0, top, ObstacleKind::Building).unwrap()
        };
        out.push((c, r, poly));
    }
    out.into_iter().map(|(_, _, p)| p).collect()
}

pub struct Instance {
    pub cfg: NetworkConfig,
    pub net: CorridorNetwork,
}

/// A small random network, or `None` when corridor extraction rejects the map.
pub fn random_instance(seed: u64) -> Option<Instance> {
    let mut rng = rng(seed);
    let w = rng.gen_range(10..=24) as f64 * 10.0;
    let h = rng.gen_range(10..=24) as f64 * 10.0;
    let region = Region::new(0.0, w, 0.0, h).unwrap();
    let n_layers = rng.gen_range(1..=3);
    let altitudes: Vec<f64> = (0..n_layers).map(|i| 20.0 + 5.0 * i as f64).collect();
    let cfg = NetworkConfig {
        region,
        dx: 5.0,
        dy: 5.0,
        inflation: 5.0,
        solve: SolveOptions::default(),
        corridors: CorridorConfig {
            streamlines_odd: rng.gen_range(2..=8),
            streamlines_even: rng.gen_range(2..=8),
            spacing: 10.0,
        },
    };
    let obstacles = random_obstacles(&mut rng, &region, 3, 15.0);
    let stack = LayerStack::standard(&altitudes)
        .unwrap()
        .with_sections(&obstacles);
    build_network(&cfg, stack)
        .ok()
        .map(|net| Instance { cfg, net })
}

#[derive(PartialEq)]
struct Label(f64, WaypointKey);

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

/// Cost-to-go to `goal` for every waypoint that can reach it, by label-correcting
/// search over reversed edges. The graph and the edge costs are rebuilt here from
/// waypoint geometry alone: forward along the streamline and a layer change to the planar-nearest waypoint of the adjacent layer within
/// `delta0`, each costing `max(d(next, goal), floor) + [layer change]·j0`, or just
/// the penalty term when `next` is the goal. Holds are positive-cost self-loops
/// and never shorten a path, so they are left out.
pub fn oracle_cost_to_go(
    sets: &[CorridorSet],
    delta0: f64,
    j0: f64,
    floor: f64,
    goal: WaypointKey,
) -> HashMap<WaypointKey, f64> {
    let pos: HashMap<WaypointKey, Point2> = sets
        .iter()
        .flat_map(|c| c.waypoints.iter().flatten())
        .map(|w| (w.key, Point2::new(w.x, w.y)))
        .collect();
    let g = pos[&goal];
    let edge_cost = |next: WaypointKey, change: bool| {
        let alpha = if change { j0 } else { 0.0 };
        if next == goal {
            alpha
        } else {
            pos[&next].distance(g).max(floor) + alpha
        }
    };
    let nearest = |layer: &CorridorSet, p: Point2| -> Option<WaypointKey> {
        let mut best: Option<(f64, WaypointKey)> = None;
        for w in layer.waypoints.iter().flatten() {
            let d = Point2::new(w.x, w.y).distance(p);
            if d <= delta0 && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, w.key));
            }
        }
        best.map(|(_, k)| k)
    };
    // reversed adjacency: for each node, (predecessor, edge cost)
    let mut rev: HashMap<WaypointKey, Vec<(WaypointKey, f64)>> = HashMap::new();
    for (li, set) in sets.iter().enumerate() {
        for line in &set.waypoints {
            for (k, w) in line.iter().enumerate() {
                let p = Point2::new(w.x, w.y);
                if let Some(n) = line.get(k + 1) {
                    rev.entry(n.key)
                        .or_default()
                        .push((w.key, edge_cost(n.key, false)));
                }
                for adj in [li.checked_sub(1), Some(li + 1)].into_iter().flatten() {
                    if let Some(n) = sets.get(adj).and_then(|s| nearest(s, p)) {
                        rev.entry(n).or_default().push((w.key, edge_cost(n, true)));
                    }
                }
            }
        }
    }
    let mut dist: HashMap<WaypointKey, f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(goal, 0.0);
    heap.push(Label(0.0, goal));
    while let Some(Label(d, node)) = heap.pop() {
        if d > dist[&node] {
            continue;
        }
        for &(pred, c) in rev.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
            if pred == goal {
                continue;
            }
            let nd = c + d;
            if dist.get(&pred).is_none_or(|&old| nd < old) {
                dist.insert(pred, nd);
                heap.push(Label(nd, pred));
            }
        }
    }
    dist
}
