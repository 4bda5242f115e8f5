//! Corridor allocation for one UAS: the waypoint state space, the layer-change
//! cost, and planning against existing reservations.
//!
//! Spatial states are waypoints, numbered layer by layer, streamline by
//! streamline, then along the streamline. A full state adds a time index τ in
//! `0..horizon` and is numbered `τ · n_spatial + s`.

use crate::corridor::{CorridorSet, WaypointKey};
use crate::geometry::{Point2, Point3};
use crate::mdp::{
    roll_out_greedy, solve_values, Action, DeterministicMdp, MdpError, Transition,
    ValueIterationConfig,
};
use crate::reservation::{ReservationTable, UasId};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("no corridors to plan over")]
    EmptyCorridors,
    #[error("horizon {horizon} is shorter than the {needed} waypoints of the shortest streamline")]
    HorizonTooSmall { horizon: usize, needed: usize },
    #[error("no path available for UAS {uas}: {reason}")]
    NoPathAvailable { uas: UasId, reason: String },
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    /// Largest planar jump allowed for a layer change, meters.
    pub delta0: f64,
}

impl Default for TransitionModel {
    fn default() -> Self {
        Self { delta0: 7.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Layer-change penalty.
    pub j0: f64,
    /// Lower bound on the distance term for transitions that do not reach the goal.
    pub floor: f64,
}

impl CostModel {
    pub fn new(j0: f64, spacing: f64) -> Self {
        Self {
            j0,
            floor: spacing * 1e-3,
        }
    }

    /// `d(s', s_g) + α·J₀`, with the distance term floored away from the goal.
    pub fn cost(&self, action: Action, next: Point2, next_is_goal: bool, goal: Point2) -> f64 {
        let alpha = if action.changes_layer() { self.j0 } else { 0.0 };
        if next_is_goal {
            alpha
        } else {
            next.distance(goal).max(self.floor) + alpha
        }
    }
}

#[derive(Debug, Clone)]
pub struct StateSpace {
    pub horizon: usize,
    pub model: TransitionModel,
    keys: Vec<WaypointKey>,
    positions: Vec<Point3>,
    forward: Vec<Option<usize>>,
    up: Vec<Option<usize>>,
    down: Vec<Option<usize>>,
    index: HashMap<WaypointKey, usize>,
    layer_altitudes: Vec<(usize, f64)>,
    layer_ranges: Vec<std::ops::Range<usize>>,
}

/// Indexes every waypoint of `corridors` (ordered bottom layer first) and links
/// each to its forward successor and to the nearest waypoint one layer up and down.
///
/// `horizon == 1` yields the spatial states only. Otherwise the horizon must cover
/// the shortest streamline end to end.
pub fn build_state_space(
    corridors: &[CorridorSet],
    horizon: usize,
    model: TransitionModel,
) -> Result<StateSpace, PlanError> {
    let total: usize = corridors
        .iter()
        .flat_map(|c| c.waypoints.iter())
        .map(Vec::len)
        .sum();
    if total == 0 {
        return Err(PlanError::EmptyCorridors);
    }
    let needed = corridors
        .iter()
        .flat_map(|c| c.waypoints.iter())
        .map(Vec::len)
        .filter(|&n| n > 0)
        .min()
        .unwrap_or(1);
    if horizon == 0 || (horizon > 1 && horizon < needed) {
        return Err(PlanError::HorizonTooSmall { horizon, needed });
    }

    let mut keys = Vec::with_capacity(total);
    let mut positions = Vec::with_capacity(total);
    let mut forward = Vec::with_capacity(total);
    let mut layer_ranges = Vec::with_capacity(corridors.len());
    for set in corridors {
        let begin = keys.len();
        for line in &set.waypoints {
            for (k, w) in line.iter().enumerate() {
                keys.push(w.key);
                positions.push(Point3::new(w.x, w.y, w.z));
                forward.push((k + 1 < line.len()).then_some(keys.len()));
            }
        }
        layer_ranges.push(begin..keys.len());
    }
    let nearest_in = |range: &std::ops::Range<usize>, p: Point2| -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for s in range.clone() {
            let d = positions[s].planar().distance(p);
            if d <= model.delta0 && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, s));
            }
        }
        best.map(|(_, s)| s)
    };
    let mut up = vec![None; total];
    let mut down = vec![None; total];
    for (li, range) in layer_ranges.iter().enumerate() {
        for s in range.clone() {
            let p = positions[s].planar();
            if let Some(above) = layer_ranges.get(li + 1) {
                up[s] = nearest_in(above, p);
            }
            if li > 0 {
                down[s] = nearest_in(&layer_ranges[li - 1], p);
            }
        }
    }
    let index = keys.iter().enumerate().map(|(s, k)| (*k, s)).collect();
    Ok(StateSpace {
        horizon,
        model,
        keys,
        positions,
        forward,
        up,
        down,
        index,
        layer_altitudes: corridors
            .iter()
            .map(|c| (c.layer_index, c.altitude))
            .collect(),
        layer_ranges,
    })
}

impl StateSpace {
    pub fn n_spatial(&self) -> usize {
        self.keys.len()
    }

    /// Number of full (space × time) states.
    pub fn len(&self) -> usize {
        self.keys.len() * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn state(&self, spatial: usize, tau: usize) -> usize {
        tau * self.n_spatial() + spatial
    }

    /// `(spatial, τ)` of a full state id.
    pub fn split(&self, state: usize) -> (usize, usize) {
        (state % self.n_spatial(), state / self.n_spatial())
    }

    pub fn key(&self, spatial: usize) -> WaypointKey {
        self.keys[spatial]
    }

    pub fn position(&self, spatial: usize) -> Point3 {
        self.positions[spatial]
    }

    pub fn spatial_of(&self, key: &WaypointKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Spatial states of one corridor layer, in id order.
    pub fn layer_states(&self, layer_index: usize) -> std::ops::Range<usize> {
        self.layer_altitudes
            .iter()
            .position(|&(l, _)| l == layer_index)
            .map(|i| self.layer_ranges[i].clone())
            .unwrap_or(0..0)
    }

    /// Moves available from `spatial`, ignoring time and reservations, in
    /// action order.
    pub fn spatial_successors(&self, spatial: usize) -> Vec<(Action, usize)> {
        let mut out = Vec::with_capacity(4);
        if let Some(n) = self.forward[spatial] {
            out.push((Action::Forward, n));
        }
        out.push((Action::Hold, spatial));
        if let Some(n) = self.up[spatial] {
            out.push((Action::Up, n));
        }
        if let Some(n) = self.down[spatial] {
            out.push((Action::Down, n));
        }
        out
    }

    /// Time-stepped successors of a full state, excluding cells another UAS holds.
    /// `t0` is the absolute tick of τ = 0.
    pub fn successors(
        &self,
        state: usize,
        reservations: &ReservationTable,
        uas: UasId,
        t0: u32,
    ) -> Vec<(Action, usize)> {
        if self.horizon == 1 {
            return self.spatial_successors(state);
        }
        let (s, tau) = self.split(state);
        if tau + 1 >= self.horizon {
            return Vec::new();
        }
        let t_next = t0 + tau as u32 + 1;
        self.spatial_successors(s)
            .into_iter()
            .filter(|&(_, n)| reservations.is_free_for(&self.keys[n], t_next, uas))
            .map(|(a, n)| (a, self.state(n, tau + 1)))
            .collect()
    }

    /// Waypoint of `layer_index` nearest to `p`, at any distance.
    pub fn nearest_on_layer(&self, layer_index: usize, p: Point2) -> Option<usize> {
        self.layer_states(layer_index).min_by(|&a, &b| {
            let da = self.positions[a].planar().distance(p);
            let db = self.positions[b].planar().distance(p);
            da.total_cmp(&db).then(a.cmp(&b))
        })
    }

    fn closest_layer(&self, z: f64) -> Option<usize> {
        self.layer_altitudes
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 .1 - z).abs().total_cmp(&(b.1 .1 - z).abs()))
            .map(|(i, _)| i)
    }

    /// Waypoint nearest to `p` on the layer closest in altitude, at any distance.
    pub fn nearest(&self, p: Point3) -> Option<usize> {
        let li = self.closest_layer(p.z)?;
        self.nearest_on_layer(self.layer_altitudes[li].0, p.planar())
    }

    /// Waypoint nearest to `p` on the layer closest in altitude, if within δ₀.
    pub fn snap(&self, p: Point3) -> Option<usize> {
        let li = self.closest_layer(p.z)?;
        let q = p.planar();
        let mut best: Option<(f64, usize)> = None;
        for s in self.layer_ranges[li].clone() {
            let d = self.positions[s].planar().distance(q);
            if d <= self.model.delta0 && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, s));
            }
        }
        best.map(|(_, s)| s)
    }
}

/// Waypoint graph without time; reservations do not apply.
pub struct SpatialMdp<'a> {
    pub space: &'a StateSpace,
    pub cost: CostModel,
    pub goal: usize,
}

impl DeterministicMdp for SpatialMdp<'_> {
    fn num_states(&self) -> usize {
        self.space.n_spatial()
    }

    fn is_goal(&self, state: usize) -> bool {
        state == self.goal
    }

    fn transitions(&self, state: usize, out: &mut Vec<Transition>) {
        let g = self.space.position(self.goal).planar();
        for (action, next) in self.space.spatial_successors(state) {
            let p = self.space.position(next).planar();
            out.push(Transition {
                action,
                next,
                cost: self.cost.cost(action, p, next == self.goal, g),
            });
        }
    }
}

/// Time-expanded graph; every copy of the goal waypoint is absorbing.
pub struct TimedMdp<'a> {
    pub space: &'a StateSpace,
    pub cost: CostModel,
    pub goal: usize,
    pub reservations: &'a ReservationTable,
    pub uas: UasId,
    pub t0: u32,
}

impl DeterministicMdp for TimedMdp<'_> {
    fn num_states(&self) -> usize {
        self.space.len()
    }

    fn is_goal(&self, state: usize) -> bool {
        self.space.split(state).0 == self.goal
    }

    fn transitions(&self, state: usize, out: &mut Vec<Transition>) {
        let g = self.space.position(self.goal).planar();
        for (action, next) in self
            .space
            .successors(state, self.reservations, self.uas, self.t0)
        {
            let s = self.space.split(next).0;
            let p = self.space.position(s).planar();
            out.push(Transition {
                action,
                next,
                cost: self.cost.cost(action, p, s == self.goal, g),
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub t: u32,
    pub key: WaypointKey,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Action taken at this step; `None` on arrival.
    pub action: Option<Action>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub uas: UasId,
    pub steps: Vec<PathStep>,
    pub cost: f64,
    /// Ticks spent waiting outside the airspace before entering.
    pub entry_delay: u32,
    pub time_expanded: bool,
}

impl PlannedPath {
    pub fn cells(&self) -> Vec<(WaypointKey, u32)> {
        self.steps.iter().map(|s| (s.key, s.t)).collect()
    }

    pub fn layer_changes(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| s.action.is_some_and(Action::changes_layer))
            .count()
    }

    pub fn arrival(&self) -> u32 {
        self.steps.last().map_or(0, |s| s.t)
    }

    pub fn start(&self) -> u32 {
        self.steps.first().map_or(0, |s| s.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanRequest {
    pub uas: UasId,
    pub start: usize,
    pub goal: usize,
    pub t0: u32,
    /// Already flying: the path must begin at `start` at `t0`. Otherwise the UAS
    /// may wait outside the airspace until its entry waypoint is free.
    pub airborne: bool,
}

fn steps_from(
    space: &StateSpace,
    visited: &[(usize, Action)],
    last: usize,
    tick_of: impl Fn(usize, usize) -> u32,
) -> Vec<PathStep> {
    let step = |i: usize, s: usize, action: Option<Action>| {
        let p = space.position(s);
        PathStep {
            t: tick_of(i, s),
            key: space.key(s),
            x: p.x,
            y: p.y,
            z: p.z,
            action,
        }
    };
    let mut steps: Vec<PathStep> = visited
        .iter()
        .enumerate()
        .map(|(i, &(s, a))| step(i, s, Some(a)))
        .collect();
    steps.push(step(visited.len(), last, None));
    steps
}

/// Plans a path that respects `reservations`. The spatial policy is tried first;
/// if its roll-out touches a held cell or outlasts the horizon, the
/// time-expanded problem is solved instead.
pub fn plan_path(
    space: &StateSpace,
    cost: CostModel,
    vi: &ValueIterationConfig,
    reservations: &ReservationTable,
    req: &PlanRequest,
) -> Result<PlannedPath, PlanError> {
    let no_path = |reason: String| PlanError::NoPathAvailable {
        uas: req.uas,
        reason,
    };
    let free = |s: usize, t: u32| reservations.is_free_for(&space.key(s), t, req.uas);

    let spatial = SpatialMdp {
        space,
        cost,
        goal: req.goal,
    };
    let table = solve_values(&spatial, vi)?;
    if !table.is_finite(req.start) {
        return Err(no_path(
            "goal is not reachable through the corridor graph".into(),
        ));
    }
    let visited = roll_out_greedy(&spatial, &table, req.start, space.n_spatial())?;
    let fits = space.horizon == 1 || visited.len() < space.horizon;
    let clear = visited
        .iter()
        .map(|&(s, _)| s)
        .chain(std::iter::once(req.goal))
        .enumerate()
        .all(|(i, s)| free(s, req.t0 + i as u32));
    if fits && clear {
        return Ok(PlannedPath {
            uas: req.uas,
            steps: steps_from(space, &visited, req.goal, |i, _| req.t0 + i as u32),
            cost: table.value(req.start),
            entry_delay: 0,
            time_expanded: false,
        });
    }
    if space.horizon == 1 {
        return Err(no_path("spatial path crosses reserved cells".into()));
    }

    let timed = TimedMdp {
        space,
        cost,
        goal: req.goal,
        reservations,
        uas: req.uas,
        t0: req.t0,
    };
    let table = solve_values(&timed, vi)?;
    let last_entry = if req.airborne { 1 } else { space.horizon };
    let entry = (0..last_entry).find(|&tau| {
        free(req.start, req.t0 + tau as u32) && table.is_finite(space.state(req.start, tau))
    });
    let Some(tau0) = entry else {
        return Err(no_path(format!(
            "no conflict-free path within the {}-tick horizon",
            space.horizon
        )));
    };
    let start = space.state(req.start, tau0);
    let visited: Vec<(usize, Action)> = roll_out_greedy(&timed, &table, start, space.horizon)?
        .into_iter()
        .map(|(s, a)| (space.split(s).0, a))
        .collect();
    let steps = steps_from(space, &visited, req.goal, |i, _| req.t0 + (tau0 + i) as u32);
    Ok(PlannedPath {
        uas: req.uas,
        steps,
        cost: table.value(start),
        entry_delay: tau0 as u32,
        time_expanded: true,
    })
}
