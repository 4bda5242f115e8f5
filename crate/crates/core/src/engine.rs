//! Event-driven traffic management: a time-ordered stream of requests, failures
//! and ATM no-fly allocations drives corridor regeneration and first-come
//! first-serve path allocation.
//!
//! Every event is classified into one of three branches:
//!
//! | event                                   | state | branch            |
//! |-----------------------------------------|-------|-------------------|
//! | tick                                    | -     | no-op             |
//! | ATM allocation cutting no layer         | NT1   | cost update       |
//! | ATM allocation or release               | NT2   | geometry update   |
//! | UAS failure or failure cleared          | NT3   | geometry update   |
//! | new enter/depart request                | NT4   | cost update       |
//!
//! A geometry update re-solves the layers whose sections changed, rebuilds the
//! state space and replans the UAS whose remaining path touches a changed layer,
//! in arrival order. A cost update plans against the current reservations only.

use crate::airspace::{AirspaceError, LayerStack, ObstacleKind, ObstaclePolygon};
use crate::corridor::WaypointKey;
use crate::geometry::{Point2, Point3};
use crate::mdp::{Action, ValueIterationConfig};
use crate::network::{build_network, CorridorNetwork, NetworkConfig, NetworkError};
use crate::planner::{
    build_state_space, plan_path, CostModel, PathStep, PlanError, PlanRequest, PlannedPath,
    StateSpace, TransitionModel,
};
use crate::reservation::{ReservationError, ReservationTable, UasId};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use thiserror::Error;

/// Side of the square no-fly zone around a failed UAS, in waypoint spacings.
pub const FAILURE_ZONE_SPACINGS: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Reservation(#[from] ReservationError),
    #[error("invalid zone: {0}")]
    InvalidZone(#[from] AirspaceError),
    #[error("UAS {uas}: {which} point is farther than the transition radius from every waypoint")]
    SnapFailure { uas: UasId, which: &'static str },
    #[error("unknown UAS {0}")]
    UnknownUas(UasId),
    #[error("UAS {0} already has an active request")]
    DuplicateUas(UasId),
    #[error("unknown ATM zone {0}")]
    UnknownZone(u32),
    #[error("UAS {0} is not in the airspace")]
    NotAirborne(UasId),
    #[error("event at t={t} is earlier than engine time {now}")]
    EventOutOfOrder { t: u32, now: u32 },
    #[error("no path for displaced UAS {0}; holding at its current waypoint")]
    ReplanInfeasible(UasId),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub network: NetworkConfig,
    pub transition: TransitionModel,
    /// Layer-change penalty.
    pub j0: f64,
    pub vi: ValueIterationConfig,
    /// Planning window, ticks.
    pub horizon: usize,
}

impl EngineConfig {
    pub fn cost(&self) -> CostModel {
        CostModel::new(self.j0, self.network.corridors.spacing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Enter,
    Depart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UasRequest {
    pub uas: UasId,
    pub entry: Point3,
    pub goal: Point3,
    pub kind: RequestKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    Tick,
    NewRequest(UasRequest),
    /// `position` defaults to where the UAS's path puts it at the event time.
    UasFailure {
        uas: UasId,
        position: Option<Point3>,
    },
    FailureCleared {
        uas: UasId,
    },
    AtmAllocation {
        id: u32,
        center: Point2,
        radius: f64,
        base: f64,
        top: f64,
        /// Ticks until the zone lapses on its own; `None` keeps it until released.
        duration: Option<u32>,
    },
    AtmRelease {
        id: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: u32,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MachineState {
    Terminal1Normal,
    Terminal2Updated,
    Nt1,
    Nt2,
    Nt3,
    Nt4,
}

impl MachineState {
    pub fn label(self) -> &'static str {
        match self {
            MachineState::Terminal1Normal => "terminal1_normal",
            MachineState::Terminal2Updated => "terminal2_updated",
            MachineState::Nt1 => "nt1",
            MachineState::Nt2 => "nt2",
            MachineState::Nt3 => "nt3",
            MachineState::Nt4 => "nt4",
        }
    }

    pub fn branch(self) -> Branch {
        match self {
            MachineState::Nt1 | MachineState::Nt4 => Branch::CostUpdate,
            MachineState::Nt2 | MachineState::Nt3 => Branch::GeometryUpdate,
            MachineState::Terminal1Normal | MachineState::Terminal2Updated => Branch::NoOp,
        }
    }
}

impl fmt::Display for MachineState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    NoOp,
    CostUpdate,
    GeometryUpdate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UasStatus {
    Queued,
    Scheduled,
    Held,
    Failed,
    Completed,
    Released,
}

impl UasStatus {
    pub fn is_active(self) -> bool {
        matches!(
            self,
            UasStatus::Queued | UasStatus::Scheduled | UasStatus::Held
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UasRecord {
    pub request: UasRequest,
    pub requested_at: u32,
    /// Arrival order among all requests, used for queue and replan priority.
    pub order: u64,
    pub status: UasStatus,
    /// Every path the UAS has been given; the last one is current.
    pub revisions: Vec<PlannedPath>,
}

impl UasRecord {
    pub fn path(&self) -> Option<&PlannedPath> {
        self.revisions.last()
    }

    /// The path step in effect at tick `t`.
    pub fn step_at(&self, t: u32) -> Option<&PathStep> {
        self.path()?.steps.iter().rev().find(|s| s.t <= t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogOutcome {
    Allocated,
    Queued,
    Rejected,
    Replanned,
    Held,
    Failed,
    Completed,
    Released,
}

impl LogOutcome {
    pub fn label(self) -> &'static str {
        match self {
            LogOutcome::Allocated => "allocated",
            LogOutcome::Queued => "queued",
            LogOutcome::Rejected => "rejected",
            LogOutcome::Replanned => "replanned",
            LogOutcome::Held => "held",
            LogOutcome::Failed => "failed",
            LogOutcome::Completed => "completed",
            LogOutcome::Released => "released",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub t: u32,
    pub uas: UasId,
    pub outcome: LogOutcome,
    /// Index into the UAS's path revisions, when a path was produced.
    pub revision: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
struct AtmZone {
    polygon: ObstaclePolygon,
    expires: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOutcome {
    pub t: u32,
    /// Machine states visited, ending in a terminal state.
    pub states: Vec<MachineState>,
    pub changed_layers: Vec<usize>,
    pub allocated: Vec<UasId>,
    pub queued: Vec<UasId>,
    pub replanned: Vec<UasId>,
    pub held: Vec<UasId>,
    pub expired_zones: Vec<u32>,
    /// Problems that did not stop the event from being processed.
    pub errors: Vec<EngineError>,
}

impl StepOutcome {
    pub fn branch(&self) -> Branch {
        self.states
            .iter()
            .map(|s| s.branch())
            .find(|b| *b != Branch::NoOp)
            .unwrap_or(Branch::NoOp)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub paths_checked: usize,
    /// Two UAS at the same waypoint and tick.
    pub separation: Vec<(WaypointKey, u32, UasId, UasId)>,
    /// Future path steps inside a current no-fly section.
    pub zone: Vec<(UasId, WaypointKey, u32)>,
    /// Future path steps missing from the reservation table.
    pub unreserved: Vec<(UasId, WaypointKey, u32)>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.separation.is_empty() && self.zone.is_empty() && self.unreserved.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Engine {
    cfg: EngineConfig,
    buildings: Vec<ObstaclePolygon>,
    atm_zones: BTreeMap<u32, AtmZone>,
    failure_zones: BTreeMap<UasId, ObstaclePolygon>,
    network: CorridorNetwork,
    space: StateSpace,
    reservations: ReservationTable,
    records: BTreeMap<UasId, UasRecord>,
    queue: Vec<UasId>,
    next_order: u64,
    time: u32,
    machine: MachineState,
    log: Vec<LogEntry>,
}

impl Engine {
    /// Builds the initial corridor network for `buildings` over `layers`.
    pub fn new(
        cfg: EngineConfig,
        buildings: Vec<ObstaclePolygon>,
        layers: &LayerStack,
    ) -> Result<Self, EngineError> {
        let network = build_network(&cfg.network, layers.with_sections(&buildings))?;
        let space = build_state_space(&network.sets, cfg.horizon, cfg.transition)?;
        Ok(Self {
            cfg,
            buildings,
            atm_zones: BTreeMap::new(),
            failure_zones: BTreeMap::new(),
            network,
            space,
            reservations: ReservationTable::new(),
            records: BTreeMap::new(),
            queue: Vec::new(),
            next_order: 0,
            time: 0,
            machine: MachineState::Terminal1Normal,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn network(&self) -> &CorridorNetwork {
        &self.network
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn reservations(&self) -> &ReservationTable {
        &self.reservations
    }

    pub fn records(&self) -> &BTreeMap<UasId, UasRecord> {
        &self.records
    }

    pub fn record(&self, uas: UasId) -> Option<&UasRecord> {
        self.records.get(&uas)
    }

    pub fn queue(&self) -> &[UasId] {
        &self.queue
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn time(&self) -> u32 {
        self.time
    }

    pub fn machine(&self) -> MachineState {
        self.machine
    }

    /// Every no-fly footprint currently in force: buildings, ATM zones and failure zones.
    pub fn obstacles(&self) -> Vec<ObstaclePolygon> {
        let mut all = self.buildings.clone();
        all.extend(self.atm_zones.values().map(|z| z.polygon.clone()));
        all.extend(self.failure_zones.values().cloned());
        all
    }

    fn touches_layers(&self, base: f64, top: f64) -> bool {
        self.network
            .layers
            .layers()
            .iter()
            .any(|l| base <= l.altitude && l.altitude <= top)
    }

    /// The non-terminal state an event leads to, or `Terminal1Normal` for no-ops.
    pub fn classify(&self, kind: &EventKind) -> MachineState {
        match kind {
            EventKind::Tick => MachineState::Terminal1Normal,
            EventKind::NewRequest(_) => MachineState::Nt4,
            EventKind::AtmAllocation { base, top, .. } => {
                if self.touches_layers(*base, *top) {
                    MachineState::Nt2
                } else {
                    MachineState::Nt1
                }
            }
            EventKind::AtmRelease { .. } => MachineState::Nt2,
            EventKind::UasFailure { .. } | EventKind::FailureCleared { .. } => MachineState::Nt3,
        }
    }

    fn push_log(&mut self, t: u32, uas: UasId, outcome: LogOutcome, detail: impl Into<String>) {
        let revision = match outcome {
            LogOutcome::Allocated | LogOutcome::Replanned | LogOutcome::Held => self
                .records
                .get(&uas)
                .and_then(|r| r.revisions.len().checked_sub(1)),
            _ => None,
        };
        self.log.push(LogEntry {
            t,
            uas,
            outcome,
            revision,
            detail: detail.into(),
        });
    }

    /// Marks UAS whose path ended before `now` as completed and frees their cells.
    fn complete_finished(&mut self, now: u32) {
        let done: Vec<UasId> = self
            .records
            .iter()
            .filter(|(_, r)| {
                r.status == UasStatus::Scheduled && r.path().is_some_and(|p| p.arrival() < now)
            })
            .map(|(&u, _)| u)
            .collect();
        for uas in done {
            self.reservations.release_uas(uas);
            if let Some(r) = self.records.get_mut(&uas) {
                r.status = UasStatus::Completed;
            }
            self.push_log(now, uas, LogOutcome::Completed, "");
        }
    }

    fn expire_zones(&mut self, now: u32) -> Vec<u32> {
        let expired: Vec<u32> = self
            .atm_zones
            .iter()
            .filter(|(_, z)| z.expires.is_some_and(|e| e <= now))
            .map(|(&id, _)| id)
            .collect();
        for id in &expired {
            self.atm_zones.remove(id);
        }
        expired
    }

    /// Processes one event and returns what happened. On error the engine is left
    /// as it was before the event, apart from the clock.
    pub fn step(&mut self, event: &Event) -> Result<StepOutcome, EngineError> {
        if event.t < self.time {
            return Err(EngineError::EventOutOfOrder {
                t: event.t,
                now: self.time,
            });
        }
        let backup = self.clone();
        let result = self.step_inner(event);
        if result.is_err() {
            let t = event.t;
            *self = backup;
            self.time = t;
        }
        result
    }

    fn step_inner(&mut self, event: &Event) -> Result<StepOutcome, EngineError> {
        let now = event.t;
        self.time = now;
        let mut out = StepOutcome {
            t: now,
            ..StepOutcome::default()
        };
        self.complete_finished(now);
        out.expired_zones = self.expire_zones(now);
        if !out.expired_zones.is_empty() {
            out.states.push(MachineState::Nt2);
            self.geometry_update(now, &mut out)?;
        }

        let state = self.classify(&event.kind);
        if state != MachineState::Terminal1Normal {
            out.states.push(state);
        }
        match &event.kind {
            EventKind::Tick => {}
            EventKind::NewRequest(req) => match self.allocate_fcfs(*req, now) {
                Ok(_) => out.allocated.push(req.uas),
                Err(EngineError::Plan(PlanError::NoPathAvailable { .. })) => {
                    out.queued.push(req.uas)
                }
                Err(e @ EngineError::SnapFailure { .. }) => out.errors.push(e),
                Err(e) => return Err(e),
            },
            EventKind::AtmAllocation {
                id,
                center,
                radius,
                base,
                top,
                duration,
            } => {
                let polygon = ObstaclePolygon::cylinder(
                    *center,
                    *radius,
                    *base,
                    *top,
                    ObstacleKind::AtmNoFly,
                )?;
                self.atm_zones.insert(
                    *id,
                    AtmZone {
                        polygon,
                        expires: duration.map(|d| now.saturating_add(d)),
                    },
                );
                if state == MachineState::Nt2 {
                    self.geometry_update(now, &mut out)?;
                }
            }
            EventKind::AtmRelease { id } => {
                if self.atm_zones.remove(id).is_none() {
                    return Err(EngineError::UnknownZone(*id));
                }
                self.geometry_update(now, &mut out)?;
            }
            EventKind::UasFailure { uas, position } => {
                self.fail_uas(*uas, *position, now)?;
                self.geometry_update(now, &mut out)?;
            }
            EventKind::FailureCleared { uas } => {
                if self.failure_zones.remove(uas).is_none() {
                    return Err(EngineError::UnknownUas(*uas));
                }
                self.geometry_update(now, &mut out)?;
            }
        }
        self.retry_waiting(now, &mut out);
        let terminal = if out.branch() == Branch::NoOp {
            MachineState::Terminal1Normal
        } else {
            MachineState::Terminal2Updated
        };
        out.states.push(terminal);
        self.machine = terminal;
        Ok(out)
    }

    fn fail_uas(
        &mut self,
        uas: UasId,
        position: Option<Point3>,
        now: u32,
    ) -> Result<(), EngineError> {
        let record = self.records.get(&uas).ok_or(EngineError::UnknownUas(uas))?;
        let position = match position {
            Some(p) => p,
            None => {
                let in_air = matches!(record.status, UasStatus::Scheduled | UasStatus::Held)
                    && record.path().is_some_and(|p| p.start() <= now);
                let step = record.step_at(now).filter(|_| in_air);
                let step = step.ok_or(EngineError::NotAirborne(uas))?;
                Point3::new(step.x, step.y, step.z)
            }
        };
        let layers = self.network.layers.layers();
        let li = self.network.layers.nearest_layer(position.z);
        let below = layers[li.saturating_sub(2)].altitude;
        let above = layers[li.min(layers.len() - 1)].altitude;
        let half = 0.5 * FAILURE_ZONE_SPACINGS * self.cfg.network.corridors.spacing;
        let c = position.planar();
        let zone = ObstaclePolygon::rectangle(
            Point2::new(c.x - half, c.y - half),
            Point2::new(c.x + half, c.y + half),
            below.min(position.z),
            above.max(position.z + 1e-6),
            ObstacleKind::FailedUas,
        )?;
        self.failure_zones.insert(uas, zone);
        self.reservations.release_uas(uas);
        self.queue.retain(|&u| u != uas);
        if let Some(r) = self.records.get_mut(&uas) {
            r.status = UasStatus::Failed;
            if let Some(p) = r.revisions.last_mut() {
                p.steps.retain(|s| s.t < now);
                if let Some(last) = p.steps.last_mut() {
                    last.action = None;
                }
            }
        }
        self.push_log(
            now,
            uas,
            LogOutcome::Failed,
            format!("zone at ({:.1}, {:.1}, {:.1})", c.x, c.y, position.z),
        );
        Ok(())
    }

    /// Re-solves changed layers and replans every UAS whose remaining path is
    /// affected.
    fn geometry_update(&mut self, now: u32, out: &mut StepOutcome) -> Result<(), EngineError> {
        let obstacles = self.obstacles();
        let stack = self.network.layers.with_sections(&obstacles);
        let (network, changed) = self.network.rebuild(&self.cfg.network, stack)?;
        if changed.is_empty() {
            return Ok(());
        }
        let space = build_state_space(&network.sets, self.cfg.horizon, self.cfg.transition)?;
        self.network = network;
        self.space = space;
        out.changed_layers.extend(changed.iter().copied());
        out.changed_layers.sort_unstable();
        out.changed_layers.dedup();

        let mut affected: Vec<(u64, UasId)> = self
            .records
            .iter()
            .filter(|(_, r)| match r.status {
                UasStatus::Held => true,
                UasStatus::Scheduled => r.path().is_some_and(|p| {
                    p.steps
                        .iter()
                        .any(|s| s.t >= now && (changed.contains(&s.key.layer) || self.in_zone(s)))
                }),
                _ => false,
            })
            .map(|(&u, r)| (r.order, u))
            .collect();
        affected.sort_unstable();
        for &(_, uas) in &affected {
            self.reservations.release_from(uas, now);
        }
        for (_, uas) in affected {
            self.replan(uas, now, out);
        }
        Ok(())
    }

    fn in_zone(&self, step: &PathStep) -> bool {
        let p = Point2::new(step.x, step.y);
        self.network
            .layers
            .layer(step.key.layer)
            .is_some_and(|l| l.sections.iter().any(|s| s.contains(p)))
    }

    /// Plans a fresh path for a displaced UAS from where it is at `now`. Cells from
    /// `now` on must already be released.
    fn replan(&mut self, uas: UasId, now: u32, out: &mut StepOutcome) {
        let record = &self.records[&uas];
        let request = record.request;
        let entered = record.path().is_some_and(|p| p.start() <= now);
        if !entered {
            // not in the air yet: start over from the entry point
            if let Some(r) = self.records.get_mut(&uas) {
                r.status = UasStatus::Queued;
                r.revisions.clear();
            }
            self.enqueue(uas);
            match self.try_allocate(uas, now) {
                Ok(()) => {
                    out.replanned.push(uas);
                    self.push_log(now, uas, LogOutcome::Replanned, "re-entered before takeoff");
                }
                Err(_) => {
                    out.queued.push(uas);
                    self.push_log(now, uas, LogOutcome::Queued, "entry no longer available");
                }
            }
            return;
        }
        let step = *record
            .step_at(now)
            .expect("entered path has a step at or before now");
        let here = Point2::new(step.x, step.y);
        let start = self.space.nearest_on_layer(step.key.layer, here);
        let goal = self.space.nearest(request.goal);
        let history: Vec<PathStep> = record
            .path()
            .map(|p| p.steps.iter().filter(|s| s.t < now).copied().collect())
            .unwrap_or_default();
        let planned = match (start, goal) {
            (Some(start), Some(goal)) => plan_path(
                &self.space,
                self.cfg.cost(),
                &self.cfg.vi,
                &self.reservations,
                &PlanRequest {
                    uas,
                    start,
                    goal,
                    t0: now,
                    airborne: true,
                },
            )
            .ok(),
            _ => None,
        };
        let (mut path, status, outcome) = match planned {
            Some(p) => (p, UasStatus::Scheduled, LogOutcome::Replanned),
            None => {
                let hold_at = start.unwrap_or_else(|| {
                    self.space
                        .spatial_of(&step.key)
                        .unwrap_or(self.space.layer_states(step.key.layer).start)
                });
                (
                    self.hold_path(uas, hold_at, now),
                    UasStatus::Held,
                    LogOutcome::Held,
                )
            }
        };
        let mut steps = history;
        steps.append(&mut path.steps);
        path.steps = steps;
        let cells: Vec<(WaypointKey, u32)> = path
            .steps
            .iter()
            .filter(|s| s.t >= now)
            .map(|s| (s.key, s.t))
            .collect();
        let cells: Vec<(WaypointKey, u32)> = cells
            .into_iter()
            .filter(|(k, t)| self.reservations.is_free_for(k, *t, uas))
            .collect();
        self.reservations
            .reserve_path(uas, &cells)
            .expect("cells were filtered against the table");
        if let Some(r) = self.records.get_mut(&uas) {
            r.status = status;
            r.revisions.push(path);
        }
        match outcome {
            LogOutcome::Held => {
                out.held.push(uas);
                out.errors.push(EngineError::ReplanInfeasible(uas));
                self.push_log(now, uas, outcome, "no conflict-free path; holding");
            }
            _ => {
                out.replanned.push(uas);
                self.push_log(now, uas, outcome, "");
            }
        }
    }

    /// Hold in place from `now` to the end of the planning window.
    fn hold_path(&self, uas: UasId, at: usize, now: u32) -> PlannedPath {
        let p = self.space.position(at);
        let key = self.space.key(at);
        let steps = (0..self.cfg.horizon as u32)
            .map(|i| PathStep {
                t: now + i,
                key,
                x: p.x,
                y: p.y,
                z: p.z,
                action: Some(Action::Hold),
            })
            .collect();
        PlannedPath {
            uas,
            steps,
            cost: f64::INFINITY,
            entry_delay: 0,
            time_expanded: true,
        }
    }

    fn enqueue(&mut self, uas: UasId) {
        if !self.queue.contains(&uas) {
            self.queue.push(uas);
        }
        let order: HashMap<UasId, u64> = self.records.iter().map(|(&u, r)| (u, r.order)).collect();
        self.queue
            .sort_by_key(|u| order.get(u).copied().unwrap_or(u64::MAX));
    }

    /// Retries queued requests and held UAS, oldest first.
    fn retry_waiting(&mut self, now: u32, out: &mut StepOutcome) {
        for uas in self.queue.clone() {
            if out.queued.contains(&uas) {
                continue;
            }
            if self.try_allocate(uas, now).is_ok() {
                out.allocated.push(uas);
                self.push_log(now, uas, LogOutcome::Allocated, "from queue");
            }
        }
        let mut held: Vec<(u64, UasId)> = self
            .records
            .iter()
            .filter(|(_, r)| r.status == UasStatus::Held)
            .map(|(&u, r)| (r.order, u))
            .collect();
        held.sort_unstable();
        for (_, uas) in held {
            if out.held.contains(&uas) {
                continue;
            }
            self.reservations.release_from(uas, now);
            let mut scratch = StepOutcome::default();
            self.replan(uas, now, &mut scratch);
            out.replanned.extend(scratch.replanned);
            out.held.extend(scratch.held);
        }
    }

    fn snap_request(&self, req: &UasRequest) -> Result<(usize, usize), EngineError> {
        let start = self.space.snap(req.entry).ok_or(EngineError::SnapFailure {
            uas: req.uas,
            which: "entry",
        })?;
        let goal = self.space.snap(req.goal).ok_or(EngineError::SnapFailure {
            uas: req.uas,
            which: "goal",
        })?;
        Ok((start, goal))
    }

    /// Entry and goal of an admitted request. Corridors may have moved since
    /// admission, so these snap at any distance.
    fn resnap(&self, req: &UasRequest) -> Result<(usize, usize), EngineError> {
        let start = self
            .space
            .nearest(req.entry)
            .ok_or(EngineError::SnapFailure {
                uas: req.uas,
                which: "entry",
            })?;
        let goal = self
            .space
            .nearest(req.goal)
            .ok_or(EngineError::SnapFailure {
                uas: req.uas,
                which: "goal",
            })?;
        Ok((start, goal))
    }

    /// Plans a queued UAS and, on success, reserves its path and removes it from
    /// the queue.
    fn try_allocate(&mut self, uas: UasId, now: u32) -> Result<(), EngineError> {
        let record = self.records.get(&uas).ok_or(EngineError::UnknownUas(uas))?;
        let (start, goal) = self.resnap(&record.request)?;
        let t0 = record.requested_at.max(now);
        let path = plan_path(
            &self.space,
            self.cfg.cost(),
            &self.cfg.vi,
            &self.reservations,
            &PlanRequest {
                uas,
                start,
                goal,
                t0,
                airborne: false,
            },
        )?;
        self.reservations.reserve_path(uas, &path.cells())?;
        self.queue.retain(|&u| u != uas);
        if let Some(r) = self.records.get_mut(&uas) {
            r.status = UasStatus::Scheduled;
            r.revisions.push(path);
        }
        Ok(())
    }

    /// Registers `req` and plans it against the current reservations. Earlier
    /// reservations are never touched. When no path exists the request stays
    /// queued and is retried after every later event.
    pub fn allocate_fcfs(
        &mut self,
        req: UasRequest,
        now: u32,
    ) -> Result<&PlannedPath, EngineError> {
        if self
            .records
            .get(&req.uas)
            .is_some_and(|r| r.status.is_active())
        {
            return Err(EngineError::DuplicateUas(req.uas));
        }
        if let Err(e) = self.snap_request(&req) {
            self.push_log(now, req.uas, LogOutcome::Rejected, e.to_string());
            return Err(e);
        }
        let order = self.next_order;
        self.next_order += 1;
        self.records.insert(
            req.uas,
            UasRecord {
                request: req,
                requested_at: now,
                order,
                status: UasStatus::Queued,
                revisions: Vec::new(),
            },
        );
        self.enqueue(req.uas);
        match self.try_allocate(req.uas, now) {
            Ok(()) => {
                self.push_log(now, req.uas, LogOutcome::Allocated, "");
                Ok(self.records[&req.uas].path().expect("allocated path"))
            }
            Err(e) => {
                self.push_log(now, req.uas, LogOutcome::Queued, e.to_string());
                Err(e)
            }
        }
    }

    /// Drops every reservation of `uas` and forgets its request.
    pub fn release(&mut self, uas: UasId) -> Result<(), EngineError> {
        let record = self
            .records
            .get_mut(&uas)
            .filter(|r| r.status.is_active())
            .ok_or(EngineError::UnknownUas(uas))?;
        record.status = UasStatus::Released;
        self.reservations.release_uas(uas);
        self.queue.retain(|&u| u != uas);
        self.machine = MachineState::Terminal1Normal;
        let now = self.time;
        self.push_log(now, uas, LogOutcome::Released, "");
        Ok(())
    }

    /// Checks separation over all stored paths, and that every future step is
    /// reserved and outside the current no-fly sections.
    pub fn audit(&self) -> AuditReport {
        let mut report = AuditReport::default();
        let mut seen: HashMap<(WaypointKey, u32), UasId> = HashMap::new();
        for (&uas, record) in &self.records {
            let Some(path) = record.path() else { continue };
            if matches!(record.status, UasStatus::Released | UasStatus::Queued) {
                continue;
            }
            report.paths_checked += 1;
            let live = matches!(record.status, UasStatus::Scheduled | UasStatus::Held);
            for s in &path.steps {
                if let Some(&other) = seen.get(&(s.key, s.t)) {
                    if other != uas {
                        report.separation.push((s.key, s.t, other, uas));
                    }
                } else {
                    seen.insert((s.key, s.t), uas);
                }
                if live && s.t >= self.time {
                    if self.in_zone(s) {
                        report.zone.push((uas, s.key, s.t));
                    }
                    if self.reservations.occupant(&s.key, s.t) != Some(uas) {
                        report.unreserved.push((uas, s.key, s.t));
                    }
                }
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airspace::Region;
    use crate::corridor::CorridorConfig;
    use crate::flow::SolveOptions;

    fn engine() -> Engine {
        let cfg = EngineConfig {
            network: NetworkConfig {
                region: Region::new(0.0, 200.0, 0.0, 200.0).unwrap(),
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
            transition: TransitionModel { delta0: 7.5 },
            j0: 15.0,
            vi: ValueIterationConfig::default(),
            horizon: 60,
        };
        let layers = LayerStack::standard(&[20.0, 25.0, 30.0]).unwrap();
        Engine::new(cfg, Vec::new(), &layers).unwrap()
    }

    fn lane_y(e: &Engine, s: usize) -> f64 {
        e.network().sets[0].waypoints[s][0].y
    }

    fn request(e: &Engine, uas: u32, s: usize) -> UasRequest {
        let y = lane_y(e, s);
        UasRequest {
            uas: UasId(uas),
            entry: Point3::new(0.0, y, 20.0),
            goal: Point3::new(200.0, y, 20.0),
            kind: RequestKind::Enter,
        }
    }

    #[test]
    fn tick_is_a_no_op() {
        let mut e = engine();
        let before = e.reservations().clone();
        let out = e
            .step(&Event {
                t: 0,
                kind: EventKind::Tick,
            })
            .unwrap();
        assert_eq!(out.states, vec![MachineState::Terminal1Normal]);
        assert_eq!(out.branch(), Branch::NoOp);
        assert_eq!(e.reservations(), &before);
    }

    #[test]
    fn first_uas_flies_straight_and_release_empties_table() {
        let mut e = engine();
        let req = request(&e, 1, 1);
        let out = e
            .step(&Event {
                t: 0,
                kind: EventKind::NewRequest(req),
            })
            .unwrap();
        assert_eq!(
            out.states,
            vec![MachineState::Nt4, MachineState::Terminal2Updated]
        );
        let path = e.record(UasId(1)).unwrap().path().unwrap().clone();
        assert!(path.steps[..path.steps.len() - 1]
            .iter()
            .all(|s| s.action == Some(Action::Forward)));
        e.release(UasId(1)).unwrap();
        assert!(e.reservations().is_empty());
        assert_eq!(e.machine(), MachineState::Terminal1Normal);
        assert_eq!(e.release(UasId(9)), Err(EngineError::UnknownUas(UasId(9))));
        // the same request again gets the same path
        e.step(&Event {
            t: 0,
            kind: EventKind::NewRequest(req),
        })
        .unwrap();
        assert_eq!(e.record(UasId(1)).unwrap().path().unwrap(), &path);
    }

    #[test]
    fn identical_second_request_is_deconflicted() {
        let mut e = engine();
        let r1 = request(&e, 1, 1);
        let r2 = UasRequest {
            uas: UasId(2),
            ..r1
        };
        e.step(&Event {
            t: 0,
            kind: EventKind::NewRequest(r1),
        })
        .unwrap();
        let p1 = e.record(UasId(1)).unwrap().path().unwrap().clone();
        e.step(&Event {
            t: 0,
            kind: EventKind::NewRequest(r2),
        })
        .unwrap();
        assert_eq!(e.record(UasId(1)).unwrap().path().unwrap(), &p1);
        let p2 = e.record(UasId(2)).unwrap().path().unwrap();
        assert_ne!(p2.cells(), p1.cells());
        assert!(e.audit().passed());
    }

    #[test]
    fn failure_reroutes_followers() {
        let mut e = engine();
        let r1 = request(&e, 1, 1);
        let r2 = UasRequest {
            uas: UasId(2),
            ..r1
        };
        e.step(&Event {
            t: 0,
            kind: EventKind::NewRequest(r1),
        })
        .unwrap();
        e.step(&Event {
            t: 0,
            kind: EventKind::NewRequest(r2),
        })
        .unwrap();
        let out = e
            .step(&Event {
                t: 8,
                kind: EventKind::UasFailure {
                    uas: UasId(1),
                    position: None,
                },
            })
            .unwrap();
        assert_eq!(out.states[0], MachineState::Nt3);
        assert!(out.changed_layers.contains(&1));
        assert_eq!(e.record(UasId(1)).unwrap().status, UasStatus::Failed);
        let audit = e.audit();
        assert!(audit.passed(), "{audit:?}");
        let zone = &e.failure_zones[&UasId(1)];
        let p2 = e.record(UasId(2)).unwrap().path().unwrap();
        for s in p2.steps.iter().filter(|s| s.t >= 8) {
            assert!(!zone.contains(Point2::new(s.x, s.y)) || s.key.layer > 2);
        }
    }

    #[test]
    fn atm_zone_above_layers_is_cost_only() {
        let mut e = engine();
        let out = e
            .step(&Event {
                t: 0,
                kind: EventKind::AtmAllocation {
                    id: 7,
                    center: Point2::new(100.0, 100.0),
                    radius: 20.0,
                    base: 100.0,
                    top: 200.0,
                    duration: Some(5),
                },
            })
            .unwrap();
        assert_eq!(out.states[0], MachineState::Nt1);
        assert!(out.changed_layers.is_empty());
        let out = e
            .step(&Event {
                t: 5,
                kind: EventKind::Tick,
            })
            .unwrap();
        assert_eq!(out.expired_zones, vec![7]);
        assert!(e
            .step(&Event {
                t: 6,
                kind: EventKind::AtmRelease { id: 7 }
            })
            .is_err());
        assert!(e
            .step(&Event {
                t: 1,
                kind: EventKind::Tick
            })
            .is_err());
    }
}
