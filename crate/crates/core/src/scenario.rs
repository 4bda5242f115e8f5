//! Scenario documents: map, layer table, numeric settings and event stream in TOML.
//!
//! See `docs/formats.md` for the schema.

use crate::airspace::{Heading, LayerStack, ObstacleKind, ObstaclePolygon, Region};
use crate::corridor::CorridorConfig;
use crate::engine::{EngineConfig, Event, EventKind, RequestKind, UasRequest};
use crate::flow::SolveOptions;
use crate::geometry::{Point2, Point3};
use crate::mdp::ValueIterationConfig;
use crate::network::NetworkConfig;
use crate::planner::TransitionModel;
use crate::reservation::UasId;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    ParseError(String),
    #[error("schema violations:\n  {}", .0.join("\n  "))]
    SchemaViolation(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub region: RegionDoc,
    pub grid: GridDoc,
    pub layers: LayersDoc,
    pub planning: PlanningDoc,
    #[serde(default)]
    pub obstacles: Vec<ObstacleDoc>,
    #[serde(default)]
    pub events: Vec<EventDoc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionDoc {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayersDoc {
    pub altitudes: Vec<f64>,
    /// `+x`, `-x`, `+y` or `-y` per layer; defaults to +x, -y, -x, +y repeating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub headings: Option<Vec<String>>,
    #[serde(default = "default_odd")]
    pub streamlines_odd: usize,
    #[serde(default = "default_even")]
    pub streamlines_even: usize,
}

fn default_odd() -> usize {
    10
}

fn default_even() -> usize {
    18
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningDoc {
    pub spacing: f64,
    pub delta0: f64,
    pub j0: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub horizon: usize,
    /// Defaults to max(dx, dy).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflation: Option<f64>,
    /// Defaults to 2·max(dx, dy).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleDoc {
    Polygon {
        kind: ObstacleKind,
        vertices: Vec<[f64; 2]>,
        base: f64,
        top: f64,
    },
    Cylinder {
        kind: ObstacleKind,
        center: [f64; 2],
        radius: f64,
        base: f64,
        top: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventDoc {
    Tick {
        t: u32,
    },
    NewRequest {
        t: u32,
        uas: u32,
        entry: [f64; 3],
        goal: [f64; 3],
        #[serde(default = "default_kind")]
        kind: RequestKind,
    },
    UasFailure {
        t: u32,
        uas: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position: Option<[f64; 3]>,
    },
    FailureCleared {
        t: u32,
        uas: u32,
    },
    AtmAllocation {
        t: u32,
        id: u32,
        center: [f64; 2],
        radius: f64,
        base: f64,
        top: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<u32>,
    },
    AtmRelease {
        t: u32,
        id: u32,
    },
}

fn default_kind() -> RequestKind {
    RequestKind::Enter
}

impl EventDoc {
    pub fn t(&self) -> u32 {
        match *self {
            EventDoc::Tick { t }
            | EventDoc::NewRequest { t, .. }
            | EventDoc::UasFailure { t, .. }
            | EventDoc::FailureCleared { t, .. }
            | EventDoc::AtmAllocation { t, .. }
            | EventDoc::AtmRelease { t, .. } => t,
        }
    }

    pub fn to_event(&self) -> Event {
        let p3 = |p: [f64; 3]| Point3::new(p[0], p[1], p[2]);
        let kind = match self {
            EventDoc::Tick { .. } => EventKind::Tick,
            EventDoc::NewRequest {
                uas,
                entry,
                goal,
                kind,
                ..
            } => EventKind::NewRequest(UasRequest {
                uas: UasId(*uas),
                entry: p3(*entry),
                goal: p3(*goal),
                kind: *kind,
            }),
            EventDoc::UasFailure { uas, position, .. } => EventKind::UasFailure {
                uas: UasId(*uas),
                position: position.map(p3),
            },
            EventDoc::FailureCleared { uas, .. } => EventKind::FailureCleared { uas: UasId(*uas) },
            EventDoc::AtmAllocation {
                id,
                center,
                radius,
                base,
                top,
                duration,
                ..
            } => EventKind::AtmAllocation {
                id: *id,
                center: Point2::new(center[0], center[1]),
                radius: *radius,
                base: *base,
                top: *top,
                duration: *duration,
            },
            EventDoc::AtmRelease { id, .. } => EventKind::AtmRelease { id: *id },
        };
        Event { t: self.t(), kind }
    }
}

impl ObstacleDoc {
    pub fn to_polygon(&self) -> Result<ObstaclePolygon, String> {
        let made = match self {
            ObstacleDoc::Polygon {
                kind,
                vertices,
                base,
                top,
            } => ObstaclePolygon::new(
                vertices.iter().map(|v| Point2::new(v[0], v[1])).collect(),
                *base,
                *top,
                *kind,
            ),
            ObstacleDoc::Cylinder {
                kind,
                center,
                radius,
                base,
                top,
            } => ObstaclePolygon::cylinder(
                Point2::new(center[0], center[1]),
                *radius,
                *base,
                *top,
                *kind,
            ),
        };
        made.map_err(|e| e.to_string())
    }
}

/// Parses and validates a document.
pub fn parse_scenario(text: &str) -> Result<ScenarioDocument, ScenarioError> {
    let doc: ScenarioDocument =
        toml::from_str(text).map_err(|e| ScenarioError::ParseError(e.to_string()))?;
    doc.validate()?;
    Ok(doc)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioDocument, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&text)
}

impl ScenarioDocument {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario documents always serialize")
    }

    /// All schema violations, or `Ok` for a usable document.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut v: Vec<String> = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                v.push(msg);
            }
        };
        check(
            self.schema_version == SCHEMA_VERSION,
            format!(
                "schema_version must be {SCHEMA_VERSION}, got {}",
                self.schema_version
            ),
        );
        if let Err(e) = self.region() {
            check(false, format!("region: {e}"));
        }
        let g = &self.grid;
        check(
            g.dx > 0.0 && g.dy > 0.0,
            format!(
                "grid: dx and dy must be positive, got {} and {}",
                g.dx, g.dy
            ),
        );
        let l = &self.layers;
        check(
            l.streamlines_odd >= 1 && l.streamlines_even >= 1,
            "layers: streamline counts must be at least 1".into(),
        );
        if let Err(e) = self.layer_stack() {
            check(false, format!("layers: {e}"));
        }
        let p = &self.planning;
        check(
            p.spacing > 0.0,
            format!("planning.spacing must be positive, got {}", p.spacing),
        );
        check(
            p.delta0 > 0.0,
            format!("planning.delta0 must be positive, got {}", p.delta0),
        );
        check(
            p.j0 >= 0.0,
            format!("planning.j0 must be non-negative, got {}", p.j0),
        );
        check(
            (0.0..=1.0).contains(&p.gamma),
            format!("planning.gamma must lie in [0, 1], got {}", p.gamma),
        );
        check(
            p.epsilon > 0.0,
            format!("planning.epsilon must be positive, got {}", p.epsilon),
        );
        check(p.horizon >= 1, "planning.horizon must be at least 1".into());
        check(
            p.inflation.is_none_or(|x| x >= 0.0),
            "planning.inflation must be non-negative".into(),
        );
        check(
            p.merge_distance.is_none_or(|x| x >= 0.0),
            "planning.merge_distance must be non-negative".into(),
        );
        check(
            p.tol.is_none_or(|x| x > 0.0),
            "planning.tol must be positive".into(),
        );
        for (i, o) in self.obstacles.iter().enumerate() {
            if let Err(e) = o.to_polygon() {
                check(false, format!("obstacles[{i}]: {e}"));
            }
        }
        let mut last_t = 0;
        for (i, e) in self.events.iter().enumerate() {
            check(
                e.t() >= last_t,
                format!(
                    "events[{i}]: time {} is earlier than the previous event",
                    e.t()
                ),
            );
            last_t = last_t.max(e.t());
            if let EventDoc::AtmAllocation {
                radius, base, top, ..
            } = e
            {
                check(
                    *radius > 0.0 && base < top,
                    format!("events[{i}]: ATM zone needs radius > 0 and base < top"),
                );
            }
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::SchemaViolation(v))
        }
    }

    pub fn region(&self) -> Result<Region, String> {
        let r = &self.region;
        Region::new(r.x_min, r.x_max, r.y_min, r.y_max).map_err(|e| e.to_string())
    }

    pub fn layer_stack(&self) -> Result<LayerStack, String> {
        let alts = &self.layers.altitudes;
        let headings: Vec<Heading> = match &self.layers.headings {
            None => (1..=alts.len()).map(Heading::standard).collect(),
            Some(hs) => hs
                .iter()
                .map(|h| Heading::parse(h).ok_or_else(|| format!("unknown heading {h:?}")))
                .collect::<Result<_, _>>()?,
        };
        LayerStack::new(alts, &headings).map_err(|e| e.to_string())
    }

    pub fn obstacles(&self) -> Vec<ObstaclePolygon> {
        self.obstacles
            .iter()
            .map(|o| o.to_polygon().expect("validated obstacle"))
            .collect()
    }

    pub fn events(&self) -> Vec<Event> {
        self.events.iter().map(EventDoc::to_event).collect()
    }

    pub fn inflation(&self) -> f64 {
        self.planning
            .inflation
            .unwrap_or(self.grid.dx.max(self.grid.dy))
    }

    pub fn merge_distance(&self) -> f64 {
        self.planning
            .merge_distance
            .unwrap_or(2.0 * self.grid.dx.max(self.grid.dy))
    }

    pub fn network_config(&self) -> NetworkConfig {
        let mut solve = SolveOptions::default();
        if let Some(tol) = self.planning.tol {
            solve.tol = tol;
        }
        NetworkConfig {
            region: self.region().expect("validated region"),
            dx: self.grid.dx,
            dy: self.grid.dy,
            inflation: self.inflation(),
            solve,
            corridors: CorridorConfig {
                streamlines_odd: self.layers.streamlines_odd,
                streamlines_even: self.layers.streamlines_even,
                spacing: self.planning.spacing,
            },
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            network: self.network_config(),
            transition: TransitionModel {
                delta0: self.planning.delta0,
            },
            j0: self.planning.j0,
            vi: ValueIterationConfig {
                gamma: self.planning.gamma,
                epsilon: self.planning.epsilon,
                ..ValueIterationConfig::default()
            },
            horizon: self.planning.horizon,
        }
    }

    /// Number of request events.
    pub fn request_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, EventDoc::NewRequest { .. }))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1

[region]
x_min = 0.0
x_max = 100.0
y_min = 0.0
y_max = 100.0

[grid]
dx = 5.0
dy = 5.0

[layers]
altitudes = [20.0]

[planning]
spacing = 10.0
delta0 = 7.5
j0 = 15.0
gamma = 1.0
epsilon = 1e-6
horizon = 40
"#;

    #[test]
    fn minimal_document_loads() {
        let doc = parse_scenario(MINIMAL).unwrap();
        assert_eq!(doc.layer_stack().unwrap().len(), 1);
        assert!(doc.events.is_empty());
        assert_eq!(doc.inflation(), 5.0);
        assert_eq!(doc.merge_distance(), 10.0);
    }

    #[test]
    fn decreasing_altitudes_are_rejected() {
        let text = MINIMAL.replace("altitudes = [20.0]", "altitudes = [25.0, 20.0]");
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioError::SchemaViolation(_))
        ));
    }

    #[test]
    fn syntax_errors_carry_a_location() {
        let text = MINIMAL.replace("dx = 5.0", "dx = ");
        match parse_scenario(&text) {
            Err(ScenarioError::ParseError(msg)) => assert!(msg.contains("line")),
            other => panic!("unexpected {other:?}"),
        }
        let text = MINIMAL.replace("dx = 5.0", "dx = 5.0\ndz = 1.0");
        assert!(matches!(
            parse_scenario(&text),
            Err(ScenarioError::ParseError(_))
        ));
    }

    #[test]
    fn round_trip_with_obstacles_and_events() {
        let mut doc = parse_scenario(MINIMAL).unwrap();
        doc.obstacles.push(ObstacleDoc::Cylinder {
            kind: ObstacleKind::AtmNoFly,
            center: [50.0, 50.0],
            radius: 10.0,
            base: 0.0,
            top: 100.0,
        });
        doc.obstacles.push(ObstacleDoc::Polygon {
            kind: ObstacleKind::Building,
            vertices: vec![[10.0, 10.0], [20.0, 10.0], [20.0, 20.0]],
            base: 0.0,
            top: 30.0,
        });
        doc.events.push(EventDoc::NewRequest {
            t: 0,
            uas: 1,
            entry: [0.0, 50.0, 20.0],
            goal: [100.0, 50.0, 20.0],
            kind: RequestKind::Enter,
        });
        doc.events.push(EventDoc::UasFailure {
            t: 3,
            uas: 1,
            position: None,
        });
        let text = doc.to_toml();
        assert_eq!(parse_scenario(&text).unwrap(), doc);
    }
}
