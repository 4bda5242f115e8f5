//! The full corridor network: one grid, stream function and corridor set per
//! layer, rebuilt selectively when obstacle sections change.

use crate::airspace::{build_grid, AirspaceError, Grid, LayerStack, Region};
use crate::corridor::{build_corridor_sets, CorridorConfig, CorridorError, CorridorSet};
use crate::flow::{
    solve_stream_function, BoundaryConditionSpec, FlowError, FlowField, SolveOptions,
};
use rayon::prelude::*;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("grid for layer {layer}: {source}")]
    Grid { layer: usize, source: AirspaceError },
    #[error("stream function for layer {layer}: {source}")]
    Flow { layer: usize, source: FlowError },
    #[error("corridors: {0}")]
    Corridor(#[from] CorridorError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub region: Region,
    pub dx: f64,
    pub dy: f64,
    /// Clearance added around every obstacle section, meters.
    pub inflation: f64,
    pub solve: SolveOptions,
    pub corridors: CorridorConfig,
}

/// Wall-clock time spent per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub grid: Duration,
    pub solve: Duration,
    pub corridors: Duration,
}

#[derive(Debug, Clone)]
pub struct CorridorNetwork {
    pub layers: LayerStack,
    pub fields: Vec<FlowField>,
    pub sets: Vec<CorridorSet>,
    pub times: StageTimes,
}

fn build_layers(
    cfg: &NetworkConfig,
    layers: &LayerStack,
    which: &[usize],
) -> Result<(Vec<FlowField>, Vec<CorridorSet>, StageTimes), NetworkError> {
    let picked: Vec<_> = which.iter().map(|&i| &layers.layers()[i]).collect();
    let clock = Instant::now();
    let grids: Vec<Grid> = picked
        .par_iter()
        .map(|l| {
            build_grid(cfg.region, &l.sections, cfg.dx, cfg.dy, cfg.inflation).map_err(|source| {
                NetworkError::Grid {
                    layer: l.index,
                    source,
                }
            })
        })
        .collect::<Result<_, _>>()?;
    let grid_time = clock.elapsed();

    let clock = Instant::now();
    let fields: Vec<FlowField> = grids
        .par_iter()
        .zip(picked.par_iter())
        .map(|(g, l)| {
            let bc = BoundaryConditionSpec::centered(&cfg.region, l.axis());
            solve_stream_function(g, &bc, &cfg.solve).map_err(|source| NetworkError::Flow {
                layer: l.index,
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    let solve_time = clock.elapsed();

    let clock = Instant::now();
    let sub = LayerStack::from_layers(picked.into_iter().cloned().collect());
    let sets = build_corridor_sets(&fields, &sub, &cfg.corridors)?;
    let times = StageTimes {
        grid: grid_time,
        solve: solve_time,
        corridors: clock.elapsed(),
    };
    Ok((fields, sets, times))
}

/// Solves every layer of `layers` (sections already attached).
pub fn build_network(
    cfg: &NetworkConfig,
    layers: LayerStack,
) -> Result<CorridorNetwork, NetworkError> {
    let all: Vec<usize> = (0..layers.len()).collect();
    let (fields, sets, times) = build_layers(cfg, &layers, &all)?;
    Ok(CorridorNetwork {
        layers,
        fields,
        sets,
        times,
    })
}

impl CorridorNetwork {
    /// Network for new sections, re-solving only layers whose sections differ.
    /// Returns the new network and the 1-based indices of the layers that changed.
    pub fn rebuild(
        &self,
        cfg: &NetworkConfig,
        layers: LayerStack,
    ) -> Result<(CorridorNetwork, Vec<usize>), NetworkError> {
        let changed: Vec<usize> = layers
            .layers()
            .iter()
            .enumerate()
            .filter(|(i, l)| self.layers.layers().get(*i).map(|o| &o.sections) != Some(&l.sections))
            .map(|(i, _)| i)
            .collect();
        let mut fields = self.fields.clone();
        let mut sets = self.sets.clone();
        let (new_fields, new_sets, times) = if changed.is_empty() {
            (Vec::new(), Vec::new(), StageTimes::default())
        } else {
            build_layers(cfg, &layers, &changed)?
        };
        for ((&i, f), s) in changed.iter().zip(new_fields).zip(new_sets) {
            fields[i] = f;
            sets[i] = s;
        }
        let indices = changed.iter().map(|&i| layers.layers()[i].index).collect();
        Ok((
            CorridorNetwork {
                layers,
                fields,
                sets,
                times,
            },
            indices,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airspace::{ObstacleKind, ObstaclePolygon};
    use crate::geometry::Point2;

    fn config() -> NetworkConfig {
        NetworkConfig {
            region: Region::new(0.0, 200.0, 0.0, 200.0).unwrap(),
            dx: 5.0,
            dy: 5.0,
            inflation: 5.0,
            solve: SolveOptions::default(),
            corridors: CorridorConfig {
                streamlines_odd: 4,
                streamlines_even: 6,
                spacing: 10.0,
            },
        }
    }

    #[test]
    fn rebuild_touches_only_changed_layers() {
        let cfg = config();
        let stack = LayerStack::standard(&[20.0, 25.0, 30.0]).unwrap();
        let net = build_network(&cfg, stack.clone()).unwrap();
        assert_eq!(net.sets.len(), 3);
        // a low building cuts layers 1 and 2 only
        let b = ObstaclePolygon::rectangle(
            Point2::new(90.0, 90.0),
            Point2::new(110.0, 110.0),
            0.0,
            26.0,
            ObstacleKind::Building,
        )
        .unwrap();
        let (next, changed) = net.rebuild(&cfg, stack.with_sections(&[b])).unwrap();
        assert_eq!(changed, vec![1, 2]);
        assert_eq!(next.sets[2], net.sets[2]);
        assert_ne!(next.sets[0], net.sets[0]);
        let (_, none) = next.rebuild(&cfg, next.layers.clone()).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn blocked_layer_reports_grid_stage() {
        let cfg = config();
        let wall = ObstaclePolygon::rectangle(
            Point2::new(-10.0, 90.0),
            Point2::new(210.0, 110.0),
            0.0,
            100.0,
            ObstacleKind::Building,
        )
        .unwrap();
        let stack = LayerStack::standard(&[20.0])
            .unwrap()
            .with_sections(&[wall]);
        assert!(matches!(
            build_network(&cfg, stack),
            Err(NetworkError::Grid { layer: 1, .. })
        ));
    }
}
