//! Space-time occupancy ledger: which UAS holds each waypoint at each tick.

use crate::corridor::WaypointKey;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UasId(pub u32);

impl fmt::Display for UasId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReservationError {
    #[error("waypoint {key:?} at t={t} is held by UAS {holder}, requested by UAS {requester}")]
    Conflict {
        key: WaypointKey,
        t: u32,
        holder: UasId,
        requester: UasId,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReservationTable {
    cells: BTreeMap<WaypointKey, BTreeMap<u32, UasId>>,
}

impl ReservationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn occupant(&self, key: &WaypointKey, t: u32) -> Option<UasId> {
        self.cells.get(key).and_then(|m| m.get(&t)).copied()
    }

    /// True when nobody other than `uas` holds the cell.
    pub fn is_free_for(&self, key: &WaypointKey, t: u32, uas: UasId) -> bool {
        self.occupant(key, t).is_none_or(|h| h == uas)
    }

    pub fn reserve(
        &mut self,
        key: WaypointKey,
        t: u32,
        uas: UasId,
    ) -> Result<(), ReservationError> {
        let slot = self.cells.entry(key).or_default();
        match slot.get(&t) {
            Some(&holder) if holder != uas => Err(ReservationError::Conflict {
                key,
                t,
                holder,
                requester: uas,
            }),
            _ => {
                slot.insert(t, uas);
                Ok(())
            }
        }
    }

    /// Reserves every cell or none of them.
    pub fn reserve_path(
        &mut self,
        uas: UasId,
        cells: &[(WaypointKey, u32)],
    ) -> Result<(), ReservationError> {
        for &(key, t) in cells {
            if let Some(holder) = self.occupant(&key, t) {
                if holder != uas {
                    return Err(ReservationError::Conflict {
                        key,
                        t,
                        holder,
                        requester: uas,
                    });
                }
            }
        }
        for &(key, t) in cells {
            self.cells.entry(key).or_default().insert(t, uas);
        }
        Ok(())
    }

    fn retain(&mut self, mut keep: impl FnMut(u32, UasId) -> bool) -> usize {
        let mut removed = 0;
        self.cells.retain(|_, slot| {
            let before = slot.len();
            slot.retain(|&t, &mut u| keep(t, u));
            removed += before - slot.len();
            !slot.is_empty()
        });
        removed
    }

    /// Drops every reservation of `uas`; returns how many were removed.
    pub fn release_uas(&mut self, uas: UasId) -> usize {
        self.retain(|_, u| u != uas)
    }

    /// Drops the reservations of `uas` at times `>= from`.
    pub fn release_from(&mut self, uas: UasId, from: u32) -> usize {
        self.retain(|t, u| u != uas || t < from)
    }

    /// Forgets everything before `t`.
    pub fn prune_before(&mut self, t: u32) -> usize {
        self.retain(|tt, _| tt >= t)
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// All reservations ordered by waypoint then time.
    pub fn entries(&self) -> impl Iterator<Item = (WaypointKey, u32, UasId)> + '_ {
        self.cells
            .iter()
            .flat_map(|(k, slot)| slot.iter().map(move |(&t, &u)| (*k, t, u)))
    }

    /// Cells held by `uas`, ordered by time.
    pub fn cells_of(&self, uas: UasId) -> Vec<(WaypointKey, u32)> {
        let mut out: Vec<(WaypointKey, u32)> = self
            .entries()
            .filter(|&(_, _, u)| u == uas)
            .map(|(k, t, _)| (k, t))
            .collect();
        out.sort_by_key(|&(k, t)| (t, k));
        out
    }

    /// UAS ids with at least one reservation.
    pub fn holders(&self) -> Vec<UasId> {
        let mut ids: Vec<UasId> = self.entries().map(|(_, _, u)| u).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}
