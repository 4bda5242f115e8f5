//! Value iteration for deterministic, minimum-cost decision processes.
//!
//! Every transition lands on exactly one successor, so the Bellman update reduces
//! to `V(s) = min_a (J_a(s, s') + γ V(s'))`. Goal states are absorbing with value 0.
//! States that cannot reach a goal hold [`UNREACHABLE`] and never feed finite
//! values.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use thiserror::Error;

/// Finite stand-in for an infinite cost.
pub const UNREACHABLE: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("start state {state} cannot reach the goal")]
    NoFiniteValueAtStart { state: usize },
    #[error("value iteration did not converge in {sweeps} sweeps (last change {change:e})")]
    NotConverged { sweeps: usize, change: f64 },
    #[error("roll-out from state {start} exceeded {max_steps} steps")]
    RolloutStalled { start: usize, max_steps: usize },
    #[error("state {state} has no policy action")]
    NoAction { state: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Forward (a1), hold (a2), up one layer (a3), down one layer (a4). The declaration
/// order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    Hold,
    Up,
    Down,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Forward, Action::Hold, Action::Up, Action::Down];

    pub fn label(self) -> &'static str {
        match self {
            Action::Forward => "a1",
            Action::Hold => "a2",
            Action::Up => "a3",
            Action::Down => "a4",
        }
    }

    pub fn parse(s: &str) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.label() == s)
    }

    /// Whether the action changes layer (and pays the layer-change penalty).
    pub fn changes_layer(self) -> bool {
        matches!(self, Action::Up | Action::Down)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub action: Action,
    pub next: usize,
    pub cost: f64,
}

pub trait DeterministicMdp {
    fn num_states(&self) -> usize;
    fn is_goal(&self, state: usize) -> bool;
    /// Appends the feasible transitions of `state` to `out`.
    fn transitions(&self, state: usize, out: &mut Vec<Transition>);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueIterationConfig {
    pub gamma: f64,
    pub epsilon: f64,
    pub max_sweeps: usize,
    /// Keep sweeping after the threshold is met until no value changes at all.
    pub polish: bool,
}

impl Default for ValueIterationConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            epsilon: 1e-6,
            max_sweeps: 100_000,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: Vec<f64>,
    pub gamma: f64,
    pub epsilon: f64,
    pub sweeps: usize,
    /// Largest per-state change in the final sweep.
    pub last_change: f64,
}

impl ValueTable {
    pub fn value(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn is_finite(&self, state: usize) -> bool {
        self.values[state] < UNREACHABLE
    }
}

/// States from which some goal can be reached.
pub fn reachable_to_goal<M: DeterministicMdp + ?Sized>(mdp: &M) -> Vec<bool> {
    let n = mdp.num_states();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut buf = Vec::new();
    for s in 0..n {
        if mdp.is_goal(s) {
            continue;
        }
        buf.clear();
        mdp.transitions(s, &mut buf);
        for t in &buf {
            preds[t.next].push(s);
        }
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&s| mdp.is_goal(s)).collect();
    for &g in &queue {
        seen[g] = true;
    }
    while let Some(s) = queue.pop_front() {
        for &p in &preds[s] {
            if !seen[p] {
                seen[p] = true;
                queue.push_back(p);
            }
        }
    }
    seen
}

/// Gauss–Seidel value iteration state, swept in descending state order.
pub struct ValueIterator<'a, M: DeterministicMdp + ?Sized> {
    mdp: &'a M,
    gamma: f64,
    values: Vec<f64>,
    active: Vec<bool>,
    buf: Vec<Transition>,
}

impl<'a, M: DeterministicMdp + ?Sized> ValueIterator<'a, M> {
    /// Starts from V ≡ 0 on states that can reach a goal.
    pub fn new(mdp: &'a M, gamma: f64) -> Self {
        let reach = reachable_to_goal(mdp);
        let n = mdp.num_states();
        let values = (0..n)
            .map(|s| if reach[s] { 0.0 } else { UNREACHABLE })
            .collect();
        let active = (0..n).map(|s| reach[s] && !mdp.is_goal(s)).collect();
        Self {
            mdp,
            gamma,
            values,
            active,
            buf: Vec::new(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// One in-place sweep; returns the largest change.
    pub fn sweep(&mut self) -> f64 {
        let mut change: f64 = 0.0;
        for s in (0..self.values.len()).rev() {
            if !self.active[s] {
                continue;
            }
            self.buf.clear();
            self.mdp.transitions(s, &mut self.buf);
            let best = best_backup(&self.buf, &self.values, self.gamma)
                .map(|(v, _)| v)
                .unwrap_or(UNREACHABLE);
            change = change.max((best - self.values[s]).abs());
            self.values[s] = best;
        }
        change
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Minimum backed-up value over transitions into finite states, first minimum in
/// action order.
fn best_backup(
    transitions: &[Transition],
    values: &[f64],
    gamma: f64,
) -> Option<(f64, Transition)> {
    let mut best: Option<(f64, Transition)> = None;
    for t in transitions {
        let v_next = values[t.next];
        if v_next >= UNREACHABLE {
            continue;
        }
        let q = t.cost + gamma * v_next;
        let better = match best {
            None => true,
            Some((bq, bt)) => q < bq || (q == bq && t.action < bt.action),
        };
        if better {
            best = Some((q, *t));
        }
    }
    best
}

/// Runs value iteration until the largest change is at most `epsilon` (and, with
/// `polish`, until a sweep changes nothing).
pub fn solve_values<M: DeterministicMdp + ?Sized>(
    mdp: &M,
    cfg: &ValueIterationConfig,
) -> Result<ValueTable, MdpError> {
    if !(0.0..=1.0).contains(&cfg.gamma) || !(cfg.epsilon > 0.0) {
        return Err(MdpError::InvalidConfig(format!(
            "need gamma in [0, 1] and epsilon > 0, got gamma={}, epsilon={}",
            cfg.gamma, cfg.epsilon
        )));
    }
    let mut it = ValueIterator::new(mdp, cfg.gamma);
    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    let target = if cfg.polish { 0.0 } else { cfg.epsilon };
    while sweeps < cfg.max_sweeps {
        change = it.sweep();
        sweeps += 1;
        if change <= target {
            break;
        }
    }
    if change > cfg.epsilon {
        return Err(MdpError::NotConverged { sweeps, change });
    }
    Ok(ValueTable {
        values: it.into_values(),
        gamma: cfg.gamma,
        epsilon: cfg.epsilon,
        sweeps,
        last_change: change,
    })
}

/// [`solve_values`] followed by a check that `start` has a finite value.
pub fn value_iteration<M: DeterministicMdp + ?Sized>(
    mdp: &M,
    cfg: &ValueIterationConfig,
    start: usize,
) -> Result<ValueTable, MdpError> {
    let table = solve_values(mdp, cfg)?;
    if !table.is_finite(start) {
        return Err(MdpError::NoFiniteValueAtStart { state: start });
    }
    Ok(table)
}

/// Greedy policy from converged values. Goal and unreachable states get `None`.
pub fn extract_policy<M: DeterministicMdp + ?Sized>(
    mdp: &M,
    table: &ValueTable,
) -> Vec<Option<Transition>> {
    let mut buf = Vec::new();
    (0..mdp.num_states())
        .map(|s| {
            if mdp.is_goal(s) || !table.is_finite(s) {
                return None;
            }
            buf.clear();
            mdp.transitions(s, &mut buf);
            best_backup(&buf, &table.values, table.gamma).map(|(_, t)| t)
        })
        .collect()
}

/// Largest |V(s) − min_a(J + γV(s'))| over finite non-goal states.
pub fn bellman_residual<M: DeterministicMdp + ?Sized>(mdp: &M, table: &ValueTable) -> f64 {
    let mut buf = Vec::new();
    let mut worst: f64 = 0.0;
    for s in 0..mdp.num_states() {
        if mdp.is_goal(s) || !table.is_finite(s) {
            continue;
        }
        buf.clear();
        mdp.transitions(s, &mut buf);
        let best = best_backup(&buf, &table.values, table.gamma)
            .map(|(v, _)| v)
            .unwrap_or(UNREACHABLE);
        worst = worst.max((table.values[s] - best).abs());
    }
    worst
}

/// Follows `policy` from `start` to a goal. Each entry is a visited state and the
/// action taken there; the goal itself is not listed.
pub fn roll_out<M: DeterministicMdp + ?Sized>(
    mdp: &M,
    policy: &[Option<Transition>],
    start: usize,
    max_steps: usize,
) -> Result<Vec<(usize, Action)>, MdpError> {
    let mut path = Vec::new();
    let mut s = start;
    while !mdp.is_goal(s) {
        if path.len() >= max_steps {
            return Err(MdpError::RolloutStalled { start, max_steps });
        }
        let t = policy[s].ok_or(MdpError::NoAction { state: s })?;
        path.push((s, t.action));
        s = t.next;
    }
    Ok(path)
}

/// Same walk as [`roll_out`], choosing each action from `table` on the fly instead
/// of from a stored policy.
pub fn roll_out_greedy<M: DeterministicMdp + ?Sized>(
    mdp: &M,
    table: &ValueTable,
    start: usize,
    max_steps: usize,
) -> Result<Vec<(usize, Action)>, MdpError> {
    let mut path = Vec::new();
    let mut buf = Vec::new();
    let mut s = start;
    while !mdp.is_goal(s) {
        if path.len() >= max_steps {
            return Err(MdpError::RolloutStalled { start, max_steps });
        }
        if !table.is_finite(s) {
            return Err(MdpError::NoAction { state: s });
        }
        buf.clear();
        mdp.transitions(s, &mut buf);
        let (_, t) =
            best_backup(&buf, &table.values, table.gamma).ok_or(MdpError::NoAction { state: s })?;
        path.push((s, t.action));
        s = t.next;
    }
    Ok(path)
}

/// Explicit transition lists, handy for small instances and tests.
#[derive(Debug, Clone, Default)]
pub struct TableMdp {
    pub edges: Vec<Vec<Transition>>,
    pub goals: Vec<bool>,
}

impl TableMdp {
    pub fn new(n: usize) -> Self {
        Self {
            edges: vec![Vec::new(); n],
            goals: vec![false; n],
        }
    }

    pub fn add(&mut self, from: usize, action: Action, to: usize, cost: f64) {
        self.edges[from].push(Transition {
            action,
            next: to,
            cost,
        });
    }
}

impl DeterministicMdp for TableMdp {
    fn num_states(&self) -> usize {
        self.edges.len()
    }

    fn is_goal(&self, state: usize) -> bool {
        self.goals[state]
    }

    fn transitions(&self, state: usize, out: &mut Vec<Transition>) {
        out.extend_from_slice(&self.edges[state]);
    }
}
