//! Stream-function air corridors over stacked altitude layers and first-come,
//! first-served corridor allocation for UAS by value iteration.

pub mod airspace;
pub mod contour;
pub mod corridor;
pub mod engine;
pub mod export;
pub mod flow;
pub mod geometry;
pub mod linsolve;
pub mod mdp;
pub mod network;
pub mod pipeline;
pub mod planner;
pub mod plot;
pub mod reservation;
pub mod scenario;
