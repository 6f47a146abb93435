//! Sampling-based model-predictive planner, the always-on base cost, and the
//! grid shortest-path oracle.

mod mppi;
mod search;

pub use mppi::{Mppi, PlannerConfig};
pub use search::{nearest_free_cell, shortest_path, shortest_path_on, GridPath, WorldPath};

use thiserror::Error;

use crate::costmap::{evaluate_stack, CostStack};
use crate::world::{collision, Environment, RobotState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("path endpoint {0:?} is outside the grid")]
    OutOfBounds(crate::grid::Cell),
    #[error("path endpoint {0:?} is in collision")]
    EndpointBlocked(crate::grid::Cell),
}

/// Weights of the safety terms that are always part of the robot cost.
/// The robot radius used by the collision term comes from the grid spec.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BaseCostConfig {
    /// Cost per pixel of excursion outside the world bounds.
    pub bounds_weight: f64,
    pub collision_penalty: f64,
}

impl Default for BaseCostConfig {
    fn default() -> Self {
        BaseCostConfig { bounds_weight: 10.0, collision_penalty: 5000.0 }
    }
}

/// Bounds excursion plus the collision penalty.
#[inline]
pub fn base_cost(state: &RobotState, env: &Environment, cfg: &BaseCostConfig) -> f64 {
    let q = state.q;
    let (w, h) = (env.spec.world_width as f64, env.spec.world_height as f64);
    let dx = (-q.x).max(0.0).max(q.x - w);
    let dy = (-q.y).max(0.0).max(q.y - h);
    let mut cost = 0.0;
    if dx > 0.0 || dy > 0.0 {
        cost += cfg.bounds_weight * crate::math::sqrt(dx * dx + dy * dy);
    }
    if collision(q, env) {
        cost += cfg.collision_penalty;
    }
    cost
}

/// Sum of the composed cost along a state sequence.
pub fn rollout_cost(states: &[RobotState], stack: &CostStack, env: &Environment) -> f64 {
    states.iter().map(|s| evaluate_stack(stack, s, env)).sum()
}
