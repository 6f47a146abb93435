//! Language-correctable cost composition for a 2D sampling-based planner.
//!
//! Natural-language corrections are grounded into a cost map and a binary
//! mask, composed with the task and safety costs, and consumed by an
//! MPPI-style planner driving a double-integrator robot.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod controller;
pub mod costmap;
pub mod dataset;
pub mod grid;
pub mod grounding;
pub mod math;
pub mod planner;
pub mod rng;
pub mod world;

pub use costmap::{CorrectionKind, CostMap, CostStack, GroundedCorrection, Mask};
pub use grid::{Cell, Grid};
pub use math::{Rect, Vec2};
pub use world::{Environment, GridSpec, ObjectInstance, ObjectKind, RobotState, Task};
