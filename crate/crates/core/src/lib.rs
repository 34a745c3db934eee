//! Sampling-based planning with a value-function handoff to sampling-based
//! model predictive control.

pub mod bench;
pub mod controller;
pub mod dynamics;
pub mod geometry;
pub mod graph;
pub mod planner;
pub mod rng;
pub mod terminal_value;
pub mod world;
