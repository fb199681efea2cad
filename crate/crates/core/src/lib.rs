//! Two-timescale evolving agent for sequential portfolio allocation.
//!
//! Fast timescale: bandits pick a memory retrieval policy (and optionally a
//! planner and a tool subset) every episode. Slow timescale: reflection,
//! distillation and evolution run once per window.

pub mod bandits;
pub mod canonical;
pub mod credit;
pub mod harness;
pub mod market;
pub mod memory;
pub mod planners;
pub mod reflection;
pub mod toolkit;
