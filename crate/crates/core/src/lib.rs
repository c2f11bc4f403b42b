//! Cooperative self-localization and multi-object tracking for networks of
//! mobile agents that carry radio transmitters and receivers.
//!
//! Agents localize themselves from navigation fixes and inter-agent
//! range/bearing links, and track an unknown number of passive objects from
//! their reflections. Both tasks share one particle-based message passing
//! filter; in joint mode the tracked objects also feed back into agent
//! localization.

// `!(x > 0.0)` style checks are how validation rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod belief;
pub mod cli;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod scenario;
pub mod selfloc;
pub mod tracker;
