//! Planner and deterministic discrete-event simulator for burst-paced
//! service discovery traffic on small router networks.
//!
//! The crate answers two questions about a given topology:
//!
//! * how large must each router's sending queue be, and how far apart must
//!   consecutive reply bursts be spaced, so that a full discovery round
//!   drops nothing ([`planner`]);
//! * what actually happens on the wire for a given spacing, queue sizing
//!   and protocol variant ([`sim`] and [`protocols`]).
//!
//! Everything is deterministic: identical inputs produce byte-identical
//! traces, so regression diffing of trace exports is meaningful.

pub mod planner;
pub mod protocols;
pub mod queue_analysis;
pub mod sim;
pub mod time;
pub mod topology;

pub use planner::{MessageParams, Plan, TsomRounding};
pub use protocols::{BackTrafficFlow, MaxLimitConfig, PacedConfig, ScenarioMetrics};
pub use sim::{SimOptions, SimTrace, Simulator};
pub use topology::{Configuration, EndNode, Link, NodeId, NodeKind, RouterId, Topology};
