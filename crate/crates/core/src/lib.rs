//! QoS path-failure recovery for reserved multimedia flows.
//!
//! A simplified receiver-initiated reservation plane, the detector /
//! connector / analyzer recovery agents, their wire codec, and a
//! deterministic discrete-event simulator that runs a scenario with and
//! without the agents.

pub mod analyzer;
pub mod connector;
pub mod detector;
pub mod metrics;
pub mod netsim;
pub mod reservation;
pub mod routing;
pub mod types;
pub mod wire;

pub use types::*;
