//! Deterministic discrete-event simulation of reserved flows over a
//! topology, with station failures injected mid-run.
//!
//! [`run`] executes a [`Scenario`] and returns its [`Trace`]; the metrics
//! module turns a trace into a report.

mod engine;
pub mod queue;
pub mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{FlowSpec, SimTime, StationId, Topology};

pub use queue::{enqueue, Enqueue, LinkQueue};
pub use trace::{DropCause, EpisodeOutcome, FlowMeta, Trace, TraceEvent, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Reservation only; a broken route is rebuilt after a fixed delay.
    Baseline,
    /// Reservation plus the detector, connector and analyzer.
    Proposed,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Proposed => "proposed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub sender: StationId,
    pub receiver: StationId,
    pub spec: FlowSpec,
    pub pkt_bytes: u32,
    pub start: f64,
    pub stop: f64,
    /// Indices of flows that must be reserved together with this one.
    pub compound_deps: Vec<usize>,
}

impl FlowConfig {
    pub fn packet_interval(&self) -> f64 {
        self.pkt_bytes as f64 * 8.0 / self.spec.rate_bps as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureKind {
    Down,
    /// The station can hand out at most this many bits/s from now on.
    Available(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FailureConfig {
    pub time: f64,
    pub station: StationId,
    pub kind: FailureKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub mode: Mode,
    pub seed: u64,
    pub horizon: f64,
    pub batching: bool,
    pub max_batch: usize,
    pub k_alternatives: usize,
    pub tr: f64,
    pub tc: f64,
    pub baseline_recovery_delay: f64,
    pub queue_capacity: usize,
}

impl Default for SimConfig {
    fn default() -> SimConfig {
        SimConfig {
            mode: Mode::Proposed,
            seed: 0,
            horizon: 60.0,
            batching: false,
            max_batch: crate::detector::DEFAULT_MAX_BATCH,
            k_alternatives: crate::routing::DEFAULT_K,
            tr: 0.010,
            tc: 0.0,
            baseline_recovery_delay: 2.0,
            queue_capacity: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub topology: Topology,
    pub flows: Vec<FlowConfig>,
    pub failures: Vec<FailureConfig>,
    pub sim: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {reason}")]
pub struct ScenarioInvalid {
    pub field: String,
    pub reason: String,
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioInvalid {
    ScenarioInvalid {
        field: field.into(),
        reason: reason.into(),
    }
}

fn check_time(field: String, t: f64, horizon: f64) -> Result<(), ScenarioInvalid> {
    if !t.is_finite() || t < 0.0 {
        return Err(invalid(field, format!("{t} is not a non-negative time")));
    }
    if t > horizon {
        return Err(invalid(field, format!("{t} is past the horizon {horizon}")));
    }
    Ok(())
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioInvalid> {
        let sim = &self.sim;
        if !(sim.horizon.is_finite() && sim.horizon > 0.0) {
            return Err(invalid("sim.horizon_s", "must be positive"));
        }
        if !(sim.tr.is_finite() && sim.tr > 0.0) {
            return Err(invalid("sim.tr_s", "must be positive"));
        }
        if !(sim.baseline_recovery_delay.is_finite() && sim.baseline_recovery_delay > 0.0) {
            return Err(invalid("sim.baseline_recovery_delay_s", "must be positive"));
        }
        if sim.k_alternatives == 0 {
            return Err(invalid("sim.k_alternatives", "must be at least 1"));
        }
        if sim.max_batch == 0 {
            return Err(invalid("sim.max_batch", "must be at least 1"));
        }
        if sim.queue_capacity == 0 {
            return Err(invalid("sim.queue_capacity", "must be at least 1"));
        }

        let topo = &self.topology;
        for (i, f) in self.flows.iter().enumerate() {
            let field = |k: &str| format!("flows[{i}].{k}");
            for (k, s) in [("sender", f.sender), ("receiver", f.receiver)] {
                if !topo.contains(s) {
                    return Err(invalid(field(k), format!("unknown station {s}")));
                }
            }
            if f.sender == f.receiver {
                return Err(invalid(field("receiver"), "same as sender"));
            }
            if f.pkt_bytes == 0 {
                return Err(invalid(field("pkt_bytes"), "must be positive"));
            }
            if f.spec.burst_bytes < f.pkt_bytes {
                return Err(invalid(field("burst_bytes"), "smaller than one packet"));
            }
            check_time(field("start_s"), f.start, sim.horizon)?;
            if !(f.stop.is_finite() && f.stop > f.start) {
                return Err(invalid(field("stop_s"), "must be after start_s"));
            }
            for &d in &f.compound_deps {
                if d >= self.flows.len() {
                    return Err(invalid(field("compound_deps"), format!("no flow {d}")));
                }
                if d == i {
                    return Err(invalid(field("compound_deps"), "flow depends on itself"));
                }
            }
        }
        if let Some(i) = self.dependency_cycle() {
            return Err(invalid(format!("flows[{i}].compound_deps"), "dependency cycle"));
        }

        for (i, f) in self.failures.iter().enumerate() {
            check_time(format!("failures[{i}].time_s"), f.time, sim.horizon)?;
            if !topo.contains(f.station) {
                return Err(invalid(format!("failures[{i}].station"), format!("unknown station {}", f.station)));
            }
            if let FailureKind::Available(bps) = f.kind {
                let cap = topo.station(f.station).capacity;
                if bps > cap {
                    return Err(invalid(
                        format!("failures[{i}].available_bps"),
                        format!("{bps} exceeds the station capacity {cap}"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn dependency_cycle(&self) -> Option<usize> {
        // 0 = unvisited, 1 = on stack, 2 = done
        fn visit(flows: &[FlowConfig], i: usize, mark: &mut [u8]) -> bool {
            match mark[i] {
                1 => return true,
                2 => return false,
                _ => {}
            }
            mark[i] = 1;
            for &d in &flows[i].compound_deps {
                if visit(flows, d, mark) {
                    return true;
                }
            }
            mark[i] = 2;
            false
        }
        let mut mark = vec![0u8; self.flows.len()];
        (0..self.flows.len()).find(|&i| visit(&self.flows, i, &mut mark))
    }

    /// Every flow `i` needs reserved, itself excluded, in dependency order.
    pub fn transitive_deps(&self, i: usize) -> Vec<usize> {
        fn walk(flows: &[FlowConfig], i: usize, out: &mut Vec<usize>) {
            for &d in &flows[i].compound_deps {
                if !out.contains(&d) {
                    walk(flows, d, out);
                    out.push(d);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.flows, i, &mut out);
        out.retain(|&d| d != i);
        out
    }
}

/// Serialization delay of `size` bytes on a link of `bandwidth` bits/s.
pub fn transmit_delay(size: u32, bandwidth: u64) -> f64 {
    size as f64 * 8.0 / bandwidth as f64
}

pub(crate) fn transmit_time(size: u32, bandwidth: u64) -> SimTime {
    // exact in integer nanoseconds
    SimTime((size as u128 * 8 * 1_000_000_000 / bandwidth as u128) as u64)
}

/// Run a scenario to its horizon.
pub fn run(scenario: &Scenario) -> Result<Trace, ScenarioInvalid> {
    scenario.validate()?;
    Ok(engine::Engine::new(scenario).run())
}
