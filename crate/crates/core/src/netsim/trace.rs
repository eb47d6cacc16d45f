//! Event trace written by the engine. Metrics are computed from this alone.

use serde::{Deserialize, Serialize};

use crate::types::{SimTime, StationId};
use crate::wire::MessageType;

use super::Mode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropCause {
    QueueFull,
    StationDown,
    /// Data reached a degraded station that holds no reservation for it.
    Unreserved,
    /// Control message with no usable route.
    NoRoute,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeOutcome {
    Switched,
    NoAlternativePath,
    WindowExpired,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TraceEvent {
    FlowStarted { flow: u32 },
    FlowStopped { flow: u32 },
    PacketSent { flow: u32, seq: u64 },
    PacketDelivered { flow: u32, seq: u64, created: SimTime },
    PacketDropped { flow: u32, seq: u64, created: SimTime, at: StationId, cause: DropCause },
    ControlSent { flow: u32, kind: MessageType, bytes: u32 },
    ControlDropped { flow: u32, kind: MessageType, at: StationId, cause: DropCause },
    ReserveAttempt { flow: u32, ok: bool },
    /// The flow holds an active reservation over stations that are all up.
    Health { flow: u32, healthy: bool },
    FailureInjected { failure: u32, station: StationId, on_active_path: bool },
    AlarmReceived { flow: u32, station: StationId },
    EpisodeOpened { flow: u32 },
    EpisodeClosed { flow: u32, outcome: EpisodeOutcome },
    AnalyzeRequested { flow: u32 },
    QosExtracted { flow: u32 },
    PathSwitched { flow: u32, path: Vec<StationId> },
    SwitchRejected { flow: u32 },
    RecoveredPath { failure: u32 },
    ConservationViolation { station: StationId, capacity: u64, available: u64, reserved: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: SimTime,
    pub event: TraceEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowMeta {
    pub pkt_bytes: u32,
    pub start: SimTime,
    pub stop: SimTime,
    /// Flows whose reservation this flow needs, transitively.
    pub depends_on: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub mode: Mode,
    pub seed: u64,
    pub horizon: SimTime,
    pub flows: Vec<FlowMeta>,
    pub failures: u32,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn events(&self) -> impl Iterator<Item = (SimTime, &TraceEvent)> {
        self.records.iter().map(|r| (r.time, &r.event))
    }
}
