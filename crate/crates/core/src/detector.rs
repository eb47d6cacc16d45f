//! The detector walks a stream's path ahead of the media, one station per
//! hop time, and alarms the connector about stations that can no longer carry
//! the stream's QoS.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::types::{AgentCursor, Flag, FlowSpec, Path, Station, StationId};
use crate::wire::{batch_alarms, DetectorAlarm, Message};

pub const DEFAULT_MAX_BATCH: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeResult {
    Ok,
    Failed(FlowSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectorError {
    #[error("station {0} is not on the detector's path")]
    StationOffPath(StationId),
}

/// Test one station against the requirement. A down station always fails.
pub fn probe_station(
    station: &Station,
    path: &Path,
    required: &FlowSpec,
) -> Result<ProbeResult, DetectorError> {
    if !path.contains(station.id) {
        return Err(DetectorError::StationOffPath(station.id));
    }
    if !station.up || station.available < required.rate_bps {
        Ok(ProbeResult::Failed(*required))
    } else {
        Ok(ProbeResult::Ok)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorState {
    pub detector_id: u32,
    pub connector_id: u32,
    pub connector_address: StationId,
    pub required_qos: Vec<FlowSpec>,
    pub path: Path,
    pub connector_flag: Flag,
    pub qos_test_value: Flag,
    pub batching: bool,
    pub max_batch: usize,
    next: usize,
    pending: Vec<DetectorAlarm>,
    alarmed: BTreeSet<StationId>,
}

impl DetectorState {
    pub fn new(
        detector_id: u32,
        connector_id: u32,
        connector_address: StationId,
        path: Path,
        spec: FlowSpec,
    ) -> DetectorState {
        DetectorState {
            detector_id,
            connector_id,
            connector_address,
            required_qos: vec![spec; path.len()],
            path,
            connector_flag: Flag::Clear,
            qos_test_value: Flag::Clear,
            batching: false,
            max_batch: DEFAULT_MAX_BATCH,
            next: 0,
            pending: Vec::new(),
            alarmed: BTreeSet::new(),
        }
    }

    pub fn with_batching(mut self, batching: bool, max_batch: usize) -> DetectorState {
        self.batching = batching;
        self.max_batch = max_batch.max(1);
        self
    }

    /// Follow the stream onto a new path and start a fresh sweep.
    pub fn set_path(&mut self, path: Path, cursor: &mut AgentCursor) {
        let spec = self.required_qos[0];
        self.required_qos = vec![spec; path.len()];
        self.path = path;
        self.next = 0;
        self.pending.clear();
        self.alarmed.clear();
        cursor.sw = 0;
    }

    /// Forget which stations were already reported, so that stations still
    /// failing are reported again on the next sweep.
    pub fn rearm(&mut self) {
        self.alarmed.clear();
    }

    /// Index of the station the next step will probe.
    pub fn next_position(&self) -> usize {
        self.next
    }

    /// Probe the next station of the sweep. `view` yields the station as the
    /// stream sees it. Returns the alarm messages to send to the connector.
    pub fn step(&mut self, cursor: &mut AgentCursor, view: impl Fn(StationId) -> Station) -> Vec<Message> {
        let mut out = Vec::new();
        let pos = self.next;
        let id = self.path.stations()[pos];
        let required = self.required_qos[pos];
        let result = probe_station(&view(id), &self.path, &required).expect("station taken from the path");

        match result {
            ProbeResult::Ok => {
                self.alarmed.remove(&id);
            }
            ProbeResult::Failed(failed_qos) => {
                self.qos_test_value = Flag::Set;
                if self.alarmed.insert(id) {
                    let alarm = DetectorAlarm {
                        connector_id: self.connector_id,
                        failed_station: id,
                        failed_qos,
                    };
                    if self.batching {
                        self.pending.push(alarm);
                        if self.pending.len() >= self.max_batch {
                            out.extend(self.flush());
                        }
                    } else {
                        out.push(Message::DetectorAlarm(alarm));
                    }
                }
                // alarm raised, move on to the following stations
                self.qos_test_value = Flag::Clear;
            }
        }

        cursor.sw = pos;
        self.next = pos + 1;
        if self.next == self.path.len() {
            out.extend(self.flush());
            self.next = 0;
        }
        out
    }

    fn flush(&mut self) -> Option<Message> {
        if self.pending.is_empty() {
            return None;
        }
        let alarms = std::mem::take(&mut self.pending);
        Some(Message::CumulativeAlarm(
            batch_alarms(&alarms).expect("one connector, non-empty"),
        ))
    }
}
