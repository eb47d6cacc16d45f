//! Path comparison and QoS-request construction for a candidate route.

use thiserror::Error;

use crate::types::{DiffResult, Flag, FlowSpec, Path, RsvpHandle, StationId};
use crate::wire::{AnalyzeReply, AnalyzeRequest, Message, QosExtractReply, QosExtractRequest};

/// Positional comparison of two station sequences.
///
/// Positions `0..min(N, M)` are paired: equal stations go to `same`, unequal
/// ones to `diff1`/`diff2`. Whatever is left of the longer sequence is
/// appended to its own diff table with no counterpart.
pub fn diff_stations(old: &[StationId], new: &[StationId]) -> DiffResult {
    let mut d = DiffResult::default();
    for (&o, &n) in old.iter().zip(new) {
        if o == n {
            d.same.push(o);
            d.k += 1;
        } else {
            d.diff1.push(o);
            d.diff2.push(n);
            d.h += 1;
        }
    }
    let paired = old.len().min(new.len());
    d.diff1.extend_from_slice(&old[paired..]);
    d.diff2.extend_from_slice(&new[paired..]);
    d
}

pub fn diff_paths(old: &Path, new: &Path) -> DiffResult {
    diff_stations(old.stations(), new.stations())
}

/// End-to-end spec for the new path plus the per-station requirements of the
/// stations it introduces. Shared stations keep their reservation and are not
/// listed.
pub fn build_qos_request(
    diff: &DiffResult,
    old_spec: FlowSpec,
    new: &Path,
) -> (FlowSpec, Vec<(StationId, FlowSpec)>) {
    let per_station = diff
        .diff2
        .iter()
        .filter(|s| new.contains(**s))
        .map(|&s| (s, old_spec))
        .collect();
    (old_spec, per_station)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyzerError {
    #[error("QoS extraction reply with no open analyze request")]
    NoPendingRequest,
    #[error("analyzer cannot handle {0}")]
    UnexpectedMessage(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzerState {
    pub connector_id: u32,
    pub analyzer_id: u32,
    pub connector_address: StationId,
    pub rsvp_handle: RsvpHandle,
    pub same_table: Vec<StationId>,
    pub diff1_table: Vec<StationId>,
    pub diff2_table: Vec<StationId>,
    pub connector_flag: Flag,
    pending: Option<(DiffResult, Path)>,
}

impl AnalyzerState {
    pub fn new(
        analyzer_id: u32,
        connector_id: u32,
        connector_address: StationId,
        rsvp_handle: RsvpHandle,
    ) -> AnalyzerState {
        AnalyzerState {
            connector_id,
            analyzer_id,
            connector_address,
            rsvp_handle,
            same_table: Vec::new(),
            diff1_table: Vec::new(),
            diff2_table: Vec::new(),
            connector_flag: Flag::Clear,
            pending: None,
        }
    }

    /// Feed one incoming message; returns the messages to send.
    pub fn step(&mut self, msg: &Message) -> Result<Vec<Message>, AnalyzerError> {
        match msg {
            Message::AnalyzeRequest(req) => Ok(self.on_request(req)),
            Message::QosExtractReply(rep) => self.on_extract(rep).map(|m| vec![m]),
            other => Err(AnalyzerError::UnexpectedMessage(other.message_type().name())),
        }
    }

    fn on_request(&mut self, req: &AnalyzeRequest) -> Vec<Message> {
        let diff = diff_paths(&req.old_path, &req.new_path);
        self.same_table = diff.same.clone();
        self.diff1_table = diff.diff1.clone();
        self.diff2_table = diff.diff2.clone();
        if diff.is_identical() {
            // nothing changed: the old request stands
            self.pending = None;
            self.connector_flag = Flag::Clear;
            return vec![Message::AnalyzeReply(AnalyzeReply {
                connector_id: self.connector_id,
                qos_request: self.rsvp_handle.spec,
                per_station_qos: Vec::new(),
            })];
        }
        self.connector_flag = Flag::Set;
        self.pending = Some((diff, req.new_path.clone()));
        vec![Message::QosExtractRequest(QosExtractRequest {
            analyzer_id: self.analyzer_id,
            new_path: req.new_path.clone(),
        })]
    }

    fn on_extract(&mut self, rep: &QosExtractReply) -> Result<Message, AnalyzerError> {
        if !self.connector_flag.is_set() {
            return Err(AnalyzerError::NoPendingRequest);
        }
        let (diff, new_path) = self.pending.take().ok_or(AnalyzerError::NoPendingRequest)?;
        let (spec, per_station) = build_qos_request(&diff, rep.qos_request, &new_path);
        self.connector_flag = Flag::Clear;
        Ok(Message::AnalyzeReply(AnalyzeReply {
            connector_id: self.connector_id,
            qos_request: spec,
            per_station_qos: per_station,
        }))
    }
}
