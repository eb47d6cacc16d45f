//! proptest generators for wire messages.

use proptest::prelude::*;

use qrs_core::wire::{
    AnalyzeReply, AnalyzeRequest, CumulativeAlarm, DetectorAlarm, Message, QosExtractReply, QosExtractRequest,
    RouteReply, RouteRequest, SenderUpdate,
};
use qrs_core::{FlowSpec, Path, Priority, StationId, StreamId};

pub fn priority() -> impl Strategy<Value = Priority> {
    prop_oneof![
        Just(Priority::Interactive),
        Just(Priority::Streaming),
        Just(Priority::ExcellentEffort),
        Just(Priority::BestEffort),
    ]
}

pub fn flowspec() -> impl Strategy<Value = FlowSpec> {
    (1..=u64::MAX, 1..=u32::MAX, 1..=u32::MAX, priority())
        .prop_map(|(r, b, j, p)| FlowSpec::new(r, b, j, p).unwrap())
}

pub fn station() -> impl Strategy<Value = StationId> {
    any::<u32>().prop_map(StationId)
}

pub fn path() -> impl Strategy<Value = Path> {
    prop::collection::btree_set(any::<u32>(), 2..10)
        .prop_flat_map(|set| Just(set.into_iter().collect::<Vec<_>>()).prop_shuffle())
        .prop_map(|ids| Path::from_ids(&ids).unwrap())
}

fn station_specs(min: usize) -> impl Strategy<Value = Vec<(StationId, FlowSpec)>> {
    prop::collection::vec((station(), flowspec()), min..6)
}

pub fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (any::<u32>(), any::<u32>(), path(), flowspec()).prop_map(|(c, s, p, f)| {
            Message::SenderUpdate(SenderUpdate {
                connector_id: c,
                stream_id: StreamId(s),
                new_path: p,
                flowspec: f,
            })
        }),
        (any::<u32>(), path(), station(), prop::collection::vec(station(), 0..5)).prop_map(|(c, p, s, x)| {
            Message::RouteRequest(RouteRequest {
                connector_id: c,
                old_path: p,
                failed_station: s,
                excluded: x,
            })
        }),
        (any::<u32>(), prop::collection::vec(path(), 0..5)).prop_map(|(c, a)| {
            Message::RouteReply(RouteReply {
                connector_id: c,
                alternatives: a,
            })
        }),
        (any::<u32>(), path(), path()).prop_map(|(c, o, n)| {
            Message::AnalyzeRequest(AnalyzeRequest {
                connector_id: c,
                old_path: o,
                new_path: n,
            })
        }),
        (any::<u32>(), flowspec(), station_specs(0)).prop_map(|(c, f, e)| {
            Message::AnalyzeReply(AnalyzeReply {
                connector_id: c,
                qos_request: f,
                per_station_qos: e,
            })
        }),
        (any::<u32>(), path()).prop_map(|(a, p)| {
            Message::QosExtractRequest(QosExtractRequest {
                analyzer_id: a,
                new_path: p,
            })
        }),
        (any::<u32>(), flowspec()).prop_map(|(a, f)| {
            Message::QosExtractReply(QosExtractReply {
                analyzer_id: a,
                qos_request: f,
            })
        }),
        (any::<u32>(), station(), flowspec()).prop_map(|(c, s, f)| {
            Message::DetectorAlarm(DetectorAlarm {
                connector_id: c,
                failed_station: s,
                failed_qos: f,
            })
        }),
        (any::<u32>(), station_specs(1)).prop_map(|(c, e)| {
            Message::CumulativeAlarm(CumulativeAlarm {
                connector_id: c,
                entries: e,
            })
        }),
    ]
}

/// Ways to damage an encoded message.
#[derive(Clone, Debug)]
pub enum Corruption {
    Flip { at: usize, mask: u8 },
    Truncate { len: usize },
    Extend { bytes: Vec<u8> },
    Overwrite { at: usize, byte: u8 },
}

pub fn corruption() -> impl Strategy<Value = Corruption> {
    prop_oneof![
        (any::<usize>(), 1..=u8::MAX).prop_map(|(at, mask)| Corruption::Flip { at, mask }),
        any::<usize>().prop_map(|len| Corruption::Truncate { len }),
        prop::collection::vec(any::<u8>(), 1..8).prop_map(|bytes| Corruption::Extend { bytes }),
        (any::<usize>(), any::<u8>()).prop_map(|(at, byte)| Corruption::Overwrite { at, byte }),
    ]
}

pub fn corrupt(mut bytes: Vec<u8>, c: &Corruption) -> Vec<u8> {
    let n = bytes.len();
    match c {
        Corruption::Flip { at, mask } => bytes[at % n] ^= mask,
        Corruption::Truncate { len } => bytes.truncate(len % n),
        Corruption::Extend { bytes: extra } => bytes.extend_from_slice(extra),
        Corruption::Overwrite { at, byte } => bytes[at % n] = *byte,
    }
    bytes
}
