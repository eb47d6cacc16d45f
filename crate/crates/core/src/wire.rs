//! Binary encoding of the recovery-plane messages.
//!
//! Every message is an 8-byte header followed by a body:
//!
//! ```text
//!  0               4       5       6               8
//! +---------------+-------+-------+---------------+------------
//! | magic "QMRS"  | ver=1 | type  | body_len (BE) | body ...
//! +---------------+-------+-------+---------------+------------
//! ```
//!
//! All integers are big-endian and fixed width. A path is a `u16` count
//! followed by `u32` station ids; a flowspec is `u64` rate (bits/s), `u32`
//! burst (bytes), `u32` jitter bound (microseconds) and a `u8` priority.
//! Lists are a `u16` count followed by their elements.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{FlowSpec, Path, Priority, StationId, StreamId};

pub const MAGIC: u32 = 0x514D_5253;
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 8;

pub const FLOWSPEC_LEN: usize = 8 + 4 + 4 + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum MessageType {
    SenderUpdate = 1,
    RouteRequest = 2,
    RouteReply = 3,
    AnalyzeRequest = 4,
    AnalyzeReply = 5,
    QosExtractRequest = 6,
    QosExtractReply = 7,
    DetectorAlarm = 8,
    CumulativeAlarm = 9,
}

impl MessageType {
    pub const ALL: [MessageType; 9] = [
        MessageType::SenderUpdate,
        MessageType::RouteRequest,
        MessageType::RouteReply,
        MessageType::AnalyzeRequest,
        MessageType::AnalyzeReply,
        MessageType::QosExtractRequest,
        MessageType::QosExtractReply,
        MessageType::DetectorAlarm,
        MessageType::CumulativeAlarm,
    ];

    pub fn from_code(code: u8) -> Option<MessageType> {
        MessageType::ALL.get((code as usize).wrapping_sub(1)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageType::SenderUpdate => "sender_update",
            MessageType::RouteRequest => "route_request",
            MessageType::RouteReply => "route_reply",
            MessageType::AnalyzeRequest => "analyze_request",
            MessageType::AnalyzeReply => "analyze_reply",
            MessageType::QosExtractRequest => "qos_extract_request",
            MessageType::QosExtractReply => "qos_extract_reply",
            MessageType::DetectorAlarm => "detector_alarm",
            MessageType::CumulativeAlarm => "cumulative_alarm",
        }
    }
}

/// Connector to sender: switch the stream onto `new_path`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenderUpdate {
    pub connector_id: u32,
    pub stream_id: StreamId,
    pub new_path: Path,
    pub flowspec: FlowSpec,
}

/// Connector to router: ask for paths around `failed_station`.
///
/// `excluded` carries further stations the connector already knows to be
/// unusable (other alarmed stations, stations that failed validation).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteRequest {
    pub connector_id: u32,
    pub old_path: Path,
    pub failed_station: StationId,
    pub excluded: Vec<StationId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteReply {
    pub connector_id: u32,
    pub alternatives: Vec<Path>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzeRequest {
    pub connector_id: u32,
    pub old_path: Path,
    pub new_path: Path,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyzeReply {
    pub connector_id: u32,
    pub qos_request: FlowSpec,
    pub per_station_qos: Vec<(StationId, FlowSpec)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QosExtractRequest {
    pub analyzer_id: u32,
    pub new_path: Path,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QosExtractReply {
    pub analyzer_id: u32,
    pub qos_request: FlowSpec,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorAlarm {
    pub connector_id: u32,
    pub failed_station: StationId,
    pub failed_qos: FlowSpec,
}

/// Several detector alarms carried in one message. Never empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CumulativeAlarm {
    pub connector_id: u32,
    pub entries: Vec<(StationId, FlowSpec)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Message {
    SenderUpdate(SenderUpdate),
    RouteRequest(RouteRequest),
    RouteReply(RouteReply),
    AnalyzeRequest(AnalyzeRequest),
    AnalyzeReply(AnalyzeReply),
    QosExtractRequest(QosExtractRequest),
    QosExtractReply(QosExtractReply),
    DetectorAlarm(DetectorAlarm),
    CumulativeAlarm(CumulativeAlarm),
}

impl Message {
    pub fn message_type(&self) -> MessageType {
        match self {
            Message::SenderUpdate(_) => MessageType::SenderUpdate,
            Message::RouteRequest(_) => MessageType::RouteRequest,
            Message::RouteReply(_) => MessageType::RouteReply,
            Message::AnalyzeRequest(_) => MessageType::AnalyzeRequest,
            Message::AnalyzeReply(_) => MessageType::AnalyzeReply,
            Message::QosExtractRequest(_) => MessageType::QosExtractRequest,
            Message::QosExtractReply(_) => MessageType::QosExtractReply,
            Message::DetectorAlarm(_) => MessageType::DetectorAlarm,
            Message::CumulativeAlarm(_) => MessageType::CumulativeAlarm,
        }
    }

    /// Size on the wire, header included.
    pub fn encoded_len(&self) -> Result<usize, EncodeError> {
        encode(self).map(|b| b.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("body of {0} bytes exceeds the 65535-byte limit")]
    OversizeBody(usize),
    #[error("list of {0} elements exceeds the 65535-element limit")]
    OversizeList(usize),
    #[error("cumulative alarm has no entries")]
    EmptyCumulativeAlarm,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("bad magic at offset {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported version {found} at offset {offset}")]
    BadVersion { offset: usize, found: u8 },
    #[error("unknown message type {found} at offset {offset}")]
    UnknownType { offset: usize, found: u8 },
    #[error("header truncated at offset {offset}")]
    TruncatedHeader { offset: usize },
    #[error("body truncated at offset {offset}")]
    TruncatedBody { offset: usize },
    #[error("{count} trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("invalid {field} at offset {offset}")]
    InvalidField { offset: usize, field: &'static str },
}

impl DecodeError {
    pub fn offset(&self) -> usize {
        match *self {
            DecodeError::BadMagic { offset }
            | DecodeError::BadVersion { offset, .. }
            | DecodeError::UnknownType { offset, .. }
            | DecodeError::TruncatedHeader { offset }
            | DecodeError::TruncatedBody { offset }
            | DecodeError::TrailingBytes { offset, .. }
            | DecodeError::InvalidField { offset, .. } => offset,
        }
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    fn count(&mut self, n: usize) -> Result<(), EncodeError> {
        let n16 = u16::try_from(n).map_err(|_| EncodeError::OversizeList(n))?;
        self.u16(n16);
        Ok(())
    }

    fn station(&mut self, s: StationId) {
        self.u32(s.0);
    }

    fn stations(&mut self, stations: &[StationId]) -> Result<(), EncodeError> {
        self.count(stations.len())?;
        for &s in stations {
            self.station(s);
        }
        Ok(())
    }

    fn path(&mut self, p: &Path) -> Result<(), EncodeError> {
        self.stations(p.stations())
    }

    fn flowspec(&mut self, f: &FlowSpec) {
        self.u64(f.rate_bps);
        self.u32(f.burst_bytes);
        self.u32(f.jitter_bound_us);
        self.u8(f.priority.code());
    }

    fn station_specs(&mut self, entries: &[(StationId, FlowSpec)]) -> Result<(), EncodeError> {
        self.count(entries.len())?;
        for (s, f) in entries {
            self.station(*s);
            self.flowspec(f);
        }
        Ok(())
    }
}

/// Encode `msg` into its canonical byte form.
pub fn encode(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let mut w = Writer {
        buf: Vec::with_capacity(64),
    };
    w.u32(MAGIC);
    w.u8(VERSION);
    w.u8(msg.message_type() as u8);
    w.u16(0); // body_len, patched below

    match msg {
        Message::SenderUpdate(m) => {
            w.u32(m.connector_id);
            w.u32(m.stream_id.0);
            w.path(&m.new_path)?;
            w.flowspec(&m.flowspec);
        }
        Message::RouteRequest(m) => {
            w.u32(m.connector_id);
            w.path(&m.old_path)?;
            w.station(m.failed_station);
            w.stations(&m.excluded)?;
        }
        Message::RouteReply(m) => {
            w.u32(m.connector_id);
            w.count(m.alternatives.len())?;
            for p in &m.alternatives {
                w.path(p)?;
            }
        }
        Message::AnalyzeRequest(m) => {
            w.u32(m.connector_id);
            w.path(&m.old_path)?;
            w.path(&m.new_path)?;
        }
        Message::AnalyzeReply(m) => {
            w.u32(m.connector_id);
            w.flowspec(&m.qos_request);
            w.station_specs(&m.per_station_qos)?;
        }
        Message::QosExtractRequest(m) => {
            w.u32(m.analyzer_id);
            w.path(&m.new_path)?;
        }
        Message::QosExtractReply(m) => {
            w.u32(m.analyzer_id);
            w.flowspec(&m.qos_request);
        }
        Message::DetectorAlarm(m) => {
            w.u32(m.connector_id);
            w.station(m.failed_station);
            w.flowspec(&m.failed_qos);
        }
        Message::CumulativeAlarm(m) => {
            if m.entries.is_empty() {
                return Err(EncodeError::EmptyCumulativeAlarm);
            }
            w.u32(m.connector_id);
            w.station_specs(&m.entries)?;
        }
    }

    let body_len = w.buf.len() - HEADER_LEN;
    let body_len16 = u16::try_from(body_len).map_err(|_| EncodeError::OversizeBody(body_len))?;
    w.buf[6..HEADER_LEN].copy_from_slice(&body_len16.to_be_bytes());
    Ok(w.buf)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    /// One past the last body byte.
    end: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.pos + n > self.end {
            return Err(DecodeError::TruncatedBody { offset: self.end });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        let b = self.take(8)?;
        Ok(u64::from_be_bytes(b.try_into().unwrap()))
    }

    fn station(&mut self) -> Result<StationId, DecodeError> {
        self.u32().map(StationId)
    }

    fn stations(&mut self) -> Result<Vec<StationId>, DecodeError> {
        let n = self.u16()? as usize;
        // every id is 4 bytes; reject impossible counts before allocating
        if self.pos + 4 * n > self.end {
            return Err(DecodeError::TruncatedBody { offset: self.end });
        }
        (0..n).map(|_| self.station()).collect()
    }

    fn path(&mut self) -> Result<Path, DecodeError> {
        let offset = self.pos;
        let stations = self.stations()?;
        Path::new(stations).map_err(|_| DecodeError::InvalidField {
            offset,
            field: "path",
        })
    }

    fn flowspec(&mut self) -> Result<FlowSpec, DecodeError> {
        let offset = self.pos;
        let rate = self.u64()?;
        let burst = self.u32()?;
        let jitter = self.u32()?;
        let prio_offset = self.pos;
        let priority = Priority::from_code(self.u8()?).ok_or(DecodeError::InvalidField {
            offset: prio_offset,
            field: "priority",
        })?;
        FlowSpec::new(rate, burst, jitter, priority).map_err(|_| DecodeError::InvalidField {
            offset,
            field: "flowspec",
        })
    }

    fn station_specs(&mut self) -> Result<Vec<(StationId, FlowSpec)>, DecodeError> {
        let n = self.u16()? as usize;
        if self.pos + (4 + FLOWSPEC_LEN) * n > self.end {
            return Err(DecodeError::TruncatedBody { offset: self.end });
        }
        (0..n)
            .map(|_| Ok((self.station()?, self.flowspec()?)))
            .collect()
    }
}

/// Decode one message occupying exactly `bytes`.
pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    if bytes.len() < 4 {
        return Err(DecodeError::TruncatedHeader {
            offset: bytes.len(),
        });
    }
    if bytes[0..4] != MAGIC.to_be_bytes() {
        let offset = bytes[0..4]
            .iter()
            .zip(MAGIC.to_be_bytes())
            .position(|(a, b)| *a != b)
            .unwrap_or(0);
        return Err(DecodeError::BadMagic { offset });
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::TruncatedHeader {
            offset: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(DecodeError::BadVersion {
            offset: 4,
            found: bytes[4],
        });
    }
    let ty = MessageType::from_code(bytes[5]).ok_or(DecodeError::UnknownType {
        offset: 5,
        found: bytes[5],
    })?;
    let body_len = u16::from_be_bytes([bytes[6], bytes[7]]) as usize;
    let end = HEADER_LEN + body_len;
    if bytes.len() < end {
        return Err(DecodeError::TruncatedBody {
            offset: bytes.len(),
        });
    }

    let mut r = Reader {
        buf: bytes,
        pos: HEADER_LEN,
        end,
    };
    let msg = match ty {
        MessageType::SenderUpdate => Message::SenderUpdate(SenderUpdate {
            connector_id: r.u32()?,
            stream_id: StreamId(r.u32()?),
            new_path: r.path()?,
            flowspec: r.flowspec()?,
        }),
        MessageType::RouteRequest => Message::RouteRequest(RouteRequest {
            connector_id: r.u32()?,
            old_path: r.path()?,
            failed_station: r.station()?,
            excluded: r.stations()?,
        }),
        MessageType::RouteReply => {
            let connector_id = r.u32()?;
            let n = r.u16()? as usize;
            let mut alternatives = Vec::with_capacity(n.min(64));
            for _ in 0..n {
                alternatives.push(r.path()?);
            }
            Message::RouteReply(RouteReply {
                connector_id,
                alternatives,
            })
        }
        MessageType::AnalyzeRequest => Message::AnalyzeRequest(AnalyzeRequest {
            connector_id: r.u32()?,
            old_path: r.path()?,
            new_path: r.path()?,
        }),
        MessageType::AnalyzeReply => Message::AnalyzeReply(AnalyzeReply {
            connector_id: r.u32()?,
            qos_request: r.flowspec()?,
            per_station_qos: r.station_specs()?,
        }),
        MessageType::QosExtractRequest => Message::QosExtractRequest(QosExtractRequest {
            analyzer_id: r.u32()?,
            new_path: r.path()?,
        }),
        MessageType::QosExtractReply => Message::QosExtractReply(QosExtractReply {
            analyzer_id: r.u32()?,
            qos_request: r.flowspec()?,
        }),
        MessageType::DetectorAlarm => Message::DetectorAlarm(DetectorAlarm {
            connector_id: r.u32()?,
            failed_station: r.station()?,
            failed_qos: r.flowspec()?,
        }),
        MessageType::CumulativeAlarm => {
            let connector_id = r.u32()?;
            let offset = r.pos;
            let entries = r.station_specs()?;
            if entries.is_empty() {
                return Err(DecodeError::InvalidField {
                    offset,
                    field: "entries",
                });
            }
            Message::CumulativeAlarm(CumulativeAlarm {
                connector_id,
                entries,
            })
        }
    };

    if r.pos != end {
        return Err(DecodeError::TrailingBytes {
            offset: r.pos,
            count: end - r.pos,
        });
    }
    if bytes.len() != end {
        return Err(DecodeError::TrailingBytes {
            offset: end,
            count: bytes.len() - end,
        });
    }
    Ok(msg)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BatchError {
    #[error("cannot batch an empty alarm list")]
    EmptyBatch,
    #[error("alarms belong to different connectors ({first} and {other})")]
    MixedConnector { first: u32, other: u32 },
}

/// Fold alarms for one connector into a single cumulative message,
/// preserving order.
pub fn batch_alarms(alarms: &[DetectorAlarm]) -> Result<CumulativeAlarm, BatchError> {
    let first = alarms.first().ok_or(BatchError::EmptyBatch)?;
    if let Some(other) = alarms.iter().find(|a| a.connector_id != first.connector_id) {
        return Err(BatchError::MixedConnector {
            first: first.connector_id,
            other: other.connector_id,
        });
    }
    Ok(CumulativeAlarm {
        connector_id: first.connector_id,
        entries: alarms
            .iter()
            .map(|a| (a.failed_station, a.failed_qos))
            .collect(),
    })
}

pub fn unbatch_alarms(batch: &CumulativeAlarm) -> Vec<DetectorAlarm> {
    batch
        .entries
        .iter()
        .map(|&(failed_station, failed_qos)| DetectorAlarm {
            connector_id: batch.connector_id,
            failed_station,
            failed_qos,
        })
        .collect()
}
