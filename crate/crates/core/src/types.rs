//! Domain types shared by the reservation plane, the recovery agents, the
//! codec and the simulator.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Station address. Ids are dense `0..S` within a topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StationId(pub u32);

impl StationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Identifies one multimedia stream (and the connector, detector and
/// analyzer attached to it).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamId(pub u32);

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Simulated time in integer nanoseconds.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(secs: f64) -> SimTime {
        debug_assert!(secs >= 0.0 && secs.is_finite());
        SimTime((secs * 1e9).round() as u64)
    }

    pub fn from_millis(ms: u64) -> SimTime {
        SimTime(ms * 1_000_000)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationKind {
    Host,
    Router,
}

/// A host or router able to take part in reservation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Station {
    pub id: StationId,
    pub kind: StationKind,
    /// Bandwidth (bits/s) the station can hand out to reservations.
    pub capacity: u64,
    /// Bandwidth (bits/s) not yet reserved. Always `<= capacity`.
    pub available: u64,
    /// Cleared by failure injection.
    pub up: bool,
}

impl Station {
    pub fn new(id: StationId, kind: StationKind, capacity: u64) -> Station {
        Station {
            id,
            kind,
            capacity,
            available: capacity,
            up: true,
        }
    }

    pub fn host(id: u32, capacity: u64) -> Station {
        Station::new(StationId(id), StationKind::Host, capacity)
    }

    pub fn router(id: u32, capacity: u64) -> Station {
        Station::new(StationId(id), StationKind::Router, capacity)
    }

    pub fn is_router(&self) -> bool {
        self.kind == StationKind::Router
    }
}

/// Undirected link with symmetric bandwidth and one FIFO per direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: StationId,
    pub b: StationId,
    /// bits/s
    pub bandwidth: u64,
    /// seconds
    pub prop_delay: f64,
    /// packets
    pub queue_capacity: usize,
}

impl Link {
    pub fn new(a: u32, b: u32, bandwidth: u64, prop_delay: f64, queue_capacity: usize) -> Link {
        Link {
            a: StationId(a),
            b: StationId(b),
            bandwidth,
            prop_delay,
            queue_capacity,
        }
    }

    pub fn other(&self, end: StationId) -> Option<StationId> {
        if end == self.a {
            Some(self.b)
        } else if end == self.b {
            Some(self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("station at position {position} has id {id}; ids must be dense 0..S-1")]
    SparseIds { position: usize, id: StationId },
    #[error("station {0}: available bandwidth exceeds capacity")]
    AvailableExceedsCapacity(StationId),
    #[error("link {index} joins {endpoint}, which is not a station")]
    UnknownEndpoint { index: usize, endpoint: StationId },
    #[error("link {index} is a self loop on {0}", .station)]
    SelfLoop { index: usize, station: StationId },
    #[error("link {index} has zero bandwidth")]
    ZeroBandwidth { index: usize },
    #[error("link {index} has a negative or non-finite propagation delay")]
    BadPropDelay { index: usize },
    #[error("link {index} has a zero-length queue")]
    ZeroQueue { index: usize },
    #[error("link {index} duplicates the link between {a} and {b}")]
    DuplicateLink { index: usize, a: StationId, b: StationId },
    #[error("topology is not connected: {0} cannot be reached from station #0")]
    Disconnected(StationId),
    #[error("topology has no stations")]
    Empty,
}

/// Stations and links, validated on construction. Adjacency lists are sorted
/// by neighbour id so every graph search is deterministic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    stations: Vec<Station>,
    links: Vec<Link>,
    /// adjacency[s] = sorted (neighbour, link index)
    adjacency: Vec<Vec<(StationId, usize)>>,
}

impl Topology {
    pub fn new(stations: Vec<Station>, links: Vec<Link>) -> Result<Topology, TopologyError> {
        if stations.is_empty() {
            return Err(TopologyError::Empty);
        }
        for (position, s) in stations.iter().enumerate() {
            if s.id.index() != position {
                return Err(TopologyError::SparseIds { position, id: s.id });
            }
            if s.available > s.capacity {
                return Err(TopologyError::AvailableExceedsCapacity(s.id));
            }
        }
        let n = stations.len();
        let mut adjacency: Vec<Vec<(StationId, usize)>> = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for (index, l) in links.iter().enumerate() {
            for endpoint in [l.a, l.b] {
                if endpoint.index() >= n {
                    return Err(TopologyError::UnknownEndpoint { index, endpoint });
                }
            }
            if l.a == l.b {
                return Err(TopologyError::SelfLoop {
                    index,
                    station: l.a,
                });
            }
            if l.bandwidth == 0 {
                return Err(TopologyError::ZeroBandwidth { index });
            }
            if !(l.prop_delay >= 0.0 && l.prop_delay.is_finite()) {
                return Err(TopologyError::BadPropDelay { index });
            }
            if l.queue_capacity == 0 {
                return Err(TopologyError::ZeroQueue { index });
            }
            let key = (l.a.min(l.b), l.a.max(l.b));
            if !seen.insert(key) {
                return Err(TopologyError::DuplicateLink {
                    index,
                    a: key.0,
                    b: key.1,
                });
            }
            adjacency[l.a.index()].push((l.b, index));
            adjacency[l.b.index()].push((l.a, index));
        }
        for adj in &mut adjacency {
            adj.sort();
        }

        let mut reached = vec![false; n];
        let mut stack = vec![0usize];
        reached[0] = true;
        while let Some(s) = stack.pop() {
            for &(nb, _) in &adjacency[s] {
                if !reached[nb.index()] {
                    reached[nb.index()] = true;
                    stack.push(nb.index());
                }
            }
        }
        if let Some(missing) = reached.iter().position(|r| !r) {
            return Err(TopologyError::Disconnected(StationId(missing as u32)));
        }

        Ok(Topology {
            stations,
            links,
            adjacency,
        })
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn contains(&self, id: StationId) -> bool {
        id.index() < self.stations.len()
    }

    pub fn station(&self, id: StationId) -> &Station {
        &self.stations[id.index()]
    }

    pub(crate) fn station_mut(&mut self, id: StationId) -> &mut Station {
        &mut self.stations[id.index()]
    }

    /// Sorted neighbours of `id` with the index of the joining link.
    pub fn neighbors(&self, id: StationId) -> &[(StationId, usize)] {
        &self.adjacency[id.index()]
    }

    pub fn link_between(&self, a: StationId, b: StationId) -> Option<usize> {
        if !self.contains(a) {
            return None;
        }
        self.adjacency[a.index()]
            .iter()
            .find(|(nb, _)| *nb == b)
            .map(|&(_, idx)| idx)
    }

    pub fn link(&self, index: usize) -> &Link {
        &self.links[index]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Priority {
    Interactive,
    Streaming,
    ExcellentEffort,
    BestEffort,
}

impl Priority {
    pub fn code(self) -> u8 {
        match self {
            Priority::Interactive => 0,
            Priority::Streaming => 1,
            Priority::ExcellentEffort => 2,
            Priority::BestEffort => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Priority> {
        Some(match code {
            0 => Priority::Interactive,
            1 => Priority::Streaming,
            2 => Priority::ExcellentEffort,
            3 => Priority::BestEffort,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowSpecError {
    #[error("rate must be positive")]
    ZeroRate,
    #[error("burst must hold at least one packet")]
    ZeroBurst,
    #[error("jitter bound must be positive")]
    ZeroJitterBound,
}

/// The QoS a flow needs at every station it crosses.
///
/// The jitter bound is kept in whole microseconds, the resolution the wire
/// format carries, so specs compare exactly after a round trip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FlowSpec {
    pub rate_bps: u64,
    pub burst_bytes: u32,
    pub jitter_bound_us: u32,
    pub priority: Priority,
}

impl FlowSpec {
    pub fn new(
        rate_bps: u64,
        burst_bytes: u32,
        jitter_bound_us: u32,
        priority: Priority,
    ) -> Result<FlowSpec, FlowSpecError> {
        if rate_bps == 0 {
            return Err(FlowSpecError::ZeroRate);
        }
        if burst_bytes == 0 {
            return Err(FlowSpecError::ZeroBurst);
        }
        if jitter_bound_us == 0 {
            return Err(FlowSpecError::ZeroJitterBound);
        }
        Ok(FlowSpec {
            rate_bps,
            burst_bytes,
            jitter_bound_us,
            priority,
        })
    }

    pub fn jitter_bound_secs(&self) -> f64 {
        self.jitter_bound_us as f64 / 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("a path needs at least two stations, got {0}")]
    TooShort(usize),
    #[error("station {0} appears more than once")]
    Repeated(StationId),
}

/// Ordered stations from sender (first) to receiver (last), loop free.
///
/// Construction checks the structural invariants; adjacency against a
/// concrete topology is checked by [`validate_path`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Path(Vec<StationId>);

impl Path {
    pub fn new(stations: Vec<StationId>) -> Result<Path, PathError> {
        if stations.len() < 2 {
            return Err(PathError::TooShort(stations.len()));
        }
        let mut seen = BTreeSet::new();
        for &s in &stations {
            if !seen.insert(s) {
                return Err(PathError::Repeated(s));
            }
        }
        Ok(Path(stations))
    }

    /// Convenience for tests and fixtures.
    pub fn from_ids(ids: &[u32]) -> Result<Path, PathError> {
        Path::new(ids.iter().copied().map(StationId).collect())
    }

    pub fn stations(&self) -> &[StationId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sender(&self) -> StationId {
        self.0[0]
    }

    pub fn receiver(&self) -> StationId {
        self.0[self.0.len() - 1]
    }

    pub fn position(&self, station: StationId) -> Option<usize> {
        self.0.iter().position(|&s| s == station)
    }

    pub fn contains(&self, station: StationId) -> bool {
        self.0.contains(&station)
    }

    pub fn hops(&self) -> usize {
        self.0.len() - 1
    }

    pub fn into_inner(self) -> Vec<StationId> {
        self.0
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.0.iter().map(|s| s.0.to_string()).collect();
        write!(f, "[{}]", ids.join(","))
    }
}

/// True iff `path` is non-trivial, loop free, and every consecutive pair of
/// stations is joined by a link of `topo`.
pub fn validate_path(path: &Path, topo: &Topology) -> bool {
    let stations = path.stations();
    if stations.len() < 2 {
        return false;
    }
    let mut seen = BTreeSet::new();
    for &s in stations {
        if !topo.contains(s) || !seen.insert(s) {
            return false;
        }
    }
    stations
        .windows(2)
        .all(|w| topo.link_between(w[0], w[1]).is_some())
}

/// Same/Diff1/Diff2 decomposition of an old and a new path.
///
/// `diff1[..h]` and `diff2[..h]` are the paired differences; any entries past
/// `h` are the unmatched tail of the longer path.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffResult {
    pub same: Vec<StationId>,
    pub diff1: Vec<StationId>,
    pub diff2: Vec<StationId>,
    pub h: usize,
    pub k: usize,
}

impl DiffResult {
    pub fn is_identical(&self) -> bool {
        self.diff1.is_empty() && self.diff2.is_empty()
    }
}

/// Positions of the detector and connector along a path, plus the hop time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentCursor {
    /// Index of the station the detector visited last.
    pub sw: usize,
    /// Index of the station hosting the connector.
    pub sc: usize,
    /// Seconds to reach one station.
    pub tr: f64,
    /// Connector dwell per station. Carried, not consumed.
    pub tc: f64,
}

impl AgentCursor {
    pub fn new(tr: f64, tc: f64) -> AgentCursor {
        AgentCursor {
            sw: 0,
            sc: 0,
            tr,
            tc,
        }
    }

    pub fn tr_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.tr)
    }
}

/// Binary flag stored by the components (`0` or `1`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flag {
    #[default]
    Clear,
    Set,
}

impl Flag {
    pub fn bit(self) -> u8 {
        match self {
            Flag::Clear => 0,
            Flag::Set => 1,
        }
    }

    pub fn is_set(self) -> bool {
        self == Flag::Set
    }
}

/// Handle on the receiver-side reservation of a stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsvpHandle {
    pub stream: StreamId,
    pub spec: FlowSpec,
}
