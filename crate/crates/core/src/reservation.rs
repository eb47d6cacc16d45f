//! Receiver-initiated, hop-by-hop bandwidth reservation with route pinning.
//!
//! The [`ReservationPlane`] owns the station ledger. Every mutating operation
//! is atomic: on error the ledger is exactly what it was before the call.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{validate_path, FlowSpec, Path, Station, StationId, StreamId, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Admission {
    Accept,
    Reject,
}

/// Local admission decision. On accept the rate is debited from `station`.
pub fn admission_control(station: &mut Station, spec: &FlowSpec) -> Admission {
    admit_rate(station, spec.rate_bps)
}

fn admit_rate(station: &mut Station, rate: u64) -> Admission {
    if station.up && station.available >= rate {
        station.available -= rate;
        Admission::Accept
    } else {
        Admission::Reject
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReservationState {
    Pending,
    Active,
    Released,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reservation {
    pub stream_id: StreamId,
    pub path: Path,
    pub spec: FlowSpec,
    pub pinned: bool,
    pub state: ReservationState,
    /// Rate actually debited at each station while active.
    debits: BTreeMap<StationId, u64>,
    /// Admission order, used to pick eviction victims.
    admitted_seq: u64,
}

impl Reservation {
    pub fn is_active(&self) -> bool {
        self.state == ReservationState::Active
    }

    /// Rate this reservation holds at `station` (zero unless active).
    pub fn debit_at(&self, station: StationId) -> u64 {
        if self.is_active() {
            self.debits.get(&station).copied().unwrap_or(0)
        } else {
            0
        }
    }
}

/// One member of a reservation attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReservationRequest {
    pub stream_id: StreamId,
    pub spec: FlowSpec,
    pub route: Path,
}

/// A service that can only run once its dependencies are reserved too.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompoundService {
    pub root: ReservationRequest,
    pub dependencies: Vec<ReservationRequest>,
}

impl CompoundService {
    pub fn members(&self) -> impl Iterator<Item = &ReservationRequest> {
        self.dependencies.iter().chain(std::iter::once(&self.root))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReservationError {
    #[error("route {0} is not a valid path in the topology")]
    InvalidRoute(Path),
    #[error("admission control rejected the request at {0}")]
    AdmissionFailed(StationId),
    #[error("stream {0} has no reservation")]
    UnknownStream(StreamId),
    #[error("stream {0} has no active reservation")]
    NotActive(StreamId),
    #[error("new path must keep the sender and receiver of stream {0}")]
    EndpointsChanged(StreamId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompoundError {
    #[error("member {member} failed admission at {station}")]
    AdmissionFailed { member: StreamId, station: StationId },
    #[error("member {member} has an invalid route")]
    InvalidRoute { member: StreamId },
    #[error("stream {0} appears more than once in the dependency list")]
    Cyclic(StreamId),
    #[error("stream {0} is already reserved")]
    AlreadyReserved(StreamId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("station {station}: capacity {capacity} - available {available} != reserved {reserved}")]
pub struct ConservationViolation {
    pub station: StationId,
    pub capacity: u64,
    pub available: u64,
    pub reserved: u64,
}

/// Station ledger plus the reservation records that explain it.
#[derive(Clone, Debug)]
pub struct ReservationPlane {
    topo: Topology,
    reservations: BTreeMap<StreamId, Reservation>,
    next_seq: u64,
    /// Bumped on every ledger mutation.
    generation: u64,
}

impl ReservationPlane {
    pub fn new(topo: Topology) -> ReservationPlane {
        ReservationPlane {
            topo,
            reservations: BTreeMap::new(),
            next_seq: 0,
            generation: 0,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn station(&self, id: StationId) -> &Station {
        self.topo.station(id)
    }

    pub fn reservation(&self, stream: StreamId) -> Option<&Reservation> {
        self.reservations.get(&stream)
    }

    pub fn reservations(&self) -> impl Iterator<Item = &Reservation> {
        self.reservations.values()
    }

    pub fn is_active(&self, stream: StreamId) -> bool {
        self.reservation(stream).is_some_and(Reservation::is_active)
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// Available bandwidth of every station, indexed by id.
    pub fn ledger(&self) -> Vec<u64> {
        self.topo.stations().iter().map(|s| s.available).collect()
    }

    /// QoS request the receiver-side daemon holds for `stream`.
    pub fn extract_qos_request(&self, stream: StreamId) -> Option<FlowSpec> {
        self.reservation(stream).map(|r| r.spec)
    }

    fn snapshot(&self) -> Vec<u64> {
        self.ledger()
    }

    fn restore(&mut self, snapshot: &[u64]) {
        for (id, &avail) in snapshot.iter().enumerate() {
            self.topo.station_mut(StationId(id as u32)).available = avail;
        }
    }

    fn credit(&mut self, debits: &BTreeMap<StationId, u64>) {
        for (&s, &rate) in debits {
            let st = self.topo.station_mut(s);
            st.available += rate;
            debug_assert!(st.available <= st.capacity);
        }
    }

    /// Admit `rate` at each station of `stations`, in order. On the first
    /// rejection nothing is rolled back here; callers restore a snapshot.
    fn admit_all(
        &mut self,
        stations: impl Iterator<Item = (StationId, u64)>,
    ) -> Result<BTreeMap<StationId, u64>, StationId> {
        let mut debits = BTreeMap::new();
        for (s, rate) in stations {
            match admit_rate(self.topo.station_mut(s), rate) {
                Admission::Accept => {
                    debits.insert(s, rate);
                }
                Admission::Reject => return Err(s),
            }
        }
        Ok(debits)
    }

    /// Reserve `req.spec` along `req.route`, admitting from the receiver back
    /// towards the sender. An existing reservation for the same stream is
    /// released first and reinstated if the new attempt fails.
    pub fn reserve(&mut self, req: &ReservationRequest) -> Result<&Reservation, ReservationError> {
        if !validate_path(&req.route, &self.topo) {
            return Err(ReservationError::InvalidRoute(req.route.clone()));
        }
        let snapshot = self.snapshot();
        let prior = self.reservations.get(&req.stream_id).cloned();
        if let Some(p) = prior.as_ref().filter(|p| p.is_active()) {
            let debits = p.debits.clone();
            self.credit(&debits);
        }

        let rate = req.spec.rate_bps;
        let admitted = self.admit_all(req.route.stations().iter().rev().map(|&s| (s, rate)));
        match admitted {
            Ok(debits) => {
                let seq = self.next_seq;
                self.next_seq += 1;
                self.generation += 1;
                self.reservations.insert(
                    req.stream_id,
                    Reservation {
                        stream_id: req.stream_id,
                        path: req.route.clone(),
                        spec: req.spec,
                        pinned: true,
                        state: ReservationState::Active,
                        debits,
                        admitted_seq: seq,
                    },
                );
                Ok(&self.reservations[&req.stream_id])
            }
            Err(station) => {
                self.restore(&snapshot);
                match prior {
                    Some(p) => {
                        self.reservations.insert(req.stream_id, p);
                    }
                    None => {
                        self.reservations.insert(
                            req.stream_id,
                            Reservation {
                                stream_id: req.stream_id,
                                path: req.route.clone(),
                                spec: req.spec,
                                pinned: false,
                                state: ReservationState::Failed,
                                debits: BTreeMap::new(),
                                admitted_seq: u64::MAX,
                            },
                        );
                    }
                }
                Err(ReservationError::AdmissionFailed(station))
            }
        }
    }

    /// All-or-nothing reservation of a service and its dependencies,
    /// dependencies first.
    pub fn reserve_compound(&mut self, svc: &CompoundService) -> Result<(), CompoundError> {
        let mut seen = BTreeSet::new();
        for m in svc.members() {
            if !seen.insert(m.stream_id) {
                return Err(CompoundError::Cyclic(m.stream_id));
            }
            if self.is_active(m.stream_id) {
                return Err(CompoundError::AlreadyReserved(m.stream_id));
            }
            if !validate_path(&m.route, &self.topo) {
                return Err(CompoundError::InvalidRoute { member: m.stream_id });
            }
        }

        let snapshot = self.snapshot();
        let priors: Vec<_> = svc
            .members()
            .map(|m| (m.stream_id, self.reservations.get(&m.stream_id).cloned()))
            .collect();
        let seq_before = self.next_seq;

        for m in svc.members() {
            if let Err(e) = self.reserve(m) {
                let ReservationError::AdmissionFailed(station) = e else {
                    unreachable!("routes validated above")
                };
                self.restore(&snapshot);
                self.next_seq = seq_before;
                for (m, (stream, prior)) in svc.members().zip(&priors) {
                    let mut rec = match prior {
                        Some(p) => p.clone(),
                        None => Reservation {
                            stream_id: *stream,
                            path: m.route.clone(),
                            spec: m.spec,
                            pinned: false,
                            state: ReservationState::Failed,
                            debits: BTreeMap::new(),
                            admitted_seq: u64::MAX,
                        },
                    };
                    rec.state = ReservationState::Failed;
                    rec.debits.clear();
                    rec.pinned = false;
                    self.reservations.insert(*stream, rec);
                }
                self.generation += 1;
                return Err(CompoundError::AdmissionFailed {
                    member: m.stream_id,
                    station,
                });
            }
        }
        Ok(())
    }

    /// Move an active reservation onto `new_path`. Stations only on the new
    /// path are admitted (at the rate from `per_station`, else the stream's
    /// rate); stations only on the old path are released; shared stations
    /// keep their existing debit.
    pub fn repin(
        &mut self,
        stream: StreamId,
        new_path: &Path,
        per_station: &[(StationId, FlowSpec)],
    ) -> Result<&Reservation, ReservationError> {
        let res = self
            .reservations
            .get(&stream)
            .ok_or(ReservationError::UnknownStream(stream))?;
        if !res.is_active() {
            return Err(ReservationError::NotActive(stream));
        }
        if !validate_path(new_path, &self.topo) {
            return Err(ReservationError::InvalidRoute(new_path.clone()));
        }
        if new_path.sender() != res.path.sender() || new_path.receiver() != res.path.receiver() {
            return Err(ReservationError::EndpointsChanged(stream));
        }
        if *new_path == res.path {
            return Ok(&self.reservations[&stream]);
        }

        let old: BTreeSet<StationId> = res.path.stations().iter().copied().collect();
        let rate = res.spec.rate_bps;
        let added: Vec<(StationId, u64)> = new_path
            .stations()
            .iter()
            .rev()
            .filter(|s| !old.contains(s))
            .map(|&s| {
                let r = per_station
                    .iter()
                    .find(|(id, _)| *id == s)
                    .map_or(rate, |(_, f)| f.rate_bps);
                (s, r)
            })
            .collect();

        let snapshot = self.snapshot();
        let new_debits = match self.admit_all(added.into_iter()) {
            Ok(d) => d,
            Err(station) => {
                self.restore(&snapshot);
                return Err(ReservationError::AdmissionFailed(station));
            }
        };

        let res = self.reservations.get_mut(&stream).unwrap();
        let keep: BTreeSet<StationId> = new_path.stations().iter().copied().collect();
        let released: BTreeMap<StationId, u64> = res
            .debits
            .iter()
            .filter(|(s, _)| !keep.contains(s))
            .map(|(&s, &r)| (s, r))
            .collect();
        res.debits.retain(|s, _| keep.contains(s));
        res.debits.extend(new_debits);
        res.path = new_path.clone();
        res.pinned = true;
        self.credit(&released);
        self.generation += 1;
        Ok(&self.reservations[&stream])
    }

    /// Tear down the reservation of `stream`, crediting every station.
    pub fn release(&mut self, stream: StreamId) -> Result<(), ReservationError> {
        let res = self
            .reservations
            .get_mut(&stream)
            .ok_or(ReservationError::UnknownStream(stream))?;
        if !res.is_active() {
            return Ok(());
        }
        res.state = ReservationState::Released;
        res.pinned = false;
        let debits = std::mem::take(&mut res.debits);
        self.credit(&debits);
        self.generation += 1;
        Ok(())
    }

    /// Mark a station down. Reservations through it stay on the books; the
    /// station just stops forwarding and admitting.
    pub fn set_down(&mut self, station: StationId) {
        self.topo.station_mut(station).up = false;
        self.generation += 1;
    }

    /// Cut the bandwidth a station can hand out to `capacity`. Reservations
    /// through the station are kept in admission order while they fit; the
    /// rest fail and are released everywhere. Returns the evicted streams.
    pub fn set_capacity(&mut self, station: StationId, capacity: u64) -> Vec<StreamId> {
        let mut crossing: Vec<(u64, StreamId, u64)> = self
            .reservations
            .values()
            .filter(|r| r.is_active())
            .filter_map(|r| r.debits.get(&station).map(|&d| (r.admitted_seq, r.stream_id, d)))
            .collect();
        crossing.sort();

        let mut kept = 0u64;
        let mut evicted = Vec::new();
        for (_, stream, debit) in crossing {
            if kept + debit <= capacity {
                kept += debit;
            } else {
                evicted.push(stream);
            }
        }
        for &stream in &evicted {
            let res = self.reservations.get_mut(&stream).unwrap();
            res.state = ReservationState::Failed;
            res.pinned = false;
            let debits = std::mem::take(&mut res.debits);
            self.credit(&debits);
        }
        let st = self.topo.station_mut(station);
        st.capacity = capacity;
        st.available = capacity - kept;
        self.generation += 1;
        evicted
    }

    /// Check `capacity - available = sum of active debits` at every station.
    pub fn audit(&self) -> Result<(), ConservationViolation> {
        let mut reserved = vec![0u64; self.topo.len()];
        for r in self.reservations.values().filter(|r| r.is_active()) {
            for s in r.path.stations() {
                if !r.debits.contains_key(s) {
                    return Err(ConservationViolation {
                        station: *s,
                        capacity: self.station(*s).capacity,
                        available: self.station(*s).available,
                        reserved: u64::MAX,
                    });
                }
            }
            for (s, d) in &r.debits {
                reserved[s.index()] += d;
            }
        }
        for st in self.topo.stations() {
            let reserved = reserved[st.id.index()];
            if st.available > st.capacity || st.capacity - st.available != reserved {
                return Err(ConservationViolation {
                    station: st.id,
                    capacity: st.capacity,
                    available: st.available,
                    reserved,
                });
            }
        }
        Ok(())
    }
}
