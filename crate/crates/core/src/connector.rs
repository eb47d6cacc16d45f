//! The connector owns recovery for one stream: on an alarm it asks a router
//! for alternatives, has the analyzer translate the QoS request, checks the
//! candidate station by station and finally tells the sender to switch.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::types::{
    AgentCursor, Flag, FlowSpec, Path, RsvpHandle, SimTime, Station, StationId, StreamId, Topology,
};
use crate::wire::{AnalyzeReply, AnalyzeRequest, Message, RouteReply, RouteRequest, SenderUpdate};

/// How long the connector waits for a reply before asking again.
pub const REQUEST_TIMEOUT: SimTime = SimTime(500_000_000);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConnectorError {
    #[error("no router upstream of or adjacent to {0}")]
    NoRouterAvailable(StationId),
    #[error("recovery window closed before a usable path was found")]
    RecoveryWindowExpired,
    #[error("the router has no alternative path left")]
    NoAlternativePath,
    #[error("connector cannot handle {0}")]
    UnexpectedMessage(&'static str),
}

/// Router that should answer a route request about `failed`: the closest
/// router upstream of it on `path`, else the first router adjacent to it.
pub fn nearest_router(failed: StationId, path: &Path, topo: &Topology) -> Result<StationId, ConnectorError> {
    if let Some(pos) = path.position(failed) {
        if let Some(&r) = path.stations()[..pos]
            .iter()
            .rev()
            .find(|&&s| topo.station(s).is_router())
        {
            return Ok(r);
        }
    }
    topo.neighbors(failed)
        .iter()
        .map(|&(n, _)| n)
        .find(|&n| topo.station(n).is_router())
        .ok_or(ConnectorError::NoRouterAvailable(failed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Waiting {
    Route,
    Analysis,
}

/// One recovery attempt, from the first alarm to its outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub opened: SimTime,
    /// Stations reported failed on the current path.
    pub failed: BTreeSet<StationId>,
    /// Stations that made an earlier candidate unusable.
    pub rejected: BTreeSet<StationId>,
    /// Route requests still allowed: the budget `(PFS - SC) * TR` spent one
    /// hop time per request.
    pub attempts_left: usize,
    pub route_requests: usize,
    pub waiting: Waiting,
    pub since: SimTime,
    candidate: Option<Path>,
}

impl Episode {
    fn primary_failed(&self, path: &Path) -> StationId {
        *self
            .failed
            .iter()
            .min_by_key(|s| path.position(**s))
            .expect("an episode has at least one failed station")
    }
}

/// Incoming stimulus for [`ConnectorState::step`].
#[derive(Clone, Copy, Debug)]
pub enum ConnectorEvent<'a> {
    FlagCheck,
    Message(&'a Message),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectorState {
    pub connector_id: u32,
    pub station_addresses: Vec<StationId>,
    pub visit_times: Vec<SimTime>,
    pub analyzer_id: u32,
    pub analyzer_address: StationId,
    pub stream_id: StreamId,
    pub detector_flag: Flag,
    pub rsvp_handle: RsvpHandle,
    pub cursor: AgentCursor,
    pub episode: Option<Episode>,
    path: Path,
}

impl ConnectorState {
    pub fn new(
        connector_id: u32,
        analyzer_id: u32,
        analyzer_address: StationId,
        rsvp_handle: RsvpHandle,
        path: Path,
        cursor: AgentCursor,
        now: SimTime,
    ) -> ConnectorState {
        let mut c = ConnectorState {
            connector_id,
            station_addresses: Vec::new(),
            visit_times: Vec::new(),
            analyzer_id,
            analyzer_address,
            stream_id: rsvp_handle.stream,
            detector_flag: Flag::Clear,
            rsvp_handle,
            cursor,
            episode: None,
            path: path.clone(),
        };
        c.set_path(path, now);
        c
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Track a new path for the stream; stations are expected one hop time
    /// apart from `now`.
    pub fn set_path(&mut self, path: Path, now: SimTime) {
        self.station_addresses = path.stations().to_vec();
        self.visit_times = (0..path.len())
            .map(|i| now + SimTime::from_secs_f64(self.cursor.tr * i as f64))
            .collect();
        self.path = path;
    }

    /// Drop an open episode without an outcome, e.g. because the route was
    /// rebuilt by other means.
    pub fn abandon(&mut self) {
        self.close();
    }

    pub fn in_recovery(&self) -> bool {
        self.episode.is_some()
    }

    /// Advance the state machine. `view` yields stations as this stream sees
    /// them and is only consulted while validating a candidate.
    ///
    /// An `Err` closes the open episode without a new path.
    pub fn step(
        &mut self,
        event: ConnectorEvent<'_>,
        now: SimTime,
        view: impl Fn(StationId) -> Station,
    ) -> Result<Vec<Message>, ConnectorError> {
        match event {
            ConnectorEvent::FlagCheck => self.on_flag_check(now),
            ConnectorEvent::Message(Message::DetectorAlarm(a)) => {
                Ok(self.on_alarm(&[a.failed_station], now))
            }
            ConnectorEvent::Message(Message::CumulativeAlarm(c)) => {
                let stations: Vec<_> = c.entries.iter().map(|e| e.0).collect();
                Ok(self.on_alarm(&stations, now))
            }
            ConnectorEvent::Message(Message::RouteReply(r)) => self.on_route_reply(r, now),
            ConnectorEvent::Message(Message::AnalyzeReply(r)) => self.on_analyze_reply(r, now, view),
            ConnectorEvent::Message(other) => {
                Err(ConnectorError::UnexpectedMessage(other.message_type().name()))
            }
        }
    }

    fn on_alarm(&mut self, stations: &[StationId], now: SimTime) -> Vec<Message> {
        let on_path: Vec<StationId> = stations.iter().copied().filter(|s| self.path.contains(*s)).collect();
        if on_path.is_empty() {
            return Vec::new();
        }
        if let Some(ep) = &mut self.episode {
            ep.failed.extend(on_path);
            return Vec::new();
        }
        let failed: BTreeSet<StationId> = on_path.into_iter().collect();
        let pfs = failed
            .iter()
            .filter_map(|s| self.path.position(*s))
            .min()
            .unwrap();
        self.cursor.sw = self.cursor.sw.max(pfs);
        self.detector_flag = Flag::Set;
        self.episode = Some(Episode {
            opened: now,
            failed,
            rejected: BTreeSet::new(),
            attempts_left: pfs.saturating_sub(self.cursor.sc),
            route_requests: 0,
            waiting: Waiting::Route,
            since: now,
            candidate: None,
        });
        match self.request_route(now) {
            Ok(m) => vec![m],
            // sender itself failed: nothing to ask for
            Err(_) => {
                self.close();
                Vec::new()
            }
        }
    }

    fn request_route(&mut self, now: SimTime) -> Result<Message, ConnectorError> {
        let path = self.path.clone();
        let ep = self.episode.as_mut().expect("open episode");
        if ep.attempts_left == 0 {
            return Err(ConnectorError::RecoveryWindowExpired);
        }
        ep.attempts_left -= 1;
        ep.route_requests += 1;
        ep.waiting = Waiting::Route;
        ep.since = now;
        ep.candidate = None;
        let failed = ep.primary_failed(&path);
        let excluded = ep
            .failed
            .iter()
            .chain(&ep.rejected)
            .copied()
            .filter(|&s| s != failed)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Ok(Message::RouteRequest(RouteRequest {
            connector_id: self.connector_id,
            old_path: path,
            failed_station: failed,
            excluded,
        }))
    }

    fn close(&mut self) {
        self.episode = None;
        self.detector_flag = Flag::Clear;
    }

    fn fail(&mut self, err: ConnectorError) -> Result<Vec<Message>, ConnectorError> {
        self.close();
        Err(err)
    }

    fn on_flag_check(&mut self, now: SimTime) -> Result<Vec<Message>, ConnectorError> {
        let Some(ep) = &self.episode else {
            return Ok(Vec::new());
        };
        if now.saturating_sub(ep.since) < REQUEST_TIMEOUT {
            return Ok(Vec::new());
        }
        // reply lost or stuck: spend another attempt
        match self.request_route(now) {
            Ok(m) => Ok(vec![m]),
            Err(e) => self.fail(e),
        }
    }

    fn on_route_reply(&mut self, reply: &RouteReply, now: SimTime) -> Result<Vec<Message>, ConnectorError> {
        let Some(ep) = &mut self.episode else {
            return Ok(Vec::new());
        };
        if ep.waiting != Waiting::Route {
            return Ok(Vec::new());
        }
        let banned = |s: &StationId| ep.failed.contains(s) || ep.rejected.contains(s);
        let Some(candidate) = reply
            .alternatives
            .iter()
            .find(|p| !p.stations().iter().any(banned))
            .cloned()
        else {
            return self.fail(ConnectorError::NoAlternativePath);
        };
        ep.waiting = Waiting::Analysis;
        ep.since = now;
        ep.candidate = Some(candidate.clone());
        Ok(vec![Message::AnalyzeRequest(AnalyzeRequest {
            connector_id: self.connector_id,
            old_path: self.path.clone(),
            new_path: candidate,
        })])
    }

    fn on_analyze_reply(
        &mut self,
        reply: &AnalyzeReply,
        now: SimTime,
        view: impl Fn(StationId) -> Station,
    ) -> Result<Vec<Message>, ConnectorError> {
        let Some(ep) = &mut self.episode else {
            return Ok(Vec::new());
        };
        let Some(candidate) = ep.candidate.clone().filter(|_| ep.waiting == Waiting::Analysis) else {
            return Ok(Vec::new());
        };
        let pfs = ep
            .failed
            .iter()
            .filter_map(|s| self.path.position(*s))
            .min()
            .unwrap_or(0);

        let requirement = |s: StationId| -> FlowSpec {
            reply
                .per_station_qos
                .iter()
                .find(|(id, _)| *id == s)
                .map_or(reply.qos_request, |(_, f)| *f)
        };
        let bad = candidate.stations()[pfs.min(candidate.len())..]
            .iter()
            .copied()
            .find(|&s| {
                let st = view(s);
                !st.up || st.available < requirement(s).rate_bps
            });

        match bad {
            None => {
                let update = SenderUpdate {
                    connector_id: self.connector_id,
                    stream_id: self.stream_id,
                    new_path: candidate.clone(),
                    flowspec: reply.qos_request,
                };
                self.close();
                self.set_path(candidate, now);
                Ok(vec![Message::SenderUpdate(update)])
            }
            Some(s) => {
                ep.rejected.insert(s);
                match self.request_route(now) {
                    Ok(m) => Ok(vec![m]),
                    Err(e) => self.fail(e),
                }
            }
        }
    }
}
