use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analyzer::AnalyzerState;
use crate::connector::{nearest_router, ConnectorError, ConnectorEvent, ConnectorState};
use crate::detector::DetectorState;
use crate::reservation::{CompoundService, ReservationPlane, ReservationRequest};
use crate::routing::{alternative_paths, shortest_path_avoiding, Avoid};
use crate::types::{AgentCursor, Path, RsvpHandle, SimTime, Station, StationId, StreamId};
use crate::wire::{Message, QosExtractReply, RouteReply};

use super::queue::{enqueue, Enqueue, LinkQueue};
use super::trace::{DropCause, EpisodeOutcome, FlowMeta, Trace, TraceEvent, TraceRecord};
use super::{transmit_time, FailureKind, Mode, Scenario};

const ADMISSION_RETRY: SimTime = SimTime(1_000_000_000);

enum Payload {
    Data,
    Control(Box<Message>),
}

struct Packet {
    flow: usize,
    seq: u64,
    created: SimTime,
    size: u32,
    route: Rc<[StationId]>,
    hop: usize,
    payload: Payload,
}

enum EventKind {
    FlowStart(usize),
    FlowStop(usize),
    SendPacket(usize),
    AdmissionRetry(usize),
    Rebuild(usize),
    DetectorTick(usize),
    Failure(usize),
    Arrive(Packet),
    LinkFree(usize),
}

struct Scheduled {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

struct Agents {
    cursor: AgentCursor,
    detector: DetectorState,
    connector: ConnectorState,
    analyzer: AnalyzerState,
}

struct FlowRt {
    path: Option<Path>,
    route: Rc<[StationId]>,
    sending: bool,
    stopped: bool,
    healthy: bool,
    next_seq: u64,
    interval: SimTime,
    phase: SimTime,
    rebuild_pending: bool,
    agents: Option<Agents>,
}

struct OpenFailure {
    index: u32,
    station: StationId,
    broken: BTreeSet<usize>,
    restored: usize,
}

pub(crate) struct Engine<'a> {
    sc: &'a Scenario,
    plane: ReservationPlane,
    degraded: Vec<bool>,
    queues: Vec<LinkQueue<Packet>>,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    now: SimTime,
    horizon: SimTime,
    flows: Vec<FlowRt>,
    open_failures: Vec<OpenFailure>,
    records: Vec<TraceRecord>,
    audited_generation: u64,
}

impl<'a> Engine<'a> {
    pub(crate) fn new(sc: &'a Scenario) -> Engine<'a> {
        let mut rng = ChaCha8Rng::seed_from_u64(sc.sim.seed);
        let flows = sc
            .flows
            .iter()
            .map(|f| {
                let interval = f.packet_interval();
                FlowRt {
                    path: None,
                    route: Rc::from(Vec::new()),
                    sending: false,
                    stopped: false,
                    healthy: false,
                    next_seq: 0,
                    interval: SimTime::from_secs_f64(interval),
                    phase: SimTime::from_secs_f64(rng.random::<f64>() * interval),
                    rebuild_pending: false,
                    agents: None,
                }
            })
            .collect();
        let topo = sc.topology.clone();
        let queues = topo
            .links()
            .iter()
            .flat_map(|l| {
                let cap = l.queue_capacity.min(sc.sim.queue_capacity).max(1);
                [LinkQueue::new(cap), LinkQueue::new(cap)]
            })
            .collect();
        Engine {
            sc,
            degraded: vec![false; topo.len()],
            plane: ReservationPlane::new(topo),
            queues,
            heap: BinaryHeap::new(),
            seq: 0,
            now: SimTime::ZERO,
            horizon: SimTime::from_secs_f64(sc.sim.horizon),
            flows,
            open_failures: Vec::new(),
            records: Vec::new(),
            audited_generation: 0,
        }
    }

    fn schedule(&mut self, time: SimTime, kind: EventKind) {
        if time > self.horizon {
            return;
        }
        self.seq += 1;
        self.heap.push(Scheduled {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn record(&mut self, event: TraceEvent) {
        self.records.push(TraceRecord {
            time: self.now,
            event,
        });
    }

    fn proposed(&self) -> bool {
        self.sc.sim.mode == Mode::Proposed
    }

    fn stop_time(&self, f: usize) -> SimTime {
        SimTime::from_secs_f64(self.sc.flows[f].stop)
    }

    pub(crate) fn run(mut self) -> Trace {
        for (i, f) in self.sc.flows.iter().enumerate() {
            self.schedule(SimTime::from_secs_f64(f.start), EventKind::FlowStart(i));
            self.schedule(SimTime::from_secs_f64(f.stop), EventKind::FlowStop(i));
        }
        for (i, f) in self.sc.failures.iter().enumerate() {
            self.schedule(SimTime::from_secs_f64(f.time), EventKind::Failure(i));
        }

        while let Some(ev) = self.heap.pop() {
            self.now = ev.time;
            self.handle(ev.kind);
            self.after_event();
        }

        let sc = self.sc;
        Trace {
            mode: sc.sim.mode,
            seed: sc.sim.seed,
            horizon: self.horizon,
            flows: sc
                .flows
                .iter()
                .enumerate()
                .map(|(i, f)| FlowMeta {
                    pkt_bytes: f.pkt_bytes,
                    start: SimTime::from_secs_f64(f.start),
                    stop: SimTime::from_secs_f64(f.stop),
                    depends_on: sc.transitive_deps(i).into_iter().map(|d| d as u32).collect(),
                })
                .collect(),
            failures: sc.failures.len() as u32,
            records: self.records,
        }
    }

    fn handle(&mut self, kind: EventKind) {
        match kind {
            EventKind::FlowStart(f) => self.on_flow_start(f),
            EventKind::FlowStop(f) => self.on_flow_stop(f),
            EventKind::SendPacket(f) => self.on_send(f),
            EventKind::AdmissionRetry(f) => self.on_admission_retry(f),
            EventKind::Rebuild(f) => self.on_rebuild(f),
            EventKind::DetectorTick(f) => self.on_detector_tick(f),
            EventKind::Failure(i) => self.on_failure(i),
            EventKind::Arrive(p) => self.arrive(p),
            EventKind::LinkFree(q) => {
                self.queues[q].set_busy(false);
                self.start_transmission(q);
            }
        }
    }

    /// Conservation audit, health tracking and failure bookkeeping.
    fn after_event(&mut self) {
        let generation = self.plane.generation();
        if generation != self.audited_generation {
            self.audited_generation = generation;
            if let Err(v) = self.plane.audit() {
                self.record(TraceEvent::ConservationViolation {
                    station: v.station,
                    capacity: v.capacity,
                    available: v.available,
                    reserved: v.reserved,
                });
            }
        }
        self.refresh_health();
        self.settle_failures();
    }

    fn is_healthy(&self, f: usize) -> bool {
        let Some(path) = &self.flows[f].path else {
            return false;
        };
        self.plane.is_active(StreamId(f as u32))
            && path.stations().iter().all(|&s| self.plane.station(s).up)
    }

    fn refresh_health(&mut self) {
        for f in 0..self.flows.len() {
            let healthy = !self.flows[f].stopped && self.is_healthy(f);
            if healthy != self.flows[f].healthy {
                self.flows[f].healthy = healthy;
                self.record(TraceEvent::Health {
                    flow: f as u32,
                    healthy,
                });
            }
        }
    }

    fn settle_failures(&mut self) {
        let mut done = Vec::new();
        for (i, of) in self.open_failures.iter_mut().enumerate() {
            let flows = &self.flows;
            let mut restored = 0;
            of.broken.retain(|&f| {
                let fr = &flows[f];
                if fr.healthy && fr.path.as_ref().is_some_and(|p| !p.contains(of.station)) {
                    restored += 1;
                    false
                } else {
                    !fr.stopped
                }
            });
            of.restored += restored;
            if of.broken.is_empty() {
                done.push(i);
            }
        }
        let mut closed: Vec<OpenFailure> = done
            .into_iter()
            .rev()
            .map(|i| self.open_failures.remove(i))
            .collect();
        closed.sort_by_key(|of| of.index);
        for of in closed {
            if of.restored > 0 {
                self.record(TraceEvent::RecoveredPath { failure: of.index });
            }
        }
    }

    // ---- flows ----------------------------------------------------------

    fn route_for(&self, f: usize) -> Option<Path> {
        let cfg = &self.sc.flows[f];
        let down = self
            .plane
            .topology()
            .stations()
            .iter()
            .filter(|s| !s.up)
            .map(|s| s.id);
        shortest_path_avoiding(self.plane.topology(), cfg.sender, cfg.receiver, &Avoid::nodes(down)).ok()
    }

    fn request(&self, f: usize, route: Path) -> ReservationRequest {
        ReservationRequest {
            stream_id: StreamId(f as u32),
            spec: self.sc.flows[f].spec,
            route,
        }
    }

    fn on_flow_start(&mut self, f: usize) {
        self.record(TraceEvent::FlowStarted { flow: f as u32 });
        if self.plane.is_active(StreamId(f as u32)) {
            self.begin_sending(f);
        } else {
            self.try_admit(f);
        }
    }

    fn on_admission_retry(&mut self, f: usize) {
        let fr = &self.flows[f];
        if fr.sending || fr.stopped {
            return;
        }
        if self.plane.is_active(StreamId(f as u32)) {
            self.begin_sending(f);
        } else {
            self.try_admit(f);
        }
    }

    /// Reserve the flow, together with any dependency not yet reserved.
    fn try_admit(&mut self, f: usize) {
        let deps: Vec<usize> = self
            .sc
            .transitive_deps(f)
            .into_iter()
            .filter(|&d| !self.plane.is_active(StreamId(d as u32)))
            .collect();
        let mut members = vec![f];
        members.extend(&deps);
        let routes: Option<Vec<Path>> = members.iter().map(|&m| self.route_for(m)).collect();

        let ok = match routes {
            None => false,
            Some(routes) if deps.is_empty() => {
                let req = self.request(f, routes[0].clone());
                self.plane.reserve(&req).is_ok()
            }
            Some(routes) => {
                let svc = CompoundService {
                    root: self.request(f, routes[0].clone()),
                    dependencies: deps
                        .iter()
                        .zip(&routes[1..])
                        .map(|(&d, r)| self.request(d, r.clone()))
                        .collect(),
                };
                self.plane.reserve_compound(&svc).is_ok()
            }
        };
        self.record(TraceEvent::ReserveAttempt { flow: f as u32, ok });

        if ok {
            for &m in &members {
                let path = self.plane.reservation(StreamId(m as u32)).unwrap().path.clone();
                self.set_path(m, path);
            }
            self.begin_sending(f);
        } else {
            let next = self.now + ADMISSION_RETRY;
            if next < self.stop_time(f) {
                self.schedule(next, EventKind::AdmissionRetry(f));
            }
        }
    }

    fn set_path(&mut self, f: usize, path: Path) {
        let fr = &mut self.flows[f];
        fr.route = Rc::from(path.stations());
        fr.path = Some(path);
    }

    fn begin_sending(&mut self, f: usize) {
        let path = self.flows[f].path.clone().expect("reserved flows have a path");
        self.flows[f].sending = true;
        let first = self.now + self.flows[f].phase;
        self.schedule(first, EventKind::SendPacket(f));

        if self.proposed() {
            let cfg = &self.sc.flows[f];
            let sim = &self.sc.sim;
            let id = f as u32;
            let handle = RsvpHandle {
                stream: StreamId(id),
                spec: cfg.spec,
            };
            let cursor = AgentCursor::new(sim.tr, sim.tc);
            self.flows[f].agents = Some(Agents {
                cursor,
                detector: DetectorState::new(id, id, cfg.sender, path.clone(), cfg.spec)
                    .with_batching(sim.batching, sim.max_batch),
                connector: ConnectorState::new(id, id, cfg.receiver, handle, path, cursor, self.now),
                analyzer: AnalyzerState::new(id, id, cfg.sender, handle),
            });
            let tick = self.now + cursor.tr_time();
            self.schedule(tick, EventKind::DetectorTick(f));
        }
    }

    fn on_flow_stop(&mut self, f: usize) {
        let fr = &mut self.flows[f];
        fr.stopped = true;
        fr.sending = false;
        fr.agents = None;
        let _ = self.plane.release(StreamId(f as u32));
        self.record(TraceEvent::FlowStopped { flow: f as u32 });
    }

    fn on_send(&mut self, f: usize) {
        let fr = &mut self.flows[f];
        if !fr.sending || fr.stopped {
            return;
        }
        let seq = fr.next_seq;
        fr.next_seq += 1;
        let next = self.now + fr.interval;
        let packet = Packet {
            flow: f,
            seq,
            created: self.now,
            size: self.sc.flows[f].pkt_bytes,
            route: fr.route.clone(),
            hop: 0,
            payload: Payload::Data,
        };
        self.record(TraceEvent::PacketSent { flow: f as u32, seq });
        if next < self.stop_time(f) {
            self.schedule(next, EventKind::SendPacket(f));
        }
        self.arrive(packet);
    }

    // ---- packet forwarding ----------------------------------------------

    fn drop_packet(&mut self, p: Packet, at: StationId, cause: DropCause) {
        let event = match p.payload {
            Payload::Data => TraceEvent::PacketDropped {
                flow: p.flow as u32,
                seq: p.seq,
                created: p.created,
                at,
                cause,
            },
            Payload::Control(m) => TraceEvent::ControlDropped {
                flow: p.flow as u32,
                kind: m.message_type(),
                at,
                cause,
            },
        };
        self.record(event);
    }

    fn arrive(&mut self, p: Packet) {
        let at = p.route[p.hop];
        if !self.plane.station(at).up {
            return self.drop_packet(p, at, DropCause::StationDown);
        }
        if matches!(p.payload, Payload::Data)
            && self.degraded[at.index()]
            && self
                .plane
                .reservation(StreamId(p.flow as u32))
                .is_none_or(|r| r.debit_at(at) == 0)
        {
            return self.drop_packet(p, at, DropCause::Unreserved);
        }
        if p.hop + 1 == p.route.len() {
            return match p.payload {
                Payload::Data => self.record(TraceEvent::PacketDelivered {
                    flow: p.flow as u32,
                    seq: p.seq,
                    created: p.created,
                }),
                Payload::Control(m) => self.dispatch(p.flow, at, *m),
            };
        }
        let next = p.route[p.hop + 1];
        let topo = self.plane.topology();
        let link = topo.link_between(at, next).expect("routes follow links");
        let q = link * 2 + usize::from(topo.link(link).a != at);
        if let Enqueue::Dropped(p) = enqueue(&mut self.queues[q], p) {
            return self.drop_packet(p, at, DropCause::QueueFull);
        }
        self.start_transmission(q);
    }

    fn start_transmission(&mut self, q: usize) {
        if self.queues[q].is_busy() {
            return;
        }
        let link = self.plane.topology().link(q / 2).clone();
        let from = if q.is_multiple_of(2) { link.a } else { link.b };
        while let Some(mut p) = self.queues[q].pop() {
            if !self.plane.station(from).up {
                self.drop_packet(p, from, DropCause::StationDown);
                continue;
            }
            let tx = transmit_time(p.size, link.bandwidth);
            self.queues[q].set_busy(true);
            self.schedule(self.now + tx, EventKind::LinkFree(q));
            p.hop += 1;
            self.schedule(
                self.now + tx + SimTime::from_secs_f64(link.prop_delay),
                EventKind::Arrive(p),
            );
            return;
        }
    }

    fn send_control(&mut self, f: usize, from: StationId, to: StationId, msg: Message) {
        let bytes = msg.encoded_len().expect("component messages fit the codec") as u32;
        let kind = msg.message_type();
        self.record(TraceEvent::ControlSent {
            flow: f as u32,
            kind,
            bytes,
        });
        let route: Rc<[StationId]> = if from == to {
            Rc::from(vec![from])
        } else {
            let down = self
                .plane
                .topology()
                .stations()
                .iter()
                .filter(|s| !s.up && s.id != from && s.id != to)
                .map(|s| s.id);
            match shortest_path_avoiding(self.plane.topology(), from, to, &Avoid::nodes(down)) {
                Ok(p) => Rc::from(p.stations()),
                Err(_) => {
                    self.record(TraceEvent::ControlDropped {
                        flow: f as u32,
                        kind,
                        at: from,
                        cause: DropCause::NoRoute,
                    });
                    return;
                }
            }
        };
        let packet = Packet {
            flow: f,
            seq: 0,
            created: self.now,
            size: bytes,
            route,
            hop: 0,
            payload: Payload::Control(Box::new(msg)),
        };
        self.schedule(self.now, EventKind::Arrive(packet));
    }

    // ---- failures -------------------------------------------------------

    fn on_failure(&mut self, i: usize) {
        let fc = self.sc.failures[i].clone();
        let s = fc.station;
        match fc.kind {
            FailureKind::Down => self.plane.set_down(s),
            FailureKind::Available(bps) => {
                self.plane.set_capacity(s, bps);
                self.degraded[s.index()] = true;
            }
        }
        let on_path = |fr: &FlowRt| fr.path.as_ref().is_some_and(|p| p.contains(s));
        let on_active_path = self.flows.iter().any(|fr| fr.sending && on_path(fr));
        self.record(TraceEvent::FailureInjected {
            failure: i as u32,
            station: s,
            on_active_path,
        });

        self.refresh_health();
        // a flow already broken by an earlier failure counts for this one too
        let broken: BTreeSet<usize> = (0..self.flows.len())
            .filter(|&f| self.flows[f].sending && !self.flows[f].healthy && on_path(&self.flows[f]))
            .collect();
        let delay = SimTime::from_secs_f64(self.sc.sim.baseline_recovery_delay);
        for &f in &broken {
            if !self.flows[f].rebuild_pending {
                self.flows[f].rebuild_pending = true;
                self.schedule(self.now + delay, EventKind::Rebuild(f));
            }
        }
        if !broken.is_empty() {
            self.open_failures.push(OpenFailure {
                index: i as u32,
                station: s,
                broken,
                restored: 0,
            });
        }
    }

    /// Route rebuild from scratch after the convergence delay.
    fn on_rebuild(&mut self, f: usize) {
        self.flows[f].rebuild_pending = false;
        if self.flows[f].stopped || self.is_healthy(f) {
            return;
        }
        let ok = match self.route_for(f) {
            Some(path) => {
                let req = self.request(f, path.clone());
                let ok = self.plane.reserve(&req).is_ok();
                if ok {
                    if let Some(a) = &mut self.flows[f].agents {
                        a.connector.abandon();
                    }
                    self.switch_path(f, path);
                }
                ok
            }
            None => false,
        };
        self.record(TraceEvent::ReserveAttempt { flow: f as u32, ok });
        if !ok {
            let next = self.now + SimTime::from_secs_f64(self.sc.sim.baseline_recovery_delay);
            if next < self.stop_time(f) {
                self.flows[f].rebuild_pending = true;
                self.schedule(next, EventKind::Rebuild(f));
            }
        }
    }

    fn switch_path(&mut self, f: usize, path: Path) {
        self.set_path(f, path.clone());
        let now = self.now;
        if let Some(a) = &mut self.flows[f].agents {
            a.detector.set_path(path.clone(), &mut a.cursor);
            a.connector.set_path(path.clone(), now);
        }
        self.record(TraceEvent::PathSwitched {
            flow: f as u32,
            path: path.into_inner(),
        });
    }

    // ---- recovery agents ------------------------------------------------

    /// Station as flow `f` sees it: its own reservation counts as available.
    fn flow_view(plane: &ReservationPlane, f: usize, s: StationId) -> Station {
        let mut st = plane.station(s).clone();
        if let Some(r) = plane.reservation(StreamId(f as u32)) {
            st.available = st.available.saturating_add(r.debit_at(s));
        }
        st
    }

    fn on_detector_tick(&mut self, f: usize) {
        let fr = &mut self.flows[f];
        if !fr.sending || fr.stopped {
            return;
        }
        let Some(agents) = fr.agents.as_mut() else {
            return;
        };
        let plane = &self.plane;
        let msgs = agents
            .detector
            .step(&mut agents.cursor, |s| Self::flow_view(plane, f, s));
        let path = agents.detector.path.clone();
        let in_recovery = agents.connector.in_recovery();
        let tr = agents.cursor.tr_time();

        if !msgs.is_empty() {
            // the alarm leaves from the probed station, or the closest live
            // station before it
            let pos = self.flows[f].agents.as_ref().unwrap().cursor.sw;
            let origin = path.stations()[..=pos]
                .iter()
                .rev()
                .copied()
                .find(|&s| self.plane.station(s).up);
            let sender = self.sc.flows[f].sender;
            for m in msgs {
                match origin {
                    Some(o) => self.send_control(f, o, sender, m),
                    None => {
                        let kind = m.message_type();
                        self.record(TraceEvent::ControlDropped {
                            flow: f as u32,
                            kind,
                            at: path.sender(),
                            cause: DropCause::StationDown,
                        });
                    }
                }
            }
        }
        if in_recovery {
            self.connector_event(f, ConnectorEvent::FlagCheck);
        }
        self.schedule(self.now + tr, EventKind::DetectorTick(f));
    }

    fn connector_event(&mut self, f: usize, event: ConnectorEvent<'_>) {
        let Some(agents) = self.flows[f].agents.as_mut() else {
            return;
        };
        let was_open = agents.connector.in_recovery();
        let plane = &self.plane;
        let result = agents
            .connector
            .step(event, self.now, |s| Self::flow_view(plane, f, s));
        let now_open = agents.connector.in_recovery();

        if !was_open && now_open {
            self.record(TraceEvent::EpisodeOpened { flow: f as u32 });
        }
        let sender = self.sc.flows[f].sender;
        let receiver = self.sc.flows[f].receiver;
        match result {
            Ok(msgs) => {
                for m in msgs {
                    match &m {
                        Message::RouteRequest(req) => {
                            match nearest_router(req.failed_station, &req.old_path, self.plane.topology()) {
                                Ok(router) => self.send_control(f, sender, router, m),
                                Err(_) => self.record(TraceEvent::ControlDropped {
                                    flow: f as u32,
                                    kind: m.message_type(),
                                    at: sender,
                                    cause: DropCause::NoRoute,
                                }),
                            }
                        }
                        Message::AnalyzeRequest(_) => self.send_control(f, sender, receiver, m),
                        Message::SenderUpdate(_) => {
                            self.record(TraceEvent::EpisodeClosed {
                                flow: f as u32,
                                outcome: EpisodeOutcome::Switched,
                            });
                            self.send_control(f, sender, sender, m);
                        }
                        _ => unreachable!("connector only emits requests and updates"),
                    }
                }
            }
            Err(e) => {
                let outcome = match e {
                    ConnectorError::NoAlternativePath => EpisodeOutcome::NoAlternativePath,
                    _ => EpisodeOutcome::WindowExpired,
                };
                if was_open || now_open {
                    self.record(TraceEvent::EpisodeClosed {
                        flow: f as u32,
                        outcome,
                    });
                }
            }
        }
    }

    fn dispatch(&mut self, f: usize, at: StationId, msg: Message) {
        if self.flows[f].agents.is_none() {
            // the flow ended while the message was in flight
            return;
        }
        match msg {
            Message::DetectorAlarm(ref a) => {
                self.record(TraceEvent::AlarmReceived {
                    flow: f as u32,
                    station: a.failed_station,
                });
                self.connector_event(f, ConnectorEvent::Message(&msg));
            }
            Message::CumulativeAlarm(ref c) => {
                for &(station, _) in &c.entries {
                    self.record(TraceEvent::AlarmReceived {
                        flow: f as u32,
                        station,
                    });
                }
                self.connector_event(f, ConnectorEvent::Message(&msg));
            }
            Message::RouteReply(_) | Message::AnalyzeReply(_) => {
                self.connector_event(f, ConnectorEvent::Message(&msg));
            }
            Message::RouteRequest(req) => {
                let topo = self.plane.topology();
                let mut excluded: BTreeSet<StationId> = req.excluded.iter().copied().collect();
                excluded.extend(
                    topo.stations()
                        .iter()
                        .filter(|s| !s.up && s.id != req.failed_station)
                        .map(|s| s.id),
                );
                excluded.remove(&req.old_path.sender());
                excluded.remove(&req.old_path.receiver());
                let alternatives = alternative_paths(
                    topo,
                    &req.old_path,
                    req.failed_station,
                    self.sc.sim.k_alternatives,
                    &excluded,
                )
                .unwrap_or_default();
                let reply = Message::RouteReply(RouteReply {
                    connector_id: req.connector_id,
                    alternatives,
                });
                self.send_control(f, at, req.old_path.sender(), reply);
            }
            Message::AnalyzeRequest(_) | Message::QosExtractReply(_) => {
                if matches!(msg, Message::AnalyzeRequest(_)) {
                    self.record(TraceEvent::AnalyzeRequested { flow: f as u32 });
                }
                let agents = self.flows[f].agents.as_mut().unwrap();
                let Ok(out) = agents.analyzer.step(&msg) else {
                    return;
                };
                let connector_at = agents.analyzer.connector_address;
                for m in out {
                    match m {
                        Message::QosExtractRequest(_) => self.send_control(f, at, at, m),
                        Message::AnalyzeReply(_) => {
                            self.record(TraceEvent::QosExtracted { flow: f as u32 });
                            self.send_control(f, at, connector_at, m);
                        }
                        _ => unreachable!("analyzer only emits extraction requests and replies"),
                    }
                }
            }
            Message::QosExtractRequest(req) => {
                // receiver-side reservation daemon
                let stream = StreamId(f as u32);
                let qos_request = self
                    .plane
                    .extract_qos_request(stream)
                    .unwrap_or(self.sc.flows[f].spec);
                let reply = Message::QosExtractReply(QosExtractReply {
                    analyzer_id: req.analyzer_id,
                    qos_request,
                });
                self.send_control(f, at, at, reply);
            }
            Message::SenderUpdate(upd) => self.apply_switch(f, upd.new_path),
        }
    }

    fn apply_switch(&mut self, f: usize, new_path: Path) {
        let stream = StreamId(f as u32);
        if self.flows[f].path.as_ref() == Some(&new_path) && self.plane.is_active(stream) {
            return;
        }
        let ok = if self.plane.is_active(stream) {
            self.plane.repin(stream, &new_path, &[]).is_ok()
        } else {
            let req = self.request(f, new_path.clone());
            self.plane.reserve(&req).is_ok()
        };
        self.record(TraceEvent::ReserveAttempt { flow: f as u32, ok });
        if ok {
            self.switch_path(f, new_path);
        } else {
            self.record(TraceEvent::SwitchRejected { flow: f as u32 });
            let old = self.flows[f].path.clone().unwrap();
            let now = self.now;
            if let Some(a) = &mut self.flows[f].agents {
                a.connector.set_path(old, now);
                a.detector.rearm();
            }
        }
    }
}
