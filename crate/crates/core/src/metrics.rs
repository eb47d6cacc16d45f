//! Report computed from a simulation trace.
//!
//! Everything here is a pure function of the [`Trace`], so a persisted trace
//! reproduces its report exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::netsim::{DropCause, EpisodeOutcome, Mode, Trace, TraceEvent};
use crate::types::{SimTime, StationId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("jitter needs at least two delivered packets")]
    InsufficientData,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Jitter {
    pub series: Vec<f64>,
    pub mean: f64,
}

/// Absolute differences between consecutive one-way delays.
pub fn delay_jitter(delays: &[f64]) -> Result<Jitter, MetricsError> {
    if delays.len() < 2 {
        return Err(MetricsError::InsufficientData);
    }
    let series: Vec<f64> = delays.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    Ok(Jitter { series, mean })
}

/// A ratio whose empty denominator reads as 1.0 and is flagged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn value(&self) -> f64 {
        if self.den == 0 {
            1.0
        } else {
            self.num as f64 / self.den as f64
        }
    }

    pub fn zero_denominator(&self) -> bool {
        self.den == 0
    }

    fn add(&mut self, ok: bool) {
        self.den += 1;
        self.num += u64::from(ok);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamMetrics {
    pub stream: u32,
    pub generated: u64,
    pub delivered: u64,
    pub lost: u64,
    pub mean_delay: Option<f64>,
    pub max_delay: Option<f64>,
    pub jitter: Option<Jitter>,
    pub held_secs: f64,
    pub service_secs: f64,
}

impl StreamMetrics {
    pub fn efficiency(&self) -> f64 {
        if self.service_secs > 0.0 {
            self.held_secs / self.service_secs
        } else {
            1.0
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bucket {
    pub sent: u64,
    pub delivered: u64,
    pub lost: u64,
    delay_sum: f64,
    pub reservation: Ratio,
}

impl Bucket {
    pub fn mean_delay(&self) -> Option<f64> {
        (self.delivered > 0).then(|| self.delay_sum / self.delivered as f64)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Utilization {
    /// Failures on an active path that some detector reported.
    pub detector: Ratio,
    /// Recovery episodes that ended with the stream on a new path.
    pub connector: Ratio,
    /// Analyze requests answered with a QoS request.
    pub analyzer: Ratio,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub mode: Mode,
    pub seed: u64,
    pub horizon: SimTime,
    pub streams: Vec<StreamMetrics>,
    /// One-second buckets.
    pub buckets: Vec<Bucket>,
    pub generated: u64,
    pub delivered: u64,
    pub lost: u64,
    pub lost_by_cause: BTreeMap<&'static str, u64>,
    pub in_flight: u64,
    pub mean_delay: Option<f64>,
    pub max_delay: Option<f64>,
    pub jitter_mean: Option<f64>,
    pub compound_lost_bits: u64,
    pub recovered_paths: u64,
    pub reservation_success: Ratio,
    pub utilization: Utilization,
    pub efficiency: f64,
    pub control_messages: u64,
    pub control_bytes: u64,
    pub control_dropped: u64,
    pub conservation_violations: u64,
}

fn cause_name(c: DropCause) -> &'static str {
    match c {
        DropCause::QueueFull => "queue_full",
        DropCause::StationDown => "station_down",
        DropCause::Unreserved => "unreserved",
        DropCause::NoRoute => "no_route",
    }
}

struct StreamAcc {
    generated: u64,
    delays: Vec<f64>,
    lost: u64,
    healthy_since: Option<SimTime>,
    held: SimTime,
}

/// Derive the full report from a trace.
pub fn finalize(trace: &Trace) -> MetricsReport {
    let n = trace.flows.len();
    let horizon = trace.horizon;
    let n_buckets = (horizon.0.div_ceil(1_000_000_000)).max(1) as usize;
    let bucket_of = |t: SimTime| ((t.0 / 1_000_000_000) as usize).min(n_buckets - 1);

    let mut acc: Vec<StreamAcc> = (0..n)
        .map(|_| StreamAcc {
            generated: 0,
            delays: Vec::new(),
            lost: 0,
            healthy_since: None,
            held: SimTime::ZERO,
        })
        .collect();
    let mut buckets = vec![Bucket::default(); n_buckets];
    let mut lost_by_cause: BTreeMap<&'static str, u64> = BTreeMap::new();
    let mut util = Utilization::default();
    let mut reservation = Ratio::default();
    let mut healthy = vec![false; n];
    let mut compound_lost_bits = 0u64;
    let mut recovered_paths = 0u64;
    let mut control_messages = 0u64;
    let mut control_bytes = 0u64;
    let mut control_dropped = 0u64;
    let mut violations = 0u64;
    let mut switched = 0u64;
    let mut rejected = 0u64;
    // failure station -> injection time, for failures on an active path
    let mut watched: Vec<(StationId, SimTime, bool)> = Vec::new();

    // compound groups: every flow with dependencies, plus those dependencies
    let groups: Vec<Vec<usize>> = trace
        .flows
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.depends_on.is_empty())
        .map(|(i, m)| {
            let mut g = vec![i];
            g.extend(m.depends_on.iter().map(|&d| d as usize));
            g
        })
        .collect();

    for (t, ev) in trace.events() {
        match ev {
            TraceEvent::PacketSent { flow, .. } => {
                acc[*flow as usize].generated += 1;
                buckets[bucket_of(t)].sent += 1;
            }
            TraceEvent::PacketDelivered { flow, created, .. } => {
                let d = (t - *created).as_secs_f64();
                acc[*flow as usize].delays.push(d);
                let b = &mut buckets[bucket_of(t)];
                b.delivered += 1;
                b.delay_sum += d;
            }
            TraceEvent::PacketDropped { flow, cause, .. } => {
                let f = *flow as usize;
                acc[f].lost += 1;
                buckets[bucket_of(t)].lost += 1;
                *lost_by_cause.entry(cause_name(*cause)).or_default() += 1;
                let in_broken_service = groups
                    .iter()
                    .any(|g| g.contains(&f) && g.iter().any(|&m| !healthy[m]));
                if in_broken_service {
                    compound_lost_bits += trace.flows[f].pkt_bytes as u64 * 8;
                }
            }
            TraceEvent::ControlSent { bytes, .. } => {
                control_messages += 1;
                control_bytes += *bytes as u64;
            }
            TraceEvent::ControlDropped { .. } => control_dropped += 1,
            TraceEvent::ReserveAttempt { ok, .. } => {
                reservation.add(*ok);
                buckets[bucket_of(t)].reservation.add(*ok);
            }
            TraceEvent::Health { flow, healthy: h } => {
                let f = *flow as usize;
                healthy[f] = *h;
                let a = &mut acc[f];
                if *h {
                    a.healthy_since = Some(t);
                } else if let Some(since) = a.healthy_since.take() {
                    a.held = a.held + clip(since, t, &trace.flows[f], horizon);
                }
            }
            TraceEvent::FailureInjected {
                station,
                on_active_path,
                ..
            } => {
                if *on_active_path {
                    watched.push((*station, t, false));
                }
            }
            TraceEvent::AlarmReceived { station, .. } => {
                for w in watched.iter_mut().filter(|w| w.0 == *station && w.1 <= t) {
                    w.2 = true;
                }
            }
            TraceEvent::EpisodeOpened { .. } => util.connector.den += 1,
            TraceEvent::EpisodeClosed { outcome, .. } => {
                if *outcome == EpisodeOutcome::Switched {
                    switched += 1;
                }
            }
            TraceEvent::SwitchRejected { .. } => rejected += 1,
            TraceEvent::AnalyzeRequested { .. } => util.analyzer.den += 1,
            TraceEvent::QosExtracted { .. } => util.analyzer.num += 1,
            TraceEvent::RecoveredPath { .. } => recovered_paths += 1,
            TraceEvent::ConservationViolation { .. } => violations += 1,
            TraceEvent::FlowStarted { .. }
            | TraceEvent::FlowStopped { .. }
            | TraceEvent::PathSwitched { .. } => {}
        }
    }
    util.connector.num = switched.saturating_sub(rejected).min(util.connector.den);
    util.analyzer.num = util.analyzer.num.min(util.analyzer.den);
    util.detector = Ratio {
        num: watched.iter().filter(|w| w.2).count() as u64,
        den: watched.len() as u64,
    };

    let streams: Vec<StreamMetrics> = acc
        .into_iter()
        .enumerate()
        .map(|(i, mut a)| {
            let meta = &trace.flows[i];
            if let Some(since) = a.healthy_since.take() {
                a.held = a.held + clip(since, horizon, meta, horizon);
            }
            let end = meta.stop.min(horizon);
            let service = end.saturating_sub(meta.start).as_secs_f64();
            StreamMetrics {
                stream: i as u32,
                generated: a.generated,
                delivered: a.delays.len() as u64,
                lost: a.lost,
                mean_delay: mean(&a.delays),
                max_delay: a.delays.iter().copied().reduce(f64::max),
                jitter: delay_jitter(&a.delays).ok(),
                held_secs: a.held.as_secs_f64(),
                service_secs: service,
            }
        })
        .collect();

    let generated: u64 = streams.iter().map(|s| s.generated).sum();
    let delivered: u64 = streams.iter().map(|s| s.delivered).sum();
    let lost: u64 = streams.iter().map(|s| s.lost).sum();
    let delay_sum: f64 = buckets.iter().map(|b| b.delay_sum).sum();
    let jitter_samples: Vec<f64> = streams
        .iter()
        .filter_map(|s| s.jitter.as_ref())
        .flat_map(|j| j.series.iter().copied())
        .collect();
    let held: f64 = streams.iter().map(|s| s.held_secs).sum();
    let service: f64 = streams.iter().map(|s| s.service_secs).sum();

    MetricsReport {
        mode: trace.mode,
        seed: trace.seed,
        horizon,
        generated,
        delivered,
        lost,
        in_flight: generated - delivered - lost,
        lost_by_cause,
        mean_delay: (delivered > 0).then(|| delay_sum / delivered as f64),
        max_delay: streams.iter().filter_map(|s| s.max_delay).reduce(f64::max),
        jitter_mean: mean(&jitter_samples),
        compound_lost_bits,
        recovered_paths,
        reservation_success: reservation,
        utilization: util,
        efficiency: if service > 0.0 { held / service } else { 1.0 },
        control_messages,
        control_bytes,
        control_dropped,
        conservation_violations: violations,
        streams,
        buckets,
    }
}

/// One line of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CsvRow {
    pub time_bucket_s: String,
    pub metric_name: String,
    pub stream_id: String,
    pub value: f64,
    pub denominator_flag: u8,
}

/// Part of `[from, to)` that falls inside the flow's service interval.
fn clip(from: SimTime, to: SimTime, meta: &crate::netsim::FlowMeta, horizon: SimTime) -> SimTime {
    let lo = from.max(meta.start);
    let hi = to.min(meta.stop).min(horizon);
    hi.saturating_sub(lo)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

impl MetricsReport {
    /// Per-bucket rows first, then `total` rows per stream and for `ALL`.
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mut out = Vec::new();
        let mut row = |bucket: &str, name: &str, stream: &str, value: f64, flag: bool| {
            out.push(CsvRow {
                time_bucket_s: bucket.to_string(),
                metric_name: name.to_string(),
                stream_id: stream.to_string(),
                value,
                denominator_flag: u8::from(flag),
            });
        };
        for (i, b) in self.buckets.iter().enumerate() {
            let t = i.to_string();
            row(&t, "packets_sent", "ALL", b.sent as f64, false);
            row(&t, "packets_lost", "ALL", b.lost as f64, false);
            if let Some(d) = b.mean_delay() {
                row(&t, "mean_delay_s", "ALL", d, false);
            }
            row(
                &t,
                "reservation_success_rate",
                "ALL",
                b.reservation.value(),
                b.reservation.zero_denominator(),
            );
        }
        for s in &self.streams {
            let id = s.stream.to_string();
            row("total", "packets_generated", &id, s.generated as f64, false);
            row("total", "packets_lost", &id, s.lost as f64, false);
            if let Some(d) = s.mean_delay {
                row("total", "mean_delay_s", &id, d, false);
            }
            if let Some(d) = s.max_delay {
                row("total", "max_delay_s", &id, d, false);
            }
            if let Some(j) = &s.jitter {
                row("total", "jitter_mean_s", &id, j.mean, false);
            }
            row("total", "efficiency", &id, s.efficiency(), s.service_secs == 0.0);
        }
        row("total", "packets_generated", "ALL", self.generated as f64, false);
        row("total", "packets_delivered", "ALL", self.delivered as f64, false);
        row("total", "packets_lost", "ALL", self.lost as f64, false);
        if let Some(d) = self.mean_delay {
            row("total", "mean_delay_s", "ALL", d, false);
        }
        if let Some(d) = self.max_delay {
            row("total", "max_delay_s", "ALL", d, false);
        }
        if let Some(j) = self.jitter_mean {
            row("total", "jitter_mean_s", "ALL", j, false);
        }
        row("total", "compound_lost_bits", "ALL", self.compound_lost_bits as f64, false);
        row("total", "recovered_paths", "ALL", self.recovered_paths as f64, false);
        let r = self.reservation_success;
        row("total", "reservation_success_rate", "ALL", r.value(), r.zero_denominator());
        let u = self.utilization;
        for (name, r) in [
            ("utilization_detector", u.detector),
            ("utilization_connector", u.connector),
            ("utilization_analyzer", u.analyzer),
        ] {
            row("total", name, "ALL", r.value(), r.zero_denominator());
        }
        row("total", "efficiency", "ALL", self.efficiency, false);
        row("total", "control_messages", "ALL", self.control_messages as f64, false);
        row("total", "control_bytes", "ALL", self.control_bytes as f64, false);
        row(
            "total",
            "conservation_violations",
            "ALL",
            self.conservation_violations as f64,
            false,
        );
        out
    }

    pub fn summary(&self) -> String {
        let ms = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{:.3} ms", v * 1e3));
        let mut s = String::new();
        let _ = writeln!(s, "mode: {}", self.mode.name());
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "horizon: {} s", self.horizon.as_secs_f64());
        let _ = writeln!(
            s,
            "packets: {} generated, {} delivered, {} lost, {} in flight",
            self.generated, self.delivered, self.lost, self.in_flight
        );
        for (cause, n) in &self.lost_by_cause {
            let _ = writeln!(s, "  lost ({cause}): {n}");
        }
        let _ = writeln!(s, "mean delay: {}", ms(self.mean_delay));
        let _ = writeln!(s, "max delay: {}", ms(self.max_delay));
        let _ = writeln!(s, "mean jitter: {}", ms(self.jitter_mean));
        let _ = writeln!(s, "compound service lost bits: {}", self.compound_lost_bits);
        let _ = writeln!(s, "recovered paths: {}", self.recovered_paths);
        let ratio = |r: Ratio| {
            format!(
                "{:.4} ({}/{}{})",
                r.value(),
                r.num,
                r.den,
                if r.zero_denominator() { ", no samples" } else { "" }
            )
        };
        let _ = writeln!(s, "reservation success: {}", ratio(self.reservation_success));
        let _ = writeln!(s, "detector utilization: {}", ratio(self.utilization.detector));
        let _ = writeln!(s, "connector utilization: {}", ratio(self.utilization.connector));
        let _ = writeln!(s, "analyzer utilization: {}", ratio(self.utilization.analyzer));
        let _ = writeln!(s, "efficiency: {:.2} %", self.efficiency * 100.0);
        let _ = writeln!(
            s,
            "control messages: {} ({} bytes, {} dropped)",
            self.control_messages, self.control_bytes, self.control_dropped
        );
        let _ = writeln!(s, "conservation violations: {}", self.conservation_violations);
        s
    }
}
