//! Scenario files.
//!
//! A scenario is a TOML document with four sections: `[topology]`,
//! `[[flows]]`, `[[failures]]` and `[sim]`. Unknown keys are rejected, and
//! every error names the section, the key and the line it refers to.

use std::fmt;

use serde::Deserialize;

use qrs_core::netsim::{FailureConfig, FailureKind, FlowConfig, Mode, Scenario, SimConfig};
use qrs_core::{FlowSpec, Link, Priority, Station, StationId, StationKind, Topology, TopologyError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioError {
    pub section: String,
    pub key: String,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}: [{}] {}: {}",
            self.line, self.section, self.key, self.message
        )
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    topology: TopologySection,
    #[serde(default)]
    flows: Vec<FlowEntry>,
    #[serde(default)]
    failures: Vec<FailureEntry>,
    #[serde(default)]
    sim: SimSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologySection {
    stations: Vec<StationEntry>,
    links: Vec<LinkEntry>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum KindName {
    Host,
    Router,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StationEntry {
    id: u32,
    kind: KindName,
    capacity_bps: u64,
    #[serde(default)]
    #[allow(dead_code)]
    label: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkEntry {
    a: u32,
    b: u32,
    bandwidth_bps: u64,
    prop_delay_s: f64,
    queue_pkts: usize,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum PriorityName {
    Interactive,
    Streaming,
    ExcellentEffort,
    BestEffort,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowEntry {
    sender: u32,
    receiver: u32,
    rate_bps: u64,
    pkt_bytes: u32,
    start_s: f64,
    stop_s: f64,
    #[serde(default)]
    compound_deps: Vec<usize>,
    burst_bytes: Option<u32>,
    jitter_bound_s: Option<f64>,
    priority: Option<PriorityName>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FailureEntry {
    time_s: f64,
    station: u32,
    available_bps: Option<u64>,
    down: Option<bool>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum ModeName {
    Baseline,
    Proposed,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SimSection {
    mode: Option<ModeName>,
    seed: Option<u64>,
    horizon_s: Option<f64>,
    batching: Option<bool>,
    max_batch: Option<usize>,
    k_alternatives: Option<usize>,
    tr_s: Option<f64>,
    tc_s: Option<f64>,
    baseline_recovery_delay_s: Option<f64>,
    queue_capacity: Option<usize>,
}

/// A table header seen while scanning the text, with its array index.
struct Header {
    name: String,
    index: usize,
    line: usize,
    offset: usize,
}

fn headers(text: &str) -> Vec<Header> {
    let mut out: Vec<Header> = Vec::new();
    let mut offset = 0;
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let l = raw.trim();
        if l.starts_with('[') {
            let name = l
                .trim_start_matches('[')
                .split(']')
                .next()
                .unwrap_or("")
                .trim()
                .to_string();
            let index = out.iter().filter(|h| h.name == name).count();
            out.push(Header {
                name,
                index,
                line: i + 1,
                offset,
            });
        }
        offset += raw.len();
    }
    out
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside the `index`-th table called `section`; falls back to
/// the header line, then to line 1.
fn locate(text: &str, section: &str, index: usize, key: &str) -> usize {
    let hs = headers(text);
    let Some(pos) = hs.iter().position(|h| h.name == section && h.index == index) else {
        return 1;
    };
    let start = hs[pos].line;
    let end = hs.get(pos + 1).map_or(usize::MAX, |h| h.line);
    text.lines()
        .enumerate()
        .skip(start)
        .take_while(|(i, _)| i + 1 < end)
        .find(|(_, l)| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(start, |(i, _)| i + 1)
}

fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

fn from_toml_error(text: &str, err: &toml::de::Error) -> ScenarioError {
    let message = err.message().trim().to_string();
    let offset = err.span().map_or(0, |s| s.start);
    let line = if err.span().is_some() { line_of(text, offset) } else { 1 };
    // an empty span at the start, or one over the whole document, is a
    // top-level error
    let top_level = err
        .span()
        .is_none_or(|s| s.start == 0 && (s.end == 0 || s.end >= text.trim_end().len()));
    let section = headers(text)
        .into_iter()
        .rev()
        .find(|h| h.offset <= offset && !top_level)
        .map(|h| h.name);
    let key = backticked(&message)
        .or_else(|| {
            let l = text.lines().nth(line - 1)?;
            let (k, _) = l.split_once('=')?;
            Some(k.trim().trim_start_matches('{').trim().to_string())
        })
        .unwrap_or_default();
    let section = match section {
        Some(s) => s,
        // at the top level the offending key is a whole section
        None if !key.is_empty() => key.clone(),
        None => "document".to_string(),
    };
    ScenarioError {
        section,
        key,
        line,
        message,
    }
}

/// Map a dotted field such as `flows[3].receiver` back to the text.
fn from_field(text: &str, field: &str, message: String) -> ScenarioError {
    let (head, key) = field.split_once('.').unwrap_or((field, field));
    let (section, index) = match head.split_once('[') {
        Some((s, rest)) => (s, rest.trim_end_matches(']').parse().unwrap_or(0)),
        None => (head, 0),
    };
    ScenarioError {
        section: section.to_string(),
        key: key.to_string(),
        line: locate(text, section, index, key),
        message,
    }
}

fn topology_error(text: &str, err: TopologyError) -> ScenarioError {
    let key = match err {
        TopologyError::SparseIds { .. }
        | TopologyError::AvailableExceedsCapacity(_)
        | TopologyError::Empty => "stations",
        _ => "links",
    };
    ScenarioError {
        section: "topology".into(),
        key: key.into(),
        line: locate(text, "topology", 0, key),
        message: err.to_string(),
    }
}

/// Parse and validate a scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let file: File = toml::from_str(text).map_err(|e| from_toml_error(text, &e))?;

    let mut stations: Vec<Station> = file
        .topology
        .stations
        .iter()
        .map(|s| {
            let kind = match s.kind {
                KindName::Host => StationKind::Host,
                KindName::Router => StationKind::Router,
            };
            Station::new(StationId(s.id), kind, s.capacity_bps)
        })
        .collect();
    stations.sort_by_key(|s| s.id);
    let links = file
        .topology
        .links
        .iter()
        .map(|l| Link::new(l.a, l.b, l.bandwidth_bps, l.prop_delay_s, l.queue_pkts))
        .collect();
    let topology = Topology::new(stations, links).map_err(|e| topology_error(text, e))?;

    let mut flows = Vec::with_capacity(file.flows.len());
    for (i, f) in file.flows.iter().enumerate() {
        let priority = match f.priority.unwrap_or(PriorityName::Streaming) {
            PriorityName::Interactive => Priority::Interactive,
            PriorityName::Streaming => Priority::Streaming,
            PriorityName::ExcellentEffort => Priority::ExcellentEffort,
            PriorityName::BestEffort => Priority::BestEffort,
        };
        let jitter_s = f.jitter_bound_s.unwrap_or(0.010);
        if !(jitter_s.is_finite() && jitter_s > 0.0) {
            return Err(from_field(text, &format!("flows[{i}].jitter_bound_s"), "must be positive".into()));
        }
        let spec = FlowSpec::new(
            f.rate_bps,
            f.burst_bytes.unwrap_or(f.pkt_bytes),
            (jitter_s * 1e6).round().max(1.0) as u32,
            priority,
        )
        .map_err(|e| from_field(text, &format!("flows[{i}].rate_bps"), e.to_string()))?;
        flows.push(FlowConfig {
            sender: StationId(f.sender),
            receiver: StationId(f.receiver),
            spec,
            pkt_bytes: f.pkt_bytes,
            start: f.start_s,
            stop: f.stop_s,
            compound_deps: f.compound_deps.clone(),
        });
    }

    let mut failures = Vec::with_capacity(file.failures.len());
    for (i, f) in file.failures.iter().enumerate() {
        let kind = match (f.available_bps, f.down) {
            (Some(bps), None | Some(false)) => FailureKind::Available(bps),
            (None, Some(true)) => FailureKind::Down,
            (Some(_), Some(true)) => {
                return Err(from_field(
                    text,
                    &format!("failures[{i}].down"),
                    "give either available_bps or down, not both".into(),
                ))
            }
            (None, _) => {
                return Err(from_field(
                    text,
                    &format!("failures[{i}].station"),
                    "needs available_bps or down = true".into(),
                ))
            }
        };
        failures.push(FailureConfig {
            time: f.time_s,
            station: StationId(f.station),
            kind,
        });
    }

    let d = SimConfig::default();
    let s = &file.sim;
    let sim = SimConfig {
        mode: match s.mode {
            Some(ModeName::Baseline) => Mode::Baseline,
            Some(ModeName::Proposed) | None => Mode::Proposed,
        },
        seed: s.seed.unwrap_or(d.seed),
        horizon: s.horizon_s.unwrap_or(d.horizon),
        batching: s.batching.unwrap_or(d.batching),
        max_batch: s.max_batch.unwrap_or(d.max_batch),
        k_alternatives: s.k_alternatives.unwrap_or(d.k_alternatives),
        tr: s.tr_s.unwrap_or(d.tr),
        tc: s.tc_s.unwrap_or(d.tc),
        baseline_recovery_delay: s.baseline_recovery_delay_s.unwrap_or(d.baseline_recovery_delay),
        queue_capacity: s.queue_capacity.unwrap_or(d.queue_capacity),
    };

    let scenario = Scenario {
        topology,
        flows,
        failures,
        sim,
    };
    scenario
        .validate()
        .map_err(|e| from_field(text, &e.field, e.reason))?;
    Ok(scenario)
}
