#![allow(dead_code)]

use qrs_core::netsim::{FailureConfig, FailureKind, FlowConfig, Scenario, SimConfig};
use qrs_core::{FlowSpec, Link, Priority, Station, StationId, StationKind, Topology};

pub fn spec(rate_bps: u64) -> FlowSpec {
    FlowSpec::new(rate_bps, 1000, 10_000, Priority::Streaming).unwrap()
}

/// Hosts at the given ids, routers everywhere else.
pub fn topology(n: u32, hosts: &[u32], edges: &[(u32, u32)], capacity: u64, bw: u64) -> Topology {
    let stations = (0..n)
        .map(|i| {
            let kind = if hosts.contains(&i) {
                StationKind::Host
            } else {
                StationKind::Router
            };
            Station::new(StationId(i), kind, capacity)
        })
        .collect();
    let links = edges
        .iter()
        .map(|&(a, b)| Link::new(a, b, bw, 0.001, 400))
        .collect();
    Topology::new(stations, links).unwrap()
}

pub fn flow(sender: u32, receiver: u32, rate_bps: u64, pkt_bytes: u32, start: f64, stop: f64) -> FlowConfig {
    FlowConfig {
        sender: StationId(sender),
        receiver: StationId(receiver),
        spec: spec(rate_bps),
        pkt_bytes,
        start,
        stop,
        compound_deps: Vec::new(),
    }
}

pub fn down(time: f64, station: u32) -> FailureConfig {
    FailureConfig {
        time,
        station: StationId(station),
        kind: FailureKind::Down,
    }
}

/// s=0, a=1, b1=2, b2=3, c=4, d1=5, d2=6, e=7, r=8: two diamonds in series
/// with 10 ms links.
pub fn double_diamond() -> Topology {
    let edges = [(0, 1), (1, 2), (1, 3), (2, 4), (3, 4), (4, 5), (4, 6), (5, 7), (6, 7), (7, 8)];
    let stations = (0..9)
        .map(|i| {
            let kind = if i == 0 || i == 8 { StationKind::Host } else { StationKind::Router };
            Station::new(StationId(i), kind, 10_000_000)
        })
        .collect();
    let links = edges
        .iter()
        .map(|&(a, b)| Link::new(a, b, 10_000_000, 0.010, 400))
        .collect();
    Topology::new(stations, links).unwrap()
}

/// One sparse flow across the double diamond with b1 and d1 failing together.
pub fn double_failure(batching: bool) -> Scenario {
    Scenario {
        topology: double_diamond(),
        flows: vec![flow(0, 8, 8_000, 1000, 0.0, 20.0)],
        failures: vec![down(5.0, 2), down(5.0, 5)],
        sim: SimConfig {
            horizon: 20.0,
            batching,
            seed: 3,
            ..SimConfig::default()
        },
    }
}

/// Sender 0 and receiver 5 joined through two disjoint router pairs:
/// 0-1-2-5 and 0-3-4-5.
pub fn square(failures: Vec<FailureConfig>) -> Scenario {
    Scenario {
        topology: topology(
            6,
            &[0, 5],
            &[(0, 1), (1, 2), (2, 5), (0, 3), (3, 4), (4, 5)],
            2_000_000,
            2_000_000,
        ),
        flows: vec![flow(0, 5, 400_000, 500, 0.0, 10.0)],
        failures,
        sim: SimConfig {
            horizon: 10.0,
            ..SimConfig::default()
        },
    }
}
