//! Route selection over a topology snapshot.
//!
//! Paths are ranked by hop count, then by the lexicographic order of their
//! station-id sequence. Every search below produces the minimum under that
//! order, so results are total and reproducible.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

use crate::types::{Path, StationId, Topology};

/// Default number of alternatives a router hands back.
pub const DEFAULT_K: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("station {0} is not part of the topology")]
    UnknownStation(StationId),
    #[error("source and destination are both {0}")]
    SameEndpoints(StationId),
    #[error("{dst} is unreachable from {src}")]
    Unreachable { src: StationId, dst: StationId },
    #[error("failed station {0} is not on the old path")]
    FailedNotOnPath(StationId),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no alternative path avoids the failed station")]
    NoAlternativePath,
}

/// Nodes and undirected edges a search must not touch.
#[derive(Clone, Debug, Default)]
pub struct Avoid {
    pub nodes: BTreeSet<StationId>,
    pub edges: BTreeSet<(StationId, StationId)>,
}

impl Avoid {
    pub fn nodes<I: IntoIterator<Item = StationId>>(nodes: I) -> Avoid {
        Avoid {
            nodes: nodes.into_iter().collect(),
            edges: BTreeSet::new(),
        }
    }

    fn edge_blocked(&self, a: StationId, b: StationId) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    fn block_edge(&mut self, a: StationId, b: StationId) {
        self.edges.insert((a.min(b), a.max(b)));
    }
}

/// Minimum (hops, lexicographic) path from `src` to `dst` that respects
/// `avoid`. `src` and `dst` themselves are never checked against `avoid.nodes`
/// by the caller's contract; a blocked endpoint simply yields `None`.
fn search(topo: &Topology, src: StationId, dst: StationId, avoid: &Avoid) -> Option<Vec<StationId>> {
    if avoid.nodes.contains(&src) || avoid.nodes.contains(&dst) {
        return None;
    }
    if src == dst {
        return Some(vec![src]);
    }
    // distances to dst
    let mut dist = vec![usize::MAX; topo.len()];
    dist[dst.index()] = 0;
    let mut queue = VecDeque::from([dst]);
    while let Some(u) = queue.pop_front() {
        if u == src {
            break;
        }
        for &(v, _) in topo.neighbors(u) {
            if dist[v.index()] != usize::MAX
                || avoid.nodes.contains(&v)
                || avoid.edge_blocked(u, v)
            {
                continue;
            }
            dist[v.index()] = dist[u.index()] + 1;
            queue.push_back(v);
        }
    }
    if dist[src.index()] == usize::MAX {
        return None;
    }
    // walk forward taking the smallest neighbour one step closer
    let mut path = vec![src];
    let mut cur = src;
    while cur != dst {
        let want = dist[cur.index()] - 1;
        let next = topo
            .neighbors(cur)
            .iter()
            .map(|&(v, _)| v)
            .find(|&v| dist[v.index()] == want && !avoid.edge_blocked(cur, v))?;
        path.push(next);
        cur = next;
    }
    Some(path)
}

fn check_station(topo: &Topology, s: StationId) -> Result<(), RoutingError> {
    if topo.contains(s) {
        Ok(())
    } else {
        Err(RoutingError::UnknownStation(s))
    }
}

/// Minimum-hop route, ties broken by the smallest station-id sequence.
pub fn shortest_path(topo: &Topology, src: StationId, dst: StationId) -> Result<Path, RoutingError> {
    shortest_path_avoiding(topo, src, dst, &Avoid::default())
}

/// [`shortest_path`] restricted to the part of the graph `avoid` leaves open.
pub fn shortest_path_avoiding(
    topo: &Topology,
    src: StationId,
    dst: StationId,
    avoid: &Avoid,
) -> Result<Path, RoutingError> {
    check_station(topo, src)?;
    check_station(topo, dst)?;
    if src == dst {
        return Err(RoutingError::SameEndpoints(src));
    }
    let stations = search(topo, src, dst, avoid).ok_or(RoutingError::Unreachable { src, dst })?;
    Ok(Path::new(stations).expect("search yields simple paths"))
}

/// Up to `k` loop-free paths from the sender to the receiver of `old` that
/// avoid `failed` and every station in `excluded`, best first.
///
/// Enumeration follows Yen's deviation scheme: each accepted path spawns
/// candidates that share a prefix with it and then take the best detour
/// around the edges already used from that prefix.
pub fn alternative_paths(
    topo: &Topology,
    old: &Path,
    failed: StationId,
    k: usize,
    excluded: &BTreeSet<StationId>,
) -> Result<Vec<Path>, RoutingError> {
    if k == 0 {
        return Err(RoutingError::ZeroK);
    }
    for &s in old.stations() {
        check_station(topo, s)?;
    }
    if !old.contains(failed) {
        return Err(RoutingError::FailedNotOnPath(failed));
    }
    let (src, dst) = (old.sender(), old.receiver());

    let mut base = Avoid::nodes(excluded.iter().copied());
    base.nodes.insert(failed);

    let first = search(topo, src, dst, &base).ok_or(RoutingError::NoAlternativePath)?;
    let mut accepted: Vec<Vec<StationId>> = vec![first];
    // ordered by (hops, sequence)
    let mut candidates: BTreeSet<(usize, Vec<StationId>)> = BTreeSet::new();

    while accepted.len() < k {
        let prev = accepted.last().unwrap().clone();
        for j in 0..prev.len() - 1 {
            let spur = prev[j];
            let root = &prev[..=j];
            let mut avoid = base.clone();
            for p in &accepted {
                if p.len() > j + 1 && &p[..=j] == root {
                    avoid.block_edge(p[j], p[j + 1]);
                }
            }
            avoid.nodes.extend(root[..j].iter().copied());
            if let Some(tail) = search(topo, spur, dst, &avoid) {
                let mut full = root[..j].to_vec();
                full.extend(tail);
                if !accepted.contains(&full) {
                    candidates.insert((full.len(), full));
                }
            }
        }
        match candidates.pop_first() {
            Some((_, best)) => accepted.push(best),
            None => break,
        }
    }

    Ok(accepted
        .into_iter()
        .map(|p| Path::new(p).expect("yen paths are simple"))
        .collect())
}
