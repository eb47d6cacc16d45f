//! Brute-force reference implementations, written without the library's
//! algorithms.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

/// Positional path comparison, one index at a time.
/// Returns (same, diff1, diff2, h, k).
pub fn brute_diff(old: &[u32], new: &[u32]) -> (Vec<u32>, Vec<u32>, Vec<u32>, usize, usize) {
    let (mut same, mut d1, mut d2) = (Vec::new(), Vec::new(), Vec::new());
    let longest = old.len().max(new.len());
    for i in 0..longest {
        match (old.get(i), new.get(i)) {
            (Some(a), Some(b)) if a == b => same.push(*a),
            (Some(a), Some(b)) => {
                d1.push(*a);
                d2.push(*b);
            }
            (Some(a), None) => d1.push(*a),
            (None, Some(b)) => d2.push(*b),
            (None, None) => unreachable!(),
        }
    }
    let h = old.len().min(new.len()) - same.len();
    let k = same.len();
    (same, d1, d2, h, k)
}

/// Every loop-free sequence of length 2..=max_len over `ids`.
pub fn all_paths(ids: &[u32], max_len: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn grow(ids: &[u32], max_len: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if cur.len() >= 2 {
            out.push(cur.clone());
        }
        if cur.len() == max_len {
            return;
        }
        for &i in ids {
            if !cur.contains(&i) {
                cur.push(i);
                grow(ids, max_len, cur, out);
                cur.pop();
            }
        }
    }
    grow(ids, max_len, &mut cur, &mut out);
    out
}

/// Every sequence of length 1..=max_len over `ids`, repeats allowed.
pub fn all_sequences(ids: &[u32], max_len: usize) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = Vec::new();
    let mut layer: Vec<Vec<u32>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|p| {
                ids.iter().map(move |&i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// A connected undirected simple graph on `n` nodes: a random spanning tree
/// plus extra random edges.
pub fn random_connected_graph<R: Rng>(rng: &mut R, n: u32) -> Vec<(u32, u32)> {
    let mut order: Vec<u32> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = BTreeSet::new();
    for i in 1..order.len() {
        let parent = order[rng.random_range(0..i)];
        let (a, b) = (order[i].min(parent), order[i].max(parent));
        edges.insert((a, b));
    }
    let extra = rng.random_range(0..=(n as usize * 2));
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    edges.into_iter().collect()
}

/// Depth-first enumeration of all simple paths src -> dst avoiding `banned`,
/// sorted by (hop count, id sequence).
pub fn enumerate_simple_paths(n: u32, edges: &[(u32, u32)], src: u32, dst: u32, banned: &BTreeSet<u32>) -> Vec<Vec<u32>> {
    let mut adj = vec![Vec::new(); n as usize];
    for &(a, b) in edges {
        adj[a as usize].push(b);
        adj[b as usize].push(a);
    }
    let mut out = Vec::new();
    if banned.contains(&src) || banned.contains(&dst) {
        return out;
    }
    let mut stack = vec![src];
    fn dfs(adj: &[Vec<u32>], dst: u32, banned: &BTreeSet<u32>, stack: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        let at = *stack.last().unwrap();
        if at == dst {
            out.push(stack.clone());
            return;
        }
        for &next in &adj[at as usize] {
            if !banned.contains(&next) && !stack.contains(&next) {
                stack.push(next);
                dfs(adj, dst, banned, stack, out);
                stack.pop();
            }
        }
    }
    dfs(&adj, dst, banned, &mut stack, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}
