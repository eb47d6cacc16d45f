#[path = "support/oracles.rs"]
mod oracles;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qrs_core::analyzer::{diff_paths, diff_stations};
use qrs_core::routing::alternative_paths;
use qrs_core::{Link, Path, Station, StationId, StationKind, Topology};

use oracles::{all_paths, all_sequences, brute_diff, enumerate_simple_paths, random_connected_graph};

fn ids(s: &[StationId]) -> Vec<u32> {
    s.iter().map(|x| x.0).collect()
}

fn check_diff(old: &[u32], new: &[u32], got: &qrs_core::DiffResult) {
    let (same, d1, d2, h, k) = brute_diff(old, new);
    assert_eq!(ids(&got.same), same, "{old:?} {new:?}");
    assert_eq!(ids(&got.diff1), d1, "{old:?} {new:?}");
    assert_eq!(ids(&got.diff2), d2, "{old:?} {new:?}");
    assert_eq!((got.h, got.k), (h, k), "{old:?} {new:?}");
}

#[test]
fn diff_paths_matches_positional_oracle_on_all_paths() {
    let paths = all_paths(&[0, 1, 2, 3], 6);
    assert_eq!(paths.len(), 12 + 24 + 24);
    for old in &paths {
        let po = Path::from_ids(old).unwrap();
        for new in &paths {
            let pn = Path::from_ids(new).unwrap();
            check_diff(old, new, &diff_paths(&po, &pn));
        }
    }
}

#[test]
fn diff_stations_matches_positional_oracle_on_all_sequences() {
    let seqs: Vec<(Vec<u32>, Vec<StationId>)> = all_sequences(&[0, 1, 2, 3], 6)
        .into_iter()
        .map(|s| {
            let st = s.iter().copied().map(StationId).collect();
            (s, st)
        })
        .collect();
    assert_eq!(seqs.len(), 4 + 16 + 64 + 256 + 1024 + 4096);
    for (old, so) in &seqs {
        for (new, sn) in &seqs {
            check_diff(old, new, &diff_stations(so, sn));
        }
    }
}

fn topo(n: u32, edges: &[(u32, u32)]) -> Topology {
    let stations = (0..n)
        .map(|i| Station::new(StationId(i), StationKind::Router, 1_000_000))
        .collect();
    let links = edges.iter().map(|&(a, b)| Link::new(a, b, 1_000_000, 0.001, 10)).collect();
    Topology::new(stations, links).unwrap()
}

#[test]
fn alternative_paths_match_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut compared = 0;
    for g in 0..200 {
        let n = 2 + (g % 7) as u32;
        let edges = random_connected_graph(&mut rng, n);
        let t = topo(n, &edges);
        for src in 0..n {
            for dst in 0..n {
                if src == dst {
                    continue;
                }
                let old = &enumerate_simple_paths(n, &edges, src, dst, &BTreeSet::new())[0];
                let old_path = Path::from_ids(old).unwrap();
                for &failed in old {
                    for excluded in [BTreeSet::new(), BTreeSet::from([(failed + 1) % n])] {
                        let mut banned = excluded.clone();
                        banned.insert(failed);
                        let want = enumerate_simple_paths(n, &edges, src, dst, &banned);
                        let ex: BTreeSet<StationId> = excluded.iter().copied().map(StationId).collect();
                        for k in [1, 2, 4, 7] {
                            let got = alternative_paths(&t, &old_path, StationId(failed), k, &ex);
                            match got {
                                Ok(paths) => {
                                    let got: Vec<Vec<u32>> = paths.iter().map(|p| ids(p.stations())).collect();
                                    let want: Vec<Vec<u32>> = want.iter().take(k).cloned().collect();
                                    assert_eq!(got, want, "graph {edges:?} old {old:?} failed {failed} k {k}");
                                }
                                Err(e) => assert!(want.is_empty(), "{e} but oracle found {want:?}"),
                            }
                            compared += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(compared > 10_000, "{compared}");
}
