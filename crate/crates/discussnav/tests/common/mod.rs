//! Shared helpers for the integration tests: a random-world generator and a
//! metric oracle that enumerates simple paths instead of using the library's
//! shortest-path search, so the two implementations check each other.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use discussnav::env::{Edge, EnvGraph, Episode, Trajectory};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// A generated world together with the raw parts it was built from, so
/// checks can work on the parts without going through the graph API.
pub struct RawWorld {
    pub ids: Vec<String>,
    pub positions: BTreeMap<String, [f64; 3]>,
    pub edges: Vec<Edge>,
    pub graph: EnvGraph,
}

pub fn euclid(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Compass heading of the displacement a -> b: 0 north (+y), 90 east (+x).
fn heading_between(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let h = (b[0] - a[0]).atan2(b[1] - a[1]).to_degrees().rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

fn directed_edge(positions: &BTreeMap<String, [f64; 3]>, from: &str, to: &str) -> Edge {
    let (pa, pb) = (&positions[from], &positions[to]);
    Edge {
        from: from.to_string(),
        to: to.to_string(),
        heading: heading_between(pa, pb),
        distance: euclid(pa, pb),
    }
}

/// Builds a random connected world with 2..=12 viewpoints.
///
/// A bidirectional spanning tree keeps the world undirected-connected; on
/// top of it a few extra edges are added, some of them one-directional so
/// that certain ordered pairs become unreachable and the infinite-distance
/// paths get exercised too.
pub fn random_world(seed: u64) -> RawWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=12usize);

    let mut positions: BTreeMap<String, [f64; 3]> = BTreeMap::new();
    for i in 0..n {
        loop {
            let x = f64::from(rng.gen_range(0..300u32)) / 10.0;
            let y = f64::from(rng.gen_range(0..300u32)) / 10.0;
            let candidate = [x, y, 0.0];
            if positions.values().all(|p| euclid(p, &candidate) > 0.5) {
                positions.insert(format!("n{i:02}"), candidate);
                break;
            }
        }
    }
    let ids: Vec<String> = positions.keys().cloned().collect();

    let mut pairs: BTreeSet<(String, String)> = BTreeSet::new();
    let mut edges: Vec<Edge> = Vec::new();
    let add = |from: &str, to: &str, edges: &mut Vec<Edge>, pairs: &mut BTreeSet<_>| {
        if from != to && pairs.insert((from.to_string(), to.to_string())) {
            edges.push(directed_edge(&positions, from, to));
        }
    };

    for i in 1..n {
        let j = rng.gen_range(0..i);
        add(&ids[i], &ids[j], &mut edges, &mut pairs);
        add(&ids[j], &ids[i], &mut edges, &mut pairs);
    }
    for _ in 0..rng.gen_range(0..=n) {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        add(&ids[a], &ids[b], &mut edges, &mut pairs);
        if rng.gen_bool(0.5) {
            add(&ids[b], &ids[a], &mut edges, &mut pairs);
        }
    }

    let graph = EnvGraph::new(positions.clone(), edges.clone(), BTreeMap::new())
        .expect("random world must validate");
    RawWorld {
        ids,
        positions,
        edges,
        graph,
    }
}

/// Length of the shortest directed path, found by enumerating simple paths
/// (with a provably safe cut: a partial path already at least as long as the
/// best complete one cannot improve). Independent of the library's search.
pub fn enumerated_shortest(edges: &[Edge], from: &str, to: &str) -> Option<f64> {
    let mut adjacency: BTreeMap<&str, Vec<(&str, f64)>> = BTreeMap::new();
    for edge in edges {
        adjacency
            .entry(edge.from.as_str())
            .or_default()
            .push((edge.to.as_str(), edge.distance));
    }

    fn walk<'a>(
        adjacency: &BTreeMap<&'a str, Vec<(&'a str, f64)>>,
        at: &'a str,
        to: &str,
        so_far: f64,
        on_path: &mut BTreeSet<&'a str>,
        best: &mut Option<f64>,
    ) {
        if at == to {
            if best.map_or(true, |b| so_far < b) {
                *best = Some(so_far);
            }
            return;
        }
        if let Some(b) = *best {
            if so_far >= b {
                return;
            }
        }
        for &(next, distance) in adjacency.get(at).into_iter().flatten() {
            if on_path.insert(next) {
                walk(adjacency, next, to, so_far + distance, on_path, best);
                on_path.remove(next);
            }
        }
    }

    let mut best = None;
    let mut on_path = BTreeSet::new();
    on_path.insert(from);
    walk(&adjacency, from, to, 0.0, &mut on_path, &mut best);
    best
}

/// The five trajectory metrics computed from first principles on the raw
/// edge list, using [`enumerated_shortest`] for every distance.
pub struct EnumeratedMetrics {
    pub tl: f64,
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
}

pub fn enumerated_metrics(
    edges: &[Edge],
    episode: &Episode,
    trajectory: &Trajectory,
    threshold: f64,
) -> EnumeratedMetrics {
    let mut tl = 0.0;
    for pair in trajectory.visited.windows(2) {
        let edge = edges
            .iter()
            .find(|e| e.from == pair[0] && e.to == pair[1])
            .expect("trajectory follows existing edges");
        tl += edge.distance;
    }

    let last = trajectory.visited.last().expect("non-empty trajectory");
    let ne = enumerated_shortest(edges, last, &episode.goal).unwrap_or(f64::INFINITY);
    let sr = if ne < threshold { 1.0 } else { 0.0 };

    let nearest = trajectory
        .visited
        .iter()
        .map(|vp| enumerated_shortest(edges, vp, &episode.goal).unwrap_or(f64::INFINITY))
        .fold(f64::INFINITY, f64::min);
    let osr = if nearest < threshold { 1.0 } else { 0.0 };

    let shortest = episode.shortest_length;
    let spl = if tl == 0.0 && shortest == 0.0 {
        sr
    } else {
        sr * shortest / tl.max(shortest)
    };

    EnumeratedMetrics { tl, ne, sr, osr, spl }
}

/// Random edge-following walk from `start`, `hops` long at most (a walk can
/// end early at a dead end). Revisits are allowed: walks are not simple.
pub fn random_walk(world: &RawWorld, rng: &mut ChaCha8Rng, start: &str, hops: usize) -> Vec<String> {
    let mut visited = vec![start.to_string()];
    let mut at = start.to_string();
    for _ in 0..hops {
        let next: Vec<&Edge> = world.edges.iter().filter(|e| e.from == at).collect();
        if next.is_empty() {
            break;
        }
        let edge = next[rng.gen_range(0..next.len())];
        at = edge.to.clone();
        visited.push(at.clone());
    }
    visited
}

/// Equality up to 1e-9 that also accepts two equal infinities.
pub fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-9
}
