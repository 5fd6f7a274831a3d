//! Deterministic synthetic world and episode generator.
//!
//! Builds a jittered-grid viewpoint graph with bidirectional edges, plants
//! landmark observations along each episode's reference path, and authors
//! instructions from a small template grammar so that table-driven and
//! ground-truth backends can answer questions about them.

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::episode::Episode;
use super::graph::{euclid, Edge, EnvGraph, Observation, Sector, ViewpointId};

/// Room-type landmark phrases (used without the article).
pub const ROOM_PHRASES: &[&str] = &[
    "kitchen",
    "bathroom",
    "hallway",
    "bedroom",
    "living room",
    "dining room",
    "office",
    "closet",
    "laundry room",
    "foyer",
];

/// Plain object landmark phrases.
pub const OBJECT_PHRASES: &[&str] = &[
    "sofa",
    "round table",
    "floor lamp",
    "large mirror",
    "potted plant",
    "bookshelf",
    "armchair",
    "staircase",
    "refrigerator",
    "framed painting",
    "television stand",
    "kitchen counter",
    "bay window",
    "coat rack",
];

/// Color-qualified object landmark phrases.
pub const COLOR_PHRASES: &[&str] = &[
    "red carpet",
    "blue chair",
    "green door",
    "white cabinet",
    "black vase",
    "yellow curtain",
    "red pillow",
    "blue towel",
    "green rug",
    "white bench",
    "black ottoman",
    "yellow stool",
];

const GRID_SPACING: f64 = 4.0;
const POSITION_JITTER: f64 = 1.2;
const SHORTCUT_RANGE: f64 = 9.0;
const MAX_REFERENCE_HOPS: usize = 6;

/// Generates a connected world and a batch of solvable episodes.
///
/// The same `(seed, n_viewpoints, n_episodes)` always produces the same
/// world and episodes, byte for byte once serialized. Every viewpoint has
/// at most one outgoing edge per direction bin, so a direction id always
/// identifies a unique movement. Panics when `n_viewpoints < 2`.
pub fn generate_synthetic_world(
    seed: u64,
    n_viewpoints: usize,
    n_episodes: usize,
) -> (EnvGraph, Vec<Episode>) {
    assert!(n_viewpoints >= 2, "a world needs at least two viewpoints");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let positions = place_viewpoints(&mut rng, n_viewpoints);
    let ids: Vec<ViewpointId> = positions.keys().cloned().collect();
    let mut edges = Vec::new();
    // Sector occupancy per viewpoint: the one-edge-per-bin invariant.
    let mut used: BTreeSet<(ViewpointId, u8)> = BTreeSet::new();

    connect_spanning(&positions, &ids, &mut edges, &mut used);
    add_shortcuts(&mut rng, &positions, &ids, &mut edges, &mut used);

    let mut observations = decoy_observations(&mut rng, &ids, &edges);

    // A draft graph (before landmark planting) provides shortest paths for
    // episode construction; planting only touches observations.
    let draft = EnvGraph::new(positions.clone(), edges.clone(), BTreeMap::new())
        .expect("generated graph must validate");

    let mut episodes = Vec::new();
    let mut taken_instructions = BTreeSet::new();
    for index in 0..n_episodes {
        let episode = build_episode(
            &mut rng,
            &draft,
            &ids,
            index,
            &mut taken_instructions,
            &mut observations,
        );
        episodes.push(episode);
    }

    let world = EnvGraph::new(positions, edges, observations)
        .expect("generated graph must validate after landmark planting");
    (world, episodes)
}

fn place_viewpoints(rng: &mut ChaCha8Rng, n: usize) -> BTreeMap<ViewpointId, [f64; 3]> {
    let cols = (n as f64).sqrt().ceil() as usize;
    (0..n)
        .map(|i| {
            let row = (i / cols) as f64;
            let col = (i % cols) as f64;
            let x = col * GRID_SPACING + rng.gen_range(-POSITION_JITTER..POSITION_JITTER);
            let y = row * GRID_SPACING + rng.gen_range(-POSITION_JITTER..POSITION_JITTER);
            let z = 1.5 + rng.gen_range(-0.05..0.05);
            (format!("vp{i:03}"), [x, y, z])
        })
        .collect()
}

/// Compass heading of the displacement a -> b: 0° north (+y), 90° east (+x).
fn compass_heading(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let h = (b[0] - a[0]).atan2(b[1] - a[1]).to_degrees().rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

fn try_connect(
    positions: &BTreeMap<ViewpointId, [f64; 3]>,
    a: &str,
    b: &str,
    edges: &mut Vec<Edge>,
    used: &mut BTreeSet<(ViewpointId, u8)>,
) -> bool {
    let (pa, pb) = (&positions[a], &positions[b]);
    let heading_ab = compass_heading(pa, pb);
    let heading_ba = compass_heading(pb, pa);
    let sector_ab = Sector::of_heading(heading_ab).expect("normalized heading").id();
    let sector_ba = Sector::of_heading(heading_ba).expect("normalized heading").id();
    if used.contains(&(a.to_string(), sector_ab)) || used.contains(&(b.to_string(), sector_ba)) {
        return false;
    }
    let distance = euclid(pa, pb);
    edges.push(Edge {
        from: a.to_string(),
        to: b.to_string(),
        heading: heading_ab,
        distance,
    });
    edges.push(Edge {
        from: b.to_string(),
        to: a.to_string(),
        heading: heading_ba,
        distance,
    });
    used.insert((a.to_string(), sector_ab));
    used.insert((b.to_string(), sector_ba));
    true
}

/// Connects each viewpoint to an already-placed neighbor, nearest first.
fn connect_spanning(
    positions: &BTreeMap<ViewpointId, [f64; 3]>,
    ids: &[ViewpointId],
    edges: &mut Vec<Edge>,
    used: &mut BTreeSet<(ViewpointId, u8)>,
) {
    for i in 1..ids.len() {
        let mut earlier: Vec<&ViewpointId> = ids[..i].iter().collect();
        earlier.sort_by(|a, b| {
            euclid(&positions[ids[i].as_str()], &positions[a.as_str()])
                .total_cmp(&euclid(&positions[ids[i].as_str()], &positions[b.as_str()]))
                .then_with(|| a.cmp(b))
        });
        let connected = earlier
            .iter()
            .any(|candidate| try_connect(positions, &ids[i], candidate, edges, used));
        assert!(connected, "fresh viewpoint always has a free sector");
    }
}

fn add_shortcuts(
    rng: &mut ChaCha8Rng,
    positions: &BTreeMap<ViewpointId, [f64; 3]>,
    ids: &[ViewpointId],
    edges: &mut Vec<Edge>,
    used: &mut BTreeSet<(ViewpointId, u8)>,
) {
    let attempts = ids.len();
    for _ in 0..attempts {
        let a = &ids[rng.gen_range(0..ids.len())];
        let b = &ids[rng.gen_range(0..ids.len())];
        if a == b || euclid(&positions[a.as_str()], &positions[b.as_str()]) > SHORTCUT_RANGE {
            continue;
        }
        try_connect(positions, a, b, edges, used);
    }
}

const DECOY_SCENES: &[&str] = &[
    "A plain wall with scuffed paint.",
    "An open passage continues ahead.",
    "A stretch of tiled floor.",
    "Daylight falls in from the side.",
    "A shadowed corner with nothing of note.",
];

fn decoy_observations(
    rng: &mut ChaCha8Rng,
    ids: &[ViewpointId],
    edges: &[Edge],
) -> BTreeMap<(ViewpointId, u8), Observation> {
    let mut has_edge: BTreeSet<(&str, u8)> = BTreeSet::new();
    for edge in edges {
        has_edge.insert((&edge.from, edge.sector().id()));
    }
    let mut observations = BTreeMap::new();
    for id in ids {
        for sector in Sector::all() {
            let towards_edge = has_edge.contains(&(id.as_str(), sector.id()));
            let chance = if towards_edge { 0.65 } else { 0.25 };
            if rng.gen_bool(chance) {
                let scene = DECOY_SCENES[rng.gen_range(0..DECOY_SCENES.len())];
                observations.insert(
                    (id.clone(), sector.id()),
                    Observation {
                        scene_text: scene.to_string(),
                        object_tags: Vec::new(),
                    },
                );
            }
        }
    }
    observations
}

fn pick_phrase(rng: &mut ChaCha8Rng, taken: &BTreeSet<String>) -> String {
    for _ in 0..40 {
        let pool = match rng.gen_range(0..3u8) {
            0 => ROOM_PHRASES,
            1 => OBJECT_PHRASES,
            _ => COLOR_PHRASES,
        };
        let phrase = pool[rng.gen_range(0..pool.len())].to_string();
        if !taken.contains(&phrase) {
            return phrase;
        }
    }
    // Pools are far larger than any reference path, so collisions that
    // survive 40 draws mean the path is absurdly long; just allow a repeat.
    ROOM_PHRASES[rng.gen_range(0..ROOM_PHRASES.len())].to_string()
}

fn plant(
    observations: &mut BTreeMap<(ViewpointId, u8), Observation>,
    viewpoint: &str,
    sector: Sector,
    phrase: &str,
) {
    let entry = observations
        .entry((viewpoint.to_string(), sector.id()))
        .or_default();
    let sentence = format!("You can see the {phrase}.");
    if !entry.scene_text.contains(&sentence) {
        if entry.scene_text.is_empty() {
            entry.scene_text = sentence;
        } else {
            entry.scene_text = format!("{} {}", entry.scene_text, sentence);
        }
    }
    if !entry.object_tags.iter().any(|t| t == phrase) {
        entry.object_tags.push(phrase.to_string());
    }
}

fn build_episode(
    rng: &mut ChaCha8Rng,
    draft: &EnvGraph,
    ids: &[ViewpointId],
    index: usize,
    taken_instructions: &mut BTreeSet<String>,
    observations: &mut BTreeMap<(ViewpointId, u8), Observation>,
) -> Episode {
    // Prefer paths of 2..=MAX_REFERENCE_HOPS hops; settle for one hop when a
    // tiny world offers nothing longer.
    let mut chosen: Option<(f64, Vec<ViewpointId>)> = None;
    for attempt in 0..120 {
        let start = &ids[rng.gen_range(0..ids.len())];
        let goal = &ids[rng.gen_range(0..ids.len())];
        if start == goal {
            continue;
        }
        let Some((length, path)) = draft
            .shortest_path(start, goal)
            .expect("generated viewpoints exist")
        else {
            continue;
        };
        let hops = path.len() - 1;
        let enough = if attempt < 60 { hops >= 2 } else { hops >= 1 };
        if enough && hops <= MAX_REFERENCE_HOPS {
            chosen = Some((length, path));
            break;
        }
    }
    let (shortest_length, path) = chosen.expect("connected world always yields a path");

    // One landmark per hop plus a goal landmark; instruction built from them.
    for retry in 0..50 {
        let mut phrases = Vec::new();
        let mut seen = BTreeSet::new();
        for _ in 0..path.len() {
            let phrase = pick_phrase(rng, &seen);
            seen.insert(phrase.clone());
            phrases.push(phrase);
        }
        let mut sentences = Vec::new();
        for (i, phrase) in phrases.iter().take(path.len() - 1).enumerate() {
            let verb = if i == 0 {
                "Walk"
            } else {
                ["Walk", "Go", "Head"][rng.gen_range(0..3)]
            };
            sentences.push(format!("{verb} to the {phrase}."));
        }
        sentences.push(format!("Stop at the {}.", phrases[path.len() - 1]));
        let instruction = sentences.join(" ");
        if taken_instructions.contains(&instruction) {
            assert!(retry < 49, "instruction space exhausted");
            continue;
        }
        taken_instructions.insert(instruction.clone());

        for (i, pair) in path.windows(2).enumerate() {
            let edge = draft
                .edge_between(&pair[0], &pair[1])
                .expect("reference path follows edges");
            plant(observations, &pair[0], edge.sector(), &phrases[i]);
        }
        // The goal landmark is visible on arrival, in the arrival direction.
        let last_edge = draft
            .edge_between(&path[path.len() - 2], &path[path.len() - 1])
            .expect("reference path follows edges");
        plant(
            observations,
            &path[path.len() - 1],
            last_edge.sector(),
            &phrases[path.len() - 1],
        );

        return Episode {
            id: format!("ep{index:03}"),
            instruction,
            start: path[0].clone(),
            goal: path[path.len() - 1].clone(),
            reference_path: path,
            shortest_length,
        };
    }
    unreachable!("instruction retry loop always returns");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_world() {
        let (world_a, eps_a) = generate_synthetic_world(7, 18, 5);
        let (world_b, eps_b) = generate_synthetic_world(7, 18, 5);
        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a.json"), dir.path().join("b.json"));
        world_a.save(&pa).unwrap();
        world_b.save(&pb).unwrap();
        assert_eq!(
            std::fs::read(&pa).unwrap(),
            std::fs::read(&pb).unwrap(),
            "world bytes must match for equal seeds"
        );
        let ja: Vec<String> = eps_a.iter().map(|e| e.instruction.clone()).collect();
        let jb: Vec<String> = eps_b.iter().map(|e| e.instruction.clone()).collect();
        assert_eq!(ja, jb);
    }

    #[test]
    fn different_seeds_differ() {
        let (_, eps_a) = generate_synthetic_world(1, 18, 4);
        let (_, eps_b) = generate_synthetic_world(2, 18, 4);
        let ia: Vec<_> = eps_a.iter().map(|e| &e.instruction).collect();
        let ib: Vec<_> = eps_b.iter().map(|e| &e.instruction).collect();
        assert_ne!(ia, ib);
    }

    #[test]
    fn one_outgoing_edge_per_sector() {
        let (world, _) = generate_synthetic_world(11, 30, 6);
        for viewpoint in world.viewpoints() {
            let mut seen = BTreeSet::new();
            for edge in world.outgoing(viewpoint) {
                assert!(
                    seen.insert(edge.sector().id()),
                    "viewpoint {viewpoint} has two edges in sector {}",
                    edge.sector()
                );
            }
        }
    }

    #[test]
    fn episodes_are_solvable_and_unique() {
        let (world, episodes) = generate_synthetic_world(3, 25, 10);
        let mut instructions = BTreeSet::new();
        for episode in &episodes {
            assert!(instructions.insert(episode.instruction.clone()));
            assert!(episode.reference_path.len() >= 2);
            for pair in episode.reference_path.windows(2) {
                assert!(world.edge_between(&pair[0], &pair[1]).is_some());
            }
            let geodesic = world
                .geodesic(&episode.start, &episode.goal)
                .unwrap()
                .unwrap();
            assert_eq!(geodesic, episode.shortest_length);
        }
    }

    #[test]
    fn landmarks_are_planted_along_reference_paths() {
        let (world, episodes) = generate_synthetic_world(9, 20, 6);
        for episode in &episodes {
            for pair in episode.reference_path.windows(2) {
                let edge = world.edge_between(&pair[0], &pair[1]).unwrap();
                let obs = world
                    .observation(&pair[0], edge.sector())
                    .expect("hop sector must carry an observation");
                assert!(obs.scene_text.contains("You can see the "));
                assert!(!obs.object_tags.is_empty());
            }
        }
    }

    #[test]
    fn minimum_world_size_works() {
        let (world, episodes) = generate_synthetic_world(5, 2, 1);
        assert_eq!(world.viewpoint_count(), 2);
        assert_eq!(episodes.len(), 1);
    }
}
