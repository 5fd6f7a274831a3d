//! Viewpoint graph: positions, headed edges, panoramic observations,
//! sector arithmetic and deterministic shortest paths.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EnvError;

/// Identifier of a viewpoint in the world graph.
pub type ViewpointId = String;

/// Absolute tolerance when checking an edge's declared distance against the
/// euclidean distance between its endpoints.
const EDGE_GEOMETRY_TOLERANCE: f64 = 1e-6;

/// One of the 12 panoramic direction bins. Sector `k` covers headings
/// `[30k, 30(k+1))` degrees, with 0° pointing north and angles increasing
/// clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sector(u8);

impl Sector {
    /// Number of direction bins in a panorama.
    pub const COUNT: u8 = 12;
    /// Angular width of one bin, in degrees.
    pub const WIDTH_DEGREES: f64 = 30.0;

    /// Builds a sector from its id. Fails when `id >= 12`.
    pub fn new(id: u8) -> Result<Self, EnvError> {
        if id < Self::COUNT {
            Ok(Sector(id))
        } else {
            Err(EnvError::SectorOutOfRange(u32::from(id)))
        }
    }

    /// Maps a heading in degrees to the sector containing it.
    ///
    /// Every heading in `[0, 360)` lands in exactly one sector; anything
    /// else (including NaN) is rejected.
    pub fn of_heading(heading: f64) -> Result<Self, EnvError> {
        if !heading.is_finite() || !(0.0..360.0).contains(&heading) {
            return Err(EnvError::HeadingOutOfRange(heading));
        }
        let id = (heading / Self::WIDTH_DEGREES) as u8;
        // Guard against float edge cases right below 360.0 rounding up.
        Ok(Sector(id.min(Self::COUNT - 1)))
    }

    pub fn id(self) -> u8 {
        self.0
    }

    /// All 12 sectors in id order.
    pub fn all() -> impl Iterator<Item = Sector> {
        (0..Self::COUNT).map(Sector)
    }

    /// The sector reached by stepping `steps` bins clockwise.
    pub fn step_clockwise(self, steps: u8) -> Sector {
        Sector(((u16::from(self.0) + u16::from(steps)) % u16::from(Self::COUNT)) as u8)
    }

    /// The sector reached by stepping `steps` bins counter-clockwise.
    pub fn step_counter_clockwise(self, steps: u8) -> Sector {
        Sector((self.0 + Self::COUNT - steps % Self::COUNT) % Self::COUNT)
    }
}

impl std::fmt::Display for Sector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Directed connection between two viewpoints.
///
/// `heading` is the compass direction of travel in degrees and `distance`
/// must equal the euclidean distance between the endpoint positions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Edge {
    pub from: ViewpointId,
    pub to: ViewpointId,
    pub heading: f64,
    pub distance: f64,
}

impl Edge {
    /// Direction bin this edge leaves from.
    pub fn sector(&self) -> Sector {
        // Heading validity is enforced when the graph is built.
        Sector::of_heading(self.heading).expect("edge heading was validated at construction")
    }
}

/// What a camera pointed at one sector of a viewpoint's panorama would report.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Observation {
    pub scene_text: String,
    #[serde(default)]
    pub object_tags: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservationRecord {
    viewpoint: ViewpointId,
    sector: u32,
    scene_text: String,
    #[serde(default)]
    object_tags: Vec<String>,
}

/// On-disk world schema.
#[derive(Debug, Serialize, Deserialize)]
struct WorldFile {
    viewpoints: BTreeMap<ViewpointId, [f64; 3]>,
    edges: Vec<Edge>,
    observations: Vec<ObservationRecord>,
}

/// Directed viewpoint graph with panoramic observations.
#[derive(Debug, Clone)]
pub struct EnvGraph {
    positions: BTreeMap<ViewpointId, [f64; 3]>,
    edges: Vec<Edge>,
    /// Outgoing edge indices per viewpoint, sorted by destination id.
    adjacency: BTreeMap<ViewpointId, Vec<usize>>,
    observations: BTreeMap<(ViewpointId, u8), Observation>,
}

impl EnvGraph {
    /// Builds and validates a graph.
    ///
    /// Checks that every edge endpoint exists, headings are in `[0, 360)`,
    /// distances are positive and consistent with endpoint geometry,
    /// observations name known viewpoints and sectors, and the graph is
    /// connected when edge directions are ignored.
    pub fn new(
        positions: BTreeMap<ViewpointId, [f64; 3]>,
        edges: Vec<Edge>,
        observations: BTreeMap<(ViewpointId, u8), Observation>,
    ) -> Result<Self, EnvError> {
        for edge in &edges {
            for endpoint in [&edge.from, &edge.to] {
                if !positions.contains_key(endpoint) {
                    return Err(EnvError::DanglingEdge {
                        from: edge.from.clone(),
                        to: edge.to.clone(),
                        missing: endpoint.clone(),
                    });
                }
            }
            if !edge.heading.is_finite() || !(0.0..360.0).contains(&edge.heading) {
                return Err(EnvError::HeadingOutOfRange(edge.heading));
            }
            if !(edge.distance > 0.0) {
                return Err(EnvError::NonPositiveDistance {
                    from: edge.from.clone(),
                    to: edge.to.clone(),
                    distance: edge.distance,
                });
            }
            let euclidean = euclid(&positions[&edge.from], &positions[&edge.to]);
            if (edge.distance - euclidean).abs() > EDGE_GEOMETRY_TOLERANCE {
                return Err(EnvError::BadEdgeGeometry {
                    from: edge.from.clone(),
                    to: edge.to.clone(),
                    distance: edge.distance,
                    euclidean,
                });
            }
        }

        for (viewpoint, sector) in observations.keys() {
            if !positions.contains_key(viewpoint) {
                return Err(EnvError::UnknownViewpoint(viewpoint.clone()));
            }
            if *sector >= Sector::COUNT {
                return Err(EnvError::BadObservationSector {
                    viewpoint: viewpoint.clone(),
                    sector: u32::from(*sector),
                });
            }
        }

        let mut adjacency: BTreeMap<ViewpointId, Vec<usize>> = positions
            .keys()
            .map(|id| (id.clone(), Vec::new()))
            .collect();
        for (idx, edge) in edges.iter().enumerate() {
            adjacency.get_mut(&edge.from).expect("endpoint checked").push(idx);
        }
        for indices in adjacency.values_mut() {
            indices.sort_by(|&a, &b| edges[a].to.cmp(&edges[b].to));
        }

        let graph = EnvGraph {
            positions,
            edges,
            adjacency,
            observations,
        };
        graph.check_connected()?;
        Ok(graph)
    }

    /// Breadth-first reachability over undirected edges; a world where some
    /// viewpoint cannot be reached at all is rejected outright.
    fn check_connected(&self) -> Result<(), EnvError> {
        let Some(start) = self.positions.keys().next() else {
            return Ok(());
        };
        let mut undirected: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for edge in &self.edges {
            undirected.entry(&edge.from).or_default().push(&edge.to);
            undirected.entry(&edge.to).or_default().push(&edge.from);
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut queue: VecDeque<&str> = VecDeque::new();
        seen.insert(start);
        queue.push_back(start);
        while let Some(node) = queue.pop_front() {
            for &next in undirected.get(node).into_iter().flatten() {
                if seen.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        for viewpoint in self.positions.keys() {
            if !seen.contains(viewpoint.as_str()) {
                return Err(EnvError::Disconnected {
                    viewpoint: viewpoint.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn contains(&self, viewpoint: &str) -> bool {
        self.positions.contains_key(viewpoint)
    }

    pub fn viewpoints(&self) -> impl Iterator<Item = &ViewpointId> {
        self.positions.keys()
    }

    pub fn viewpoint_count(&self) -> usize {
        self.positions.len()
    }

    pub fn position(&self, viewpoint: &str) -> Option<[f64; 3]> {
        self.positions.get(viewpoint).copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Outgoing edges of a viewpoint, sorted by destination id.
    pub fn outgoing(&self, viewpoint: &str) -> impl Iterator<Item = &Edge> {
        self.adjacency
            .get(viewpoint)
            .into_iter()
            .flatten()
            .map(move |&idx| &self.edges[idx])
    }

    /// Finds the directed edge between two viewpoints, if any.
    pub fn edge_between(&self, from: &str, to: &str) -> Option<&Edge> {
        self.outgoing(from).find(|edge| edge.to == to)
    }

    pub fn observation(&self, viewpoint: &str, sector: Sector) -> Option<&Observation> {
        self.observations
            .get(&(viewpoint.to_string(), sector.id()))
    }

    /// Movement candidates whose edge heading falls in `sector`, ordered by
    /// edge distance (then destination id). Unknown viewpoints yield an
    /// empty list.
    pub fn candidates_in_sector(&self, at: &str, sector: Sector) -> Vec<&Edge> {
        let mut found: Vec<&Edge> = self
            .outgoing(at)
            .filter(|edge| edge.sector() == sector)
            .collect();
        found.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then_with(|| a.to.cmp(&b.to))
        });
        found
    }

    /// Geodesic (shortest-path) distance along directed edges, or `None`
    /// when `to` cannot be reached from `from`.
    pub fn geodesic(&self, from: &str, to: &str) -> Result<Option<f64>, EnvError> {
        Ok(self.shortest_path(from, to)?.map(|(length, _)| length))
    }

    /// Deterministic Dijkstra over directed edges. Returns total length and
    /// the viewpoint sequence, or `None` when unreachable.
    pub fn shortest_path(
        &self,
        from: &str,
        to: &str,
    ) -> Result<Option<(f64, Vec<ViewpointId>)>, EnvError> {
        for endpoint in [from, to] {
            if !self.contains(endpoint) {
                return Err(EnvError::UnknownViewpoint(endpoint.to_string()));
            }
        }

        let mut dist: BTreeMap<&str, f64> = BTreeMap::new();
        let mut prev: BTreeMap<&str, &str> = BTreeMap::new();
        let mut heap: BinaryHeap<std::cmp::Reverse<HeapEntry>> = BinaryHeap::new();
        dist.insert(from, 0.0);
        heap.push(std::cmp::Reverse(HeapEntry {
            length: 0.0,
            id: from,
        }));

        while let Some(std::cmp::Reverse(entry)) = heap.pop() {
            if entry.length > dist[entry.id] {
                continue; // stale entry
            }
            if entry.id == to {
                break;
            }
            for edge in self.outgoing(entry.id) {
                let next = entry.length + edge.distance;
                let better = match dist.get(edge.to.as_str()) {
                    Some(&known) => next < known,
                    None => true,
                };
                if better {
                    dist.insert(&edge.to, next);
                    prev.insert(&edge.to, entry.id);
                    heap.push(std::cmp::Reverse(HeapEntry {
                        length: next,
                        id: &edge.to,
                    }));
                }
            }
        }

        let Some(&length) = dist.get(to) else {
            return Ok(None);
        };
        let mut path = vec![to.to_string()];
        let mut cursor = to;
        while cursor != from {
            cursor = prev[cursor];
            path.push(cursor.to_string());
        }
        path.reverse();
        Ok(Some((length, path)))
    }

    /// Serializes the world to the on-disk JSON schema.
    pub fn save(&self, path: &Path) -> Result<(), EnvError> {
        let file = WorldFile {
            viewpoints: self.positions.clone(),
            edges: self.edges.clone(),
            observations: self
                .observations
                .iter()
                .map(|((viewpoint, sector), obs)| ObservationRecord {
                    viewpoint: viewpoint.clone(),
                    sector: u32::from(*sector),
                    scene_text: obs.scene_text.clone(),
                    object_tags: obs.object_tags.clone(),
                })
                .collect(),
        };
        let body = serde_json::to_string_pretty(&file).expect("world serialization is infallible");
        std::fs::write(path, body + "\n").map_err(|source| EnvError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Dijkstra frontier entry ordered by length, ties broken by viewpoint id.
#[derive(PartialEq)]
struct HeapEntry<'a> {
    length: f64,
    id: &'a str,
}

impl Eq for HeapEntry<'_> {}

impl Ord for HeapEntry<'_> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.length
            .total_cmp(&other.length)
            .then_with(|| self.id.cmp(other.id))
    }
}

impl PartialOrd for HeapEntry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn euclid(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Loads and validates a world from its JSON file.
pub fn load_world(path: &Path) -> Result<EnvGraph, EnvError> {
    let body = std::fs::read_to_string(path).map_err(|source| EnvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: WorldFile = serde_json::from_str(&body).map_err(|source| EnvError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let mut observations = BTreeMap::new();
    for record in file.observations {
        let sector = u8::try_from(record.sector)
            .ok()
            .filter(|&s| s < Sector::COUNT)
            .ok_or(EnvError::BadObservationSector {
                viewpoint: record.viewpoint.clone(),
                sector: record.sector,
            })?;
        observations.insert(
            (record.viewpoint, sector),
            Observation {
                scene_text: record.scene_text,
                object_tags: record.object_tags,
            },
        );
    }
    EnvGraph::new(file.viewpoints, file.edges, observations)
}
