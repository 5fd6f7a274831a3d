//! Navigation episodes: an instruction, a start, a goal and a reference path.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{EnvGraph, ViewpointId};
use super::EnvError;

/// One navigation task over a world graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Episode {
    pub id: String,
    pub instruction: String,
    pub start: ViewpointId,
    pub goal: ViewpointId,
    pub reference_path: Vec<ViewpointId>,
    /// Geodesic start-to-goal length, recomputed from the world at load time.
    #[serde(skip)]
    pub shortest_length: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct EpisodeRecord {
    id: String,
    instruction: String,
    start: ViewpointId,
    goal: ViewpointId,
    reference_path: Vec<ViewpointId>,
}

/// Loads episodes from a JSONL file and validates each against the world.
///
/// An episode is rejected when an endpoint is unknown, the reference path
/// does not run start-to-goal along existing edges, or the goal cannot be
/// reached from the start at all.
pub fn load_episodes(path: &Path, world: &EnvGraph) -> Result<Vec<Episode>, EnvError> {
    let file = std::fs::File::open(path).map_err(|source| EnvError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut episodes = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| EnvError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EpisodeRecord =
            serde_json::from_str(&line).map_err(|source| EnvError::Parse {
                path: path.to_path_buf(),
                source,
            })?;
        episodes.push(validate(record, world)?);
    }
    Ok(episodes)
}

fn validate(record: EpisodeRecord, world: &EnvGraph) -> Result<Episode, EnvError> {
    let invalid = |reason: String| EnvError::EpisodeInvalid {
        id: record.id.clone(),
        reason,
    };

    for viewpoint in [&record.start, &record.goal] {
        if !world.contains(viewpoint) {
            return Err(invalid(format!("unknown viewpoint `{viewpoint}`")));
        }
    }
    for viewpoint in &record.reference_path {
        if !world.contains(viewpoint) {
            return Err(invalid(format!(
                "reference path names unknown viewpoint `{viewpoint}`"
            )));
        }
    }
    let (Some(first), Some(last)) = (record.reference_path.first(), record.reference_path.last())
    else {
        return Err(invalid("reference path is empty".into()));
    };
    if first != &record.start {
        return Err(invalid("reference path does not begin at start".into()));
    }
    if last != &record.goal {
        return Err(invalid("reference path does not end at goal".into()));
    }
    for pair in record.reference_path.windows(2) {
        if world.edge_between(&pair[0], &pair[1]).is_none() {
            return Err(invalid(format!(
                "reference path hop `{}` -> `{}` has no edge",
                pair[0], pair[1]
            )));
        }
    }
    let shortest_length = world
        .geodesic(&record.start, &record.goal)?
        .ok_or_else(|| invalid("goal is unreachable from start".into()))?;

    Ok(Episode {
        id: record.id,
        instruction: record.instruction,
        start: record.start,
        goal: record.goal,
        reference_path: record.reference_path,
        shortest_length,
    })
}

/// Writes episodes as JSONL, one record per line.
pub fn save_episodes(path: &Path, episodes: &[Episode]) -> Result<(), EnvError> {
    let io_err = |source| EnvError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for episode in episodes {
        let record = EpisodeRecord {
            id: episode.id.clone(),
            instruction: episode.instruction.clone(),
            start: episode.start.clone(),
            goal: episode.goal.clone(),
            reference_path: episode.reference_path.clone(),
        };
        let line = serde_json::to_string(&record).expect("episode serialization is infallible");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
