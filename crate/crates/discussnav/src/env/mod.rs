//! Discrete navigation environment: a directed graph of viewpoints with
//! headed, weighted edges, panoramic observations, episodes and metrics.

mod episode;
mod graph;
mod metrics;
mod synth;

use std::path::PathBuf;

use thiserror::Error;

pub use episode::{load_episodes, save_episodes, Episode};
pub use graph::{load_world, Edge, EnvGraph, Observation, Sector, ViewpointId};
pub use metrics::{compute_metrics, MetricsReport, Trajectory, DEFAULT_SUCCESS_THRESHOLD_M};
pub use synth::{generate_synthetic_world, COLOR_PHRASES, OBJECT_PHRASES, ROOM_PHRASES};

/// Errors raised while building, loading or querying an environment.
#[derive(Debug, Error)]
pub enum EnvError {
    #[error("heading {0} is outside [0, 360)")]
    HeadingOutOfRange(f64),

    #[error("sector id {0} is outside 0..12")]
    SectorOutOfRange(u32),

    #[error("unknown viewpoint `{0}`")]
    UnknownViewpoint(String),

    #[error("edge {from} -> {to} references missing viewpoint `{missing}`")]
    DanglingEdge {
        from: String,
        to: String,
        missing: String,
    },

    #[error("edge {from} -> {to} has non-positive distance {distance}")]
    NonPositiveDistance {
        from: String,
        to: String,
        distance: f64,
    },

    #[error(
        "edge {from} -> {to} distance {distance} disagrees with the \
         euclidean distance {euclidean} between its endpoints"
    )]
    BadEdgeGeometry {
        from: String,
        to: String,
        distance: f64,
        euclidean: f64,
    },

    #[error("observation for viewpoint `{viewpoint}` names invalid sector {sector}")]
    BadObservationSector { viewpoint: String, sector: u32 },

    #[error("viewpoint `{viewpoint}` is not connected to the rest of the world")]
    Disconnected { viewpoint: String },

    #[error("failed to read `{path}`")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse `{path}`")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("episode `{id}` is invalid: {reason}")]
    EpisodeInvalid { id: String, reason: String },

    #[error("invalid trajectory: {reason}")]
    InvalidTrajectory { reason: String },
}
