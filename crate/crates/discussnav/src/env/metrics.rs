//! Trajectory metrics: path length, navigation error, success, oracle
//! success and path-length-weighted success.

use serde::{Deserialize, Serialize};

use super::episode::Episode;
use super::graph::{EnvGraph, ViewpointId};
use super::EnvError;

/// Success cutoff: an episode succeeds when the agent stops strictly closer
/// than this many meters (geodesic) to the goal.
pub const DEFAULT_SUCCESS_THRESHOLD_M: f64 = 3.0;

/// The viewpoints an agent visited, in order, plus whether it stopped on
/// its own (rather than being cut off by the step budget).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub visited: Vec<ViewpointId>,
    pub stopped: bool,
}

/// Per-episode navigation metrics.
///
/// `sr` and `osr` are 0/1 indicators for a single episode; suite-level
/// rates are their averages.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Trajectory length: sum of traversed edge distances, in meters.
    pub tl: f64,
    /// Navigation error: geodesic distance from the final viewpoint to the
    /// goal, in meters.
    pub ne: f64,
    /// Success: navigation error strictly below the threshold.
    pub sr: f64,
    /// Oracle success: some visited viewpoint came within the threshold.
    pub osr: f64,
    /// Success weighted by inverse normalized path length.
    pub spl: f64,
    pub success_threshold: f64,
}

/// Computes metrics for one executed trajectory.
///
/// The trajectory must start at the episode start and follow existing
/// directed edges. A goal unreachable from some visited viewpoint counts as
/// an infinite distance rather than an error.
pub fn compute_metrics(
    world: &EnvGraph,
    episode: &Episode,
    trajectory: &Trajectory,
    success_threshold: f64,
) -> Result<MetricsReport, EnvError> {
    let Some(first) = trajectory.visited.first() else {
        return Err(EnvError::InvalidTrajectory {
            reason: "trajectory visits no viewpoints".into(),
        });
    };
    if first != &episode.start {
        return Err(EnvError::InvalidTrajectory {
            reason: format!(
                "trajectory begins at `{first}` but the episode starts at `{}`",
                episode.start
            ),
        });
    }

    let mut tl = 0.0;
    for pair in trajectory.visited.windows(2) {
        let edge = world
            .edge_between(&pair[0], &pair[1])
            .ok_or_else(|| EnvError::InvalidTrajectory {
                reason: format!("no edge from `{}` to `{}`", pair[0], pair[1]),
            })?;
        tl += edge.distance;
    }

    let final_viewpoint = trajectory.visited.last().expect("checked non-empty");
    let ne = distance_or_infinite(world, final_viewpoint, &episode.goal)?;
    let sr = if ne < success_threshold { 1.0 } else { 0.0 };

    let mut nearest = f64::INFINITY;
    for viewpoint in &trajectory.visited {
        let d = distance_or_infinite(world, viewpoint, &episode.goal)?;
        nearest = nearest.min(d);
    }
    let osr = if nearest < success_threshold { 1.0 } else { 0.0 };

    let shortest = episode.shortest_length;
    // Starting on the goal with no movement is a perfect (if trivial) run;
    // otherwise weight success by how close the walk stayed to optimal.
    let spl = if tl == 0.0 && shortest == 0.0 {
        sr
    } else {
        sr * shortest / tl.max(shortest)
    };

    Ok(MetricsReport {
        tl,
        ne,
        sr,
        osr,
        spl,
        success_threshold,
    })
}

fn distance_or_infinite(world: &EnvGraph, from: &str, to: &str) -> Result<f64, EnvError> {
    Ok(world.geodesic(from, to)?.unwrap_or(f64::INFINITY))
}
