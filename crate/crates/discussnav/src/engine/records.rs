//! Persistent records of what a navigation run did: every backend call,
//! every step, and the outcome of a whole episode.

use serde::{Deserialize, Serialize};

use crate::env::{MetricsReport, Sector, ViewpointId};
use crate::roster::{ExecutionState, FusedGroup, Prediction, RoleId, TrajectoryStep};

/// How the final prediction of a step was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    /// Every sampled decision agreed, so fusion and testing were skipped.
    Consensus,
    /// The testing expert selected among the candidate groups.
    Tested,
    /// Testing was disabled or failed; the plurality prediction was taken.
    Fallback,
}

/// One backend request, as it appears in the call log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    /// Position in the episode's overall call order.
    pub seq: u64,
    /// 0 for instruction analysis, the 1-based step index otherwise.
    pub step: u32,
    pub role: RoleId,
    /// Content digest of the request, shared by all its attempts.
    pub digest: String,
    /// 1-based attempt number for this request.
    pub attempt: u32,
}

/// Accumulates [`CallRecord`]s in the order requests were issued.
#[derive(Debug, Default)]
pub struct CallLog {
    records: Vec<CallRecord>,
}

/// All attempts of one logical request, before they are sequenced into a
/// [`CallLog`]. Perception gathers these per sector so that the log stays
/// in sector order no matter how its worker threads interleave.
#[derive(Debug, Clone)]
pub(crate) struct Exchange {
    pub role: RoleId,
    pub digest: String,
    /// How many attempts were actually made (0 when rendering failed
    /// before any request went out).
    pub attempts: u32,
}

impl CallLog {
    pub fn new() -> Self {
        CallLog::default()
    }

    pub(crate) fn push_exchange(&mut self, step: u32, exchange: &Exchange) {
        for attempt in 1..=exchange.attempts {
            self.records.push(CallRecord {
                seq: self.records.len() as u64,
                step,
                role: exchange.role,
                digest: exchange.digest.clone(),
                attempt,
            });
        }
    }

    pub fn records(&self) -> &[CallRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<CallRecord> {
        self.records
    }

    /// Number of requests (not attempts) made to `role`.
    pub fn requests_for(&self, role: RoleId) -> usize {
        self.records
            .iter()
            .filter(|r| r.role == role && r.attempt == 1)
            .count()
    }
}

/// What executing a prediction did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MoveOutcome {
    /// The agent chose to stop.
    Stop,
    Moved {
        to: ViewpointId,
        /// The sector actually taken when the predicted one had no
        /// candidate viewpoint; `None` when no snapping was needed.
        snapped: Option<Sector>,
    },
    /// No candidate existed within half a turn of the predicted sector.
    ForcedStop,
}

/// One persisted step of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: u32,
    /// Where the decision was made.
    pub viewpoint: ViewpointId,
    /// Condensed observation fed into the navigation history.
    pub observation: String,
    /// The thought behind the final prediction.
    pub thought: String,
    pub prediction: Prediction,
    pub decision: DecisionKind,
    /// Candidate groups weighed by the testing expert; empty on consensus
    /// and when testing is disabled.
    pub groups: Vec<FusedGroup>,
    pub execution_state: Option<ExecutionState>,
    /// Destination of the movement; `None` when the step stopped.
    pub moved_to: Option<ViewpointId>,
    /// Set when the movement snapped to a neighboring sector.
    pub snapped: Option<Sector>,
    /// True when the step stopped because no movement was possible.
    pub forced_stop: bool,
}

/// A finished episode.
#[derive(Debug, Clone)]
pub struct EpisodeRun {
    /// History in the form later prompts consume.
    pub steps: Vec<TrajectoryStep>,
    /// Persisted per-step records.
    pub records: Vec<StepRecord>,
    /// The walk, including the start viewpoint.
    pub visited: Vec<ViewpointId>,
    /// Whether the agent stopped on its own (or was forced to) rather than
    /// running out of steps.
    pub stopped: bool,
    pub metrics: MetricsReport,
    pub calls: Vec<CallRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exchanges_are_sequenced_with_one_record_per_attempt() {
        let mut log = CallLog::new();
        log.push_exchange(
            0,
            &Exchange {
                role: RoleId::ActionDecomposition,
                digest: "d0".into(),
                attempts: 1,
            },
        );
        log.push_exchange(
            1,
            &Exchange {
                role: RoleId::AgentDecision,
                digest: "d1".into(),
                attempts: 3,
            },
        );
        let records = log.records();
        assert_eq!(records.len(), 4);
        assert_eq!(
            records.iter().map(|r| r.seq).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
        assert_eq!(
            records.iter().map(|r| r.attempt).collect::<Vec<_>>(),
            vec![1, 1, 2, 3]
        );
        assert_eq!(log.requests_for(RoleId::AgentDecision), 1);
        assert_eq!(log.requests_for(RoleId::ThoughtFusion), 0);
    }

    #[test]
    fn zero_attempt_exchanges_leave_no_trace() {
        let mut log = CallLog::new();
        log.push_exchange(
            1,
            &Exchange {
                role: RoleId::SceneObservation,
                digest: String::new(),
                attempts: 0,
            },
        );
        assert!(log.records().is_empty());
    }

    #[test]
    fn step_records_round_trip_through_json() {
        let record = StepRecord {
            step: 2,
            viewpoint: "vp001".into(),
            observation: "direction 3: a sofa".into(),
            thought: "the sofa is ahead".into(),
            prediction: Prediction::Move(Sector::new(3).unwrap()),
            decision: DecisionKind::Tested,
            groups: vec![FusedGroup {
                prediction: Prediction::Move(Sector::new(3).unwrap()),
                fused_thought: "go there".into(),
                support: 4,
            }],
            execution_state: None,
            moved_to: Some("vp002".into()),
            snapped: None,
            forced_stop: false,
        };
        let json = serde_json::to_string(&record).unwrap();
        let back: StepRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, record);
        assert!(json.contains("\"decision\":\"tested\""));
    }
}
