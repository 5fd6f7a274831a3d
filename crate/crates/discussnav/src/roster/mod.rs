//! The expert roster: who is consulted during a navigation discussion, how
//! their prompts are rendered, and how their replies are parsed.

mod parse;
mod template;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Sector;

pub use parse::{
    normalize_phrase, parse_action_decomposition, parse_decision_test, parse_execution_state,
    parse_fused_thought, parse_landmark_extraction, parse_object_tags, parse_prediction,
    parse_scene_answer, parse_trajectory_summary, render_action_list, render_execution_state_reply,
    render_extraction_reply, render_landmark_list, render_prediction_reply,
};
pub use template::{ExpertRole, Message, PromptPack, PromptTemplate, SlotMap, Speaker};

/// Every speaking position in a discussion: eight experts plus the agent.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum RoleId {
    ActionDecomposition,
    LandmarkExtraction,
    SceneObservation,
    ObjectDetection,
    TrajectorySummary,
    CompletionEstimation,
    ThoughtFusion,
    DecisionTesting,
    AgentDecision,
}

impl RoleId {
    /// All roles, experts first, in discussion order.
    pub const ALL: [RoleId; 9] = [
        RoleId::ActionDecomposition,
        RoleId::LandmarkExtraction,
        RoleId::SceneObservation,
        RoleId::ObjectDetection,
        RoleId::TrajectorySummary,
        RoleId::CompletionEstimation,
        RoleId::ThoughtFusion,
        RoleId::DecisionTesting,
        RoleId::AgentDecision,
    ];

    /// The eight expert roles (everything but the deciding agent).
    pub const EXPERTS: [RoleId; 8] = [
        RoleId::ActionDecomposition,
        RoleId::LandmarkExtraction,
        RoleId::SceneObservation,
        RoleId::ObjectDetection,
        RoleId::TrajectorySummary,
        RoleId::CompletionEstimation,
        RoleId::ThoughtFusion,
        RoleId::DecisionTesting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleId::ActionDecomposition => "action_decomposition",
            RoleId::LandmarkExtraction => "landmark_extraction",
            RoleId::SceneObservation => "scene_observation",
            RoleId::ObjectDetection => "object_detection",
            RoleId::TrajectorySummary => "trajectory_summary",
            RoleId::CompletionEstimation => "completion_estimation",
            RoleId::ThoughtFusion => "thought_fusion",
            RoleId::DecisionTesting => "decision_testing",
            RoleId::AgentDecision => "agent_decision",
        }
    }

    /// The expert pair this role belongs to; `None` for the agent itself.
    pub fn group(self) -> Option<ExpertGroup> {
        match self {
            RoleId::ActionDecomposition | RoleId::LandmarkExtraction => {
                Some(ExpertGroup::InstructionAnalysis)
            }
            RoleId::SceneObservation | RoleId::ObjectDetection => {
                Some(ExpertGroup::VisionPerception)
            }
            RoleId::TrajectorySummary | RoleId::CompletionEstimation => {
                Some(ExpertGroup::CompletionEstimation)
            }
            RoleId::ThoughtFusion | RoleId::DecisionTesting => Some(ExpertGroup::DecisionTesting),
            RoleId::AgentDecision => None,
        }
    }
}

impl std::fmt::Display for RoleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RoleId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoleId::ALL
            .into_iter()
            .find(|role| role.as_str() == s)
            .ok_or_else(|| format!("unknown role `{s}`"))
    }
}

/// The four togglable expert pairs.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ExpertGroup {
    InstructionAnalysis,
    VisionPerception,
    CompletionEstimation,
    DecisionTesting,
}

impl ExpertGroup {
    pub const ALL: [ExpertGroup; 4] = [
        ExpertGroup::InstructionAnalysis,
        ExpertGroup::VisionPerception,
        ExpertGroup::CompletionEstimation,
        ExpertGroup::DecisionTesting,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            ExpertGroup::InstructionAnalysis => "instruction_analysis",
            ExpertGroup::VisionPerception => "vision_perception",
            ExpertGroup::CompletionEstimation => "completion_estimation",
            ExpertGroup::DecisionTesting => "decision_testing",
        }
    }

    /// Human-readable name as used in report row labels.
    pub fn title(self) -> &'static str {
        match self {
            ExpertGroup::InstructionAnalysis => "Instruction Analysis",
            ExpertGroup::VisionPerception => "Vision Perception",
            ExpertGroup::CompletionEstimation => "Completion Estimation",
            ExpertGroup::DecisionTesting => "Decision Testing",
        }
    }
}

impl std::str::FromStr for ExpertGroup {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExpertGroup::ALL
            .into_iter()
            .find(|g| g.slug() == s)
            .ok_or_else(|| format!("unknown expert group `{s}`"))
    }
}

/// How completions are sampled for one request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingProfile {
    /// Sampling temperature; 0 asks for the single most likely reply.
    pub diversity: f64,
    /// Number of completions requested.
    pub breadth: u32,
}

impl SamplingProfile {
    /// Deterministic single-reply profile used by every expert.
    pub fn expert() -> Self {
        SamplingProfile {
            diversity: 0.0,
            breadth: 1,
        }
    }

    /// Diverse multi-reply profile used for the agent's own decision.
    pub fn agent() -> Self {
        SamplingProfile {
            diversity: 1.0,
            breadth: 5,
        }
    }
}

/// Category of a landmark phrase.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkKind {
    Room,
    Object,
    ColorQualified,
    Infrastructure,
    Other,
}

impl LandmarkKind {
    pub const ALL: [LandmarkKind; 5] = [
        LandmarkKind::Room,
        LandmarkKind::Object,
        LandmarkKind::ColorQualified,
        LandmarkKind::Infrastructure,
        LandmarkKind::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LandmarkKind::Room => "room",
            LandmarkKind::Object => "object",
            LandmarkKind::ColorQualified => "color_qualified",
            LandmarkKind::Infrastructure => "infrastructure",
            LandmarkKind::Other => "other",
        }
    }
}

impl std::fmt::Display for LandmarkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One landmark mentioned by the instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Landmark {
    pub phrase: String,
    pub kind: LandmarkKind,
}

/// Output of the instruction-analysis stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionAnalysis {
    /// Decomposed actions in execution order.
    pub actions: Vec<String>,
    /// Landmarks whose phrases occur verbatim in the instruction.
    pub landmarks: Vec<Landmark>,
    /// Whether the extraction expert reordered or rewrote the actions.
    pub corrected: bool,
}

/// Which decomposed actions are done, being executed, or still ahead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionState {
    pub executed: Vec<String>,
    pub in_progress: Vec<String>,
    pub waiting: Vec<String>,
}

impl ExecutionState {
    /// The state before any movement: everything still waits.
    pub fn all_waiting(actions: &[String]) -> Self {
        ExecutionState {
            executed: Vec::new(),
            in_progress: Vec::new(),
            waiting: actions.to_vec(),
        }
    }
}

/// A movement decision: one of the 12 direction bins, or stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Prediction {
    Move(Sector),
    Stop,
}

impl Prediction {
    pub fn sector(self) -> Option<Sector> {
        match self {
            Prediction::Move(s) => Some(s),
            Prediction::Stop => None,
        }
    }
}

impl std::fmt::Display for Prediction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Prediction::Move(sector) => write!(f, "{sector}"),
            Prediction::Stop => f.write_str("stop"),
        }
    }
}

impl Serialize for Prediction {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Prediction::Move(sector) => serializer.serialize_u8(sector.id()),
            Prediction::Stop => serializer.serialize_str("stop"),
        }
    }
}

impl<'de> Deserialize<'de> for Prediction {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;
        impl serde::de::Visitor<'_> for Visitor {
            type Value = Prediction;

            fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str("a direction id 0..=11 or the string \"stop\"")
            }

            fn visit_u64<E: serde::de::Error>(self, value: u64) -> Result<Prediction, E> {
                let id = u8::try_from(value).map_err(|_| E::custom("direction id too large"))?;
                Sector::new(id)
                    .map(Prediction::Move)
                    .map_err(|_| E::custom("direction id too large"))
            }

            fn visit_str<E: serde::de::Error>(self, value: &str) -> Result<Prediction, E> {
                if value.eq_ignore_ascii_case("stop") {
                    Ok(Prediction::Stop)
                } else {
                    value
                        .parse::<u8>()
                        .ok()
                        .and_then(|id| Sector::new(id).ok())
                        .map(Prediction::Move)
                        .ok_or_else(|| E::custom("expected a direction id or \"stop\""))
                }
            }
        }
        deserializer.deserialize_any(Visitor)
    }
}

/// One thought process and the movement it argues for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoughtPrediction {
    pub thought: String,
    pub prediction: Prediction,
}

/// Same-prediction thought processes merged into one argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedGroup {
    pub prediction: Prediction,
    pub fused_thought: String,
    /// How many of the sampled decisions backed this prediction.
    pub support: usize,
}

/// One step of navigation history, as fed back into later prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    /// 1-based step index.
    pub index: usize,
    pub viewpoint: String,
    /// Condensed description of what was visible at this step.
    pub observation: String,
    /// The thought behind the movement taken.
    pub thought: String,
    pub prediction: Prediction,
    pub execution_state: Option<ExecutionState>,
}

/// Renders history as one block per step:
/// `[Step t] Observation: ... Thought: ...`
pub fn format_trajectory(steps: &[TrajectoryStep]) -> String {
    steps
        .iter()
        .map(|step| {
            format!(
                "[Step {}] Observation: {} Thought: {}",
                step.index, step.observation, step.thought
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// The scene question asked of the vision expert for one landmark kind and
/// one direction bin. No trailing punctuation.
pub fn scene_query_for(kind: LandmarkKind, sector: Sector) -> String {
    match kind {
        LandmarkKind::Room => {
            format!("What room can you see in the current direction {sector}")
        }
        LandmarkKind::Object => {
            format!("What objects can you see in the current direction {sector}")
        }
        LandmarkKind::ColorQualified => {
            format!("What color of objects can you see in the current direction {sector}")
        }
        LandmarkKind::Infrastructure => {
            format!("What infrastructure can you see in the current direction {sector}")
        }
        LandmarkKind::Other => {
            format!("What can you see in the current direction {sector}")
        }
    }
}

/// A reply that does not fit the grammar its role requires.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("malformed reply: {reason}")]
pub struct MalformedResponse {
    pub reason: String,
}

impl MalformedResponse {
    pub fn new(reason: impl Into<String>) -> Self {
        MalformedResponse {
            reason: reason.into(),
        }
    }
}

/// Errors raised while rendering a prompt.
#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("prompt for role `{role}` references slot `{slot}` but no value was provided")]
    MissingSlot { role: RoleId, slot: String },

    #[error("prompt for role `{role}` has an unterminated slot reference")]
    UnclosedSlot { role: RoleId },
}

/// Errors raised while loading a prompt pack from disk.
#[derive(Debug, Error)]
pub enum PackError {
    #[error("failed to read prompt file `{path}`")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("prompt file `{path}` is malformed: {reason}")]
    Format { path: PathBuf, reason: String },
}
