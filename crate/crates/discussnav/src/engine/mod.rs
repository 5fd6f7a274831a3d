//! The navigation engine: before every movement the agent runs an ordered
//! discussion with its experts — instruction analysis once up front, then
//! per step vision perception, completion estimation, a sampled decision
//! with optional thought fusion, and decision testing.

mod decision;
mod perception;
mod records;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, CompletionBackend, CompletionRequest};
use crate::env::{
    compute_metrics, EnvError, EnvGraph, Episode, Trajectory, ViewpointId,
    DEFAULT_SUCCESS_THRESHOLD_M,
};
use crate::roster::{
    format_trajectory, normalize_phrase, parse_action_decomposition, parse_execution_state,
    parse_landmark_extraction, parse_trajectory_summary, render_action_list, ExecutionState,
    ExpertGroup, InstructionAnalysis, Landmark, LandmarkKind, MalformedResponse, Prediction,
    PromptPack, RoleId, SamplingProfile, SlotMap, TemplateError, TrajectoryStep,
};

use decision::DecisionContext;
use records::Exchange;

pub use records::{CallLog, CallRecord, DecisionKind, EpisodeRun, MoveOutcome, StepRecord};

/// Tunable behavior of the navigation agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Sampling of the agent's own decision request.
    pub decision_sampling: SamplingProfile,
    /// Step budget per episode.
    pub max_steps: u32,
    /// Expert groups to run without.
    pub ablation: BTreeSet<ExpertGroup>,
    /// How many extra attempts a failing request gets.
    pub retry_limit: u32,
    /// Success distance threshold in meters.
    pub success_threshold: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            decision_sampling: SamplingProfile::agent(),
            max_steps: 15,
            ablation: BTreeSet::new(),
            retry_limit: 2,
            success_threshold: DEFAULT_SUCCESS_THRESHOLD_M,
        }
    }
}

/// Why a discussion stage failed for good.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{role} reply stayed malformed after retries: {reason}")]
    Malformed { role: RoleId, reason: String },
    #[error("no sampled completion contained a usable prediction")]
    NoValidPrediction,
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// An episode cut short by an unrecoverable failure. The partial walk is
/// kept so that the run can still be scored (as a failure).
#[derive(Debug)]
pub struct EpisodeAbort {
    pub error: EngineError,
    pub records: Vec<StepRecord>,
    pub calls: Vec<CallRecord>,
    pub visited: Vec<ViewpointId>,
}

/// One agent talking to its experts over a fixed world.
pub struct Discussion<'a> {
    world: &'a EnvGraph,
    pack: &'a PromptPack,
    backend: &'a dyn CompletionBackend,
    config: &'a AgentConfig,
}

impl<'a> Discussion<'a> {
    pub fn new(
        world: &'a EnvGraph,
        pack: &'a PromptPack,
        backend: &'a dyn CompletionBackend,
        config: &'a AgentConfig,
    ) -> Self {
        Discussion {
            world,
            pack,
            backend,
            config,
        }
    }

    /// Issues one single-completion expert request and parses the reply,
    /// retrying the whole request while the backend fails or the reply
    /// stays malformed. Returns how the request went along with the
    /// outcome, so callers on worker threads can log it later.
    fn expert_exchange<T>(
        &self,
        role: RoleId,
        slots: &SlotMap,
        parse: impl Fn(&str) -> Result<T, MalformedResponse>,
    ) -> (Exchange, Result<T, EngineError>) {
        let messages = match self.pack.render(role, slots) {
            Ok(messages) => messages,
            Err(err) => {
                let exchange = Exchange {
                    role,
                    digest: String::new(),
                    attempts: 0,
                };
                return (exchange, Err(err.into()));
            }
        };
        let request = CompletionRequest {
            role,
            messages,
            sampling: SamplingProfile::expert(),
        };
        let digest = request.digest();
        let total = self.config.retry_limit.saturating_add(1);
        let mut last_error: Option<EngineError> = None;
        let mut attempts = 0;
        for _ in 0..total {
            attempts += 1;
            match self.backend.complete(&request) {
                Err(err) => last_error = Some(EngineError::Backend(err)),
                Ok(result) => {
                    let reply = result.completions.first().map(String::as_str).unwrap_or("");
                    match parse(reply) {
                        Ok(value) => {
                            let exchange = Exchange {
                                role,
                                digest,
                                attempts,
                            };
                            return (exchange, Ok(value));
                        }
                        Err(err) => {
                            last_error = Some(EngineError::Malformed {
                                role,
                                reason: err.reason,
                            })
                        }
                    }
                }
            }
        }
        let exchange = Exchange {
            role,
            digest,
            attempts,
        };
        (
            exchange,
            Err(last_error.unwrap_or(EngineError::NoValidPrediction)),
        )
    }

    /// [`Self::expert_exchange`] with the attempts logged immediately.
    fn ask<T>(
        &self,
        role: RoleId,
        slots: &SlotMap,
        step: u32,
        log: &mut CallLog,
        parse: impl Fn(&str) -> Result<T, MalformedResponse>,
    ) -> Result<T, EngineError> {
        let (exchange, outcome) = self.expert_exchange(role, slots, parse);
        log.push_exchange(step, &exchange);
        outcome
    }

    /// One-time instruction analysis: decomposition, then landmark
    /// extraction with its chance to correct the action order.
    pub fn analyze_instruction(
        &self,
        instruction: &str,
        log: &mut CallLog,
    ) -> Result<InstructionAnalysis, EngineError> {
        if self
            .config
            .ablation
            .contains(&ExpertGroup::InstructionAnalysis)
        {
            return Ok(InstructionAnalysis {
                actions: vec![instruction.to_string()],
                landmarks: Vec::new(),
                corrected: false,
            });
        }
        let mut slots = SlotMap::new();
        slots.insert("instruction".into(), instruction.to_string());
        let mut actions: Vec<String> = self.ask(
            RoleId::ActionDecomposition,
            &slots,
            0,
            log,
            parse_action_decomposition,
        )?;

        let mut slots = SlotMap::new();
        slots.insert("instruction".into(), instruction.to_string());
        slots.insert("actions".into(), render_action_list(&actions));
        let (landmarks, corrected) = self.ask(RoleId::LandmarkExtraction, &slots, 0, log, |raw| {
            parse_landmark_extraction(raw, &actions)
        })?;
        let corrected = match corrected {
            Some(reordered) => {
                actions = reordered;
                true
            }
            None => false,
        };
        Ok(InstructionAnalysis {
            actions,
            landmarks,
            corrected,
        })
    }

    /// Summarizes the history and estimates the execution state. Never
    /// fails: a summary that stays malformed is replaced by the plain
    /// history, a partition that stays malformed by the previous state.
    /// Returns the state (absent when estimation is disabled) and the
    /// history text for this step's prompts.
    fn estimate_completion(
        &self,
        instruction: &str,
        analysis: &InstructionAnalysis,
        steps: &[TrajectoryStep],
        previous: Option<&ExecutionState>,
        step: u32,
        log: &mut CallLog,
    ) -> (Option<ExecutionState>, String) {
        if self
            .config
            .ablation
            .contains(&ExpertGroup::CompletionEstimation)
        {
            return (None, format_trajectory(steps));
        }
        if steps.is_empty() {
            return (
                Some(ExecutionState::all_waiting(&analysis.actions)),
                String::new(),
            );
        }

        let history = format_trajectory(steps);
        let mut slots = SlotMap::new();
        slots.insert("history".into(), history.clone());
        let summary = self
            .ask(RoleId::TrajectorySummary, &slots, step, log, |raw| {
                parse_trajectory_summary(raw, steps.len())
            })
            .unwrap_or(history);

        let mut slots = SlotMap::new();
        slots.insert("instruction".into(), instruction.to_string());
        slots.insert("actions".into(), render_action_list(&analysis.actions));
        slots.insert("history".into(), summary.clone());
        let state = self
            .ask(RoleId::CompletionEstimation, &slots, step, log, |raw| {
                parse_execution_state(raw, &analysis.actions)
            })
            .unwrap_or_else(|_| match previous {
                Some(state) => state.clone(),
                None => ExecutionState::all_waiting(&analysis.actions),
            });
        (Some(state), summary)
    }

    /// Carries out a movement decision from `at`: the first candidate in
    /// the predicted sector, snapping to the angularly closest non-empty
    /// sector (clockwise first) when the predicted one is empty.
    pub fn execute(&self, at: &str, prediction: Prediction) -> MoveOutcome {
        let Some(sector) = prediction.sector() else {
            return MoveOutcome::Stop;
        };
        if let Some(edge) = self.world.candidates_in_sector(at, sector).first() {
            return MoveOutcome::Moved {
                to: edge.to.clone(),
                snapped: None,
            };
        }
        for distance in 1..=6u8 {
            let clockwise = sector.step_clockwise(distance);
            if let Some(edge) = self.world.candidates_in_sector(at, clockwise).first() {
                return MoveOutcome::Moved {
                    to: edge.to.clone(),
                    snapped: Some(clockwise),
                };
            }
            if distance < 6 {
                let counter = sector.step_counter_clockwise(distance);
                if let Some(edge) = self.world.candidates_in_sector(at, counter).first() {
                    return MoveOutcome::Moved {
                        to: edge.to.clone(),
                        snapped: Some(counter),
                    };
                }
            }
        }
        MoveOutcome::ForcedStop
    }

    /// Runs one full episode: analysis once, then the per-step discussion
    /// until the agent stops or the step budget runs out.
    pub fn run_episode(&self, episode: &Episode) -> Result<EpisodeRun, EpisodeAbort> {
        let mut log = CallLog::new();
        let mut visited: Vec<ViewpointId> = vec![episode.start.clone()];
        let mut steps: Vec<TrajectoryStep> = Vec::new();
        let mut records: Vec<StepRecord> = Vec::new();

        macro_rules! abort {
            ($error:expr) => {
                return Err(EpisodeAbort {
                    error: $error,
                    records,
                    calls: log.into_records(),
                    visited,
                })
            };
        }

        let analysis = match self.analyze_instruction(&episode.instruction, &mut log) {
            Ok(analysis) => analysis,
            Err(error) => abort!(error),
        };

        let mut current = episode.start.clone();
        let mut stopped = false;
        let mut previous_state: Option<ExecutionState> = None;

        for step in 1..=self.config.max_steps {
            let kinds = pending_kinds(&analysis, previous_state.as_ref());
            let perception = self.perceive(&current, &kinds, step, &mut log);
            let (state, history_text) = self.estimate_completion(
                &episode.instruction,
                &analysis,
                &steps,
                previous_state.as_ref(),
                step,
                &mut log,
            );
            let ctx = DecisionContext {
                instruction: &episode.instruction,
                analysis: &analysis,
                step,
                history_text: &history_text,
                execution_state: state.as_ref(),
                observations_text: &perception.observations_text,
            };
            let outcome = match self.decide(&ctx, &mut log) {
                Ok(outcome) => outcome,
                Err(error) => abort!(error),
            };
            let movement = self.execute(&current, outcome.prediction);
            let (moved_to, snapped, forced_stop) = match &movement {
                MoveOutcome::Stop => (None, None, false),
                MoveOutcome::ForcedStop => (None, None, true),
                MoveOutcome::Moved { to, snapped } => (Some(to.clone()), *snapped, false),
            };
            let thought = perception::single_line(&outcome.thought);
            records.push(StepRecord {
                step,
                viewpoint: current.clone(),
                observation: perception.condensed.clone(),
                thought: thought.clone(),
                prediction: outcome.prediction,
                decision: outcome.kind,
                groups: outcome.groups,
                execution_state: state.clone(),
                moved_to: moved_to.clone(),
                snapped,
                forced_stop,
            });
            steps.push(TrajectoryStep {
                index: step as usize,
                viewpoint: current.clone(),
                observation: perception.condensed,
                thought,
                prediction: outcome.prediction,
                execution_state: state.clone(),
            });
            if state.is_some() {
                previous_state = state;
            }
            match moved_to {
                Some(to) => {
                    visited.push(to.clone());
                    current = to;
                }
                None => {
                    stopped = true;
                    break;
                }
            }
        }

        let trajectory = Trajectory {
            visited: visited.clone(),
            stopped,
        };
        let metrics = match compute_metrics(
            self.world,
            episode,
            &trajectory,
            self.config.success_threshold,
        ) {
            Ok(metrics) => metrics,
            Err(error) => abort!(EngineError::Env(error)),
        };
        Ok(EpisodeRun {
            steps,
            records,
            visited,
            stopped,
            metrics,
            calls: log.into_records(),
        })
    }
}

/// The landmark kinds the vision stage should still look for: a landmark
/// stops being pending once it only appears in executed actions.
fn pending_kinds(
    analysis: &InstructionAnalysis,
    state: Option<&ExecutionState>,
) -> Vec<LandmarkKind> {
    let is_pending = |landmark: &Landmark| -> bool {
        let Some(state) = state else {
            return true;
        };
        let phrase = format!(" {} ", normalize_phrase(&landmark.phrase));
        let mentions = |action: &String| format!(" {} ", normalize_phrase(action)).contains(&phrase);
        let passed = state.executed.iter().any(mentions);
        let ahead = state
            .in_progress
            .iter()
            .chain(state.waiting.iter())
            .any(mentions);
        !passed || ahead
    };
    let pending: Vec<&Landmark> = analysis.landmarks.iter().filter(|l| is_pending(l)).collect();
    let mut kinds: Vec<LandmarkKind> = LandmarkKind::ALL
        .into_iter()
        .filter(|kind| pending.iter().any(|l| l.kind == *kind))
        .collect();
    if kinds.is_empty() {
        kinds.push(LandmarkKind::Other);
    }
    kinds
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::OracleBackend;
    use crate::env::{generate_synthetic_world, Sector};

    fn landmark(phrase: &str, kind: LandmarkKind) -> Landmark {
        Landmark {
            phrase: phrase.into(),
            kind,
        }
    }

    #[test]
    fn pending_kinds_drop_landmarks_of_executed_actions() {
        let analysis = InstructionAnalysis {
            actions: vec![
                "walk to the kitchen".into(),
                "stop at the red carpet".into(),
            ],
            landmarks: vec![
                landmark("the kitchen", LandmarkKind::Room),
                landmark("the red carpet", LandmarkKind::ColorQualified),
            ],
            corrected: false,
        };
        // Without a state everything is pending.
        let kinds = pending_kinds(&analysis, None);
        assert_eq!(kinds, vec![LandmarkKind::Room, LandmarkKind::ColorQualified]);
        // Once the kitchen action is executed its landmark is done.
        let state = ExecutionState {
            executed: vec!["walk to the kitchen".into()],
            in_progress: vec!["stop at the red carpet".into()],
            waiting: vec![],
        };
        let kinds = pending_kinds(&analysis, Some(&state));
        assert_eq!(kinds, vec![LandmarkKind::ColorQualified]);
        // A landmark mentioned again ahead stays pending.
        let state = ExecutionState {
            executed: vec!["walk to the kitchen".into()],
            in_progress: vec!["walk to the kitchen".into()],
            waiting: vec![],
        };
        let kinds = pending_kinds(&analysis, Some(&state));
        assert_eq!(kinds, vec![LandmarkKind::Room, LandmarkKind::ColorQualified]);
    }

    #[test]
    fn pending_kinds_fall_back_to_a_generic_look() {
        let analysis = InstructionAnalysis {
            actions: vec!["go".into()],
            landmarks: vec![],
            corrected: false,
        };
        assert_eq!(pending_kinds(&analysis, None), vec![LandmarkKind::Other]);
    }

    #[test]
    fn execution_snaps_to_the_nearest_populated_sector() {
        let (world, _) = generate_synthetic_world(3, 6, 1);
        let pack = PromptPack::builtin();
        let config = AgentConfig::default();
        let start = world.viewpoints().next().unwrap().clone();
        let backend = OracleBackend::new(world.clone(), Vec::new());
        let discussion = Discussion::new(&world, &pack, &backend, &config);

        // Stopping needs no world.
        assert_eq!(discussion.execute(&start, Prediction::Stop), MoveOutcome::Stop);

        // Aim at a sector with an outgoing edge: no snapping.
        let edge = world.outgoing(&start).next().unwrap();
        let direct = discussion.execute(&start, Prediction::Move(edge.sector()));
        assert_eq!(
            direct,
            MoveOutcome::Moved {
                to: edge.to.clone(),
                snapped: None
            }
        );

        // Aim at an empty sector: the movement snaps to a populated one,
        // and the snapped sector is at minimal angular distance.
        let occupied: Vec<Sector> = world.outgoing(&start).map(|e| e.sector()).collect();
        if let Some(empty) = Sector::all().find(|s| !occupied.contains(s)) {
            match discussion.execute(&start, Prediction::Move(empty)) {
                MoveOutcome::Moved {
                    snapped: Some(snapped),
                    ..
                } => {
                    let hops = |a: Sector, b: Sector| {
                        let diff = (i16::from(a.id()) - i16::from(b.id())).rem_euclid(12);
                        diff.min(12 - diff)
                    };
                    let closest = occupied.iter().map(|s| hops(empty, *s)).min().unwrap();
                    assert_eq!(hops(empty, snapped), closest);
                }
                other => panic!("expected a snapped movement, got {other:?}"),
            }
        }
    }

    #[test]
    fn forced_stop_on_an_isolated_viewpoint() {
        let (world, _) = generate_synthetic_world(3, 6, 1);
        let single = crate::env::EnvGraph::new(
            [("alone".to_string(), [0.0, 0.0, 0.0])].into_iter().collect(),
            Vec::new(),
            Default::default(),
        )
        .unwrap();
        let pack = PromptPack::builtin();
        let config = AgentConfig::default();
        let backend = OracleBackend::new(world, Vec::new());
        let discussion = Discussion::new(&single, &pack, &backend, &config);
        assert_eq!(
            discussion.execute("alone", Prediction::Move(Sector::new(0).unwrap())),
            MoveOutcome::ForcedStop
        );
    }

    #[test]
    fn oracle_episode_reaches_the_goal_with_consensus_only() {
        let (world, episodes) = generate_synthetic_world(11, 14, 2);
        let pack = PromptPack::builtin();
        let config = AgentConfig::default();
        let backend = OracleBackend::new(world.clone(), episodes.clone());
        let discussion = Discussion::new(&world, &pack, &backend, &config);
        let run = discussion.run_episode(&episodes[0]).expect("episode runs");
        assert!(run.stopped);
        assert_eq!(run.visited.last(), Some(&episodes[0].goal));
        assert_eq!(run.metrics.sr, 1.0);
        assert_eq!(run.metrics.spl, 1.0);
        assert!(run
            .records
            .iter()
            .all(|r| r.decision == DecisionKind::Consensus));
        assert!(run.calls.iter().all(|c| c.attempt == 1));
        // Steps are contiguous from 1.
        for (i, record) in run.records.iter().enumerate() {
            assert_eq!(record.step as usize, i + 1);
        }
        // Discussion order within each step: perception, then estimation,
        // then the decision.
        for step in 1..=run.records.len() as u32 {
            let roles: Vec<RoleId> = run
                .calls
                .iter()
                .filter(|c| c.step == step)
                .map(|c| c.role)
                .collect();
            let position = |role: RoleId| roles.iter().position(|r| *r == role);
            let last_vision = roles
                .iter()
                .rposition(|r| matches!(r, RoleId::SceneObservation | RoleId::ObjectDetection));
            let decision = position(RoleId::AgentDecision).expect("every step decides");
            if let Some(last_vision) = last_vision {
                assert!(last_vision < decision);
            }
            if let Some(summary) = position(RoleId::TrajectorySummary) {
                assert!(last_vision.unwrap() < summary);
                let estimation = position(RoleId::CompletionEstimation).unwrap();
                assert!(summary < estimation && estimation < decision);
            }
        }
    }

    #[test]
    fn every_ablation_still_solves_oracle_episodes() {
        let (world, episodes) = generate_synthetic_world(29, 14, 2);
        let pack = PromptPack::builtin();
        let backend = OracleBackend::new(world.clone(), episodes.clone());
        for group in ExpertGroup::ALL {
            let mut config = AgentConfig::default();
            config.ablation = BTreeSet::from([group]);
            let discussion = Discussion::new(&world, &pack, &backend, &config);
            let run = discussion
                .run_episode(&episodes[0])
                .unwrap_or_else(|abort| panic!("ablation {group:?} aborted: {}", abort.error));
            assert_eq!(run.metrics.sr, 1.0, "ablation {group:?} should still succeed");
            let disabled: Vec<RoleId> = RoleId::EXPERTS
                .into_iter()
                .filter(|r| r.group() == Some(group))
                .collect();
            assert!(
                run.calls.iter().all(|c| !disabled.contains(&c.role)),
                "ablation {group:?} must not call its own experts"
            );
        }
    }

    #[test]
    fn analysis_failure_aborts_the_episode_with_its_call_log() {
        use crate::backends::{ScriptedBackend, ScriptedRules};

        let (world, episodes) = generate_synthetic_world(7, 10, 1);
        let pack = PromptPack::builtin();
        let config = AgentConfig::default();
        // A backend with no rule for any role fails every request.
        let backend = ScriptedBackend::new(ScriptedRules::default()).unwrap();
        let discussion = Discussion::new(&world, &pack, &backend, &config);
        let abort = discussion.run_episode(&episodes[0]).unwrap_err();
        assert!(matches!(abort.error, EngineError::Backend(_)));
        assert_eq!(abort.visited, vec![episodes[0].start.clone()]);
        assert!(abort.records.is_empty());
        assert_eq!(
            abort.calls.len() as u32,
            config.retry_limit + 1,
            "the failing analysis request is retried then aborts"
        );
    }
}
