//! Per-step decision stage: the agent samples several candidate decisions,
//! short-circuits on consensus, and otherwise has same-prediction thoughts
//! fused and the disagreement settled by the testing expert.

use crate::backends::CompletionRequest;
use crate::roster::{
    parse_decision_test, parse_fused_thought, parse_prediction, render_action_list,
    render_landmark_list, ExecutionState, FusedGroup, InstructionAnalysis, Prediction, RoleId,
    SlotMap, ThoughtPrediction,
};

use super::records::Exchange;
use super::{CallLog, DecisionKind, Discussion, EngineError, ExpertGroup};

/// Everything the decision stage reads.
pub(crate) struct DecisionContext<'a> {
    pub instruction: &'a str,
    pub analysis: &'a InstructionAnalysis,
    /// 1-based step index.
    pub step: u32,
    /// Summarized navigation history; empty before the first movement.
    pub history_text: &'a str,
    pub execution_state: Option<&'a ExecutionState>,
    /// Panorama description from the perception stage.
    pub observations_text: &'a str,
}

/// The final movement decision of one step.
#[derive(Debug, Clone)]
pub(crate) struct DecisionOutcome {
    pub thought: String,
    pub prediction: Prediction,
    pub kind: DecisionKind,
    /// Candidate groups put before the testing expert; empty on consensus
    /// and when testing is disabled.
    pub groups: Vec<FusedGroup>,
}

impl Discussion<'_> {
    pub(crate) fn decide(
        &self,
        ctx: &DecisionContext<'_>,
        log: &mut CallLog,
    ) -> Result<DecisionOutcome, EngineError> {
        let samples = self.sample_decisions(ctx, log)?;

        // Group samples by prediction, in first-occurrence order.
        let mut grouped: Vec<(Prediction, Vec<&ThoughtPrediction>)> = Vec::new();
        for sample in &samples {
            match grouped.iter_mut().find(|(p, _)| *p == sample.prediction) {
                Some((_, members)) => members.push(sample),
                None => grouped.push((sample.prediction, vec![sample])),
            }
        }

        if grouped.len() == 1 {
            return Ok(DecisionOutcome {
                thought: samples[0].thought.clone(),
                prediction: samples[0].prediction,
                kind: DecisionKind::Consensus,
                groups: Vec::new(),
            });
        }

        if self.config.ablation.contains(&ExpertGroup::DecisionTesting) {
            let groups: Vec<FusedGroup> = grouped
                .iter()
                .map(|(prediction, members)| FusedGroup {
                    prediction: *prediction,
                    fused_thought: members[0].thought.clone(),
                    support: members.len(),
                })
                .collect();
            let winner = plurality(&groups);
            return Ok(DecisionOutcome {
                thought: winner.fused_thought.clone(),
                prediction: winner.prediction,
                kind: DecisionKind::Fallback,
                groups: Vec::new(),
            });
        }

        let groups = self.fuse_groups(&grouped, ctx.step, log);
        self.test_decision(ctx, groups, log)
    }

    /// Issues the sampled decision request, retrying whole requests that
    /// contain any malformed completion. The last attempt settles for its
    /// valid subset; an empty one aborts the step.
    fn sample_decisions(
        &self,
        ctx: &DecisionContext<'_>,
        log: &mut CallLog,
    ) -> Result<Vec<ThoughtPrediction>, EngineError> {
        let mut slots = SlotMap::new();
        slots.insert("instruction".into(), ctx.instruction.to_string());
        slots.insert(
            "actions".into(),
            or_none(render_action_list(&ctx.analysis.actions)),
        );
        slots.insert(
            "landmarks".into(),
            or_none(render_landmark_list(&ctx.analysis.landmarks)),
        );
        slots.insert("step".into(), ctx.step.to_string());
        slots.insert(
            "history".into(),
            if ctx.history_text.is_empty() {
                "No movement yet.".to_string()
            } else {
                ctx.history_text.to_string()
            },
        );
        slots.insert(
            "execution state".into(),
            render_execution_state_block(ctx.execution_state),
        );
        slots.insert("observations".into(), ctx.observations_text.to_string());

        let messages = self.pack.render(RoleId::AgentDecision, &slots)?;
        let request = CompletionRequest {
            role: RoleId::AgentDecision,
            messages,
            sampling: self.config.decision_sampling,
        };
        let digest = request.digest();

        let total = self.config.retry_limit.saturating_add(1);
        let mut samples: Vec<ThoughtPrediction> = Vec::new();
        let mut last_error: Option<EngineError> = None;
        let mut attempts = 0;
        for _ in 0..total {
            attempts += 1;
            match self.backend.complete(&request) {
                Err(err) => last_error = Some(EngineError::Backend(err)),
                Ok(result) => {
                    let parsed: Vec<_> = result
                        .completions
                        .iter()
                        .map(|c| parse_prediction(c))
                        .collect();
                    let valid: Vec<ThoughtPrediction> =
                        parsed.iter().filter_map(|r| r.clone().ok()).collect();
                    let malformed = parsed.iter().find_map(|r| r.clone().err());
                    if !valid.is_empty() {
                        samples = valid;
                    }
                    match malformed {
                        None if !parsed.is_empty() => break,
                        None => {
                            last_error = Some(EngineError::Malformed {
                                role: RoleId::AgentDecision,
                                reason: "backend returned no completions".into(),
                            })
                        }
                        Some(err) => {
                            last_error = Some(EngineError::Malformed {
                                role: RoleId::AgentDecision,
                                reason: err.reason,
                            })
                        }
                    }
                }
            }
        }
        log.push_exchange(
            ctx.step,
            &Exchange {
                role: RoleId::AgentDecision,
                digest,
                attempts,
            },
        );
        if samples.is_empty() {
            Err(last_error.unwrap_or(EngineError::NoValidPrediction))
        } else {
            Ok(samples)
        }
    }

    /// Fuses the thoughts of every multi-member group into one. A fusion
    /// that keeps failing is replaced by the joined member thoughts.
    fn fuse_groups(
        &self,
        grouped: &[(Prediction, Vec<&ThoughtPrediction>)],
        step: u32,
        log: &mut CallLog,
    ) -> Vec<FusedGroup> {
        grouped
            .iter()
            .map(|(prediction, members)| {
                let fused_thought = if members.len() >= 2 {
                    let thoughts = members
                        .iter()
                        .map(|m| format!("- {}", m.thought))
                        .collect::<Vec<_>>()
                        .join("\n");
                    let mut slots = SlotMap::new();
                    slots.insert("thoughts".into(), thoughts);
                    match self.ask(RoleId::ThoughtFusion, &slots, step, log, parse_fused_thought) {
                        Ok(fused) => fused,
                        Err(_) => members
                            .iter()
                            .map(|m| m.thought.as_str())
                            .collect::<Vec<_>>()
                            .join(" "),
                    }
                } else {
                    members[0].thought.clone()
                };
                FusedGroup {
                    prediction: *prediction,
                    fused_thought,
                    support: members.len(),
                }
            })
            .collect()
    }

    /// Puts the candidate groups before the testing expert; a test that
    /// keeps failing falls back to the plurality prediction.
    fn test_decision(
        &self,
        ctx: &DecisionContext<'_>,
        groups: Vec<FusedGroup>,
        log: &mut CallLog,
    ) -> Result<DecisionOutcome, EngineError> {
        let pairs = groups
            .iter()
            .map(|g| {
                format!(
                    "Thought process: {}\nCandidate prediction: {} (support {})",
                    g.fused_thought, g.prediction, g.support
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        let candidates: Vec<Prediction> = groups.iter().map(|g| g.prediction).collect();
        let mut slots = SlotMap::new();
        slots.insert("instruction".into(), ctx.instruction.to_string());
        slots.insert("observations".into(), ctx.observations_text.to_string());
        slots.insert("pairs".into(), pairs);
        let verdict = self.ask(RoleId::DecisionTesting, &slots, ctx.step, log, |raw| {
            parse_decision_test(raw, &candidates)
        });
        Ok(match verdict {
            Ok(prediction) => {
                let winner = groups
                    .iter()
                    .find(|g| g.prediction == prediction)
                    .expect("tested prediction comes from the candidate set");
                DecisionOutcome {
                    thought: winner.fused_thought.clone(),
                    prediction,
                    kind: DecisionKind::Tested,
                    groups,
                }
            }
            Err(_) => {
                let winner = plurality(&groups);
                DecisionOutcome {
                    thought: winner.fused_thought.clone(),
                    prediction: winner.prediction,
                    kind: DecisionKind::Fallback,
                    groups,
                }
            }
        })
    }
}

/// The group a vote would pick: largest support first, movements before
/// stopping, lowest direction id last.
pub(crate) fn plurality(groups: &[FusedGroup]) -> &FusedGroup {
    groups
        .iter()
        .min_by_key(|g| {
            let (stops, sector) = match g.prediction {
                Prediction::Move(s) => (0u8, s.id()),
                Prediction::Stop => (1u8, 0),
            };
            (std::cmp::Reverse(g.support), stops, sector)
        })
        .expect("plurality over at least one group")
}

fn or_none(text: String) -> String {
    if text.is_empty() {
        "none".to_string()
    } else {
        text
    }
}

/// Renders the estimated execution state as prompt lines; an absent state
/// renders as nothing.
fn render_execution_state_block(state: Option<&ExecutionState>) -> String {
    let Some(state) = state else {
        return String::new();
    };
    let line = |xs: &[String]| {
        if xs.is_empty() {
            "none".to_string()
        } else {
            xs.join(", ")
        }
    };
    format!(
        "Estimated execution state:\nExecuted Actions: {}\nIn-progress Actions: {}\nActions Waiting to be Executed: {}",
        line(&state.executed),
        line(&state.in_progress),
        line(&state.waiting)
    )
}
