//! Table-driven backend: rules match on role and message substrings and
//! play back canned responses. Used for fixtures, adversarial tests and
//! anything else that must behave exactly as written.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::roster::RoleId;

use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResult};

/// How a rule serves multi-completion requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMode {
    /// The first `breadth` responses, the last one repeated as filler.
    #[default]
    First,
    /// One response per call, advancing through the list and wrapping;
    /// repeated `breadth` times within a call.
    Cycle,
}

/// One scripted rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedRule {
    /// Restrict the rule to one role; `None` matches any.
    #[serde(default)]
    pub role: Option<RoleId>,
    /// Substrings that must all occur in the concatenated message contents.
    #[serde(default)]
    pub contains: Vec<String>,
    /// Responses served when the rule matches. Must be non-empty.
    pub responses: Vec<String>,
    #[serde(default)]
    pub mode: ResponseMode,
}

/// The rule table: specific rules first, per-role defaults as fallback.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptedRules {
    #[serde(default)]
    pub rules: Vec<ScriptedRule>,
    /// Fallback responses per role, served in `First` mode.
    #[serde(default)]
    pub defaults: std::collections::BTreeMap<RoleId, Vec<String>>,
}

/// Backend that answers from a [`ScriptedRules`] table.
pub struct ScriptedBackend {
    table: ScriptedRules,
    /// Per-rule cursor for `Cycle` rules.
    cursors: Mutex<Vec<usize>>,
}

impl ScriptedBackend {
    pub fn new(table: ScriptedRules) -> Result<Self, BackendError> {
        for (i, rule) in table.rules.iter().enumerate() {
            if rule.responses.is_empty() {
                return Err(BackendError::Config {
                    reason: format!("scripted rule #{i} has no responses"),
                });
            }
        }
        for (role, responses) in &table.defaults {
            if responses.is_empty() {
                return Err(BackendError::Config {
                    reason: format!("scripted default for `{role}` has no responses"),
                });
            }
        }
        let cursors = Mutex::new(vec![0; table.rules.len()]);
        Ok(ScriptedBackend { table, cursors })
    }

    /// Loads a rule table from a JSON file.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let body = std::fs::read_to_string(path).map_err(|source| BackendError::TranscriptIo {
            path: path.to_path_buf(),
            source,
        })?;
        let table: ScriptedRules =
            serde_json::from_str(&body).map_err(|source| BackendError::TranscriptFormat {
                path: path.to_path_buf(),
                line: source.line(),
                source,
            })?;
        Self::new(table)
    }

    fn serve(&self, rule_index: usize, breadth: usize) -> Vec<String> {
        let rule = &self.table.rules[rule_index];
        match rule.mode {
            ResponseMode::First => first_n(&rule.responses, breadth),
            ResponseMode::Cycle => {
                let mut cursors = self.cursors.lock().expect("cursor lock");
                let cursor = &mut cursors[rule_index];
                let response = rule.responses[*cursor % rule.responses.len()].clone();
                *cursor += 1;
                vec![response; breadth]
            }
        }
    }
}

fn first_n(responses: &[String], breadth: usize) -> Vec<String> {
    (0..breadth)
        .map(|i| responses[i.min(responses.len() - 1)].clone())
        .collect()
}

impl CompletionBackend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        if request.sampling.breadth == 0 {
            return Err(BackendError::InvalidRequest {
                reason: "breadth must be at least 1".into(),
            });
        }
        let haystack: String = request
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let breadth = request.sampling.breadth as usize;

        let matched = self.table.rules.iter().enumerate().find(|(_, rule)| {
            rule.role.map_or(true, |role| role == request.role)
                && rule.contains.iter().all(|needle| haystack.contains(needle))
        });
        let completions = match matched {
            Some((index, _)) => self.serve(index, breadth),
            None => match self.table.defaults.get(&request.role) {
                Some(responses) => first_n(responses, breadth),
                None => return Err(BackendError::NoScriptedRule { role: request.role }),
            },
        };
        Ok(CompletionResult {
            completions,
            latency_ms: 0,
            backend: "scripted".into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roster::{Message, SamplingProfile, Speaker};

    fn request(role: RoleId, content: &str, breadth: u32) -> CompletionRequest {
        CompletionRequest {
            role,
            messages: vec![Message {
                speaker: Speaker::User,
                content: content.into(),
            }],
            sampling: SamplingProfile {
                diversity: 0.0,
                breadth,
            },
        }
    }

    fn rules() -> ScriptedRules {
        ScriptedRules {
            rules: vec![
                ScriptedRule {
                    role: Some(RoleId::AgentDecision),
                    contains: vec!["split here".into()],
                    responses: vec!["Prediction: 1".into(), "Prediction: 2".into()],
                    mode: ResponseMode::First,
                },
                ScriptedRule {
                    role: Some(RoleId::AgentDecision),
                    contains: vec!["wander".into()],
                    responses: vec!["Prediction: 0".into(), "Prediction: 3".into()],
                    mode: ResponseMode::Cycle,
                },
            ],
            defaults: [(RoleId::ObjectDetection, vec!["wall, floor".to_string()])].into(),
        }
    }

    #[test]
    fn first_mode_pads_with_the_last_response() {
        let backend = ScriptedBackend::new(rules()).unwrap();
        let result = backend
            .complete(&request(RoleId::AgentDecision, "please split here", 5))
            .unwrap();
        assert_eq!(
            result.completions,
            vec![
                "Prediction: 1",
                "Prediction: 2",
                "Prediction: 2",
                "Prediction: 2",
                "Prediction: 2"
            ]
        );
    }

    #[test]
    fn cycle_mode_advances_between_calls() {
        let backend = ScriptedBackend::new(rules()).unwrap();
        let req = request(RoleId::AgentDecision, "wander around", 2);
        assert_eq!(
            backend.complete(&req).unwrap().completions,
            vec!["Prediction: 0", "Prediction: 0"]
        );
        assert_eq!(
            backend.complete(&req).unwrap().completions,
            vec!["Prediction: 3", "Prediction: 3"]
        );
        assert_eq!(
            backend.complete(&req).unwrap().completions,
            vec!["Prediction: 0", "Prediction: 0"]
        );
    }

    #[test]
    fn defaults_serve_unmatched_roles() {
        let backend = ScriptedBackend::new(rules()).unwrap();
        let result = backend
            .complete(&request(RoleId::ObjectDetection, "anything", 1))
            .unwrap();
        assert_eq!(result.completions, vec!["wall, floor"]);
    }

    #[test]
    fn unmatched_role_without_default_is_typed() {
        let backend = ScriptedBackend::new(rules()).unwrap();
        let err = backend
            .complete(&request(RoleId::ThoughtFusion, "anything", 1))
            .unwrap_err();
        assert!(matches!(
            err,
            BackendError::NoScriptedRule {
                role: RoleId::ThoughtFusion
            }
        ));
    }

    #[test]
    fn empty_rule_is_rejected_at_construction() {
        let table = ScriptedRules {
            rules: vec![ScriptedRule {
                role: None,
                contains: vec![],
                responses: vec![],
                mode: ResponseMode::First,
            }],
            defaults: Default::default(),
        };
        assert!(matches!(
            ScriptedBackend::new(table),
            Err(BackendError::Config { .. })
        ));
    }
}
