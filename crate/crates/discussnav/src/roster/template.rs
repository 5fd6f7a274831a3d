//! Prompt templates: section files per role, slot substitution and the
//! rendered chat messages handed to a backend.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PackError, RoleId, SamplingProfile, TemplateError};

/// Slot values for one render, keyed by slot name (names may contain spaces).
pub type SlotMap = BTreeMap<String, String>;

/// Who a chat message is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    System,
    User,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::System => "system",
            Speaker::User => "user",
        }
    }
}

/// One chat message of a rendered prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub content: String,
}

/// The three authored sections of one role's prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    /// Who the model is asked to be.
    pub role_text: String,
    /// What it must do and the reply format it must honor.
    pub task_text: String,
    /// The question posed in the user turn.
    pub question: String,
}

/// One expert as registered in the roster.
#[derive(Debug, Clone)]
pub struct ExpertRole<'a> {
    pub id: RoleId,
    pub template: &'a PromptTemplate,
    pub sampling: SamplingProfile,
}

/// The full set of prompts for the eight experts and the agent.
#[derive(Debug, Clone)]
pub struct PromptPack {
    templates: BTreeMap<RoleId, PromptTemplate>,
    checksum: String,
}

const BUILTIN_SOURCES: [(RoleId, &str); 9] = [
    (
        RoleId::ActionDecomposition,
        include_str!("../../prompts/action_decomposition.txt"),
    ),
    (
        RoleId::LandmarkExtraction,
        include_str!("../../prompts/landmark_extraction.txt"),
    ),
    (
        RoleId::SceneObservation,
        include_str!("../../prompts/scene_observation.txt"),
    ),
    (
        RoleId::ObjectDetection,
        include_str!("../../prompts/object_detection.txt"),
    ),
    (
        RoleId::TrajectorySummary,
        include_str!("../../prompts/trajectory_summary.txt"),
    ),
    (
        RoleId::CompletionEstimation,
        include_str!("../../prompts/completion_estimation.txt"),
    ),
    (
        RoleId::ThoughtFusion,
        include_str!("../../prompts/thought_fusion.txt"),
    ),
    (
        RoleId::DecisionTesting,
        include_str!("../../prompts/decision_testing.txt"),
    ),
    (
        RoleId::AgentDecision,
        include_str!("../../prompts/agent_decision.txt"),
    ),
];

impl PromptPack {
    /// The prompts compiled into the binary.
    pub fn builtin() -> Self {
        let templates = BUILTIN_SOURCES
            .into_iter()
            .map(|(role, source)| {
                let template = parse_template(source)
                    .unwrap_or_else(|reason| panic!("builtin prompt for {role} invalid: {reason}"));
                (role, template)
            })
            .collect();
        Self::from_templates(templates)
    }

    /// Loads `<role>.txt` for every role from a directory.
    pub fn load(dir: &Path) -> Result<Self, PackError> {
        let mut templates = BTreeMap::new();
        for role in RoleId::ALL {
            let path = dir.join(format!("{}.txt", role.as_str()));
            let source = std::fs::read_to_string(&path).map_err(|source| PackError::Io {
                path: path.clone(),
                source,
            })?;
            let template = parse_template(&source).map_err(|reason| PackError::Format {
                path: path.clone(),
                reason,
            })?;
            templates.insert(role, template);
        }
        Ok(Self::from_templates(templates))
    }

    fn from_templates(templates: BTreeMap<RoleId, PromptTemplate>) -> Self {
        let mut hasher = Sha256::new();
        for role in RoleId::ALL {
            let t = &templates[&role];
            hasher.update(role.as_str().as_bytes());
            hasher.update([0]);
            hasher.update(t.role_text.as_bytes());
            hasher.update([0]);
            hasher.update(t.task_text.as_bytes());
            hasher.update([0]);
            hasher.update(t.question.as_bytes());
            hasher.update([0]);
        }
        let checksum = hex::encode(hasher.finalize());
        PromptPack {
            templates,
            checksum,
        }
    }

    /// Content digest over every template, for provenance stamping.
    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn template(&self, role: RoleId) -> &PromptTemplate {
        &self.templates[&role]
    }

    /// The eight registered experts with their sampling profiles.
    pub fn expert_roles(&self) -> impl Iterator<Item = ExpertRole<'_>> {
        RoleId::EXPERTS.iter().map(|&id| ExpertRole {
            id,
            template: &self.templates[&id],
            sampling: SamplingProfile::expert(),
        })
    }

    /// Renders the prompt for one role: a system message carrying the role
    /// and task sections, then a user message carrying the question. Every
    /// `{slot}` in any section must have a value.
    pub fn render(&self, role: RoleId, slots: &SlotMap) -> Result<Vec<Message>, TemplateError> {
        let template = self.template(role);
        let system = format!(
            "{}\n\n{}",
            fill(&template.role_text, slots, role)?,
            fill(&template.task_text, slots, role)?
        );
        let user = fill(&template.question, slots, role)?;
        Ok(vec![
            Message {
                speaker: Speaker::System,
                content: system,
            },
            Message {
                speaker: Speaker::User,
                content: user,
            },
        ])
    }
}

/// Substitutes `{name}` references; slot names may contain spaces.
fn fill(text: &str, slots: &SlotMap, role: RoleId) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else {
            return Err(TemplateError::UnclosedSlot { role });
        };
        let name = &after[..close];
        let value = slots.get(name).ok_or_else(|| TemplateError::MissingSlot {
            role,
            slot: name.to_string(),
        })?;
        out.push_str(value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Parses a prompt file: `[role]`, `[task]` and `[question]` section
/// headers on their own lines, each followed by that section's text.
fn parse_template(source: &str) -> Result<PromptTemplate, String> {
    let mut sections: BTreeMap<&str, String> = BTreeMap::new();
    let mut current: Option<&str> = None;
    for line in source.lines() {
        match line.trim() {
            "[role]" => current = Some("role"),
            "[task]" => current = Some("task"),
            "[question]" => current = Some("question"),
            _ => {
                if let Some(section) = current {
                    let buffer = sections.entry(section).or_default();
                    if !buffer.is_empty() {
                        buffer.push('\n');
                    }
                    buffer.push_str(line);
                }
            }
        }
    }
    let mut take = |name: &str| -> Result<String, String> {
        let text = sections
            .remove(name)
            .map(|s| s.trim().to_string())
            .unwrap_or_default();
        if text.is_empty() {
            Err(format!("missing or empty [{name}] section"))
        } else {
            Ok(text)
        }
    };
    Ok(PromptTemplate {
        role_text: take("role")?,
        task_text: take("task")?,
        question: take("question")?,
    })
}
