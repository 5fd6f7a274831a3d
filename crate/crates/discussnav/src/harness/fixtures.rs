//! Self-contained test fixtures: a synthetic world, its episodes, and a
//! scripted rule file whose replies let the full pipeline walk every
//! reference path deterministically, without any model.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{decompose_instruction, extract_landmarks, ResponseMode, ScriptedRule, ScriptedRules};
use crate::env::{generate_synthetic_world, EnvGraph, Episode};
use crate::roster::{
    render_action_list, render_execution_state_reply, render_extraction_reply,
    render_prediction_reply, ExecutionState, Prediction, RoleId,
};

use super::{write_text, HarnessError};

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    pub viewpoints: usize,
    pub episodes: usize,
    pub out_dir: PathBuf,
}

/// Where the generated files ended up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixturePaths {
    pub world: PathBuf,
    pub episodes: PathBuf,
    pub scripted: PathBuf,
    pub manifest: PathBuf,
}

/// The instruction of the worked decomposition example: naive sentence
/// order puts the stop first, while the action order has to be walking
/// first — and the landmark is the full phrase, not its fragments.
pub const ORDER_CORRECTION_INSTRUCTION: &str = "Stop just past the eye exam chart on the wall";

fn order_correction_rules() -> Vec<ScriptedRule> {
    let rule = |role, responses: Vec<String>| ScriptedRule {
        role: Some(role),
        contains: vec![ORDER_CORRECTION_INSTRUCTION.to_string()],
        responses,
        mode: ResponseMode::First,
    };
    vec![
        // The decomposer reads the sentence naively, in mention order...
        rule(
            RoleId::ActionDecomposition,
            vec!["1. stop\n2. walk past".to_string()],
        ),
        // ...and the extraction expert corrects the order while keeping
        // the landmark as one complete phrase.
        rule(
            RoleId::LandmarkExtraction,
            vec![
                "Corrected actions:\n1. walk past\n2. stop\nLandmarks:\n1. the eye exam chart on the wall (object)"
                    .to_string(),
            ],
        ),
    ]
}

/// Scripted rules that make every generated episode walkable: analysis
/// replies mirror the instruction grammar, and the decision replies cycle
/// through the reference path's direction bins and stop at the goal.
pub fn scripted_rules_for(world: &EnvGraph, episodes: &[Episode]) -> ScriptedRules {
    let mut rules = order_correction_rules();

    // Longer instructions first, so an instruction that happens to contain
    // another episode's instruction is matched by its own rules.
    let mut by_length: Vec<&Episode> = episodes.iter().collect();
    by_length.sort_by_key(|e| std::cmp::Reverse(e.instruction.len()));

    for episode in by_length {
        let actions = decompose_instruction(&episode.instruction);
        let landmarks = extract_landmarks(&episode.instruction);
        let keyed = |role, responses: Vec<String>, mode| ScriptedRule {
            role: Some(role),
            contains: vec![episode.instruction.clone()],
            responses,
            mode,
        };
        rules.push(keyed(
            RoleId::ActionDecomposition,
            vec![render_action_list(&actions)],
            ResponseMode::First,
        ));
        rules.push(keyed(
            RoleId::LandmarkExtraction,
            vec![render_extraction_reply(&landmarks, None)],
            ResponseMode::First,
        ));
        let state = ExecutionState {
            executed: Vec::new(),
            in_progress: actions.first().cloned().into_iter().collect(),
            waiting: actions.iter().skip(1).cloned().collect(),
        };
        rules.push(keyed(
            RoleId::CompletionEstimation,
            vec![render_execution_state_reply(&state)],
            ResponseMode::First,
        ));
        // One decision per reference hop, then the stop.
        let mut decisions: Vec<String> = episode
            .reference_path
            .windows(2)
            .map(|hop| {
                let edge = world
                    .edge_between(&hop[0], &hop[1])
                    .expect("reference paths follow edges");
                render_prediction_reply(
                    "The landmark of the current action lies in this direction.",
                    Prediction::Move(edge.sector()),
                )
            })
            .collect();
        decisions.push(render_prediction_reply(
            "Every action has been carried out.",
            Prediction::Stop,
        ));
        rules.push(keyed(RoleId::AgentDecision, decisions, ResponseMode::Cycle));

        // The views planted along the path answer with their stored text.
        for hop in episode.reference_path.windows(2) {
            let edge = world
                .edge_between(&hop[0], &hop[1])
                .expect("reference paths follow edges");
            let key = format!("observation key {}/{}", hop[0], edge.sector());
            if let Some(obs) = world.observation(&hop[0], edge.sector()) {
                if !obs.scene_text.is_empty() {
                    rules.push(ScriptedRule {
                        role: Some(RoleId::SceneObservation),
                        contains: vec![key.clone()],
                        responses: vec![obs.scene_text.clone()],
                        mode: ResponseMode::First,
                    });
                }
                if !obs.object_tags.is_empty() {
                    rules.push(ScriptedRule {
                        role: Some(RoleId::ObjectDetection),
                        contains: vec![key],
                        responses: vec![obs.object_tags.join(", ")],
                        mode: ResponseMode::First,
                    });
                }
            }
        }
    }

    let defaults = [
        (RoleId::ActionDecomposition, "1. walk forward"),
        (RoleId::LandmarkExtraction, "Landmarks:\nnone"),
        (RoleId::SceneObservation, "Nothing notable."),
        (RoleId::ObjectDetection, "nothing"),
        (
            RoleId::TrajectorySummary,
            "[Step 1] Observation: recorded. Thought: recorded.",
        ),
        (
            RoleId::CompletionEstimation,
            "Prediction:\nExecuted Actions: none\nIn-progress Actions: none\nActions Waiting to be Executed: none",
        ),
        (RoleId::ThoughtFusion, "The thought processes agree."),
        (RoleId::DecisionTesting, "Prediction: stop"),
        (RoleId::AgentDecision, "Nothing left to do.\nPrediction: stop"),
    ]
    .into_iter()
    .map(|(role, text)| (role, vec![text.to_string()]))
    .collect();

    ScriptedRules { rules, defaults }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    seed: u64,
    viewpoints: usize,
    episodes: usize,
    files: &'a FixturePaths,
}

/// Generates world, episodes, scripted rules, and a manifest into
/// `spec.out_dir`.
pub fn generate_fixtures(spec: &FixtureSpec) -> Result<FixturePaths, HarnessError> {
    let (world, episodes) = generate_synthetic_world(spec.seed, spec.viewpoints, spec.episodes);
    let paths = FixturePaths {
        world: spec.out_dir.join("world.json"),
        episodes: spec.out_dir.join("episodes.jsonl"),
        scripted: spec.out_dir.join("scripted.json"),
        manifest: spec.out_dir.join("manifest.json"),
    };
    ensure_dir(&spec.out_dir)?;
    world.save(&paths.world)?;
    crate::env::save_episodes(&paths.episodes, &episodes)?;
    let rules = scripted_rules_for(&world, &episodes);
    let body = serde_json::to_string_pretty(&rules).expect("rules serialize");
    write_text(&paths.scripted, &format!("{body}\n"))?;
    let manifest = Manifest {
        seed: spec.seed,
        viewpoints: spec.viewpoints,
        episodes: episodes.len(),
        files: &paths,
    };
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_text(&paths.manifest, &format!("{body}\n"))?;
    Ok(paths)
}

fn ensure_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::ScriptedBackend;
    use crate::engine::{AgentConfig, CallLog, Discussion};
    use crate::roster::PromptPack;

    fn spec(dir: &Path) -> FixtureSpec {
        FixtureSpec {
            seed: 23,
            viewpoints: 14,
            episodes: 3,
            out_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn generated_files_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let paths = generate_fixtures(&spec(dir.path())).unwrap();
        let world = crate::env::load_world(&paths.world).unwrap();
        let episodes = crate::env::load_episodes(&paths.episodes, &world).unwrap();
        assert_eq!(episodes.len(), 3);
        let backend = ScriptedBackend::from_file(&paths.scripted).unwrap();
        drop(backend);
        assert!(paths.manifest.exists());
    }

    #[test]
    fn scripted_analysis_corrects_the_stop_first_instruction() {
        let dir = tempfile::tempdir().unwrap();
        let paths = generate_fixtures(&spec(dir.path())).unwrap();
        let world = crate::env::load_world(&paths.world).unwrap();
        let backend = ScriptedBackend::from_file(&paths.scripted).unwrap();
        let pack = PromptPack::builtin();
        let config = AgentConfig::default();
        let discussion = Discussion::new(&world, &pack, &backend, &config);
        let mut log = CallLog::new();
        let analysis = discussion
            .analyze_instruction(ORDER_CORRECTION_INSTRUCTION, &mut log)
            .unwrap();
        assert_eq!(analysis.actions, vec!["walk past", "stop"]);
        assert!(analysis.corrected);
        assert_eq!(analysis.landmarks.len(), 1);
        assert_eq!(analysis.landmarks[0].phrase, "the eye exam chart on the wall");
    }

    #[test]
    fn scripted_decisions_walk_the_reference_path() {
        let dir = tempfile::tempdir().unwrap();
        let paths = generate_fixtures(&spec(dir.path())).unwrap();
        let world = crate::env::load_world(&paths.world).unwrap();
        let episodes = crate::env::load_episodes(&paths.episodes, &world).unwrap();
        let backend = ScriptedBackend::from_file(&paths.scripted).unwrap();
        let pack = PromptPack::builtin();
        let config = AgentConfig::default();
        let discussion = Discussion::new(&world, &pack, &backend, &config);
        for episode in &episodes {
            let run = discussion.run_episode(episode).expect("episode runs");
            assert_eq!(
                run.visited, episode.reference_path,
                "agent should retrace the reference path of {}",
                episode.id
            );
            assert!(run.stopped);
            assert_eq!(run.metrics.sr, 1.0);
        }
    }
}
