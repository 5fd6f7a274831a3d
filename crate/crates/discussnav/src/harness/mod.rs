//! Suite runner: loads a world and its episodes, builds the requested
//! backend, runs every episode through the discussion engine, and writes
//! per-episode records plus a suite report and result table.

mod fixtures;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    BackendError, CompletionBackend, OracleBackend, RecordingBackend, RemoteProfile,
    ReplayBackend, ScriptedBackend, TranscriptMeta,
};
use crate::engine::{AgentConfig, Discussion, EpisodeAbort, EpisodeRun};
use crate::env::{
    compute_metrics, load_episodes, load_world, EnvError, EnvGraph, Episode, MetricsReport,
    Trajectory,
};
use crate::roster::{ExpertGroup, PackError, PromptPack};

pub use fixtures::{
    generate_fixtures, scripted_rules_for, FixturePaths, FixtureSpec,
    ORDER_CORRECTION_INSTRUCTION,
};
pub use report::{
    render_ablation_table, render_table, Aggregate, ConfigEcho, EpisodeResult, SuiteReport,
};

/// Which backend serves the expert calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendChoice {
    /// Ground-truth replies computed from the world and episodes.
    Oracle,
    /// Canned replies from a rule file.
    Scripted { path: PathBuf },
    /// Replies replayed from a recorded transcript.
    Replay { path: PathBuf },
    /// A live chat-completion endpoint.
    Remote { profile: RemoteProfile },
}

/// One full suite run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    /// Row label in result tables.
    #[serde(default = "default_label")]
    pub label: String,
    pub world: PathBuf,
    pub episodes: PathBuf,
    pub backend: BackendChoice,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads across episodes. Recording forces 1 so the
    /// transcript captures one unambiguous serial order.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Record every backend exchange to this transcript file.
    #[serde(default)]
    pub record_to: Option<PathBuf>,
    /// Directory of prompt templates; the built-in pack when absent.
    #[serde(default)]
    pub prompt_pack: Option<PathBuf>,
}

fn default_label() -> String {
    "DiscussNav".to_string()
}

fn default_parallelism() -> usize {
    1
}

/// Why a suite could not run.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Pack(#[from] PackError),
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("configuration: {reason}")]
    Config { reason: String },
}

/// Runs every episode of the suite and writes all outputs under
/// `config.out_dir`: per-episode `trajectory.jsonl`, `calls.jsonl` and
/// `metrics.json`, plus `suite_report.json` and `table.txt`.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport, HarnessError> {
    let pack = match &config.prompt_pack {
        Some(dir) => PromptPack::load(dir)?,
        None => PromptPack::builtin(),
    };
    let world = load_world(&config.world)?;
    let episodes = load_episodes(&config.episodes, &world)?;
    let backend = build_backend(config, &pack, &world, &episodes)?;
    let backend: Box<dyn CompletionBackend> = match &config.record_to {
        Some(path) => {
            let meta = TranscriptMeta {
                world: config.world.display().to_string(),
                episodes: config.episodes.display().to_string(),
                seed: config.seed,
                prompt_pack_checksum: pack.checksum().to_string(),
            };
            Box::new(RecordingBackend::create(backend, path, meta)?)
        }
        None => backend,
    };

    let parallelism = if config.record_to.is_some() && config.parallelism > 1 {
        log::warn!("recording a transcript; running episodes sequentially");
        1
    } else {
        config.parallelism.max(1)
    };
    let discussion = Discussion::new(&world, &pack, backend.as_ref(), &config.agent);
    let runs = run_episodes(&discussion, &episodes, parallelism);

    let mut results = Vec::with_capacity(episodes.len());
    let mut calls_by_role: BTreeMap<String, u64> = BTreeMap::new();
    for (episode, run) in episodes.iter().zip(&runs) {
        let dir = config.out_dir.join("episodes").join(&episode.id);
        let (result, metrics, records, calls) = match run {
            Ok(run) => (
                episode_result(episode, &run.metrics, None),
                run.metrics,
                &run.records,
                &run.calls,
            ),
            Err(abort) => {
                let metrics = failure_metrics(&world, episode, abort, &config.agent);
                (
                    episode_result(episode, &metrics, Some(abort.error.to_string())),
                    metrics,
                    &abort.records,
                    &abort.calls,
                )
            }
        };
        write_jsonl(&dir.join("trajectory.jsonl"), records)?;
        write_jsonl(&dir.join("calls.jsonl"), calls)?;
        let body = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
        write_text(&dir.join("metrics.json"), &format!("{body}\n"))?;
        for call in calls.iter().filter(|c| c.attempt == 1) {
            *calls_by_role.entry(call.role.as_str().to_string()).or_insert(0) += 1;
        }
        results.push(result);
    }

    let echo = ConfigEcho {
        world: config.world.clone(),
        episodes: config.episodes.clone(),
        prompt_pack: config.prompt_pack.clone(),
        agent: config.agent.clone(),
        seed: config.seed,
    };
    let mut suite = SuiteReport::aggregate_of(&config.label, echo, results);
    suite.calls_by_role = calls_by_role;

    let body = serde_json::to_string_pretty(&suite).expect("report serializes");
    write_text(&config.out_dir.join("suite_report.json"), &format!("{body}\n"))?;
    write_text(&config.out_dir.join("table.txt"), &render_table(&[&suite]))?;
    Ok(suite)
}

/// Runs the full method plus one run per disabled expert group, writing
/// each run into its own subdirectory of `base.out_dir` along with a
/// combined `ablation_table.txt`. The base ablation set and any recording
/// request are ignored: the five variants define themselves.
pub fn run_ablations(base: &SuiteConfig) -> Result<Vec<SuiteReport>, HarnessError> {
    let mut variants: Vec<(String, Option<ExpertGroup>, String)> =
        vec![("DiscussNav".to_string(), None, "discussnav".to_string())];
    for group in ExpertGroup::ALL {
        variants.push((
            format!("w/o {} Experts", group.title()),
            Some(group),
            format!("wo_{}", group.slug()),
        ));
    }
    let mut reports = Vec::with_capacity(variants.len());
    for (label, group, slug) in variants {
        let mut config = base.clone();
        config.label = label;
        config.out_dir = base.out_dir.join(slug);
        config.record_to = None;
        config.agent.ablation = group.into_iter().collect();
        reports.push(run_suite(&config)?);
    }
    let refs: Vec<&SuiteReport> = reports.iter().collect();
    write_text(
        &base.out_dir.join("ablation_table.txt"),
        &render_ablation_table(&refs),
    )?;
    Ok(reports)
}

fn build_backend(
    config: &SuiteConfig,
    pack: &PromptPack,
    world: &EnvGraph,
    episodes: &[Episode],
) -> Result<Box<dyn CompletionBackend>, HarnessError> {
    Ok(match &config.backend {
        BackendChoice::Oracle => Box::new(OracleBackend::new(world.clone(), episodes.to_vec())),
        BackendChoice::Scripted { path } => Box::new(ScriptedBackend::from_file(path)?),
        BackendChoice::Replay { path } => {
            let backend = ReplayBackend::load(path)?;
            if let Some(meta) = backend.meta() {
                if meta.prompt_pack_checksum != pack.checksum() {
                    return Err(HarnessError::Config {
                        reason: format!(
                            "transcript {} was recorded with a different prompt pack",
                            path.display()
                        ),
                    });
                }
            }
            Box::new(backend)
        }
        BackendChoice::Remote { profile } => Box::new(crate::backends::RemoteBackend::new(
            profile.clone(),
        )?),
    })
}

fn run_episodes(
    discussion: &Discussion<'_>,
    episodes: &[Episode],
    parallelism: usize,
) -> Vec<Result<EpisodeRun, EpisodeAbort>> {
    let workers = parallelism.clamp(1, episodes.len().max(1));
    if workers <= 1 {
        return episodes.iter().map(|e| discussion.run_episode(e)).collect();
    }
    let mut results: Vec<Option<Result<EpisodeRun, EpisodeAbort>>> = Vec::new();
    results.resize_with(episodes.len(), || None);
    let next = AtomicUsize::new(0);
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut mine = Vec::new();
                    loop {
                        let index = next.fetch_add(1, Ordering::Relaxed);
                        let Some(episode) = episodes.get(index) else {
                            break;
                        };
                        mine.push((index, discussion.run_episode(episode)));
                    }
                    mine
                })
            })
            .collect();
        for handle in handles {
            for (index, run) in handle.join().expect("episode worker panicked") {
                results[index] = Some(run);
            }
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every episode was run"))
        .collect()
}

fn episode_result(
    episode: &Episode,
    metrics: &MetricsReport,
    error: Option<String>,
) -> EpisodeResult {
    EpisodeResult {
        id: episode.id.clone(),
        tl: metrics.tl,
        ne: metrics.ne,
        sr: metrics.sr,
        osr: metrics.osr,
        spl: metrics.spl,
        error,
    }
}

/// Scores an aborted episode: its partial walk is measured honestly, but
/// the run counts as a failure regardless of where it got.
fn failure_metrics(
    world: &EnvGraph,
    episode: &Episode,
    abort: &EpisodeAbort,
    agent: &AgentConfig,
) -> MetricsReport {
    let trajectory = Trajectory {
        visited: abort.visited.clone(),
        stopped: false,
    };
    match compute_metrics(world, episode, &trajectory, agent.success_threshold) {
        Ok(metrics) => MetricsReport {
            sr: 0.0,
            spl: 0.0,
            ..metrics
        },
        Err(_) => MetricsReport {
            tl: 0.0,
            ne: f64::INFINITY,
            sr: 0.0,
            osr: 0.0,
            spl: 0.0,
            success_threshold: agent.success_threshold,
        },
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| HarnessError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut body = String::new();
    for row in rows {
        body.push_str(&serde_json::to_string(row).expect("row serializes"));
        body.push('\n');
    }
    write_text(path, &body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generate_synthetic_world;

    fn fixture_suite(dir: &Path, backend: BackendChoice) -> SuiteConfig {
        let (world, episodes) = generate_synthetic_world(41, 16, 4);
        let world_path = dir.join("world.json");
        let episodes_path = dir.join("episodes.jsonl");
        world.save(&world_path).unwrap();
        crate::env::save_episodes(&episodes_path, &episodes).unwrap();
        SuiteConfig {
            label: default_label(),
            world: world_path,
            episodes: episodes_path,
            backend,
            agent: AgentConfig::default(),
            seed: 41,
            out_dir: dir.join("out"),
            parallelism: 1,
            record_to: None,
            prompt_pack: None,
        }
    }

    #[test]
    fn oracle_suite_scores_perfectly_and_writes_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let config = fixture_suite(dir.path(), BackendChoice::Oracle);
        let report = run_suite(&config).unwrap();
        assert_eq!(report.aggregate.episodes, 4);
        assert_eq!(report.aggregate.sr, 100.0);
        assert_eq!(report.aggregate.spl, 100.0);
        assert!(report.episodes.iter().all(|e| e.error.is_none()));
        for episode in &report.episodes {
            let dir = config.out_dir.join("episodes").join(&episode.id);
            for file in ["trajectory.jsonl", "calls.jsonl", "metrics.json"] {
                assert!(dir.join(file).exists(), "{file} missing for {}", episode.id);
            }
        }
        assert!(config.out_dir.join("suite_report.json").exists());
        let table = std::fs::read_to_string(config.out_dir.join("table.txt")).unwrap();
        assert!(table.starts_with("Method"));
        assert!(table.contains("DiscussNav"));
        assert!(report.calls_by_role.contains_key("agent_decision"));
    }

    #[test]
    fn parallel_runs_score_identically_to_sequential_ones() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = fixture_suite(dir.path(), BackendChoice::Oracle);
        let sequential = run_suite(&config).unwrap();
        config.parallelism = 4;
        config.out_dir = dir.path().join("out_parallel");
        let parallel = run_suite(&config).unwrap();
        assert_eq!(sequential.episodes, parallel.episodes);
        assert_eq!(sequential.aggregate, parallel.aggregate);
        assert_eq!(sequential.calls_by_role, parallel.calls_by_role);
    }

    #[test]
    fn ablations_write_five_labeled_reports_and_the_table() {
        let dir = tempfile::tempdir().unwrap();
        let config = fixture_suite(dir.path(), BackendChoice::Oracle);
        let reports = run_ablations(&config).unwrap();
        let labels: Vec<&str> = reports.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(
            labels,
            vec![
                "DiscussNav",
                "w/o Instruction Analysis Experts",
                "w/o Vision Perception Experts",
                "w/o Completion Estimation Experts",
                "w/o Decision Testing Experts",
            ]
        );
        let table = std::fs::read_to_string(config.out_dir.join("ablation_table.txt")).unwrap();
        for label in labels {
            assert!(table.contains(label));
        }
        // Disabled groups made no calls to their own experts.
        for (report, group) in reports.iter().skip(1).zip(ExpertGroup::ALL) {
            for role in crate::roster::RoleId::EXPERTS {
                if role.group() == Some(group) {
                    assert_eq!(
                        report.calls_by_role.get(role.as_str()),
                        None,
                        "{} called {role} though it was disabled",
                        report.label
                    );
                }
            }
        }
    }

    #[test]
    fn missing_remote_credential_fails_before_any_episode() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = fixture_suite(dir.path(), BackendChoice::Oracle);
        config.backend = BackendChoice::Remote {
            profile: RemoteProfile {
                endpoint: "http://127.0.0.1:9".to_string(),
                model: "m".to_string(),
                credential_env: "DISCUSSNAV_SUITE_TEST_UNSET".to_string(),
                ..RemoteProfile::default()
            },
        };
        match run_suite(&config).unwrap_err() {
            HarnessError::Backend(BackendError::MissingCredential { variable }) => {
                assert_eq!(variable, "DISCUSSNAV_SUITE_TEST_UNSET");
            }
            other => panic!("expected a missing-credential error, got {other}"),
        }
        assert!(!config.out_dir.join("suite_report.json").exists());
    }

    #[test]
    fn suite_config_round_trips_through_serialization() {
        let dir = tempfile::tempdir().unwrap();
        let config = fixture_suite(dir.path(), BackendChoice::Oracle);
        let json = serde_json::to_string(&config).unwrap();
        let back: SuiteConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
    }
}
