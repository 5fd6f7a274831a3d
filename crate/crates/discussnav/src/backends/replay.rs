//! Transcript recording and replay.
//!
//! A recording backend wraps any other backend and appends every
//! (request digest, completions) pair to a JSONL transcript. A replay
//! backend serves those completions back, keyed by digest, each digest's
//! records consumed in order. Replay is therefore independent of the
//! arrival order of concurrent requests, but a run that renders even one
//! prompt differently diverges loudly.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResult};

/// Provenance stamped into a transcript header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub world: String,
    pub episodes: String,
    pub seed: u64,
    pub prompt_pack_checksum: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TranscriptRecord {
    digest: String,
    role: String,
    completions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<TranscriptMeta>,
}

const HEADER_DIGEST: &str = "transcript-header";

/// Wraps a backend and writes every completed request to a transcript.
pub struct RecordingBackend {
    inner: Box<dyn CompletionBackend>,
    writer: Mutex<std::io::BufWriter<std::fs::File>>,
}

impl RecordingBackend {
    /// Creates the transcript file and writes its header record.
    pub fn create(
        inner: Box<dyn CompletionBackend>,
        path: &Path,
        meta: TranscriptMeta,
    ) -> Result<Self, BackendError> {
        let io_err = |source| BackendError::TranscriptIo {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err)?;
        }
        let file = std::fs::File::create(path).map_err(io_err)?;
        let mut writer = std::io::BufWriter::new(file);
        let header = TranscriptRecord {
            digest: HEADER_DIGEST.into(),
            role: "meta".into(),
            completions: Vec::new(),
            meta: Some(meta),
        };
        let line = serde_json::to_string(&header).expect("header serialization is infallible");
        writeln!(writer, "{line}").map_err(io_err)?;
        writer.flush().map_err(io_err)?;
        Ok(RecordingBackend {
            inner,
            writer: Mutex::new(writer),
        })
    }
}

impl CompletionBackend for RecordingBackend {
    fn id(&self) -> &str {
        "record"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let result = self.inner.complete(request)?;
        let record = TranscriptRecord {
            digest: request.digest(),
            role: request.role.as_str().to_string(),
            completions: result.completions.clone(),
            meta: None,
        };
        let line = serde_json::to_string(&record).expect("record serialization is infallible");
        let mut writer = self.writer.lock().expect("transcript writer lock");
        // Surfacing a disk failure as a transport error aborts the episode
        // instead of silently truncating the transcript.
        writeln!(writer, "{line}")
            .and_then(|_| writer.flush())
            .map_err(|e| BackendError::Transport {
                endpoint: "transcript".into(),
                detail: e.to_string(),
            })?;
        Ok(result)
    }
}

/// Serves completions from a previously recorded transcript.
pub struct ReplayBackend {
    queues: Mutex<BTreeMap<String, VecDeque<Vec<String>>>>,
    meta: Option<TranscriptMeta>,
}

impl ReplayBackend {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let (meta, records) = read_transcript(path)?;
        let mut queues: BTreeMap<String, VecDeque<Vec<String>>> = BTreeMap::new();
        for (digest, _role, completions) in records {
            queues.entry(digest).or_default().push_back(completions);
        }
        Ok(ReplayBackend {
            queues: Mutex::new(queues),
            meta,
        })
    }

    /// The provenance header, when the transcript carried one.
    pub fn meta(&self) -> Option<&TranscriptMeta> {
        self.meta.as_ref()
    }
}

impl CompletionBackend for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let digest = request.digest();
        let mut queues = self.queues.lock().expect("replay queue lock");
        match queues.get_mut(&digest) {
            None => Err(BackendError::DigestMismatch {
                digest,
                role: request.role,
            }),
            Some(queue) => match queue.pop_front() {
                None => Err(BackendError::TranscriptExhausted { digest }),
                Some(completions) => Ok(CompletionResult {
                    completions,
                    latency_ms: 0,
                    backend: "replay".into(),
                }),
            },
        }
    }
}

/// Reads a transcript: the optional header meta and every data record as
/// `(digest, role, completions)` in file order.
#[allow(clippy::type_complexity)]
pub fn read_transcript(
    path: &Path,
) -> Result<(Option<TranscriptMeta>, Vec<(String, String, Vec<String>)>), BackendError> {
    let file = std::fs::File::open(path).map_err(|source| BackendError::TranscriptIo {
        path: path.to_path_buf(),
        source,
    })?;
    let mut meta = None;
    let mut records = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| BackendError::TranscriptIo {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord =
            serde_json::from_str(&line).map_err(|source| BackendError::TranscriptFormat {
                path: path.to_path_buf(),
                line: index + 1,
                source,
            })?;
        if record.digest == HEADER_DIGEST {
            meta = record.meta;
        } else {
            records.push((record.digest, record.role, record.completions));
        }
    }
    Ok((meta, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{ScriptedBackend, ScriptedRules};
    use crate::roster::{Message, RoleId, SamplingProfile, Speaker};

    fn request(content: &str) -> CompletionRequest {
        CompletionRequest {
            role: RoleId::SceneObservation,
            messages: vec![Message {
                speaker: Speaker::User,
                content: content.into(),
            }],
            sampling: SamplingProfile::expert(),
        }
    }

    fn meta() -> TranscriptMeta {
        TranscriptMeta {
            world: "world.json".into(),
            episodes: "episodes.jsonl".into(),
            seed: 42,
            prompt_pack_checksum: "abc".into(),
        }
    }

    fn echo_backend() -> Box<dyn CompletionBackend> {
        let table = ScriptedRules {
            rules: vec![],
            defaults: [(
                RoleId::SceneObservation,
                vec!["You can see the kitchen.".to_string()],
            )]
            .into(),
        };
        Box::new(ScriptedBackend::new(table).unwrap())
    }

    #[test]
    fn record_then_replay_serves_identical_completions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let recorder = RecordingBackend::create(echo_backend(), &path, meta()).unwrap();
        let recorded = recorder.complete(&request("q1")).unwrap();

        let replay = ReplayBackend::load(&path).unwrap();
        assert_eq!(replay.meta(), Some(&meta()));
        let replayed = replay.complete(&request("q1")).unwrap();
        assert_eq!(recorded.completions, replayed.completions);
    }

    #[test]
    fn replay_preserves_per_digest_order_and_exhausts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        {
            let recorder = RecordingBackend::create(echo_backend(), &path, meta()).unwrap();
            recorder.complete(&request("same")).unwrap();
            recorder.complete(&request("same")).unwrap();
        }
        let replay = ReplayBackend::load(&path).unwrap();
        replay.complete(&request("same")).unwrap();
        replay.complete(&request("same")).unwrap();
        let err = replay.complete(&request("same")).unwrap_err();
        assert!(matches!(err, BackendError::TranscriptExhausted { .. }));
    }

    #[test]
    fn replay_rejects_unseen_digests() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        {
            let recorder = RecordingBackend::create(echo_backend(), &path, meta()).unwrap();
            recorder.complete(&request("recorded")).unwrap();
        }
        let replay = ReplayBackend::load(&path).unwrap();
        let err = replay.complete(&request("never seen")).unwrap_err();
        assert!(matches!(err, BackendError::DigestMismatch { .. }));
    }

    #[test]
    fn rerecording_a_replay_reproduces_the_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let original = dir.path().join("original.jsonl");
        {
            let recorder = RecordingBackend::create(echo_backend(), &original, meta()).unwrap();
            recorder.complete(&request("a")).unwrap();
            recorder.complete(&request("b")).unwrap();
            recorder.complete(&request("a")).unwrap();
        }
        let copy = dir.path().join("copy.jsonl");
        {
            let replay = Box::new(ReplayBackend::load(&original).unwrap());
            let rerecorder = RecordingBackend::create(replay, &copy, meta()).unwrap();
            rerecorder.complete(&request("a")).unwrap();
            rerecorder.complete(&request("b")).unwrap();
            rerecorder.complete(&request("a")).unwrap();
        }
        assert_eq!(
            std::fs::read(&original).unwrap(),
            std::fs::read(&copy).unwrap()
        );
    }
}
