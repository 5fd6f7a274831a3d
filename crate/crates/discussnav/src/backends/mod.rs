//! Completion backends: anything that can answer a rendered prompt.
//!
//! Four implementations ship with the crate: a table-driven scripted
//! backend, a transcript recorder/replayer pair, a ground-truth backend
//! synthesized from world and episodes, and a remote HTTP chat-completion
//! client.

mod oracle;
mod remote;
mod replay;
mod scripted;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::roster::{Message, RoleId, SamplingProfile};

pub use oracle::{decompose_instruction, extract_landmarks, OracleBackend};
pub use remote::{RemoteBackend, RemoteProfile};
pub use replay::{read_transcript, RecordingBackend, ReplayBackend, TranscriptMeta};
pub use scripted::{ResponseMode, ScriptedBackend, ScriptedRule, ScriptedRules};

/// One request for completions: who is asked, what they see, and how
/// replies are sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub role: RoleId,
    pub messages: Vec<Message>,
    pub sampling: SamplingProfile,
}

impl CompletionRequest {
    /// Content-addressed identity of this request: the SHA-256 of its
    /// canonical JSON form. Two requests with the same role, messages and
    /// sampling always share a digest; transcripts are keyed by it.
    pub fn digest(&self) -> String {
        let canonical =
            serde_json::to_string(self).expect("completion request serialization is infallible");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// The completions a backend produced for one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    /// Exactly `sampling.breadth` completions, in arrival order.
    pub completions: Vec<String>,
    /// Wall-clock cost of the call. Diagnostic only: never persisted, never
    /// part of any digest.
    pub latency_ms: u64,
    /// Which backend produced the result.
    pub backend: String,
}

/// Errors a backend can raise.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure talking to `{endpoint}`: {detail}")]
    Transport { endpoint: String, detail: String },

    #[error("request to `{endpoint}` timed out after {seconds}s")]
    Timeout { endpoint: String, seconds: u64 },

    #[error("`{endpoint}` rate-limited the request")]
    RateLimited { endpoint: String },

    #[error("`{endpoint}` answered HTTP {status}")]
    Http { endpoint: String, status: u16 },

    #[error("remote reply was not a chat completion: {reason}")]
    MalformedRemote { reason: String },

    #[error("credential variable `{variable}` is not set")]
    MissingCredential { variable: String },

    #[error("no scripted rule matches a `{role}` request")]
    NoScriptedRule { role: RoleId },

    #[error("transcript has no completions left for digest {digest}")]
    TranscriptExhausted { digest: String },

    #[error("transcript never saw digest {digest} (role `{role}`): the run diverged from the recording")]
    DigestMismatch { digest: String, role: RoleId },

    #[error("failed to access transcript `{path}`")]
    TranscriptIo {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("transcript `{path}` line {line} is malformed")]
    TranscriptFormat {
        path: std::path::PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("no episode matches the instruction quoted in the request")]
    UnknownEpisode,

    #[error("invalid request: {reason}")]
    InvalidRequest { reason: String },

    #[error("backend configuration error: {reason}")]
    Config { reason: String },
}

/// A synchronous completion service.
///
/// Implementations must be shareable across threads: perception fans out
/// one request per direction bin in parallel.
pub trait CompletionBackend: Send + Sync {
    /// Stable name used in logs and result stamps.
    fn id(&self) -> &str;

    /// Produces `request.sampling.breadth` completions for the prompt.
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        (**self).complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roster::Speaker;

    fn request(content: &str, breadth: u32) -> CompletionRequest {
        CompletionRequest {
            role: RoleId::AgentDecision,
            messages: vec![Message {
                speaker: Speaker::User,
                content: content.to_string(),
            }],
            sampling: SamplingProfile {
                diversity: 1.0,
                breadth,
            },
        }
    }

    #[test]
    fn digest_is_stable_and_content_sensitive() {
        let a = request("hello", 5);
        assert_eq!(a.digest(), a.digest());
        assert_eq!(a.digest().len(), 64);
        assert_ne!(a.digest(), request("hello!", 5).digest());
        assert_ne!(a.digest(), request("hello", 1).digest());
        let mut other_role = a.clone();
        other_role.role = RoleId::ThoughtFusion;
        assert_ne!(a.digest(), other_role.digest());
    }
}
