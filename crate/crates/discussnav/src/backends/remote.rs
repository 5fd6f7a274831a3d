//! Remote HTTP backend speaking the common chat-completion wire shape:
//! request `{model, messages, temperature, n}`, reply
//! `{choices: [{message: {content}}]}`.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionBackend, CompletionRequest, CompletionResult};

/// Connection settings for one remote model endpoint.
///
/// The credential is read from the environment variable named by
/// `credential_env` and is never written to any log, report or transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteProfile {
    pub endpoint: String,
    pub model: String,
    pub credential_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_base_backoff_ms")]
    pub base_backoff_ms: u64,
}

impl Default for RemoteProfile {
    fn default() -> Self {
        RemoteProfile {
            endpoint: String::new(),
            model: String::new(),
            credential_env: String::new(),
            timeout_secs: default_timeout_secs(),
            max_attempts: default_max_attempts(),
            base_backoff_ms: default_base_backoff_ms(),
        }
    }
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_attempts() -> u32 {
    3
}

fn default_base_backoff_ms() -> u64 {
    500
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    n: u32,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireReply {
    choices: Vec<WireChoice>,
}

/// Chat-completion client with exponential-backoff retries.
///
/// Transport failures, timeouts, HTTP 429 and HTTP 5xx are retried up to
/// `max_attempts` total tries; other HTTP errors and malformed reply bodies
/// fail immediately.
pub struct RemoteBackend {
    profile: RemoteProfile,
    credential: String,
    client: reqwest::blocking::Client,
}

// Hand-written so the credential can never end up in any log or report.
impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("profile", &self.profile)
            .field("credential", &"<redacted>")
            .finish_non_exhaustive()
    }
}

impl RemoteBackend {
    /// Fails fast when the credential variable is unset or the client
    /// cannot be built; no request leaves the process before that check.
    pub fn new(profile: RemoteProfile) -> Result<Self, BackendError> {
        let credential = std::env::var(&profile.credential_env).map_err(|_| {
            BackendError::MissingCredential {
                variable: profile.credential_env.clone(),
            }
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(profile.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config {
                reason: format!("failed to build HTTP client: {e}"),
            })?;
        Ok(RemoteBackend {
            profile,
            credential,
            client,
        })
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<Vec<String>, BackendError> {
        let endpoint = &self.profile.endpoint;
        let body = WireRequest {
            model: &self.profile.model,
            messages: request
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: m.speaker.as_str(),
                    content: &m.content,
                })
                .collect(),
            temperature: request.sampling.diversity,
            n: request.sampling.breadth,
        };
        let response = self
            .client
            .post(endpoint)
            .bearer_auth(&self.credential)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout {
                        endpoint: endpoint.clone(),
                        seconds: self.profile.timeout_secs,
                    }
                } else {
                    BackendError::Transport {
                        endpoint: endpoint.clone(),
                        detail: e.to_string(),
                    }
                }
            })?;

        let status = response.status();
        if status.as_u16() == 429 {
            return Err(BackendError::RateLimited {
                endpoint: endpoint.clone(),
            });
        }
        if !status.is_success() {
            return Err(BackendError::Http {
                endpoint: endpoint.clone(),
                status: status.as_u16(),
            });
        }
        let reply: WireReply = response.json().map_err(|e| BackendError::MalformedRemote {
            reason: e.to_string(),
        })?;
        let completions: Vec<String> = reply
            .choices
            .into_iter()
            .map(|c| c.message.content)
            .collect();
        if completions.len() != request.sampling.breadth as usize {
            return Err(BackendError::MalformedRemote {
                reason: format!(
                    "asked for {} completions, got {}",
                    request.sampling.breadth,
                    completions.len()
                ),
            });
        }
        Ok(completions)
    }
}

fn retryable(error: &BackendError) -> bool {
    matches!(
        error,
        BackendError::Transport { .. }
            | BackendError::Timeout { .. }
            | BackendError::RateLimited { .. }
            | BackendError::Http { status: 500..=599, .. }
    )
}

impl CompletionBackend for RemoteBackend {
    fn id(&self) -> &str {
        "remote"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let started = Instant::now();
        let attempts = self.profile.max_attempts.max(1);
        let mut last_error = None;
        for attempt in 1..=attempts {
            match self.attempt(request) {
                Ok(completions) => {
                    return Ok(CompletionResult {
                        completions,
                        latency_ms: started.elapsed().as_millis() as u64,
                        backend: "remote".into(),
                    });
                }
                Err(error) => {
                    let retry = retryable(&error) && attempt < attempts;
                    log::warn!(
                        "remote attempt {attempt}/{attempts} failed ({error}); retrying: {retry}"
                    );
                    last_error = Some(error);
                    if !retry {
                        break;
                    }
                    let backoff = self
                        .profile
                        .base_backoff_ms
                        .saturating_mul(1u64 << (attempt - 1).min(20));
                    std::thread::sleep(Duration::from_millis(backoff));
                }
            }
        }
        Err(last_error.expect("loop ran at least once"))
    }
}
