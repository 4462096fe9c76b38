//! Client side of the LLM wire contract.
//!
//! A request is POSTed as JSON `{task, context, payload, schema}` and the
//! endpoint answers `{content, structured}`. Transport failures are retried
//! once. A response that does not conform to the task schema gets one retry
//! with a stricter instruction and is then treated as `NONE`.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const URL_ENV: &str = "NEEDGRAPH_LLM_URL";
pub const KEY_ENV: &str = "NEEDGRAPH_LLM_KEY";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Sentinel an endpoint returns when it has no acceptable answer.
pub const NONE: &str = "NONE";

const STRICT_SUFFIX: &str = "\n\nYour previous answer did not match the required schema. \
Respond with JSON that matches `schema` exactly, or with the single word NONE.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmTask {
    AlignMoa,
    ScoreNeeds,
    WriteReport,
    ScoreSentiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub task: LlmTask,
    pub context: String,
    pub payload: String,
    pub schema: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub structured: Option<Value>,
}

impl LlmResponse {
    pub fn text(content: &str) -> Self {
        Self {
            content: content.to_string(),
            structured: None,
        }
    }

    pub fn json(structured: Value) -> Self {
        Self {
            content: String::new(),
            structured: Some(structured),
        }
    }

    /// The structured part, or `content` parsed as JSON.
    pub fn structured_or_content(&self) -> Option<Value> {
        self.structured
            .clone()
            .or_else(|| serde_json::from_str(self.content.trim()).ok())
    }

    pub fn is_none_sentinel(&self) -> bool {
        self.structured.is_none() && self.content.trim() == NONE
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("LLM endpoint unreachable: {0}")]
    Transport(String),
    #[error("LLM endpoint returned HTTP {0}")]
    Status(u16),
    #[error("LLM response is not valid JSON: {0}")]
    Decode(String),
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

/// Blocking HTTP implementation of the wire contract.
pub struct HttpLlmClient {
    url: String,
    key: Option<String>,
    agent: ureq::Agent,
}

impl HttpLlmClient {
    pub fn new(url: impl Into<String>, key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            url: url.into(),
            key,
            agent,
        }
    }

    /// Reads the endpoint from `NEEDGRAPH_LLM_URL` (and optional `NEEDGRAPH_LLM_KEY`).
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(URL_ENV).ok().filter(|u| !u.trim().is_empty())?;
        let key = std::env::var(KEY_ENV).ok().filter(|k| !k.is_empty());
        Some(Self::new(url, key, DEFAULT_TIMEOUT))
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let resp = req.send_json(request).map_err(|e| match e {
            ureq::Error::StatusCode(code) => LlmError::Status(code),
            other => LlmError::Transport(other.to_string()),
        })?;
        resp.into_body()
            .read_json::<LlmResponse>()
            .map_err(|e| LlmError::Decode(e.to_string()))
    }
}

/// Result of a contract-conforming exchange.
#[derive(Debug, Clone, PartialEq)]
pub enum LlmOutcome<T> {
    Accepted(T),
    /// The endpoint answered `NONE`, or twice answered off-schema.
    None,
    /// Transport failed on the attempt and its retry.
    Unavailable(LlmError),
}

fn send_once_retrying(client: &dyn LlmClient, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
    match client.complete(req) {
        Ok(r) => Ok(r),
        Err(first) => {
            log::warn!("LLM {:?} request failed, retrying once: {first}", req.task);
            client.complete(req)
        }
    }
}

/// Sends `request` and validates the answer with `parse`.
///
/// `parse` returns `None` for non-conforming responses. A `NONE` sentinel
/// is returned as [`LlmOutcome::None`] without a retry.
pub fn request_conforming<T>(
    client: &dyn LlmClient,
    request: &LlmRequest,
    parse: impl Fn(&LlmResponse) -> Option<T>,
) -> LlmOutcome<T> {
    let mut req = request.clone();
    for attempt in 0..2 {
        let resp = match send_once_retrying(client, &req) {
            Ok(r) => r,
            Err(e) => return LlmOutcome::Unavailable(e),
        };
        if resp.is_none_sentinel() {
            return LlmOutcome::None;
        }
        if let Some(v) = parse(&resp) {
            return LlmOutcome::Accepted(v);
        }
        if attempt == 0 {
            req.payload.push_str(STRICT_SUFFIX);
        }
    }
    LlmOutcome::None
}

/// Replays canned responses in order and records every request. Useful as a
/// deterministic stand-in for an endpoint.
#[derive(Default)]
pub struct ScriptedLlm {
    responses: Mutex<VecDeque<Result<LlmResponse, LlmError>>>,
    requests: Mutex<Vec<LlmRequest>>,
}

impl ScriptedLlm {
    pub fn new(responses: impl IntoIterator<Item = Result<LlmResponse, LlmError>>) -> Self {
        Self {
            responses: Mutex::new(responses.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<LlmRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn calls(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl LlmClient for ScriptedLlm {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        self.requests.lock().unwrap().push(request.clone());
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(LlmError::Transport("script exhausted".into())))
    }
}
