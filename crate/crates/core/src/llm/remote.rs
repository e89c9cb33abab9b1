//! Chat-completion client for OpenAI-compatible inference servers.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::backend::{ChatBackend, ChatRequest};
use super::prompt::Message;
use super::LlmError;

/// Connection settings for one agent. The API key is read from the
/// environment variable named by `api_key_env`, never from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteSettings {
    /// Base URL such as `http://localhost:8000/v1`, or a full `/chat/completions` URL.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    #[serde(default = "default_attempts")]
    pub attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_timeout_s() -> u64 {
    120
}

fn default_attempts() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    1000
}

impl RemoteSettings {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: None,
            timeout_s: default_timeout_s(),
            attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn completions_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct RemoteBackend {
    settings: RemoteSettings,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl RemoteBackend {
    pub fn new(settings: RemoteSettings) -> Result<Self, LlmError> {
        let api_key = match &settings.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                LlmError::Transport(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_s))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(Self {
            settings,
            client,
            api_key,
        })
    }

    fn attempt(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let body = CompletionBody {
            model: &self.settings.model,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut call = self.client.post(self.settings.completions_url()).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(LlmError::Transport(format!("HTTP {status}: {text}")));
        }
        let reply: CompletionReply = response
            .json()
            .map_err(|e| LlmError::Transport(format!("malformed completion reply: {e}")))?;
        reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Transport("completion reply has no content".into()))
    }
}

impl ChatBackend for RemoteBackend {
    fn id(&self) -> String {
        format!("{}@{}", self.settings.model, self.settings.endpoint)
    }

    fn complete(&mut self, request: &ChatRequest) -> Result<String, LlmError> {
        let attempts = self.settings.attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.settings.backoff_ms << (attempt - 1);
                log::warn!("retrying {} request in {wait} ms", request.key.agent);
                thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(request) {
                Ok(text) => return Ok(text),
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
