//! Client for completions-style HTTP backends that can echo the prompt with
//! per-token top-k logprobs (teacher-forced scoring).

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::lump::lump_tail;
use crate::error::{Error, Result};
use crate::metrics::TokenDistribution;

const FRAGMENT_CHARS: usize = 240;

/// Where and how to reach a scoring backend.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    /// Base URL; requests go to `{base_url}/completions`.
    pub base_url: String,
    #[serde(default = "default_model")]
    pub model: String,
    /// Number of alternatives requested per position.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_model() -> String {
    "default".into()
}

fn default_top_k() -> usize {
    20
}

fn default_timeout_secs() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    2
}

fn default_backoff_ms() -> u64 {
    500
}

impl BackendDescriptor {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: default_model(),
            top_k: default_top_k(),
            timeout_secs: default_timeout_secs(),
            auth_env: None,
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Config("backend top_k must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::Config(format!(
                "backend timeout must be positive, got {}",
                self.timeout_secs
            )));
        }
        Ok(())
    }

    fn endpoint(&self) -> String {
        format!("{}/completions", self.base_url.trim_end_matches('/'))
    }
}

/// A prompt scored by a backend.
#[derive(Clone, Debug, Default)]
pub struct ScoredText {
    pub distributions: Vec<TokenDistribution>,
    pub texts: Vec<String>,
    /// Text of every token id seen in the response, alternatives included.
    pub vocabulary: HashMap<u32, String>,
}

/// Scores `prompt` token by token on `backend`.
///
/// Timeouts, transport failures, 429 and 5xx responses are retried with
/// exponential backoff.
pub async fn fetch_logprobs(backend: &BackendDescriptor, prompt: &str) -> Result<ScoredText> {
    backend.validate()?;
    let client = reqwest::Client::builder()
        .timeout(Duration::from_secs_f64(backend.timeout_secs))
        .build()
        .map_err(|e| Error::Transport(e.to_string()))?;
    let token =
        match &backend.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Config(format!("auth environment variable `{var}` is not set"))
            })?),
            None => None,
        };
    let body = json!({
        "model": backend.model,
        "prompt": prompt,
        "max_tokens": 0,
        "echo": true,
        "logprobs": backend.top_k,
        "temperature": 0.0,
    });

    let mut attempt = 0;
    loop {
        let mut request = client.post(backend.endpoint()).json(&body);
        if let Some(t) = &token {
            request = request.bearer_auth(t);
        }
        let failure = match request.send().await {
            Ok(response) => {
                let status = response.status();
                let text = response
                    .text()
                    .await
                    .map_err(|e| Error::Transport(e.to_string()))?;
                if status.is_success() {
                    let value: Value =
                        serde_json::from_str(&text).map_err(|_| Error::UnsupportedBackend {
                            fragment: fragment(&text),
                        })?;
                    return parse_completion_response(&value, prompt);
                }
                let err = Error::Backend {
                    status: status.as_u16(),
                    fragment: fragment(&text),
                };
                if !(status.is_server_error() || status.as_u16() == 429) {
                    return Err(err);
                }
                err
            }
            Err(e) if e.is_timeout() => Error::BackendTimeout {
                attempts: attempt + 1,
            },
            Err(e) if e.is_connect() || e.is_request() => Error::Transport(e.to_string()),
            Err(e) => return Err(Error::Transport(e.to_string())),
        };
        if attempt >= backend.retries {
            return Err(failure);
        }
        tokio::time::sleep(Duration::from_millis(backend.backoff_ms << attempt)).await;
        attempt += 1;
    }
}

fn fragment(text: &str) -> String {
    text.chars().take(FRAGMENT_CHARS).collect()
}

/// Maps backend token strings onto numeric ids.
///
/// `token_id:N` strings keep `N`; other strings are numbered in order of
/// first appearance from a separate range so the two never collide.
#[derive(Default)]
struct Interner {
    ids: HashMap<String, u32>,
    next: u32,
}

const INTERNED_BASE: u32 = 1 << 31;

impl Interner {
    fn id(&mut self, token: &str) -> u32 {
        if let Some(n) = token.strip_prefix("token_id:").and_then(|n| n.parse().ok()) {
            return n;
        }
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = INTERNED_BASE + self.next;
        self.next += 1;
        self.ids.insert(token.to_string(), id);
        id
    }
}

/// Converts a completions response body into scored distributions.
///
/// Positions without a logprob (typically the first prompt token) are
/// skipped. A selected token missing from its top-k list is added with its
/// own logprob before lumping.
pub fn parse_completion_response(body: &Value, prompt: &str) -> Result<ScoredText> {
    let unsupported = || Error::UnsupportedBackend {
        fragment: fragment(&body.to_string()),
    };
    let logprobs = body
        .pointer("/choices/0/logprobs")
        .filter(|v| v.is_object())
        .ok_or_else(unsupported)?;
    let tokens = logprobs
        .get("tokens")
        .and_then(Value::as_array)
        .ok_or_else(unsupported)?;
    let token_logprobs = logprobs
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(unsupported)?;
    let top_logprobs = logprobs
        .get("top_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(unsupported)?;
    if tokens.len() != token_logprobs.len() || tokens.len() != top_logprobs.len() {
        return Err(unsupported());
    }
    let texts_from_offsets = logprobs
        .get("text_offset")
        .and_then(Value::as_array)
        .and_then(|offsets| slice_by_offsets(prompt, offsets, tokens.len()));

    let mut interner = Interner::default();
    let mut out = ScoredText::default();
    for (i, token) in tokens.iter().enumerate() {
        let token = token.as_str().ok_or_else(unsupported)?;
        let Some(selected_lp) = token_logprobs[i].as_f64() else {
            continue;
        };
        let selected = interner.id(token);
        let mut topk = Vec::new();
        match &top_logprobs[i] {
            Value::Object(map) => {
                for (alt, lp) in map {
                    let lp = lp.as_f64().ok_or_else(unsupported)?;
                    topk.push((interner.id(alt), lp));
                    out.vocabulary
                        .entry(interner.id(alt))
                        .or_insert_with(|| alt.clone());
                }
            }
            Value::Array(items) => {
                for item in items {
                    let alt = item.get("token").and_then(Value::as_str);
                    let lp = item.get("logprob").and_then(Value::as_f64);
                    let (Some(alt), Some(lp)) = (alt, lp) else {
                        return Err(unsupported());
                    };
                    topk.push((interner.id(alt), lp));
                    out.vocabulary
                        .entry(interner.id(alt))
                        .or_insert_with(|| alt.to_string());
                }
            }
            Value::Null => {}
            _ => return Err(unsupported()),
        }
        if !topk.iter().any(|&(id, _)| id == selected) {
            topk.push((selected, selected_lp));
        }
        topk.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let position = out.distributions.len();
        out.distributions
            .push(lump_tail(&topk, selected)?.with_position(position));
        let text = match &texts_from_offsets {
            Some(texts) => texts[i].clone(),
            None => token.to_string(),
        };
        out.vocabulary
            .entry(selected)
            .or_insert_with(|| text.clone());
        out.texts.push(text);
    }
    Ok(out)
}

// Token texts recovered from character offsets into the prompt, when the
// offsets are present, monotone and in range.
fn slice_by_offsets(prompt: &str, offsets: &[Value], count: usize) -> Option<Vec<String>> {
    if offsets.len() != count {
        return None;
    }
    let chars: Vec<char> = prompt.chars().collect();
    let starts: Vec<usize> = offsets
        .iter()
        .map(|v| v.as_u64().map(|n| n as usize))
        .collect::<Option<_>>()?;
    if starts.windows(2).any(|w| w[1] < w[0]) || starts.last().is_some_and(|&s| s > chars.len()) {
        return None;
    }
    Some(
        starts
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let e = starts.get(i + 1).copied().unwrap_or(chars.len());
                chars[s..e].iter().collect()
            })
            .collect(),
    )
}
