//! Matcher backends: the deterministic similarity oracle and a remote
//! completion endpoint, plus parsing of free-text answers.

use std::sync::{Arc, LazyLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{ColumnQuery, CompressedChoices};
use crate::prompt::Prompt;
use crate::schema::{MappingResult, Provenance};
use crate::similarity::SimilarityMeasure;

pub const CONFIDENCE_EXACT: f64 = 1.0;
pub const CONFIDENCE_NUMBER: f64 = 0.9;
pub const CONFIDENCE_SUBSTRING: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleScore {
    pub attribute_id: String,
    pub score: f64,
}

/// Per-option score: best similarity of the query name to the option text or
/// to any of its kept exemplars.
pub fn oracle_scores(choices: &CompressedChoices, query_name: &str, measure: &SimilarityMeasure) -> Vec<OracleScore> {
    choices
        .options
        .iter()
        .map(|o| {
            let direct = measure.score(query_name, &o.text);
            let score = o
                .examples
                .iter()
                .map(|e| measure.score(query_name, &e.text))
                .fold(direct, f64::max);
            OracleScore {
                attribute_id: o.attribute_id.clone(),
                score,
            }
        })
        .collect()
}

/// Position of the highest score, first one on ties.
pub(crate) fn argmax(scores: impl IntoIterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best
}

pub fn match_oracle(choices: &CompressedChoices, query: &ColumnQuery, measure: &SimilarityMeasure) -> MappingResult {
    let scores = oracle_scores(choices, &query.name, measure);
    match argmax(scores.iter().map(|s| s.score)) {
        Some((i, score)) => MappingResult {
            source: query.name.clone(),
            object_type: choices.object_type.clone(),
            predicted_attribute: Some(scores[i].attribute_id.clone()),
            confidence: score,
            provenance: Provenance::Oracle,
            error: None,
        },
        None => MappingResult::unmapped(&query.name, &choices.object_type, Provenance::Oracle),
    }
}

static NUMBERED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(?:option\s*)?(?:no\.?\s*)?#?\s*(\d+)\s*[.):]?$").unwrap());

fn strip_wrapping(raw: &str) -> &str {
    raw.trim()
        .trim_matches(|c| matches!(c, '"' | '\'' | '`'))
        .trim_end_matches('.')
        .trim()
}

/// Resolves a free-text answer against option texts (or ids): exact text,
/// then option number, then a unique contained text. Returns the position and
/// the tier confidence.
pub fn resolve_answer(raw: &str, texts: &[(&str, &str)]) -> Option<(usize, f64)> {
    let answer = strip_wrapping(raw);
    if let Some(i) = texts
        .iter()
        .position(|(id, text)| text.eq_ignore_ascii_case(answer) || id.eq_ignore_ascii_case(answer))
    {
        return Some((i, CONFIDENCE_EXACT));
    }
    if let Some(n) = NUMBERED
        .captures(answer)
        .and_then(|c| c[1].parse::<usize>().ok())
        .filter(|n| (1..=texts.len()).contains(n))
    {
        return Some((n - 1, CONFIDENCE_NUMBER));
    }
    let lower = raw.to_lowercase();
    let contained: Vec<usize> = texts
        .iter()
        .enumerate()
        .filter(|(_, (_, t))| !t.is_empty() && lower.contains(&t.to_lowercase()))
        .map(|(i, _)| i)
        .collect();
    match contained[..] {
        [i] => Some((i, CONFIDENCE_SUBSTRING)),
        _ => None,
    }
}

pub fn parse_answer(raw: &str, choices: &CompressedChoices, source: &str) -> MappingResult {
    let texts: Vec<(&str, &str)> = choices
        .options
        .iter()
        .map(|o| (o.attribute_id.as_str(), o.text.as_str()))
        .collect();
    match resolve_answer(raw, &texts) {
        Some((i, confidence)) => MappingResult {
            source: source.to_string(),
            object_type: choices.object_type.clone(),
            predicted_attribute: Some(choices.options[i].attribute_id.clone()),
            confidence,
            provenance: Provenance::Llm,
            error: None,
        },
        None => MappingResult::unmapped(source, &choices.object_type, Provenance::Llm),
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempts: {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("backend returned HTTP {status}: {body}")]
    Remote { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

impl BackendError {
    /// Whether the pipeline should stop issuing further calls.
    pub fn is_unavailable(&self) -> bool {
        matches!(self, Self::Unavailable { .. })
    }
}

/// A text-completion service. Implementations are shared across threads.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteLlmConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding a bearer token.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_max_tokens() -> u32 {
    32
}

impl RemoteLlmConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            token_env: None,
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            backoff_ms: default_backoff_ms(),
            max_tokens: default_max_tokens(),
        }
    }
}

#[derive(Debug, Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    text: String,
}

const BODY_EXCERPT: usize = 200;

pub struct RemoteLlm {
    config: RemoteLlmConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteLlm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteLlm")
            .field("config", &self.config)
            .field("token", &self.token.as_ref().map(|_| "***"))
            .finish()
    }
}

impl RemoteLlm {
    pub fn new(config: RemoteLlmConfig) -> Result<Self, BackendError> {
        if config.endpoint.trim().is_empty() {
            return Err(BackendError::Config("empty endpoint".into()));
        }
        let token = match &config.token_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| BackendError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, token, agent })
    }

    pub fn config(&self) -> &RemoteLlmConfig {
        &self.config
    }

    fn attempt(&self, prompt: &str) -> Attempt {
        let body = CompletionRequest {
            model: &self.config.model,
            prompt,
            max_tokens: self.config.max_tokens,
            temperature: 0.0,
        };
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = match req.send_json(&body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        if resp.status().is_success() {
            return match resp.body_mut().read_json::<CompletionResponse>() {
                Ok(r) => Attempt::Done(Ok(r.text)),
                Err(e) => Attempt::Done(Err(BackendError::Protocol(e.to_string()))),
            };
        }
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        if status >= 500 {
            Attempt::Retry(format!("HTTP {status}"))
        } else {
            Attempt::Done(Err(BackendError::Remote {
                status,
                body: text.chars().take(BODY_EXCERPT).collect(),
            }))
        }
    }
}

enum Attempt {
    Done(Result<String, BackendError>),
    Retry(String),
}

impl CompletionClient for RemoteLlm {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for n in 0..attempts {
            if n > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (n - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(prompt) {
                Attempt::Done(r) => return r,
                Attempt::Retry(msg) => {
                    tracing::debug!(attempt = n + 1, error = %msg, "completion call failed");
                    last = msg;
                }
            }
        }
        Err(BackendError::Unavailable {
            attempts,
            message: last,
        })
    }
}

/// Sends the rendered prompt and returns the raw completion.
pub fn match_llm(prompt: &Prompt, client: &dyn CompletionClient) -> Result<String, BackendError> {
    client.complete(&prompt.rendered)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    #[default]
    Oracle,
    RemoteLlm(RemoteLlmConfig),
}

#[derive(Clone)]
pub enum MatcherBackend {
    Oracle(SimilarityMeasure),
    Llm(Arc<dyn CompletionClient>),
}

impl std::fmt::Debug for MatcherBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Oracle(m) => f.debug_tuple("Oracle").field(&m.kind()).finish(),
            Self::Llm(_) => f.write_str("Llm"),
        }
    }
}

impl MatcherBackend {
    pub fn from_config(config: &BackendConfig, measure: &SimilarityMeasure) -> Result<Self, BackendError> {
        Ok(match config {
            BackendConfig::Oracle => Self::Oracle(measure.clone()),
            BackendConfig::RemoteLlm(c) => Self::Llm(Arc::new(RemoteLlm::new(c.clone())?)),
        })
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self, Self::Oracle(_))
    }

    /// Maps one query given its compressed choices and rendered prompt.
    pub fn resolve(
        &self,
        choices: &CompressedChoices,
        query: &ColumnQuery,
        prompt: &Prompt,
    ) -> Result<MappingResult, BackendError> {
        match self {
            Self::Oracle(measure) => Ok(match_oracle(choices, query, measure)),
            Self::Llm(client) => {
                let raw = match_llm(prompt, client.as_ref())?;
                Ok(parse_answer(&raw, choices, &query.name))
            }
        }
    }
}
