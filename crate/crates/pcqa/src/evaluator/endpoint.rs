//! Chat-completions scoring client.
//!
//! POSTs the question with the six projections (base64 data URLs) and the
//! answer prefix as assistant prefill, requesting the top-k (k >= 20)
//! log-probabilities of the single generated token. Returned tokens are
//! matched case-insensitively (whitespace stripped, first-subword prefix
//! match) against the five adjectives; levels missing from the top-k get
//! the minimum matched log-probability minus 10 so the softmax stays finite
//! while the ordering is preserved.

use std::path::PathBuf;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{build_prompt, EvalError, ScoreBackend, ScoreRequest};
use crate::rating::{level_text, logits_to_probabilities, LmmEvaluation, LEVELS};

/// Environment variable consulted when [`EndpointConfig::api_key`] is unset.
pub const API_KEY_ENV: &str = "PCQA_API_KEY";

const TOP_LOGPROBS: usize = 20;
const MISSING_LEVEL_PENALTY: f64 = 10.0;

/// Connection settings of the scoring endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL; the client posts to `<base_url>/chat/completions`.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_retries")]
    pub retries: usize,
    /// Bearer token; falls back to the `PCQA_API_KEY` environment variable.
    #[serde(default)]
    pub api_key: Option<String>,
}

fn default_timeout() -> u64 {
    120
}

fn default_concurrency() -> usize {
    4
}

fn default_retries() -> usize {
    2
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            timeout_secs: default_timeout(),
            max_concurrency: default_concurrency(),
            retries: default_retries(),
            api_key: None,
        }
    }

    fn bearer(&self) -> Option<String> {
        self.api_key
            .clone()
            .or_else(|| std::env::var(API_KEY_ENV).ok())
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Debug, Deserialize)]
struct ChoiceLogprobs {
    content: Vec<TokenLogprob>,
}

#[derive(Debug, Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

/// Maps token candidates onto the five levels. A candidate token matches a
/// level when, lowercased and stripped, it equals the adjective or is a
/// non-empty prefix of it (tokenizers often split the adjectives).
pub(crate) fn candidates_to_logprobs(
    candidates: &[(String, f64)],
) -> Result<[f64; 5], EvalError> {
    let mut matched: [Option<f64>; 5] = [None; 5];
    for (token, logprob) in candidates {
        let normalized = token.trim().to_ascii_lowercase();
        if normalized.is_empty() {
            continue;
        }
        for level in LEVELS {
            let adjective = level_text(level);
            if adjective == normalized || adjective.starts_with(normalized.as_str()) {
                let slot = &mut matched[level.index()];
                *slot = Some(slot.map_or(*logprob, |prev: f64| prev.max(*logprob)));
            }
        }
    }
    let min_matched = matched
        .iter()
        .flatten()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !min_matched.is_finite() {
        return Err(EvalError::NoRatingTokenFound);
    }
    let floor = min_matched - MISSING_LEVEL_PENALTY;
    Ok(matched.map(|slot| slot.unwrap_or(floor)))
}

fn encode_image(path: &PathBuf) -> Result<serde_json::Value, EvalError> {
    if !path.is_file() {
        return Err(EvalError::MissingProjection(path.clone()));
    }
    let bytes = std::fs::read(path)?;
    let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(serde_json::json!({
        "type": "image_url",
        "image_url": { "url": format!("data:image/png;base64,{b64}") }
    }))
}

/// Scores one cloud from its six projection images via the endpoint.
pub fn score_point_cloud(
    images: &[PathBuf],
    cfg: &EndpointConfig,
) -> Result<LmmEvaluation, EvalError> {
    let prompt = build_prompt(images)?;

    let mut user_content = vec![serde_json::json!({ "type": "text", "text": prompt.question })];
    for path in images {
        user_content.push(encode_image(path)?);
    }
    let body = serde_json::json!({
        "model": cfg.model,
        "messages": [
            { "role": "user", "content": user_content },
            { "role": "assistant", "content": prompt.answer_prefix },
        ],
        "max_tokens": 1,
        "logprobs": true,
        "top_logprobs": TOP_LOGPROBS,
    });

    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(cfg.timeout_secs))
        .build()
        .map_err(|e| EvalError::EndpointUnreachable {
            attempts: 0,
            detail: e.to_string(),
        })?;
    let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));

    let attempts = cfg.retries + 1;
    let mut last_error = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(250 * (1 << (attempt - 1))));
        }
        let mut request = client.post(&url).json(&body);
        if let Some(token) = cfg.bearer() {
            request = request.bearer_auth(token);
        }
        match request.send() {
            Err(e) => {
                last_error = e.to_string();
            }
            Ok(response) => {
                let status = response.status();
                if status.is_server_error() {
                    last_error = format!("server error {status}");
                    continue;
                }
                if !status.is_success() {
                    return Err(EvalError::MalformedResponse(format!(
                        "endpoint returned status {status}"
                    )));
                }
                let parsed: ChatResponse = response
                    .json()
                    .map_err(|e| EvalError::MalformedResponse(e.to_string()))?;
                return evaluation_from_response(parsed);
            }
        }
    }
    Err(EvalError::EndpointUnreachable {
        attempts,
        detail: last_error,
    })
}

fn evaluation_from_response(parsed: ChatResponse) -> Result<LmmEvaluation, EvalError> {
    let choice = parsed
        .choices
        .first()
        .ok_or_else(|| EvalError::MalformedResponse("no choices".into()))?;
    let content = choice
        .logprobs
        .as_ref()
        .map(|lp| &lp.content)
        .filter(|c| !c.is_empty())
        .ok_or_else(|| EvalError::MalformedResponse("missing token logprobs".into()))?;
    let first = &content[0];
    let candidates: Vec<(String, f64)> = if first.top_logprobs.is_empty() {
        vec![(first.token.clone(), first.logprob)]
    } else {
        first
            .top_logprobs
            .iter()
            .map(|t| (t.token.clone(), t.logprob))
            .collect()
    };
    let logprobs = candidates_to_logprobs(&candidates)?;
    Ok(logits_to_probabilities(logprobs)?)
}

/// [`ScoreBackend`] over the HTTP endpoint.
pub struct HttpBackend {
    pub config: EndpointConfig,
}

impl ScoreBackend for HttpBackend {
    fn score(&self, request: &ScoreRequest) -> Result<LmmEvaluation, EvalError> {
        score_point_cloud(&request.image_paths, &self.config)
    }

    fn max_concurrency(&self) -> usize {
        self.config.max_concurrency.max(1)
    }
}
