//! Frozen-evaluator verdicts.
//!
//! An [`Evaluator`] answers one rendered prompt with the raw probabilities of
//! the `Yes` and `No` first tokens. Probabilities are read straight from the
//! returned top-k log probabilities and are never renormalized, so
//! `p_yes + p_no` may be below one. A label missing from the top-k list is
//! assigned the configured probability floor, which keeps every downstream
//! log ratio finite.

mod http;
mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::SampleRecord;
use crate::prompting::{ContextKind, RenderedPrompt};

pub use http::{build_request_body, parse_top_logprobs, HttpEvaluator};
pub use mock::{mock_verdict, MockEvaluator, MockTable, RecordedRequest, MOCK_SEED};

pub const DEFAULT_PROBABILITY_FLOOR: f64 = 1e-10;
pub const DEFAULT_TOP_LOGPROBS: u32 = 20;
pub const API_KEY_ENV: &str = "CVS_API_KEY";

#[derive(Debug, Error)]
pub enum EvaluatorError {
    #[error("evaluator configuration: {0}")]
    Config(String),
    #[error("transport error after {attempts} attempt(s) [{correlation_id}]: {message}")]
    Transport {
        correlation_id: String,
        attempts: u32,
        message: String,
    },
    #[error("protocol error [{correlation_id}]: {message}")]
    Protocol {
        correlation_id: String,
        message: String,
    },
    #[error("image {image}: {message}")]
    Image { image: String, message: String },
}

/// Raw evaluator probabilities for one prompt context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictProbs {
    pub p_yes: f64,
    pub p_no: f64,
    pub context_kind: ContextKind,
    /// Top-k `(token, logprob)` pairs as returned, kept for audit.
    pub raw_token_evidence: Vec<(String, f64)>,
}

/// Anything that can judge a rendered prompt for a sample.
pub trait Evaluator: Send + Sync {
    fn query_verdict(
        &self,
        sample: &SampleRecord,
        prompt: &RenderedPrompt,
    ) -> Result<VerdictProbs, EvaluatorError>;
}

impl<E: Evaluator + ?Sized> Evaluator for &E {
    fn query_verdict(
        &self,
        sample: &SampleRecord,
        prompt: &RenderedPrompt,
    ) -> Result<VerdictProbs, EvaluatorError> {
        (**self).query_verdict(sample, prompt)
    }
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn query_verdict(
        &self,
        sample: &SampleRecord,
        prompt: &RenderedPrompt,
    ) -> Result<VerdictProbs, EvaluatorError> {
        (**self).query_verdict(sample, prompt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model_name: String,
    pub top_logprobs_requested: u32,
    pub request_timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff_base: Duration,
    pub probability_floor: f64,
    /// Upper bound on concurrent in-flight requests.
    pub max_in_flight: usize,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model_name: "llava-hf/llava-1.5-7b-hf".into(),
            top_logprobs_requested: DEFAULT_TOP_LOGPROBS,
            request_timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            probability_floor: DEFAULT_PROBABILITY_FLOOR,
            max_in_flight: 8,
        }
    }
}

impl EvaluatorConfig {
    pub fn validate(&self) -> Result<(), EvaluatorError> {
        let cfg = |m: String| Err(EvaluatorError::Config(m));
        match url::Url::parse(&self.endpoint) {
            Ok(u) if matches!(u.scheme(), "http" | "https") && u.host().is_some() => {}
            Ok(u) => return cfg(format!("endpoint {} must be an http(s) URL with a host", u)),
            Err(e) => return cfg(format!("endpoint {:?} is not a valid URL: {e}", self.endpoint)),
        }
        if self.model_name.trim().is_empty() {
            return cfg("model name must be non-empty".into());
        }
        if self.top_logprobs_requested < 2 {
            return cfg("top_logprobs must be at least 2".into());
        }
        validate_floor(self.probability_floor)?;
        if self.max_in_flight == 0 {
            return cfg("in-flight cap must be at least 1".into());
        }
        Ok(())
    }
}

pub(crate) fn validate_floor(floor: f64) -> Result<(), EvaluatorError> {
    if floor > 0.0 && floor < 1.0 {
        Ok(())
    } else {
        Err(EvaluatorError::Config(format!(
            "probability floor must lie in (0, 1), got {floor}"
        )))
    }
}

/// Reads `P(Yes)` and `P(No)` from a first-token top-k list.
///
/// Token text is trimmed and case-folded, and every surface variant of a label
/// contributes `exp(logprob)` to its sum. Absent labels get `floor`; results
/// are clamped to `[floor, 1]`.
pub fn extract_yes_no_probs(top_tokens: &[(String, f64)], floor: f64) -> (f64, f64) {
    let mut yes = 0.0;
    let mut no = 0.0;
    for (token, logprob) in top_tokens {
        let folded = token.trim().to_lowercase();
        match folded.as_str() {
            "yes" => yes += logprob.exp(),
            "no" => no += logprob.exp(),
            _ => {}
        }
    }
    (yes.clamp(floor, 1.0), no.clamp(floor, 1.0))
}
