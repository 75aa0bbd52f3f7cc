use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{extract_yes_no_probs, Evaluator, EvaluatorConfig, EvaluatorError, VerdictProbs, API_KEY_ENV};
use crate::manifest::{is_local_path, resolve_image_path, SampleRecord};
use crate::prompting::RenderedPrompt;

const MAX_BACKOFF: Duration = Duration::from_secs(30);

/// Chat-completions client that asks for a single token with top-k
/// log probabilities.
pub struct HttpEvaluator {
    config: EvaluatorConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    image_root: PathBuf,
    in_flight: Semaphore,
    next_id: AtomicU64,
}

impl HttpEvaluator {
    /// `image_root` resolves relative image paths, normally the manifest's
    /// directory. The bearer token is read from `CVS_API_KEY` when set.
    pub fn new(config: EvaluatorConfig, image_root: impl Into<PathBuf>) -> Result<Self, EvaluatorError> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.request_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(Self {
            in_flight: Semaphore::new(config.max_in_flight),
            config,
            agent,
            api_key,
            image_root: image_root.into(),
            next_id: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &EvaluatorConfig {
        &self.config
    }

    fn image_url(&self, image: &str) -> Result<String, EvaluatorError> {
        if !is_local_path(image) {
            return Ok(image.to_string());
        }
        let path = resolve_image_path(&self.image_root, image);
        let bytes = std::fs::read(&path).map_err(|e| EvaluatorError::Image {
            image: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(data_uri(&path, &bytes))
    }

    fn post_once(&self, body: &Value, correlation_id: &str) -> Result<(u16, String), ureq::Error> {
        let _permit = self.in_flight.acquire();
        let mut req = self
            .agent
            .post(&self.config.endpoint)
            .header("X-Request-Id", correlation_id);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string()?;
        Ok((status, text))
    }

    fn post_with_retries(&self, body: &Value, correlation_id: &str) -> Result<String, EvaluatorError> {
        let attempts_allowed = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts_allowed {
            if attempt > 0 {
                std::thread::sleep(backoff(self.config.backoff_base, attempt - 1));
            }
            match self.post_once(body, correlation_id) {
                Ok((status, text)) if (200..300).contains(&status) => return Ok(text),
                Ok((status, text)) if status == 429 || status >= 500 => {
                    last_error = format!("HTTP {status}: {}", truncate(&text, 200));
                }
                Ok((status, text)) => {
                    return Err(EvaluatorError::Protocol {
                        correlation_id: correlation_id.into(),
                        message: format!("HTTP {status}: {}", truncate(&text, 200)),
                    })
                }
                Err(e) if is_transient(&e) => last_error = e.to_string(),
                Err(e) => {
                    return Err(EvaluatorError::Protocol {
                        correlation_id: correlation_id.into(),
                        message: e.to_string(),
                    })
                }
            }
            log::debug!("{correlation_id}: attempt {} failed: {last_error}", attempt + 1);
        }
        Err(EvaluatorError::Transport {
            correlation_id: correlation_id.into(),
            attempts: attempts_allowed,
            message: last_error,
        })
    }
}

impl Evaluator for HttpEvaluator {
    fn query_verdict(
        &self,
        sample: &SampleRecord,
        prompt: &RenderedPrompt,
    ) -> Result<VerdictProbs, EvaluatorError> {
        let n = self.next_id.fetch_add(1, Ordering::Relaxed);
        let correlation_id = format!("{}/{}#{n}", sample.id, prompt.context_kind);
        let image = if prompt.attach_image {
            if sample.image_path.trim().is_empty() {
                return Err(EvaluatorError::Image {
                    image: String::new(),
                    message: format!("sample {:?} has no image but the prompt needs one", sample.id),
                });
            }
            Some(self.image_url(&sample.image_path)?)
        } else {
            None
        };
        let body = build_request_body(&self.config, prompt, image.as_deref());
        let text = self.post_with_retries(&body, &correlation_id)?;
        let response: Value = serde_json::from_str(&text).map_err(|e| EvaluatorError::Protocol {
            correlation_id: correlation_id.clone(),
            message: format!("response is not JSON: {e}"),
        })?;
        let top = parse_top_logprobs(&response).map_err(|message| EvaluatorError::Protocol {
            correlation_id: correlation_id.clone(),
            message,
        })?;
        let (p_yes, p_no) = extract_yes_no_probs(&top, self.config.probability_floor);
        Ok(VerdictProbs {
            p_yes,
            p_no,
            context_kind: prompt.context_kind,
            raw_token_evidence: top,
        })
    }
}

/// Chat-completions request for one token with top-k log probabilities at
/// temperature zero. The image, when present, precedes the text part.
pub fn build_request_body(config: &EvaluatorConfig, prompt: &RenderedPrompt, image_url: Option<&str>) -> Value {
    let mut content = Vec::with_capacity(2);
    if let Some(url) = image_url {
        content.push(json!({"type": "image_url", "image_url": {"url": url}}));
    }
    content.push(json!({"type": "text", "text": prompt.text}));
    json!({
        "model": config.model_name,
        "messages": [{"role": "user", "content": content}],
        "max_tokens": 1,
        "logprobs": true,
        "top_logprobs": config.top_logprobs_requested,
        "temperature": 0,
    })
}

/// Reads the first generated token's top-k list.
///
/// Accepts the chat format (`logprobs.content[0].top_logprobs` as a list of
/// `{token, logprob}`) and the legacy completions format
/// (`logprobs.top_logprobs[0]` as a token → logprob map).
pub fn parse_top_logprobs(response: &Value) -> Result<Vec<(String, f64)>, String> {
    let choice = response
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or("response has no choices")?;
    let logprobs = choice
        .get("logprobs")
        .filter(|v| !v.is_null())
        .ok_or("choice carries no logprobs")?;

    let top: Vec<(String, f64)> = if let Some(content) = logprobs.get("content").and_then(Value::as_array) {
        let first = content.first().ok_or("logprobs.content is empty")?;
        let list = first
            .get("top_logprobs")
            .and_then(Value::as_array)
            .ok_or("first token has no top_logprobs list")?;
        list.iter()
            .map(|entry| {
                let token = entry.get("token").and_then(Value::as_str);
                let lp = entry.get("logprob").and_then(Value::as_f64);
                match (token, lp) {
                    (Some(t), Some(l)) => Ok((t.to_string(), l)),
                    _ => Err(format!("malformed top_logprobs entry: {entry}")),
                }
            })
            .collect::<Result<_, _>>()?
    } else if let Some(first) = logprobs
        .get("top_logprobs")
        .and_then(Value::as_array)
        .and_then(|a| a.first())
        .and_then(Value::as_object)
    {
        first
            .iter()
            .map(|(t, l)| {
                l.as_f64()
                    .map(|l| (t.clone(), l))
                    .ok_or_else(|| format!("non-numeric logprob for token {t:?}"))
            })
            .collect::<Result<_, _>>()?
    } else {
        return Err("unrecognized logprobs layout".into());
    };

    if top.is_empty() {
        return Err("top-k list is empty".into());
    }
    Ok(top)
}

fn data_uri(path: &Path, bytes: &[u8]) -> String {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let mime = match ext.as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    };
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    format!("data:{mime};base64,{encoded}")
}

fn is_transient(e: &ureq::Error) -> bool {
    matches!(
        e,
        ureq::Error::Io(_)
            | ureq::Error::Timeout(_)
            | ureq::Error::HostNotFound
            | ureq::Error::ConnectionFailed
            | ureq::Error::Protocol(_)
    )
}

fn backoff(base: Duration, retry_index: u32) -> Duration {
    base.saturating_mul(1u32 << retry_index.min(16)).min(MAX_BACKOFF)
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Counting semaphore bounding concurrent requests.
struct Semaphore {
    available: Mutex<usize>,
    cond: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            available: Mutex::new(n),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.cond.wait(n).unwrap();
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap() += 1;
        self.0.cond.notify_one();
    }
}
