//! Evaluator prompt rendering.
//!
//! Three contexts are rendered from one sample: the full context carries the
//! question and the answer, the prior context only the answer (with the
//! image attached), and the text-only prior drops the image as well.
//!
//! Substitution is single pass. Placeholder-looking text inside a question or
//! answer is copied through untouched.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::SampleRecord;

pub const QUESTION_SLOT: &str = "{question}";
pub const ANSWER_SLOT: &str = "{answer}";

pub const DEFAULT_FULL_TEMPLATE: &str = "Question: {question}\nProposed answer: {answer}\n\
Given the image and the question, is the proposed answer a valid response to the question?";
pub const DEFAULT_PRIOR_TEMPLATE: &str =
    "Proposed answer: {answer}\nGiven the image, is the proposed answer a valid response?";
pub const DEFAULT_TEXT_PRIOR_TEMPLATE: &str =
    "Proposed answer: {answer}\nIs the proposed answer a valid response?";
pub const DEFAULT_INSTRUCTION_SUFFIX: &str =
    "Respond with exactly one word, \"Yes\" or \"No\".";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("template file {path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    Full,
    Prior,
    TextPrior,
}

impl ContextKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContextKind::Full => "full",
            ContextKind::Prior => "prior",
            ContextKind::TextPrior => "text_prior",
        }
    }
}

impl fmt::Display for ContextKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which prior context to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorVariant {
    /// Image and answer.
    WithImage,
    /// Answer only; the image is not attached.
    TextOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub attach_image: bool,
    pub context_kind: ContextKind,
}

/// A validated set of prompt templates.
///
/// Fields are private so that every instance has passed validation; build
/// one with [`PromptTemplateSet::new`], [`PromptTemplateSet::from_toml_str`]
/// or take the defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptTemplateSet {
    full_template: String,
    prior_template: String,
    text_prior_template: String,
    instruction_suffix: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    full_template: Option<String>,
    prior_template: Option<String>,
    text_prior_template: Option<String>,
    instruction_suffix: Option<String>,
}

impl Default for PromptTemplateSet {
    fn default() -> Self {
        Self::new(
            DEFAULT_FULL_TEMPLATE,
            DEFAULT_PRIOR_TEMPLATE,
            DEFAULT_TEXT_PRIOR_TEMPLATE,
            DEFAULT_INSTRUCTION_SUFFIX,
        )
        .expect("default templates are valid")
    }
}

impl PromptTemplateSet {
    pub fn new(
        full_template: impl Into<String>,
        prior_template: impl Into<String>,
        text_prior_template: impl Into<String>,
        instruction_suffix: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        let set = Self {
            full_template: full_template.into(),
            prior_template: prior_template.into(),
            text_prior_template: text_prior_template.into(),
            instruction_suffix: instruction_suffix.into(),
        };
        set.validate()?;
        Ok(set)
    }

    /// Parses a TOML template file. Missing keys fall back to the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self, TemplateError> {
        let file: TemplateFile = toml::from_str(text).map_err(|e| TemplateError::File {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        Self::new(
            file.full_template.unwrap_or_else(|| DEFAULT_FULL_TEMPLATE.into()),
            file.prior_template.unwrap_or_else(|| DEFAULT_PRIOR_TEMPLATE.into()),
            file.text_prior_template
                .unwrap_or_else(|| DEFAULT_TEXT_PRIOR_TEMPLATE.into()),
            file.instruction_suffix
                .unwrap_or_else(|| DEFAULT_INSTRUCTION_SUFFIX.into()),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TemplateError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            TemplateError::File { message, .. } => TemplateError::File {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    fn validate(&self) -> Result<(), TemplateError> {
        let invalid = |field, message: String| Err(TemplateError::Invalid { field, message });
        let q = count_slot(&self.full_template, QUESTION_SLOT);
        let a = count_slot(&self.full_template, ANSWER_SLOT);
        if q != 1 || a != 1 {
            return invalid(
                "full_template",
                format!("needs {{question}} and {{answer}} exactly once each (found {q} and {a})"),
            );
        }
        for (field, tpl) in [
            ("prior_template", &self.prior_template),
            ("text_prior_template", &self.text_prior_template),
        ] {
            let a = count_slot(tpl, ANSWER_SLOT);
            if a != 1 {
                return invalid(field, format!("needs {{answer}} exactly once (found {a})"));
            }
            if count_slot(tpl, QUESTION_SLOT) != 0 {
                return invalid(field, "must not contain {question}".into());
            }
        }
        if self.instruction_suffix.trim().is_empty() {
            return invalid("instruction_suffix", "must be non-empty".into());
        }
        Ok(())
    }

    pub fn full_template(&self) -> &str {
        &self.full_template
    }

    pub fn prior_template(&self) -> &str {
        &self.prior_template
    }

    pub fn text_prior_template(&self) -> &str {
        &self.text_prior_template
    }

    pub fn instruction_suffix(&self) -> &str {
        &self.instruction_suffix
    }

    pub fn render_full(&self, sample: &SampleRecord) -> RenderedPrompt {
        RenderedPrompt {
            text: self.finish(substitute(
                &self.full_template,
                &sample.question,
                &sample.answer,
            )),
            attach_image: true,
            context_kind: ContextKind::Full,
        }
    }

    pub fn render_prior(&self, sample: &SampleRecord, variant: PriorVariant) -> RenderedPrompt {
        let (template, attach_image, context_kind) = match variant {
            PriorVariant::WithImage => (&self.prior_template, true, ContextKind::Prior),
            PriorVariant::TextOnly => (&self.text_prior_template, false, ContextKind::TextPrior),
        };
        // Prior templates hold no question slot, so the question never leaks.
        RenderedPrompt {
            text: self.finish(substitute(template, "", &sample.answer)),
            attach_image,
            context_kind,
        }
    }

    fn finish(&self, body: String) -> String {
        let mut text = body;
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        text.push_str(&self.instruction_suffix);
        text
    }
}

fn count_slot(template: &str, slot: &str) -> usize {
    template.matches(slot).count()
}

/// Replaces `{question}` and `{answer}` in one left-to-right pass over the
/// template. Substituted text is never rescanned.
fn substitute(template: &str, question: &str, answer: &str) -> String {
    let mut out = String::with_capacity(template.len() + question.len() + answer.len());
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix(QUESTION_SLOT) {
            out.push_str(question);
            rest = after;
        } else if let Some(after) = tail.strip_prefix(ANSWER_SLOT) {
            out.push_str(answer);
            rest = after;
        } else {
            out.push('{');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}
