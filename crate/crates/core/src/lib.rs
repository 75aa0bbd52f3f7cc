//! Training-free selection of visual-instruction samples.
//!
//! Each `(image, question, answer)` sample is judged twice by a frozen
//! vision-language evaluator: once with the question and once without it.
//! The log-ratio of the two Yes (and No) probabilities measures how much the
//! question shifts the verdict. Samples whose question weakens the Yes verdict
//! or strengthens the No verdict are filtered out, and a budgeted subset is
//! selected from the remainder, preferring small positive shifts.
//!
//! The pipeline is split so the expensive scoring phase runs once:
//!
//! * [`manifest`] reads and writes JSONL sample manifests.
//! * [`prompting`] renders the full and prior evaluator prompts.
//! * [`evaluator`] obtains raw Yes/No probabilities over HTTP or from a mock.
//! * [`scoring`] computes the shift scores and maintains a resumable cache.
//! * [`selection`] applies the alignment filter and the ranking strategies.
//! * [`reporting`] summarizes scores and benchmark outcomes.
//! * [`cli`] wires the phases into `score`, `select` and `stats` commands.

pub mod cli;
pub mod error;
pub mod evaluator;
pub mod manifest;
pub mod prompting;
pub mod reporting;
pub mod scoring;
pub mod selection;

pub use error::{Error, Result};
pub use evaluator::{
    extract_yes_no_probs, Evaluator, EvaluatorConfig, EvaluatorError, HttpEvaluator,
    MockEvaluator, MockTable, VerdictProbs,
};
pub use manifest::{load_manifest, write_manifest, LoadedManifest, PoolStats, SampleRecord};
pub use prompting::{ContextKind, PriorVariant, PromptTemplateSet, RenderedPrompt};
pub use reporting::{compute_arp, histogram, summarize_run, BenchmarkEntry, BenchmarkReport};
pub use scoring::{cvs_shift, score_pool, score_sample, CvsScore, FailurePolicy, ScoreVariant};
pub use selection::{filter_aligned, retention_fraction, select, Budget, SelectionConfig, SelectionResult, Strategy};
