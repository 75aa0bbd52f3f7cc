//! Conditional verdict shift scores.
//!
//! For each sample the evaluator is asked twice: with the question (full
//! context) and without it (prior context). The affirmation shift is
//! `ln P(Yes|full) - ln P(Yes|prior)` and the rejection shift is the same for
//! `No`. Under [`ScoreVariant::NoVisualAnchor`] the prior context also drops
//! the image.
//!
//! [`score_pool`] keeps a JSONL cache keyed by sample id and variant, appends
//! each finished batch in input order, and skips cached samples on rerun.

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{Evaluator, EvaluatorError};
use crate::manifest::SampleRecord;
use crate::prompting::{ContextKind, PriorVariant, PromptTemplateSet};

/// Largest disagreement between stored and recomputed scores for a cache
/// line to be trusted.
pub const CACHE_TOLERANCE: f64 = 1e-9;

/// Minimum significant digits written for every cached number.
pub const CACHE_SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("log-ratio domain error: {0}")]
    Domain(String),
    #[error("sample {sample_id:?} ({context} context): {source}")]
    Evaluator {
        sample_id: String,
        context: ContextKind,
        #[source]
        source: EvaluatorError,
    },
    #[error("score cache {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreVariant {
    /// Prior context keeps the image.
    Standard,
    /// Prior context is the answer text alone.
    NoVisualAnchor,
}

impl ScoreVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreVariant::Standard => "standard",
            ScoreVariant::NoVisualAnchor => "no_visual_anchor",
        }
    }

    pub fn prior_variant(self) -> PriorVariant {
        match self {
            ScoreVariant::Standard => PriorVariant::WithImage,
            ScoreVariant::NoVisualAnchor => PriorVariant::TextOnly,
        }
    }
}

impl fmt::Display for ScoreVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Record the failure and continue with the next sample.
    #[default]
    Skip,
    /// Abort on the first failure.
    Strict,
}

/// Natural log of `p_full / p_prior`, as a difference of logs.
pub fn cvs_shift(p_full: f64, p_prior: f64) -> Result<f64, ScoreError> {
    for (name, p) in [("full", p_full), ("prior", p_prior)] {
        if !(p > 0.0 && p <= 1.0) {
            return Err(ScoreError::Domain(format!(
                "{name} probability {p} is outside (0, 1]"
            )));
        }
    }
    Ok(p_full.ln() - p_prior.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvsScore {
    pub sample_id: String,
    pub p_yes_full: f64,
    pub p_no_full: f64,
    pub p_yes_prior: f64,
    pub p_no_prior: f64,
    pub cvs_yes: f64,
    pub cvs_no: f64,
    pub variant: ScoreVariant,
}

impl CvsScore {
    pub fn from_probs(
        sample_id: impl Into<String>,
        variant: ScoreVariant,
        (p_yes_full, p_no_full): (f64, f64),
        (p_yes_prior, p_no_prior): (f64, f64),
    ) -> Result<Self, ScoreError> {
        Ok(Self {
            sample_id: sample_id.into(),
            cvs_yes: cvs_shift(p_yes_full, p_yes_prior)?,
            cvs_no: cvs_shift(p_no_full, p_no_prior)?,
            p_yes_full,
            p_no_full,
            p_yes_prior,
            p_no_prior,
            variant,
        })
    }

    /// Largest gap between the stored scores and ones recomputed from the
    /// stored probabilities. `None` when a probability is out of range.
    pub fn recompute_error(&self) -> Option<f64> {
        let y = cvs_shift(self.p_yes_full, self.p_yes_prior).ok()?;
        let n = cvs_shift(self.p_no_full, self.p_no_prior).ok()?;
        let err = (y - self.cvs_yes).abs().max((n - self.cvs_no).abs());
        err.is_finite().then_some(err)
    }

    /// One cache line, without the trailing newline.
    pub fn to_cache_line(&self) -> String {
        format!(
            "{{\"id\":{},\"variant\":\"{}\",\"p_yes_full\":{},\"p_no_full\":{},\"p_yes_prior\":{},\"p_no_prior\":{},\"cvs_yes\":{},\"cvs_no\":{}}}",
            serde_json::to_string(&self.sample_id).expect("string serializes"),
            self.variant,
            decimal(self.p_yes_full),
            decimal(self.p_no_full),
            decimal(self.p_yes_prior),
            decimal(self.p_no_prior),
            decimal(self.cvs_yes),
            decimal(self.cvs_no),
        )
    }

    /// Parses and verifies one cache line.
    pub fn from_cache_line(line: &str) -> Option<Self> {
        #[derive(Deserialize)]
        struct Line {
            id: String,
            variant: ScoreVariant,
            p_yes_full: f64,
            p_no_full: f64,
            p_yes_prior: f64,
            p_no_prior: f64,
            cvs_yes: f64,
            cvs_no: f64,
        }
        let l: Line = serde_json::from_str(line).ok()?;
        let score = CvsScore {
            sample_id: l.id,
            p_yes_full: l.p_yes_full,
            p_no_full: l.p_no_full,
            p_yes_prior: l.p_yes_prior,
            p_no_prior: l.p_no_prior,
            cvs_yes: l.cvs_yes,
            cvs_no: l.cvs_no,
            variant: l.variant,
        };
        match score.recompute_error() {
            Some(err) if err <= CACHE_TOLERANCE => Some(score),
            _ => None,
        }
    }
}

/// Shortest round-trip decimal, zero-padded to at least
/// [`CACHE_SIGNIFICANT_DIGITS`] significant digits.
fn decimal(x: f64) -> String {
    let mut s = format!("{x}");
    let digits: String = s.chars().filter(char::is_ascii_digit).collect();
    let significant = match digits.trim_start_matches('0').len() {
        // Zero: count the single leading digit.
        0 => 1,
        n => n,
    };
    if significant < CACHE_SIGNIFICANT_DIGITS {
        if !s.contains('.') {
            s.push('.');
        }
        s.extend(std::iter::repeat_n('0', CACHE_SIGNIFICANT_DIGITS - significant));
    }
    s
}

/// Scores one sample with exactly two evaluator queries.
pub fn score_sample<E: Evaluator + ?Sized>(
    sample: &SampleRecord,
    evaluator: &E,
    templates: &PromptTemplateSet,
    variant: ScoreVariant,
) -> Result<CvsScore, ScoreError> {
    let annotate = |context| {
        let sample_id = sample.id.clone();
        move |source| ScoreError::Evaluator {
            sample_id,
            context,
            source,
        }
    };
    let full_prompt = templates.render_full(sample);
    let prior_prompt = templates.render_prior(sample, variant.prior_variant());
    let full = evaluator
        .query_verdict(sample, &full_prompt)
        .map_err(annotate(full_prompt.context_kind))?;
    let prior = evaluator
        .query_verdict(sample, &prior_prompt)
        .map_err(annotate(prior_prompt.context_kind))?;
    CvsScore::from_probs(
        sample.id.clone(),
        variant,
        (full.p_yes, full.p_no),
        (prior.p_yes, prior.p_no),
    )
}

/// A sample that could not be scored.
#[derive(Debug)]
pub struct SampleFailure {
    pub index: usize,
    pub sample_id: String,
    pub error: ScoreError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolOptions {
    pub policy: FailurePolicy,
    /// Worker threads; also bounds concurrently scored samples.
    pub concurrency: usize,
}

impl Default for PoolOptions {
    fn default() -> Self {
        Self {
            policy: FailurePolicy::Skip,
            concurrency: 1,
        }
    }
}

#[derive(Debug, Default)]
pub struct PoolOutcome {
    /// Scores in input order; failed samples are absent.
    pub scores: Vec<CvsScore>,
    pub failures: Vec<SampleFailure>,
    /// Samples served from the cache.
    pub cached: usize,
    /// Samples scored by the evaluator in this run.
    pub scored: usize,
    /// Cache lines ignored because they failed to parse or verify.
    pub corrupt_cache_lines: usize,
}

/// Verified cache contents for one variant.
#[derive(Debug, Default)]
pub struct ScoreCache {
    pub scores: HashMap<String, CvsScore>,
    pub corrupt_lines: usize,
}

impl ScoreCache {
    /// Reads the cache; a missing file is an empty cache. Later lines for the
    /// same id replace earlier ones. Lines of another variant are ignored.
    pub fn load(path: &Path, variant: ScoreVariant) -> Result<Self, ScoreError> {
        let mut cache = ScoreCache::default();
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cache),
            Err(source) => {
                return Err(ScoreError::Cache {
                    path: path.to_path_buf(),
                    source,
                })
            }
        };
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|source| ScoreError::Cache {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            match CvsScore::from_cache_line(&line) {
                Some(s) if s.variant == variant => {
                    cache.scores.insert(s.sample_id.clone(), s);
                }
                Some(_) => {}
                None => cache.corrupt_lines += 1,
            }
        }
        if cache.corrupt_lines > 0 {
            log::warn!(
                "{}: ignored {} corrupt cache line(s); affected samples will be re-scored",
                path.display(),
                cache.corrupt_lines
            );
        }
        Ok(cache)
    }
}

/// Append-only cache writer. Repairs a torn final line before appending.
struct CacheAppender {
    path: PathBuf,
    file: File,
}

impl CacheAppender {
    fn open(path: &Path) -> Result<Self, ScoreError> {
        let err = |source| ScoreError::Cache {
            path: path.to_path_buf(),
            source,
        };
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(err)?;
        let len = file.metadata().map_err(err)?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1)).map_err(err)?;
            file.read_exact(&mut last).map_err(err)?;
            if last[0] != b'\n' {
                file.write_all(b"\n").map_err(err)?;
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    fn append(&mut self, scores: &[&CvsScore]) -> Result<(), ScoreError> {
        if scores.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for s in scores {
            buf.push_str(&s.to_cache_line());
            buf.push('\n');
        }
        self.file
            .write_all(buf.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|source| ScoreError::Cache {
                path: self.path.clone(),
                source,
            })
    }
}

/// Scores every record, reusing and extending the cache at `cache_path`.
///
/// Uncached samples are processed in batches; each batch is scored by up to
/// `options.concurrency` workers and then appended to the cache in input
/// order, so the cache contents do not depend on completion order.
/// Under [`FailurePolicy::Strict`] the first failure stops the run after the
/// current batch's successes have been persisted.
pub fn score_pool<E: Evaluator + ?Sized>(
    records: &[SampleRecord],
    evaluator: &E,
    templates: &PromptTemplateSet,
    variant: ScoreVariant,
    cache_path: &Path,
    options: PoolOptions,
) -> Result<PoolOutcome, ScoreError> {
    let cache = ScoreCache::load(cache_path, variant)?;
    let mut outcome = PoolOutcome {
        corrupt_cache_lines: cache.corrupt_lines,
        ..PoolOutcome::default()
    };
    let mut slots: Vec<Option<CvsScore>> = Vec::with_capacity(records.len());
    let mut pending = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match cache.scores.get(&r.id) {
            Some(s) => {
                slots.push(Some(s.clone()));
                outcome.cached += 1;
            }
            None => {
                slots.push(None);
                pending.push(i);
            }
        }
    }

    let workers = options.concurrency.max(1);
    let mut appender = CacheAppender::open(cache_path)?;
    let batch_size = workers * 4;
    let mut aborted: Option<ScoreError> = None;

    for batch in pending.chunks(batch_size) {
        let results = score_batch(records, batch, evaluator, templates, variant, workers, options.policy);
        let mut fresh = Vec::new();
        for (idx, result) in results {
            match result {
                Some(Ok(score)) => {
                    slots[idx] = Some(score);
                    fresh.push(idx);
                }
                Some(Err(error)) => {
                    log::warn!("{error}");
                    if options.policy == FailurePolicy::Strict && aborted.is_none() {
                        aborted = Some(error);
                    } else {
                        outcome.failures.push(SampleFailure {
                            index: idx,
                            sample_id: records[idx].id.clone(),
                            error,
                        });
                    }
                }
                None => {}
            }
        }
        let to_write: Vec<&CvsScore> = fresh.iter().filter_map(|&i| slots[i].as_ref()).collect();
        appender.append(&to_write)?;
        outcome.scored += fresh.len();
        if let Some(err) = aborted {
            return Err(err);
        }
    }

    outcome.scores = slots.into_iter().flatten().collect();
    Ok(outcome)
}

type BatchResult = (usize, Option<Result<CvsScore, ScoreError>>);

/// Scores the records at `indices` concurrently and returns results sorted by
/// record index. `None` marks samples skipped after a strict-mode failure.
fn score_batch<E: Evaluator + ?Sized>(
    records: &[SampleRecord],
    indices: &[usize],
    evaluator: &E,
    templates: &PromptTemplateSet,
    variant: ScoreVariant,
    workers: usize,
    policy: FailurePolicy,
) -> Vec<BatchResult> {
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<BatchResult>();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(indices.len()) {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&idx) = indices.get(k) else { break };
                if stop.load(Ordering::SeqCst) {
                    let _ = tx.send((idx, None));
                    continue;
                }
                let result = score_sample(&records[idx], evaluator, templates, variant);
                if result.is_err() && policy == FailurePolicy::Strict {
                    stop.store(true, Ordering::SeqCst);
                }
                let _ = tx.send((idx, Some(result)));
            });
        }
    });
    drop(tx);
    let mut results: Vec<BatchResult> = rx.into_iter().collect();
    results.sort_by_key(|r| r.0);
    results
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::{MockEvaluator, MockTable, VerdictProbs};
    use crate::prompting::RenderedPrompt;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn shift_examples() {
        assert!(close(cvs_shift(0.8, 0.4).unwrap(), std::f64::consts::LN_2, 1e-15));
        assert_eq!(cvs_shift(0.5, 0.5).unwrap(), 0.0);
        // ln(9e9) = 22.9204904 (see integration tests for the high-precision oracle).
        assert!(close(cvs_shift(0.9, 1e-10).unwrap(), 22.920_490_414_282_63, 1e-9));
    }

    #[test]
    fn shift_domain_errors() {
        for (a, b) in [(0.0, 0.5), (0.5, -1.0), (1.5, 0.5), (f64::NAN, 0.5), (0.5, f64::INFINITY)] {
            assert!(matches!(cvs_shift(a, b), Err(ScoreError::Domain(_))), "{a} {b}");
        }
        assert!(cvs_shift(1.0, 1.0).is_ok());
    }

    fn mock_with(full: (f64, f64), prior: (f64, f64), prior_kind: ContextKind) -> MockEvaluator {
        let mut t = MockTable::new();
        t.insert("s1", ContextKind::Full, full.0, full.1);
        t.insert("s1", prior_kind, prior.0, prior.1);
        MockEvaluator::new(t)
    }

    #[test]
    fn score_sample_log_ratios() {
        let m = mock_with((0.9, 0.05), (0.3, 0.4), ContextKind::Prior);
        let s = SampleRecord::new("s1", "i.png", "q", "a");
        let sc = score_sample(&s, &m, &PromptTemplateSet::default(), ScoreVariant::Standard).unwrap();
        assert!(close(sc.cvs_yes, 3f64.ln(), 1e-12));
        assert!(close(sc.cvs_no, 0.125f64.ln(), 1e-12));
        assert_eq!(m.calls(), 2);
        assert_eq!(sc.recompute_error(), Some(0.0));
    }

    #[test]
    fn equal_contexts_score_zero() {
        let m = mock_with((0.6, 0.2), (0.6, 0.2), ContextKind::Prior);
        let s = SampleRecord::new("s1", "i.png", "q", "a");
        let sc = score_sample(&s, &m, &PromptTemplateSet::default(), ScoreVariant::Standard).unwrap();
        assert_eq!((sc.cvs_yes, sc.cvs_no), (0.0, 0.0));
    }

    #[test]
    fn no_visual_anchor_prior_is_text_only() {
        let m = mock_with((0.9, 0.05), (0.3, 0.4), ContextKind::TextPrior);
        let s = SampleRecord::new("s1", "i.png", "q", "a");
        let sc = score_sample(&s, &m, &PromptTemplateSet::default(), ScoreVariant::NoVisualAnchor).unwrap();
        assert!(close(sc.cvs_yes, 3f64.ln(), 1e-12));
        let reqs = m.requests();
        assert_eq!(reqs.len(), 2);
        assert!(reqs[0].attach_image && reqs[0].context_kind == ContextKind::Full);
        assert!(!reqs[1].attach_image && reqs[1].context_kind == ContextKind::TextPrior);
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(decimal(0.9), "0.900000000000");
        assert_eq!(decimal(0.0), "0.00000000000");
        assert_eq!(decimal(1.0), "1.00000000000");
        assert_eq!(decimal(1e-10), "0.000000000100000000000");
        assert_eq!(decimal(-2.0794415416798357), "-2.0794415416798357");
        for x in [0.9, 1e-10, 22.920490414282634, -0.1, 0.0, 0.30000000000000004] {
            assert_eq!(decimal(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn cache_line_round_trip_and_corruption() {
        let s = CvsScore::from_probs("a\"b", ScoreVariant::NoVisualAnchor, (0.9, 0.05), (0.3, 0.4)).unwrap();
        let line = s.to_cache_line();
        assert_eq!(CvsScore::from_cache_line(&line), Some(s.clone()));
        let tampered = line.replace(&decimal(s.cvs_yes), "1.5000000000000");
        assert_eq!(CvsScore::from_cache_line(&tampered), None);
        assert_eq!(CvsScore::from_cache_line("{\"id\":\"x\""), None);
    }

    struct FailOn(&'static str, MockEvaluator);

    impl Evaluator for FailOn {
        fn query_verdict(&self, s: &SampleRecord, p: &RenderedPrompt) -> Result<VerdictProbs, EvaluatorError> {
            if s.id == self.0 {
                return Err(EvaluatorError::Protocol {
                    correlation_id: s.id.clone(),
                    message: "forced".into(),
                });
            }
            self.1.query_verdict(s, p)
        }
    }

    fn records(n: usize) -> Vec<SampleRecord> {
        (0..n)
            .map(|i| SampleRecord::new(format!("s{i:02}"), "i.png", format!("q{i}"), format!("a{i}")))
            .collect()
    }

    #[test]
    fn pool_scoring_and_cache_reuse() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.jsonl");
        let recs = records(10);
        let t = PromptTemplateSet::default();
        let m = MockEvaluator::new(MockTable::new());
        let opts = PoolOptions { concurrency: 3, ..Default::default() };
        let first = score_pool(&recs, &m, &t, ScoreVariant::Standard, &cache, opts).unwrap();
        assert_eq!(m.calls(), 20);
        assert_eq!(first.scores.len(), 10);
        assert_eq!(first.scored, 10);
        let ids: Vec<_> = first.scores.iter().map(|s| s.sample_id.clone()).collect();
        let expected: Vec<_> = recs.iter().map(|r| r.id.clone()).collect();
        assert_eq!(ids, expected);

        let m2 = MockEvaluator::new(MockTable::new());
        let second = score_pool(&recs, &m2, &t, ScoreVariant::Standard, &cache, opts).unwrap();
        assert_eq!(m2.calls(), 0);
        assert_eq!(second.cached, 10);
        assert_eq!(second.scores, first.scores);

        // Another variant does not reuse these entries.
        let m3 = MockEvaluator::new(MockTable::new());
        score_pool(&recs, &m3, &t, ScoreVariant::NoVisualAnchor, &cache, opts).unwrap();
        assert_eq!(m3.calls(), 20);
    }

    #[test]
    fn skip_policy_records_failure() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.jsonl");
        let recs = records(10);
        let ev = FailOn("s04", MockEvaluator::new(MockTable::new()));
        let out = score_pool(&recs, &ev, &PromptTemplateSet::default(), ScoreVariant::Standard, &cache, PoolOptions { concurrency: 2, ..Default::default() }).unwrap();
        assert_eq!(out.scores.len(), 9);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].sample_id, "s04");
        assert_eq!(std::fs::read_to_string(&cache).unwrap().lines().count(), 9);
    }

    #[test]
    fn strict_policy_aborts_and_keeps_progress() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.jsonl");
        let recs = records(10);
        let ev = FailOn("s06", MockEvaluator::new(MockTable::new()));
        let opts = PoolOptions { policy: FailurePolicy::Strict, concurrency: 1 };
        let err = score_pool(&recs, &ev, &PromptTemplateSet::default(), ScoreVariant::Standard, &cache, opts).unwrap_err();
        assert!(matches!(err, ScoreError::Evaluator { ref sample_id, .. } if sample_id == "s06"));
        // Single worker, batch of four: s04 and s05 were finished before s06 failed.
        let lines = std::fs::read_to_string(&cache).unwrap().lines().count();
        assert_eq!(lines, 6);
    }

    #[test]
    fn torn_and_corrupt_cache_lines_are_rescored() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.jsonl");
        let recs = records(4);
        let t = PromptTemplateSet::default();
        let m = MockEvaluator::new(MockTable::new());
        score_pool(&recs, &m, &t, ScoreVariant::Standard, &cache, PoolOptions::default()).unwrap();
        let text = std::fs::read_to_string(&cache).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        // Corrupt the stored score of s01 and tear the last line.
        let s1 = CvsScore::from_cache_line(&lines[1]).unwrap();
        lines[1] = lines[1].replace(&decimal(s1.cvs_no), "9.00000000000");
        let torn = lines[3][..20].to_string();
        lines[3] = torn;
        std::fs::write(&cache, lines.join("\n")).unwrap();

        let m2 = MockEvaluator::new(MockTable::new());
        let out = score_pool(&recs, &m2, &t, ScoreVariant::Standard, &cache, PoolOptions::default()).unwrap();
        assert_eq!(out.corrupt_cache_lines, 2);
        assert_eq!(m2.calls(), 4);
        assert_eq!(out.cached, 2);
        let reloaded = ScoreCache::load(&cache, ScoreVariant::Standard).unwrap();
        assert_eq!(reloaded.scores.len(), 4);
    }
}
