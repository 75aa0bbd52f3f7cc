//! Python bindings for `cvs_core`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use cvs_core::evaluator::{self, EvaluatorConfig};
use cvs_core::manifest::{self, LoadOptions};
use cvs_core::prompting::{self, PriorVariant};
use cvs_core::reporting::{self, ScoreMetric};
use cvs_core::scoring::{self, FailurePolicy, PoolOptions, ScoreVariant};
use cvs_core::selection::{self, Budget, SelectionConfig, Strategy};
use cvs_core::error::ErrorClass;
use cvs_core::Error;
use pyo3::exceptions::{PyConnectionError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: impl Into<Error>) -> PyErr {
    let e: Error = e.into();
    match e.class() {
        ErrorClass::Transport => PyConnectionError::new_err(e.to_string()),
        ErrorClass::Config | ErrorClass::Data => PyValueError::new_err(e.to_string()),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_variant(s: &str) -> PyResult<ScoreVariant> {
    match s {
        "standard" => Ok(ScoreVariant::Standard),
        "no_visual_anchor" => Ok(ScoreVariant::NoVisualAnchor),
        _ => Err(value_err(format!("unknown variant {s:?}; expected standard or no_visual_anchor"))),
    }
}

#[pyclass(name = "SampleRecord", from_py_object)]
#[derive(Clone)]
struct PySampleRecord {
    inner: manifest::SampleRecord,
}

#[pymethods]
impl PySampleRecord {
    #[new]
    fn new(id: String, image: String, question: String, answer: String) -> Self {
        Self {
            inner: manifest::SampleRecord::new(id, image, question, answer),
        }
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn image(&self) -> &str {
        &self.inner.image_path
    }

    #[getter]
    fn question(&self) -> &str {
        &self.inner.question
    }

    #[getter]
    fn answer(&self) -> &str {
        &self.inner.answer
    }

    fn __repr__(&self) -> String {
        format!("SampleRecord(id={:?}, image={:?})", self.inner.id, self.inner.image_path)
    }
}

#[pyfunction]
#[pyo3(signature = (path, check_images = false))]
fn load_manifest(path: PathBuf, check_images: bool) -> PyResult<Vec<PySampleRecord>> {
    let loaded = manifest::load_manifest_with(&path, &LoadOptions { check_images }).map_err(to_py)?;
    Ok(loaded.records.into_iter().map(|inner| PySampleRecord { inner }).collect())
}

#[pyfunction]
fn write_manifest(records: Vec<PySampleRecord>, path: PathBuf) -> PyResult<()> {
    let records: Vec<_> = records.into_iter().map(|r| r.inner).collect();
    manifest::write_manifest(&records, path).map_err(to_py)
}

#[pyclass(name = "RenderedPrompt", get_all, skip_from_py_object)]
struct PyRenderedPrompt {
    text: String,
    attach_image: bool,
    context_kind: String,
}

impl From<prompting::RenderedPrompt> for PyRenderedPrompt {
    fn from(p: prompting::RenderedPrompt) -> Self {
        Self {
            text: p.text,
            attach_image: p.attach_image,
            context_kind: p.context_kind.as_str().to_string(),
        }
    }
}

#[pyclass(name = "PromptTemplates", from_py_object)]
#[derive(Clone, Default)]
struct PyPromptTemplates {
    inner: prompting::PromptTemplateSet,
}

#[pymethods]
impl PyPromptTemplates {
    #[new]
    #[pyo3(signature = (full = None, prior = None, text_prior = None, suffix = None))]
    fn new(full: Option<String>, prior: Option<String>, text_prior: Option<String>, suffix: Option<String>) -> PyResult<Self> {
        let d = prompting::PromptTemplateSet::default();
        let inner = prompting::PromptTemplateSet::new(
            full.unwrap_or_else(|| d.full_template().into()),
            prior.unwrap_or_else(|| d.prior_template().into()),
            text_prior.unwrap_or_else(|| d.text_prior_template().into()),
            suffix.unwrap_or_else(|| d.instruction_suffix().into()),
        )
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Loads templates from a TOML file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: prompting::PromptTemplateSet::load(path).map_err(to_py)?,
        })
    }

    fn render_full(&self, sample: &PySampleRecord) -> PyRenderedPrompt {
        self.inner.render_full(&sample.inner).into()
    }

    #[pyo3(signature = (sample, variant = "standard"))]
    fn render_prior(&self, sample: &PySampleRecord, variant: &str) -> PyResult<PyRenderedPrompt> {
        let v = match parse_variant(variant)? {
            ScoreVariant::Standard => PriorVariant::WithImage,
            ScoreVariant::NoVisualAnchor => PriorVariant::TextOnly,
        };
        Ok(self.inner.render_prior(&sample.inner, v).into())
    }
}

/// Sums `exp(logprob)` per case-folded label; absent labels get `floor`.
#[pyfunction]
#[pyo3(signature = (top_tokens, floor = evaluator::DEFAULT_PROBABILITY_FLOOR))]
fn extract_yes_no_probs(top_tokens: Vec<(String, f64)>, floor: f64) -> PyResult<(f64, f64)> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(value_err(format!("floor {floor} must lie in (0, 1)")));
    }
    Ok(evaluator::extract_yes_no_probs(&top_tokens, floor))
}

#[pyfunction]
fn cvs_shift(p_full: f64, p_prior: f64) -> PyResult<f64> {
    scoring::cvs_shift(p_full, p_prior).map_err(to_py)
}

#[pyclass(name = "CvsScore", from_py_object)]
#[derive(Clone)]
struct PyCvsScore {
    inner: scoring::CvsScore,
}

#[pymethods]
impl PyCvsScore {
    #[new]
    #[pyo3(signature = (sample_id, p_yes_full, p_no_full, p_yes_prior, p_no_prior, variant = "standard"))]
    fn new(sample_id: String, p_yes_full: f64, p_no_full: f64, p_yes_prior: f64, p_no_prior: f64, variant: &str) -> PyResult<Self> {
        let inner = scoring::CvsScore::from_probs(
            sample_id,
            parse_variant(variant)?,
            (p_yes_full, p_no_full),
            (p_yes_prior, p_no_prior),
        )
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn sample_id(&self) -> &str {
        &self.inner.sample_id
    }

    #[getter]
    fn cvs_yes(&self) -> f64 {
        self.inner.cvs_yes
    }

    #[getter]
    fn cvs_no(&self) -> f64 {
        self.inner.cvs_no
    }

    #[getter]
    fn p_yes_full(&self) -> f64 {
        self.inner.p_yes_full
    }

    #[getter]
    fn p_no_full(&self) -> f64 {
        self.inner.p_no_full
    }

    #[getter]
    fn p_yes_prior(&self) -> f64 {
        self.inner.p_yes_prior
    }

    #[getter]
    fn p_no_prior(&self) -> f64 {
        self.inner.p_no_prior
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.as_str()
    }

    fn to_cache_line(&self) -> String {
        self.inner.to_cache_line()
    }

    fn __repr__(&self) -> String {
        format!(
            "CvsScore(sample_id={:?}, cvs_yes={}, cvs_no={})",
            self.inner.sample_id, self.inner.cvs_yes, self.inner.cvs_no
        )
    }
}

fn unwrap_scores(scores: Vec<PyCvsScore>) -> Vec<scoring::CvsScore> {
    scores.into_iter().map(|s| s.inner).collect()
}

fn wrap_scores(scores: Vec<scoring::CvsScore>) -> Vec<PyCvsScore> {
    scores.into_iter().map(|inner| PyCvsScore { inner }).collect()
}

fn parse_context(s: &str) -> PyResult<prompting::ContextKind> {
    match s {
        "full" => Ok(prompting::ContextKind::Full),
        "prior" => Ok(prompting::ContextKind::Prior),
        "text_prior" => Ok(prompting::ContextKind::TextPrior),
        _ => Err(value_err(format!("unknown context {s:?}"))),
    }
}

/// Deterministic evaluator. `entries` holds `(id, context, p_yes, p_no)`
/// tuples; other lookups fall back to hashed pseudo-random probabilities.
#[pyclass(name = "MockEvaluator", skip_from_py_object)]
struct PyMockEvaluator {
    inner: evaluator::MockEvaluator,
}

#[pymethods]
impl PyMockEvaluator {
    #[new]
    #[pyo3(signature = (entries = Vec::new(), floor = evaluator::DEFAULT_PROBABILITY_FLOOR))]
    fn new(entries: Vec<(String, String, f64, f64)>, floor: f64) -> PyResult<Self> {
        let mut table = evaluator::MockTable::new();
        for (id, ctx, y, n) in entries {
            table.insert(id, parse_context(&ctx)?, y, n);
        }
        let inner = evaluator::MockEvaluator::new(table).with_floor(floor).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Loads a JSONL mock table.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let table = evaluator::MockTable::load(path).map_err(value_err)?;
        Ok(Self {
            inner: evaluator::MockEvaluator::new(table),
        })
    }

    #[getter]
    fn calls(&self) -> usize {
        self.inner.calls()
    }
}

/// OpenAI-compatible chat-completions client.
#[pyclass(name = "HttpEvaluator", skip_from_py_object)]
struct PyHttpEvaluator {
    inner: evaluator::HttpEvaluator,
}

#[pymethods]
impl PyHttpEvaluator {
    #[new]
    #[pyo3(signature = (
        endpoint,
        model = None,
        image_root = PathBuf::from("."),
        top_logprobs = evaluator::DEFAULT_TOP_LOGPROBS,
        timeout_secs = 60.0,
        max_retries = 3,
        max_in_flight = 8,
    ))]
    fn new(
        endpoint: String,
        model: Option<String>,
        image_root: PathBuf,
        top_logprobs: u32,
        timeout_secs: f64,
        max_retries: u32,
        max_in_flight: usize,
    ) -> PyResult<Self> {
        if !(timeout_secs > 0.0 && timeout_secs.is_finite()) {
            return Err(value_err("timeout_secs must be positive"));
        }
        let d = EvaluatorConfig::default();
        let config = EvaluatorConfig {
            endpoint,
            model_name: model.unwrap_or(d.model_name.clone()),
            top_logprobs_requested: top_logprobs,
            request_timeout: Duration::from_secs_f64(timeout_secs),
            max_retries,
            max_in_flight,
            ..d
        };
        let inner = evaluator::HttpEvaluator::new(config, image_root).map_err(value_err)?;
        Ok(Self { inner })
    }
}

/// Scores `records`, reusing and extending the JSONL cache at `cache_path`.
/// Returns `(scores, failed_ids)`.
#[pyfunction]
#[pyo3(signature = (records, evaluator, cache_path, variant = "standard", policy = "skip", concurrency = 8, templates = None))]
#[allow(clippy::too_many_arguments)]
fn score_pool(
    py: Python<'_>,
    records: Vec<PySampleRecord>,
    evaluator: &Bound<'_, PyAny>,
    cache_path: PathBuf,
    variant: &str,
    policy: &str,
    concurrency: usize,
    templates: Option<PyPromptTemplates>,
) -> PyResult<(Vec<PyCvsScore>, Vec<String>)> {
    let variant = parse_variant(variant)?;
    let policy = match policy {
        "skip" => FailurePolicy::Skip,
        "strict" => FailurePolicy::Strict,
        _ => return Err(value_err(format!("unknown policy {policy:?}; expected skip or strict"))),
    };
    if concurrency == 0 {
        return Err(value_err("concurrency must be at least 1"));
    }
    let records: Vec<_> = records.into_iter().map(|r| r.inner).collect();
    let templates = templates.unwrap_or_default().inner;
    let options = PoolOptions { policy, concurrency };
    let outcome = if let Ok(m) = evaluator.cast::<PyMockEvaluator>() {
        let m = m.borrow();
        let ev = &m.inner;
        py.detach(|| scoring::score_pool(&records, ev, &templates, variant, &cache_path, options))
    } else if let Ok(h) = evaluator.cast::<PyHttpEvaluator>() {
        let h = h.borrow();
        let ev = &h.inner;
        py.detach(|| scoring::score_pool(&records, ev, &templates, variant, &cache_path, options))
    } else {
        return Err(value_err("evaluator must be a MockEvaluator or HttpEvaluator"));
    }
    .map_err(to_py)?;
    let failed = outcome.failures.into_iter().map(|f| f.sample_id).collect();
    Ok((wrap_scores(outcome.scores), failed))
}

#[pyfunction]
#[pyo3(signature = (scores, yes_threshold = 0.0, no_threshold = 0.0))]
fn filter_aligned(scores: Vec<PyCvsScore>, yes_threshold: f64, no_threshold: f64) -> Vec<PyCvsScore> {
    wrap_scores(selection::filter_aligned(&unwrap_scores(scores), yes_threshold, no_threshold))
}

#[pyfunction]
#[pyo3(signature = (scores, yes_threshold = 0.0, no_threshold = 0.0))]
fn retention_fraction(scores: Vec<PyCvsScore>, yes_threshold: f64, no_threshold: f64) -> PyResult<f64> {
    selection::retention_fraction(&unwrap_scores(scores), yes_threshold, no_threshold).map_err(to_py)
}

#[pyclass(name = "SelectionResult", get_all, skip_from_py_object)]
struct PySelectionResult {
    selected_ids: Vec<String>,
    mask: BTreeMap<String, u8>,
    pool_size: usize,
    filtered_pool_size: usize,
    budget_effective: usize,
    strategy: String,
    warnings: Vec<String>,
}

/// Ranks scores with one of `low`, `high`, `no`, `random`. Exactly one of
/// `budget_count` and `budget_ratio` must be given.
#[pyfunction]
#[pyo3(signature = (scores, strategy, budget_count = None, budget_ratio = None, yes_threshold = 0.0, no_threshold = 0.0, seed = 0))]
fn select(
    scores: Vec<PyCvsScore>,
    strategy: &str,
    budget_count: Option<usize>,
    budget_ratio: Option<f64>,
    yes_threshold: f64,
    no_threshold: f64,
    seed: u64,
) -> PyResult<PySelectionResult> {
    let strategy: Strategy = strategy.parse().map_err(to_py)?;
    let budget = match (budget_count, budget_ratio) {
        (Some(k), None) => Budget::Count(k),
        (None, Some(r)) => Budget::Ratio(r),
        _ => return Err(value_err("give exactly one of budget_count and budget_ratio")),
    };
    let config = SelectionConfig {
        strategy,
        budget,
        yes_threshold,
        no_threshold,
        rng_seed: seed,
    };
    let r = selection::select(&unwrap_scores(scores), &config).map_err(to_py)?;
    Ok(PySelectionResult {
        selected_ids: r.selected_ids,
        mask: r.mask,
        pool_size: r.pool_size,
        filtered_pool_size: r.filtered_pool_size,
        budget_effective: r.budget_effective,
        strategy: r.strategy_used.as_str().to_string(),
        warnings: r.warnings,
    })
}

/// Mean of `subset / full * 100` over `(benchmark, subset, full)` entries.
#[pyfunction]
fn compute_arp(entries: Vec<(String, f64, f64)>) -> PyResult<f64> {
    let entries: Vec<_> = entries
        .into_iter()
        .map(|(b, s, f)| reporting::BenchmarkEntry::new(b, s, f))
        .collect();
    reporting::compute_arp(&entries).map_err(to_py)
}

/// Returns `(counts, underflow, overflow)` over half-open bins.
#[pyfunction]
#[pyo3(signature = (scores, bin_edges, metric = "cvs_yes"))]
fn histogram(scores: Vec<PyCvsScore>, bin_edges: Vec<f64>, metric: &str) -> PyResult<(Vec<u64>, u64, u64)> {
    let metric = match metric {
        "cvs_yes" => ScoreMetric::CvsYes,
        "cvs_no" => ScoreMetric::CvsNo,
        _ => return Err(value_err(format!("unknown metric {metric:?}"))),
    };
    let h = reporting::histogram(&unwrap_scores(scores), metric, &bin_edges).map_err(to_py)?;
    Ok((h.counts, h.underflow, h.overflow))
}

#[pymodule]
pub fn cvs_select(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySampleRecord>()?;
    m.add_class::<PyRenderedPrompt>()?;
    m.add_class::<PyPromptTemplates>()?;
    m.add_class::<PyCvsScore>()?;
    m.add_class::<PyMockEvaluator>()?;
    m.add_class::<PyHttpEvaluator>()?;
    m.add_class::<PySelectionResult>()?;
    m.add_function(wrap_pyfunction!(load_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(write_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(extract_yes_no_probs, m)?)?;
    m.add_function(wrap_pyfunction!(cvs_shift, m)?)?;
    m.add_function(wrap_pyfunction!(score_pool, m)?)?;
    m.add_function(wrap_pyfunction!(filter_aligned, m)?)?;
    m.add_function(wrap_pyfunction!(retention_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(compute_arp, m)?)?;
    m.add_function(wrap_pyfunction!(histogram, m)?)?;
    Ok(())
}
