//! `score`, `select` and `stats` commands.
//!
//! Each command validates its whole configuration before touching the
//! network or writing any file. Scoring is the only expensive phase; its
//! cache is reused by any number of `select` and `stats` runs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::evaluator::{Evaluator, EvaluatorConfig, HttpEvaluator, MockEvaluator, MockTable};
use crate::manifest::{load_manifest, write_manifest, SampleRecord};
use crate::prompting::PromptTemplateSet;
use crate::reporting::{
    histogram, load_benchmarks, summarize_run, uniform_edges, BenchmarkReport, RunSummary, ScoreMetric,
};
use crate::scoring::{score_pool, CvsScore, FailurePolicy, PoolOptions, ScoreCache, ScoreVariant};
use crate::selection::{retention_fraction, select, Budget, SelectionConfig, SelectionReport, SelectionResult, Strategy};

#[derive(Debug, Parser)]
#[command(name = "cvs-select", version, about = "Score, filter and select visual-instruction samples")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Query the evaluator for every manifest sample and fill the score cache.
    Score(RunArgs),
    /// Filter and rank cached scores, writing the selected subset manifest.
    Select(RunArgs),
    /// Summarize cached scores, optionally with a selection and benchmark ARP.
    Stats(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Standard,
    NoVisualAnchor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Skip,
    Strict,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Candidate pool manifest (JSONL).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Score cache (JSONL).
    #[arg(long)]
    pub cache: PathBuf,
    /// Output path: subset manifest for `select`, summary JSON for `stats`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Chat-completions URL of the evaluator.
    #[arg(long, default_value = "http://127.0.0.1:8000/v1/chat/completions")]
    pub endpoint: String,
    #[arg(long, default_value = "llava-hf/llava-1.5-7b-hf")]
    pub model: String,
    /// TOML file overriding the prompt templates.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "standard")]
    pub variant: VariantArg,
    /// low, high, no or random.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long, conflicts_with = "budget_ratio")]
    pub budget_count: Option<usize>,
    #[arg(long)]
    pub budget_ratio: Option<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub yes_threshold: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub no_threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub concurrency: usize,
    #[arg(long, value_enum, default_value = "skip")]
    pub failure_policy: PolicyArg,
    /// Use the deterministic mock evaluator backed by this JSONL table.
    #[arg(long)]
    pub mock_table: Option<PathBuf>,
    /// Benchmark results (JSONL) for the ARP section of `stats`.
    #[arg(long)]
    pub benchmarks: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub top_logprobs: u32,
    #[arg(long, default_value_t = 60.0)]
    pub timeout_secs: f64,
    #[arg(long, default_value_t = 3)]
    pub max_retries: u32,
    #[arg(long, default_value_t = 1e-10)]
    pub probability_floor: f64,
}

/// Fully resolved configuration shared by all commands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest_path: Option<PathBuf>,
    pub cache_path: PathBuf,
    pub output_path: Option<PathBuf>,
    pub evaluator: EvaluatorConfig,
    pub templates_path: Option<PathBuf>,
    pub variant: ScoreVariant,
    /// `None` when no strategy was given.
    pub selection: Option<SelectionConfig>,
    pub concurrency_cap: usize,
    pub failure_policy: FailurePolicy,
    pub mock_table: Option<PathBuf>,
    pub benchmarks_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(cache_path: impl Into<PathBuf>) -> Self {
        Self {
            manifest_path: None,
            cache_path: cache_path.into(),
            output_path: None,
            evaluator: EvaluatorConfig::default(),
            templates_path: None,
            variant: ScoreVariant::Standard,
            selection: None,
            concurrency_cap: 8,
            failure_policy: FailurePolicy::Skip,
            mock_table: None,
            benchmarks_path: None,
        }
    }

    fn validate_common(&self) -> Result<()> {
        if self.concurrency_cap == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        if let Some(sel) = &self.selection {
            sel.validate()?;
        }
        let written: Vec<&Path> = [Some(self.cache_path.as_path()), self.output_path.as_deref()]
            .into_iter()
            .flatten()
            .collect();
        let read: Vec<&Path> = [self.manifest_path.as_deref(), self.templates_path.as_deref(), self.mock_table.as_deref(), self.benchmarks_path.as_deref()]
            .into_iter()
            .flatten()
            .collect();
        for (i, w) in written.iter().enumerate() {
            if written[i + 1..].contains(w) || read.contains(w) {
                return Err(Error::Config(format!("path {} is used twice", w.display())));
            }
        }
        Ok(())
    }

    fn require_manifest(&self) -> Result<&Path> {
        self.manifest_path
            .as_deref()
            .ok_or_else(|| Error::Config("--manifest is required".into()))
    }

    fn require_output(&self) -> Result<&Path> {
        self.output_path
            .as_deref()
            .ok_or_else(|| Error::Config("--out is required".into()))
    }

    fn require_selection(&self) -> Result<&SelectionConfig> {
        self.selection
            .as_ref()
            .ok_or_else(|| Error::Config("--strategy is required".into()))
    }

    fn templates(&self) -> Result<PromptTemplateSet> {
        Ok(match &self.templates_path {
            Some(p) => PromptTemplateSet::load(p)?,
            None => PromptTemplateSet::default(),
        })
    }
}

impl TryFrom<&RunArgs> for RunConfig {
    type Error = Error;

    fn try_from(a: &RunArgs) -> Result<Self> {
        let selection = match &a.strategy {
            None => None,
            Some(s) => {
                let strategy: Strategy = s.parse()?;
                let budget = match (a.budget_count, a.budget_ratio) {
                    (Some(k), None) => Budget::Count(k),
                    (None, Some(r)) => Budget::Ratio(r),
                    (None, None) => return Err(Error::Config("one of --budget-count or --budget-ratio is required".into())),
                    (Some(_), Some(_)) => return Err(Error::Config("--budget-count and --budget-ratio are exclusive".into())),
                };
                Some(SelectionConfig {
                    strategy,
                    budget,
                    yes_threshold: a.yes_threshold,
                    no_threshold: a.no_threshold,
                    rng_seed: a.seed,
                })
            }
        };
        if !(a.timeout_secs > 0.0 && a.timeout_secs.is_finite()) {
            return Err(Error::Config("--timeout-secs must be positive".into()));
        }
        Ok(RunConfig {
            manifest_path: a.manifest.clone(),
            cache_path: a.cache.clone(),
            output_path: a.out.clone(),
            evaluator: EvaluatorConfig {
                endpoint: a.endpoint.clone(),
                model_name: a.model.clone(),
                top_logprobs_requested: a.top_logprobs,
                request_timeout: Duration::from_secs_f64(a.timeout_secs),
                max_retries: a.max_retries,
                probability_floor: a.probability_floor,
                max_in_flight: a.concurrency.max(1),
                ..EvaluatorConfig::default()
            },
            templates_path: a.templates.clone(),
            variant: match a.variant {
                VariantArg::Standard => ScoreVariant::Standard,
                VariantArg::NoVisualAnchor => ScoreVariant::NoVisualAnchor,
            },
            selection,
            concurrency_cap: a.concurrency,
            failure_policy: match a.failure_policy {
                PolicyArg::Skip => FailurePolicy::Skip,
                PolicyArg::Strict => FailurePolicy::Strict,
            },
            mock_table: a.mock_table.clone(),
            benchmarks_path: a.benchmarks.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreReport {
    pub scored: usize,
    pub cached: usize,
    pub failed: usize,
    pub failed_ids: Vec<String>,
}

/// Builds the configured evaluator: the mock when a table is given, the HTTP
/// client otherwise.
pub fn build_evaluator(config: &RunConfig) -> Result<Box<dyn Evaluator>> {
    let wrap = |source| Error::Score(crate::scoring::ScoreError::Evaluator {
        sample_id: String::new(),
        context: crate::prompting::ContextKind::Full,
        source,
    });
    match &config.mock_table {
        Some(path) => {
            let table = MockTable::load(path).map_err(wrap)?;
            let mock = MockEvaluator::new(table)
                .with_floor(config.evaluator.probability_floor)
                .map_err(wrap)?;
            Ok(Box::new(mock))
        }
        None => {
            let root = config
                .manifest_path
                .as_deref()
                .and_then(Path::parent)
                .map(Path::to_path_buf)
                .unwrap_or_default();
            let mut ev = config.evaluator.clone();
            ev.max_in_flight = config.concurrency_cap;
            Ok(Box::new(HttpEvaluator::new(ev, root).map_err(wrap)?))
        }
    }
}

pub fn cmd_score(config: &RunConfig) -> Result<ScoreReport> {
    config.validate_common()?;
    if config.mock_table.is_none() {
        config.evaluator.validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    config.require_manifest()?;
    let evaluator = build_evaluator(config)?;
    cmd_score_with(config, evaluator.as_ref())
}

/// `score` with a caller-supplied evaluator.
pub fn cmd_score_with<E: Evaluator + ?Sized>(config: &RunConfig, evaluator: &E) -> Result<ScoreReport> {
    config.validate_common()?;
    let templates = config.templates()?;
    let manifest = load_manifest(config.require_manifest()?)?;
    for w in &manifest.warnings {
        log::warn!("{w}");
    }
    let outcome = score_pool(
        &manifest.records,
        evaluator,
        &templates,
        config.variant,
        &config.cache_path,
        PoolOptions {
            policy: config.failure_policy,
            concurrency: config.concurrency_cap,
        },
    )?;
    let failed_ids: Vec<String> = outcome.failures.iter().map(|f| f.sample_id.clone()).collect();
    if !outcome.failures.is_empty() {
        write_failures(&config.cache_path, &outcome.failures)?;
    }
    Ok(ScoreReport {
        scored: outcome.scored,
        cached: outcome.cached,
        failed: failed_ids.len(),
        failed_ids,
    })
}

fn write_failures(cache_path: &Path, failures: &[crate::scoring::SampleFailure]) -> Result<()> {
    let path = sibling(cache_path, "failures.jsonl");
    let mut text = String::new();
    for f in failures {
        let line = serde_json::json!({"id": f.sample_id, "index": f.index, "error": f.error.to_string()});
        text.push_str(&line.to_string());
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// `<dir>/<stem>.<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Location of the selection report for a subset manifest.
pub fn report_path(output: &Path) -> PathBuf {
    sibling(output, "report.json")
}

/// Scores for the manifest records, in manifest order, plus the ids that have
/// no cached score.
fn scores_for_manifest(records: &[SampleRecord], cache: &ScoreCache) -> (Vec<CvsScore>, Vec<String>) {
    let mut scores = Vec::with_capacity(records.len());
    let mut missing = Vec::new();
    for r in records {
        match cache.scores.get(&r.id) {
            Some(s) => scores.push(s.clone()),
            None => missing.push(r.id.clone()),
        }
    }
    (scores, missing)
}

#[derive(Debug, Clone)]
pub struct SelectOutcome {
    pub result: SelectionResult,
    pub report: SelectionReport,
    pub missing_ids: Vec<String>,
}

pub fn cmd_select(config: &RunConfig) -> Result<SelectOutcome> {
    config.validate_common()?;
    let sel_config = config.require_selection()?;
    let out = config.require_output()?;
    let manifest = load_manifest(config.require_manifest()?)?;
    let cache = ScoreCache::load(&config.cache_path, config.variant)?;
    let (scores, missing) = scores_for_manifest(&manifest.records, &cache);
    if !missing.is_empty() {
        if config.failure_policy == FailurePolicy::Strict {
            return Err(Error::Data(format!(
                "{} manifest sample(s) have no cached score: {}",
                missing.len(),
                missing.join(", ")
            )));
        }
        log::warn!("{} manifest sample(s) have no cached score and are skipped", missing.len());
    }
    let mut result = select(&scores, sel_config)?;
    result.scores_snapshot_ref = Some(config.cache_path.clone());
    for w in &result.warnings {
        log::warn!("{w}");
    }
    let retention = retention_fraction(&scores, sel_config.yes_threshold, sel_config.no_threshold)?;
    let report = SelectionReport::new(sel_config, &result, retention);

    let by_id: HashMap<&str, &SampleRecord> = manifest.records.iter().map(|r| (r.id.as_str(), r)).collect();
    let subset: Vec<SampleRecord> = result
        .selected_ids
        .iter()
        .map(|id| (*by_id[id.as_str()]).clone())
        .collect();
    write_manifest(&subset, out)?;
    write_json(&report_path(out), &report)?;
    Ok(SelectOutcome {
        result,
        report,
        missing_ids: missing,
    })
}

#[derive(Debug, Clone)]
pub struct StatsOutcome {
    pub summary: RunSummary,
    pub text: String,
    pub summary_path: PathBuf,
    pub histogram_paths: Vec<PathBuf>,
}

pub const HISTOGRAM_RANGE: (f64, f64) = (-10.0, 10.0);
pub const HISTOGRAM_BINS: usize = 40;

pub fn cmd_stats(config: &RunConfig) -> Result<StatsOutcome> {
    config.validate_common()?;
    let out = config.require_output()?.to_path_buf();
    let benchmarks = match &config.benchmarks_path {
        Some(p) => Some(load_benchmarks(p)?),
        None => None,
    };
    let cache = ScoreCache::load(&config.cache_path, config.variant)?;
    let scores = match &config.manifest_path {
        Some(p) => scores_for_manifest(&load_manifest(p)?.records, &cache).0,
        None => {
            let mut v: Vec<CvsScore> = cache.scores.into_values().collect();
            v.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
            v
        }
    };
    if scores.is_empty() {
        return Err(Error::Data(format!(
            "score cache {} holds no {} scores",
            config.cache_path.display(),
            config.variant
        )));
    }
    let (yes_t, no_t) = match &config.selection {
        Some(s) => (s.yes_threshold, s.no_threshold),
        None => (0.0, 0.0),
    };
    let selection = match &config.selection {
        Some(s) => Some(select(&scores, s)?),
        None => None,
    };
    let mut summary = summarize_run(&scores, selection.as_ref(), yes_t, no_t)?;
    if let Some(entries) = benchmarks {
        summary.benchmarks = Some(BenchmarkReport::new(entries)?);
    }

    write_json(&out, &summary)?;
    let edges = uniform_edges(HISTOGRAM_RANGE.0, HISTOGRAM_RANGE.1, HISTOGRAM_BINS);
    let mut histogram_paths = Vec::new();
    for metric in [ScoreMetric::CvsYes, ScoreMetric::CvsNo] {
        let h = histogram(&scores, metric, &edges)?;
        let path = sibling(&out, &format!("{}.hist.txt", metric.as_str()));
        std::fs::write(&path, h.to_plot_text()).map_err(|e| Error::io(&path, e))?;
        histogram_paths.push(path);
    }
    Ok(StatsOutcome {
        text: summary.to_string(),
        summary,
        summary_path: out,
        histogram_paths,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (args, which) = match &cli.command {
        Command::Score(a) => (a, "score"),
        Command::Select(a) => (a, "select"),
        Command::Stats(a) => (a, "stats"),
    };
    let result = RunConfig::try_from(args).and_then(|config| match &cli.command {
        Command::Score(_) => cmd_score(&config).map(|r| {
            eprintln!("scored {}, cached {}, failed {}", r.scored, r.cached, r.failed);
            if r.failed > 0 {
                eprintln!(
                    "failures recorded in {}",
                    sibling(&config.cache_path, "failures.jsonl").display()
                );
            }
        }),
        Command::Select(_) => cmd_select(&config).map(|o| {
            eprintln!(
                "selected {} of {} samples ({} aligned, strategy {})",
                o.result.selected_ids.len(),
                o.result.pool_size,
                o.result.filtered_pool_size,
                o.result.strategy_used
            );
        }),
        Command::Stats(_) => cmd_stats(&config).map(|o| print!("{}", o.text)),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("cvs-select {which}: {e}");
            e.exit_code()
        }
    }
}
