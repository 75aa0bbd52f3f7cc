//! Score summaries and benchmark outcomes.

use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::CvsScore;
use crate::selection::{is_aligned, SelectionResult, Strategy};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}:{line}: malformed benchmark line: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("selected ids missing from the scored pool: {}", .0.join(", "))]
    Consistency(Vec<String>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkEntry {
    pub benchmark: String,
    pub subset_score: f64,
    pub full_score: f64,
}

impl BenchmarkEntry {
    pub fn new(benchmark: impl Into<String>, subset_score: f64, full_score: f64) -> Self {
        Self {
            benchmark: benchmark.into(),
            subset_score,
            full_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub entries: Vec<BenchmarkEntry>,
    pub arp: f64,
    /// How per-benchmark ratios are averaged; always `"unweighted"`.
    pub weighting: &'static str,
}

impl BenchmarkReport {
    pub fn new(entries: Vec<BenchmarkEntry>) -> Result<Self, ReportError> {
        let arp = compute_arp(&entries)?;
        Ok(Self {
            entries,
            arp,
            weighting: "unweighted",
        })
    }
}

/// Average relative performance: the unweighted mean over benchmarks of
/// `subset / full × 100`.
pub fn compute_arp(entries: &[BenchmarkEntry]) -> Result<f64, ReportError> {
    if entries.is_empty() {
        return Err(ReportError::Domain("no benchmark entries".into()));
    }
    let mut total = 0.0;
    for e in entries {
        if !(e.full_score > 0.0 && e.full_score.is_finite()) {
            return Err(ReportError::Domain(format!(
                "{}: full-data score {} must be positive",
                e.benchmark, e.full_score
            )));
        }
        if !(e.subset_score >= 0.0 && e.subset_score.is_finite()) {
            return Err(ReportError::Domain(format!(
                "{}: subset score {} must be non-negative",
                e.benchmark, e.subset_score
            )));
        }
        total += e.subset_score / e.full_score * 100.0;
    }
    Ok(total / entries.len() as f64)
}

/// Reads line-delimited `{"benchmark", "subset_score", "full_score"}` records.
pub fn load_benchmarks(path: impl AsRef<Path>) -> Result<Vec<BenchmarkEntry>, ReportError> {
    let path = path.as_ref();
    let io = |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(File::open(path).map_err(io)?).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: BenchmarkEntry = serde_json::from_str(&line).map_err(|e| ReportError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        entries.push(entry);
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMetric {
    CvsYes,
    CvsNo,
}

impl ScoreMetric {
    pub fn of(self, s: &CvsScore) -> f64 {
        match self {
            ScoreMetric::CvsYes => s.cvs_yes,
            ScoreMetric::CvsNo => s.cvs_no,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMetric::CvsYes => "cvs_yes",
            ScoreMetric::CvsNo => "cvs_no",
        }
    }
}

/// Half-open bins `[e_i, e_{i+1})` with explicit out-of-range tallies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreHistogram {
    pub metric: ScoreMetric,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl ScoreHistogram {
    /// Two-column `lower_edge count` text for plotting tools.
    pub fn to_plot_text(&self) -> String {
        let mut out = format!("# {} lower_edge count\n", self.metric.as_str());
        for (edge, count) in self.bin_edges.iter().zip(&self.counts) {
            let _ = writeln!(out, "{edge} {count}");
        }
        out
    }
}

pub fn histogram(scores: &[CvsScore], metric: ScoreMetric, bin_edges: &[f64]) -> Result<ScoreHistogram, ReportError> {
    if bin_edges.len() < 2 {
        return Err(ReportError::Config("histogram needs at least two edges".into()));
    }
    if bin_edges.iter().any(|e| !e.is_finite()) || bin_edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ReportError::Config("histogram edges must be finite and strictly increasing".into()));
    }
    let mut h = ScoreHistogram {
        metric,
        bin_edges: bin_edges.to_vec(),
        counts: vec![0; bin_edges.len() - 1],
        underflow: 0,
        overflow: 0,
    };
    let last = bin_edges[bin_edges.len() - 1];
    for v in scores.iter().map(|s| metric.of(s)).filter(|v| v.is_finite()) {
        if v < bin_edges[0] {
            h.underflow += 1;
        } else if v >= last {
            h.overflow += 1;
        } else {
            // Number of edges <= v, minus one, is the bin index.
            let bin = bin_edges.partition_point(|&e| e <= v) - 1;
            h.counts[bin] += 1;
        }
    }
    Ok(h)
}

/// Evenly spaced edges from `lo` to `hi` inclusive.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let step = (hi - lo) / bins as f64;
    (0..=bins).map(|i| lo + step * i as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear-interpolation quantile at position `q · (n - 1)` of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn quantiles(values: &[f64]) -> Option<Quantiles> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(Quantiles {
        min: v[0],
        q25: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q75: quantile(&v, 0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionSummary {
    pub strategy: Strategy,
    pub budget_effective: usize,
    pub selected_count: usize,
    /// Share of the effective budget actually used.
    pub budget_usage: f64,
    pub selected_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub pool_size: usize,
    pub filtered_pool_size: usize,
    pub retention_fraction: f64,
    pub yes_threshold: f64,
    pub no_threshold: f64,
    pub cvs_yes_quantiles: Option<Quantiles>,
    pub cvs_no_quantiles: Option<Quantiles>,
    pub selection: Option<SelectionSummary>,
    pub benchmarks: Option<BenchmarkReport>,
}

/// Aggregates a scored pool and, optionally, a selection over it.
pub fn summarize_run(
    scores: &[CvsScore],
    selection: Option<&SelectionResult>,
    yes_threshold: f64,
    no_threshold: f64,
) -> Result<RunSummary, ReportError> {
    if scores.is_empty() {
        return Err(ReportError::Domain("no scores to summarize".into()));
    }
    let filtered = scores
        .iter()
        .filter(|s| is_aligned(s, yes_threshold, no_threshold))
        .count();
    let selection = match selection {
        None => None,
        Some(sel) => {
            let known: HashSet<&str> = scores.iter().map(|s| s.sample_id.as_str()).collect();
            let missing: Vec<String> = sel
                .selected_ids
                .iter()
                .filter(|id| !known.contains(id.as_str()))
                .cloned()
                .collect();
            if !missing.is_empty() {
                return Err(ReportError::Consistency(missing));
            }
            Some(SelectionSummary {
                strategy: sel.strategy_used,
                budget_effective: sel.budget_effective,
                selected_count: sel.selected_ids.len(),
                budget_usage: if sel.budget_effective == 0 {
                    0.0
                } else {
                    sel.selected_ids.len() as f64 / sel.budget_effective as f64
                },
                selected_ids: sel.selected_ids.clone(),
            })
        }
    };
    let yes: Vec<f64> = scores.iter().map(|s| s.cvs_yes).collect();
    let no: Vec<f64> = scores.iter().map(|s| s.cvs_no).collect();
    Ok(RunSummary {
        pool_size: scores.len(),
        filtered_pool_size: filtered,
        retention_fraction: filtered as f64 / scores.len() as f64,
        yes_threshold,
        no_threshold,
        cvs_yes_quantiles: quantiles(&yes),
        cvs_no_quantiles: quantiles(&no),
        selection,
        benchmarks: None,
    })
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pool size:          {}", self.pool_size)?;
        writeln!(
            f,
            "aligned samples:    {} (retention {:.4}, cvs_yes > {}, cvs_no < {})",
            self.filtered_pool_size, self.retention_fraction, self.yes_threshold, self.no_threshold
        )?;
        for (name, q) in [("cvs_yes", &self.cvs_yes_quantiles), ("cvs_no", &self.cvs_no_quantiles)] {
            if let Some(q) = q {
                writeln!(
                    f,
                    "{name:<8} min {:.6}  q25 {:.6}  median {:.6}  q75 {:.6}  max {:.6}",
                    q.min, q.q25, q.median, q.q75, q.max
                )?;
            }
        }
        match &self.selection {
            Some(s) => writeln!(
                f,
                "selection:          {} selected of budget {} ({})",
                s.selected_count, s.budget_effective, s.strategy
            )?,
            None => writeln!(f, "selection:          (none)")?,
        }
        if let Some(b) = &self.benchmarks {
            writeln!(f, "ARP:                {:.2} over {} benchmark(s), unweighted", b.arp, b.entries.len())?;
        }
        Ok(())
    }
}
