//! Alignment filtering and budgeted subset selection.
//!
//! A sample passes the alignment filter when the question raises its Yes
//! probability and lowers its No probability (`cvs_yes > 0`, `cvs_no < 0`
//! with the default thresholds). Four strategies then pick at most `K`
//! samples:
//!
//! | strategy | pool       | order                |
//! |----------|------------|----------------------|
//! | `Low`    | filtered   | ascending `cvs_yes`  |
//! | `High`   | filtered   | descending `cvs_yes` |
//! | `No`     | unfiltered | descending `cvs_no`  |
//! | `Random` | unfiltered | seeded permutation   |
//!
//! Ties are broken by ascending sample id, which makes every ranking a total
//! order independent of the input order.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::CvsScore;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("invalid threshold: {0}")]
    InvalidThreshold(String),
    #[error("unknown strategy {0:?} (expected low, high, no or random)")]
    UnknownStrategy(String),
    #[error("cannot select from an empty score pool")]
    EmptyPool,
    #[error("sample id {0:?} is scored more than once")]
    DuplicateId(String),
}

impl SelectionError {
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            SelectionError::InvalidBudget(_)
                | SelectionError::InvalidThreshold(_)
                | SelectionError::UnknownStrategy(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Low,
    High,
    No,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Low, Strategy::High, Strategy::No, Strategy::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Low => "low",
            Strategy::High => "high",
            Strategy::No => "no",
            Strategy::Random => "random",
        }
    }

    /// Whether the strategy ranks only samples passing the alignment filter.
    pub fn uses_filter(self) -> bool {
        matches!(self, Strategy::Low | Strategy::High)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = SelectionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Strategy::Low),
            "high" => Ok(Strategy::High),
            "no" => Ok(Strategy::No),
            "random" => Ok(Strategy::Random),
            _ => Err(SelectionError::UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Budget {
    /// Absolute number of samples.
    Count(usize),
    /// Fraction of the unfiltered pool, in `(0, 1]`.
    Ratio(f64),
}

impl Budget {
    /// Resolves to `K` for a pool of `pool_size`. Ratios round down with a
    /// minimum of one for non-empty pools.
    pub fn resolve(self, pool_size: usize) -> Result<usize, SelectionError> {
        match self {
            Budget::Count(0) => Err(SelectionError::InvalidBudget("count must be positive".into())),
            Budget::Count(k) => Ok(k),
            Budget::Ratio(r) if !(r > 0.0 && r <= 1.0) => Err(SelectionError::InvalidBudget(format!(
                "ratio {r} must lie in (0, 1]"
            ))),
            Budget::Ratio(_) if pool_size == 0 => Ok(0),
            Budget::Ratio(r) => {
                let raw = r * pool_size as f64;
                // Absorb representation error such as 0.29 * 100 = 28.999999999999996.
                let k = (raw * (1.0 + 1e-12)).floor() as usize;
                Ok(k.clamp(1, pool_size))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    pub budget: Budget,
    pub yes_threshold: f64,
    pub no_threshold: f64,
    pub rng_seed: u64,
}

impl SelectionConfig {
    pub fn new(strategy: Strategy, budget: Budget) -> Self {
        Self {
            strategy,
            budget,
            yes_threshold: 0.0,
            no_threshold: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        for (name, t) in [("yes", self.yes_threshold), ("no", self.no_threshold)] {
            if !t.is_finite() {
                return Err(SelectionError::InvalidThreshold(format!("{name} threshold {t} is not finite")));
            }
        }
        // Resolve against a pool of one to validate the budget shape.
        self.budget.resolve(1).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub selected_ids: Vec<String>,
    /// Membership of every scored id in the subset.
    pub mask: BTreeMap<String, u8>,
    pub pool_size: usize,
    pub filtered_pool_size: usize,
    pub budget_effective: usize,
    pub strategy_used: Strategy,
    pub scores_snapshot_ref: Option<PathBuf>,
    pub warnings: Vec<String>,
}

/// The alignment predicate with strict inequalities.
pub fn is_aligned(score: &CvsScore, yes_threshold: f64, no_threshold: f64) -> bool {
    score.cvs_yes > yes_threshold && score.cvs_no < no_threshold
}

/// Keeps scores with `cvs_yes > yes_threshold` and `cvs_no < no_threshold`,
/// preserving input order.
pub fn filter_aligned(scores: &[CvsScore], yes_threshold: f64, no_threshold: f64) -> Vec<CvsScore> {
    scores
        .iter()
        .filter(|s| is_aligned(s, yes_threshold, no_threshold))
        .cloned()
        .collect()
}

pub fn retention_fraction(scores: &[CvsScore], yes_threshold: f64, no_threshold: f64) -> Result<f64, SelectionError> {
    if scores.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    let kept = scores
        .iter()
        .filter(|s| is_aligned(s, yes_threshold, no_threshold))
        .count();
    Ok(kept as f64 / scores.len() as f64)
}

fn ascending_yes(a: &CvsScore, b: &CvsScore) -> Ordering {
    a.cvs_yes.total_cmp(&b.cvs_yes).then_with(|| a.sample_id.cmp(&b.sample_id))
}

fn descending_yes(a: &CvsScore, b: &CvsScore) -> Ordering {
    b.cvs_yes.total_cmp(&a.cvs_yes).then_with(|| a.sample_id.cmp(&b.sample_id))
}

fn descending_no(a: &CvsScore, b: &CvsScore) -> Ordering {
    b.cvs_no.total_cmp(&a.cvs_no).then_with(|| a.sample_id.cmp(&b.sample_id))
}

pub fn select(scores: &[CvsScore], config: &SelectionConfig) -> Result<SelectionResult, SelectionError> {
    config.validate()?;
    if scores.is_empty() {
        return Err(SelectionError::EmptyPool);
    }
    let mut seen = HashSet::with_capacity(scores.len());
    for s in scores {
        if !seen.insert(s.sample_id.as_str()) {
            return Err(SelectionError::DuplicateId(s.sample_id.clone()));
        }
    }

    let k = config.budget.resolve(scores.len())?;
    let filtered: Vec<&CvsScore> = scores
        .iter()
        .filter(|s| is_aligned(s, config.yes_threshold, config.no_threshold))
        .collect();
    let mut warnings = Vec::new();

    let selected_ids: Vec<String> = match config.strategy {
        Strategy::Low | Strategy::High => {
            let mut pool = filtered.clone();
            if pool.is_empty() {
                warnings.push("no sample passes the alignment filter; selection is empty".to_string());
            }
            let cmp = if config.strategy == Strategy::Low { ascending_yes } else { descending_yes };
            pool.sort_by(|a, b| cmp(a, b));
            pool.into_iter().take(k).map(|s| s.sample_id.clone()).collect()
        }
        Strategy::No => {
            let mut pool: Vec<&CvsScore> = scores.iter().collect();
            pool.sort_by(|a, b| descending_no(a, b));
            pool.into_iter().take(k).map(|s| s.sample_id.clone()).collect()
        }
        Strategy::Random => {
            let mut ids: Vec<&str> = scores.iter().map(|s| s.sample_id.as_str()).collect();
            ids.sort_unstable();
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            let take = k.min(ids.len());
            rand::seq::index::sample(&mut rng, ids.len(), take)
                .into_iter()
                .map(|i| ids[i].to_string())
                .collect()
        }
    };

    let eligible = if config.strategy.uses_filter() { filtered.len() } else { scores.len() };
    if k > eligible && eligible > 0 {
        warnings.push(format!(
            "budget {k} exceeds the {eligible} eligible samples; selecting all of them"
        ));
    }

    let chosen: HashSet<&str> = selected_ids.iter().map(String::as_str).collect();
    let mask = scores
        .iter()
        .map(|s| (s.sample_id.clone(), u8::from(chosen.contains(s.sample_id.as_str()))))
        .collect();

    Ok(SelectionResult {
        selected_ids,
        mask,
        pool_size: scores.len(),
        filtered_pool_size: filtered.len(),
        budget_effective: k,
        strategy_used: config.strategy,
        scores_snapshot_ref: None,
        warnings,
    })
}

/// Sidecar written next to a selected-subset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub strategy: Strategy,
    pub budget_requested: Budget,
    pub budget_effective: usize,
    pub pool_size: usize,
    pub filtered_pool_size: usize,
    pub retention_fraction: f64,
    pub rng_seed: Option<u64>,
    pub yes_threshold: f64,
    pub no_threshold: f64,
    pub selected_count: usize,
}

impl SelectionReport {
    pub fn new(config: &SelectionConfig, result: &SelectionResult, retention_fraction: f64) -> Self {
        Self {
            strategy: config.strategy,
            budget_requested: config.budget,
            budget_effective: result.budget_effective,
            pool_size: result.pool_size,
            filtered_pool_size: result.filtered_pool_size,
            retention_fraction,
            rng_seed: (config.strategy == Strategy::Random).then_some(config.rng_seed),
            yes_threshold: config.yes_threshold,
            no_threshold: config.no_threshold,
            selected_count: result.selected_ids.len(),
        }
    }
}
