use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{validate_floor, Evaluator, EvaluatorError, VerdictProbs, DEFAULT_PROBABILITY_FLOOR};
use crate::manifest::SampleRecord;
use crate::prompting::{ContextKind, RenderedPrompt};

/// Seed mixed into the hash for untabled mock lookups.
pub const MOCK_SEED: u64 = 0x5eed_c0de_2024_0001;

/// `(sample id, context) → (p_yes, p_no)` table for the mock evaluator.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockTable {
    entries: BTreeMap<(String, ContextKind), (f64, f64)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MockLine {
    id: String,
    context: ContextKind,
    p_yes: f64,
    p_no: f64,
}

impl MockTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, kind: ContextKind, p_yes: f64, p_no: f64) {
        self.entries.insert((id.into(), kind), (p_yes, p_no));
    }

    pub fn get(&self, id: &str, kind: ContextKind) -> Option<(f64, f64)> {
        // BTreeMap lookups need an owned key here; tables are small enough.
        self.entries.get(&(id.to_string(), kind)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Loads a JSONL table of `{"id", "context", "p_yes", "p_no"}` lines,
    /// with `context` one of `full`, `prior`, `text_prior`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvaluatorError> {
        let path = path.as_ref();
        let cfg = |m: String| EvaluatorError::Config(format!("mock table {}: {m}", path.display()));
        let file = File::open(path).map_err(|e| cfg(e.to_string()))?;
        let mut table = Self::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| cfg(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: MockLine =
                serde_json::from_str(&line).map_err(|e| cfg(format!("line {}: {e}", i + 1)))?;
            for p in [entry.p_yes, entry.p_no] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(cfg(format!("line {}: probability {p} outside [0, 1]", i + 1)));
                }
            }
            table.insert(entry.id, entry.context, entry.p_yes, entry.p_no);
        }
        Ok(table)
    }

    /// Writes the table as JSONL in key order.
    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(File::create(path)?);
        for ((id, kind), (y, n)) in &self.entries {
            let line = serde_json::json!({"id": id, "context": kind, "p_yes": y, "p_no": n});
            writeln!(out, "{line}")?;
        }
        out.flush()
    }
}

/// Pure mock lookup. Untabled keys get pseudo-random probabilities derived
/// from a SHA-256 of `(sample_id, context, MOCK_SEED)`, stable across runs
/// and platforms.
pub fn mock_verdict(sample_id: &str, kind: ContextKind, table: &MockTable, floor: f64) -> VerdictProbs {
    let (p_yes, p_no) = match table.get(sample_id, kind) {
        Some((y, n)) => (y.clamp(floor, 1.0), n.clamp(floor, 1.0)),
        None => hashed_probs(sample_id, kind, floor),
    };
    VerdictProbs {
        p_yes,
        p_no,
        context_kind: kind,
        raw_token_evidence: vec![("Yes".into(), p_yes.ln()), ("No".into(), p_no.ln())],
    }
}

fn hashed_probs(sample_id: &str, kind: ContextKind, floor: f64) -> (f64, f64) {
    let mut h = Sha256::new();
    h.update(sample_id.as_bytes());
    h.update([0u8]);
    h.update(kind.as_str().as_bytes());
    h.update([0u8]);
    h.update(MOCK_SEED.to_le_bytes());
    let digest = h.finalize();
    let word = |i: usize| u64::from_le_bytes(digest[i * 8..i * 8 + 8].try_into().unwrap());
    // 53-bit uniforms in (0, 1].
    let unit = |w: u64| ((w >> 11) + 1) as f64 / (1u64 << 53) as f64;
    let p_yes = unit(word(0));
    let p_no = (1.0 - p_yes) * unit(word(1));
    (p_yes.clamp(floor, 1.0), p_no.clamp(floor, 1.0))
}

/// One request seen by the mock, in arrival order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRequest {
    pub sample_id: String,
    pub context_kind: ContextKind,
    pub attach_image: bool,
}

/// Deterministic in-process evaluator backed by a [`MockTable`].
#[derive(Debug)]
pub struct MockEvaluator {
    table: MockTable,
    floor: f64,
    calls: AtomicUsize,
    requests: Mutex<Vec<RecordedRequest>>,
}

impl MockEvaluator {
    pub fn new(table: MockTable) -> Self {
        Self {
            table,
            floor: DEFAULT_PROBABILITY_FLOOR,
            calls: AtomicUsize::new(0),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self, EvaluatorError> {
        validate_floor(floor)?;
        self.floor = floor;
        Ok(self)
    }

    pub fn table(&self) -> &MockTable {
        &self.table
    }

    /// Number of verdicts served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl Evaluator for MockEvaluator {
    fn query_verdict(
        &self,
        sample: &SampleRecord,
        prompt: &RenderedPrompt,
    ) -> Result<VerdictProbs, EvaluatorError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.requests.lock().unwrap().push(RecordedRequest {
            sample_id: sample.id.clone(),
            context_kind: prompt.context_kind,
            attach_image: prompt.attach_image,
        });
        Ok(mock_verdict(&sample.id, prompt.context_kind, &self.table, self.floor))
    }
}
