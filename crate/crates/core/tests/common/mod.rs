#![allow(dead_code)]

pub mod oracle;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use cvs_core::evaluator::MockTable;
use cvs_core::manifest::{write_manifest, SampleRecord};
use cvs_core::prompting::ContextKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// A request captured by [`FakeEndpoint`].
#[derive(Debug, Clone)]
pub struct Captured {
    pub headers: Vec<(String, String)>,
    pub body: Value,
}

impl Captured {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    /// Text of the single user message.
    pub fn prompt_text(&self) -> String {
        self.body["messages"][0]["content"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|p| p["type"] == "text")
            .map(|p| p["text"].as_str().unwrap().to_string())
            .collect()
    }

    pub fn image_parts(&self) -> usize {
        self.body["messages"][0]["content"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|p| p["type"] == "image_url")
            .count()
    }
}

type Handler = dyn Fn(&Value) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server that records every request body and answers with
/// a caller-provided handler. One request per connection.
pub struct FakeEndpoint {
    pub url: String,
    requests: Arc<Mutex<Vec<Captured>>>,
    hits: Arc<AtomicUsize>,
}

impl FakeEndpoint {
    pub fn start(handler: impl Fn(&Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let hits = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        {
            let requests = requests.clone();
            let hits = hits.clone();
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(stream) = stream else { continue };
                    let requests = requests.clone();
                    let hits = hits.clone();
                    let handler = handler.clone();
                    std::thread::spawn(move || {
                        let _ = serve(stream, &*handler, &requests, &hits);
                    });
                }
            });
        }
        Self { url, requests, hits }
    }

    /// Always answers with the given chat-completion JSON.
    pub fn fixed(response: Value) -> Self {
        let text = response.to_string();
        Self::start(move |_| (200, text.clone()))
    }

    pub fn requests(&self) -> Vec<Captured> {
        self.requests.lock().unwrap().clone()
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn serve(
    stream: TcpStream,
    handler: &Handler,
    requests: &Mutex<Vec<Captured>>,
    hits: &AtomicUsize,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut headers = Vec::new();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.parse().unwrap_or(0);
            }
            headers.push((k, v));
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    hits.fetch_add(1, Ordering::SeqCst);
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let (status, text) = handler(&body);
    requests.lock().unwrap().push(Captured { headers, body });
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    stream.flush()
}

/// Chat-completion response whose first token has the given top-k list.
pub fn chat_response(top: &[(&str, f64)]) -> Value {
    let list: Vec<Value> = top
        .iter()
        .map(|(t, l)| serde_json::json!({"token": t, "logprob": l}))
        .collect();
    serde_json::json!({
        "choices": [{"index": 0, "logprobs": {"content": [{"token": top[0].0, "logprob": top[0].1, "top_logprobs": list}]}}]
    })
}

pub fn synthetic_records(n: usize) -> Vec<SampleRecord> {
    (0..n)
        .map(|i| {
            SampleRecord::new(
                format!("s{i:04}"),
                format!("img/{:03}.png", i % 97),
                format!("What is shown in region {i}?"),
                format!("Object {}", i * 7 % 13),
            )
        })
        .collect()
}

pub fn write_synthetic_manifest(dir: &Path, n: usize) -> (PathBuf, Vec<SampleRecord>) {
    let recs = synthetic_records(n);
    let path = dir.join("pool.jsonl");
    write_manifest(&recs, &path).unwrap();
    (path, recs)
}

/// Mock table where exactly the first `passing` records satisfy the
/// alignment filter (for the given prior context) and the rest fail it,
/// including boundary cases with an exactly zero shift.
pub fn alignment_table(records: &[SampleRecord], passing: usize, prior: ContextKind, seed: u64) -> MockTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = MockTable::new();
    for (i, r) in records.iter().enumerate() {
        let yes_prior: f64 = rng.gen_range(0.1..0.6);
        let no_prior: f64 = rng.gen_range(0.2..0.8);
        let (yes_full, no_full) = if i < passing {
            (yes_prior * rng.gen_range(1.05..1.6), no_prior * rng.gen_range(0.1..0.9))
        } else {
            match i % 4 {
                // Question lowers the Yes probability.
                0 => (yes_prior * rng.gen_range(0.2..0.95), no_prior * rng.gen_range(0.1..0.9)),
                // Question raises the No probability.
                1 => (yes_prior * rng.gen_range(1.05..1.6), (no_prior * rng.gen_range(1.05..1.2)).min(1.0)),
                // Zero affirmation shift sits on the excluded boundary.
                2 => (yes_prior, no_prior * 0.5),
                // Zero rejection shift.
                _ => (yes_prior * 1.5, no_prior),
            }
        };
        table.insert(r.id.clone(), ContextKind::Full, yes_full, no_full);
        table.insert(r.id.clone(), prior, yes_prior, no_prior);
    }
    table
}
