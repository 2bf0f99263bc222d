//! A deterministic in-process mock of an OpenAI-compatible inference
//! server, for integration tests and desk-scale pipeline runs.
//!
//! Routes: `POST /v1/completions`, `POST /v1/chat/completions`,
//! `POST /v1/embeddings`, `GET /health`. Every response is a pure
//! function of the request body, so retries, concurrency, and reruns
//! cannot change what a given request receives:
//!
//! - Completion choice `i` of a request carrying `seed = s` gets the
//!   canned text for absolute sample index `s + i` (clients that chunk a
//!   big `n` into several requests offset the seed by the chunk start,
//!   which keeps the global sequence stable). Canned topics cycle per 64
//!   samples: 32 sports, 16 health, 8 politics, 8 science.
//! - Chat requests that look like a topic-extraction instruction are
//!   answered with the topic word found in the quoted text; other chat
//!   requests behave like completions.
//! - Embeddings are unit vectors derived from a hash of the input text.
//!
//! Failure injection (`fail_first_n`) returns HTTP 500 for the first n
//! POST requests, for retry-path tests. Optional latency jitter
//! randomizes response ordering without affecting content.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};

/// Topics assigned to sample indexes, cycling every 64 samples with the
/// split 32/16/8/8. The normalized entropy of that split is
/// 0.875 = -(0.5 ln 0.5 + 0.25 ln 0.25 + 2 * 0.125 ln 0.125) / ln 4.
pub fn canned_topic(sample_index: u64) -> &'static str {
    match sample_index % 64 {
        0..=31 => "sports",
        32..=47 => "health",
        48..=55 => "politics",
        _ => "science",
    }
}

const ADJECTIVES: [&str; 7] = [
    "strong", "modest", "surprising", "steady", "uneven", "rapid", "quiet",
];

/// The deterministic generation text for an absolute sample index.
pub fn canned_text(sample_index: u64) -> String {
    let topic = canned_topic(sample_index);
    let adj = ADJECTIVES[(sample_index % 7) as usize];
    let first = format!("{}{}", topic[..1].to_uppercase(), &topic[1..]);
    let mut text = format!(
        "{first} update number {sample_index}. The {topic} desk reports {adj} progress today."
    );
    if sample_index.is_multiple_of(3) {
        text.push_str(&format!(" Observers call it a {adj} week for {topic}."));
    }
    text
}

/// FNV-1a, used to derive deterministic embeddings and jitter.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn xorshift(mut x: u64) -> u64 {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
    x
}

/// Deterministic unit vector for a text, dimension 8.
pub fn canned_embedding(text: &str) -> Vec<f64> {
    let mut state = fnv1a(text.as_bytes()) | 1;
    let mut values: Vec<f64> = (0..8)
        .map(|_| {
            state = xorshift(state);
            // Map to [-1, 1).
            (state as f64 / u64::MAX as f64) * 2.0 - 1.0
        })
        .collect();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        values[0] = 1.0;
        return values;
    }
    for v in &mut values {
        *v /= norm;
    }
    values
}

/// Alternative-token probability `i` (0-based) of `k`, scaled so the
/// whole top-k list carries probability mass 0.98.
pub fn alt_probability(i: u32, k: u32) -> f64 {
    let weight = 0.5f64.powi(i as i32 + 1);
    let total: f64 = 1.0 - 0.5f64.powi(k as i32);
    0.98 * weight / total
}

#[derive(Debug, Clone, Default)]
pub struct MockConfig {
    /// Respond 500 to this many POST requests before behaving normally.
    pub fail_first_n: usize,
    /// Uniform latency jitter range in milliseconds, inclusive.
    pub latency_ms: Option<(u64, u64)>,
    /// Completions echo the request prompt back as the generation text.
    pub echo_prompt: bool,
}

#[derive(Default)]
struct Counters {
    total: AtomicUsize,
    completions: AtomicUsize,
    chats: AtomicUsize,
    embeddings: AtomicUsize,
    injected_failures: AtomicUsize,
}

struct State {
    config: MockConfig,
    counters: Counters,
    fail_remaining: AtomicUsize,
    jitter_seq: AtomicUsize,
}

pub struct MockServer {
    addr: SocketAddr,
    state: Arc<State>,
    stop: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(config: MockConfig) -> std::io::Result<MockServer> {
        Self::start_on(config, "127.0.0.1:0")
    }

    pub fn start_on(config: MockConfig, bind: &str) -> std::io::Result<MockServer> {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        let state = Arc::new(State {
            fail_remaining: AtomicUsize::new(config.fail_first_n),
            config,
            counters: Counters::default(),
            jitter_seq: AtomicUsize::new(0),
        });
        let stop = Arc::new(AtomicBool::new(false));
        let accept_state = Arc::clone(&state);
        let accept_stop = Arc::clone(&stop);
        let accept_thread = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let state = Arc::clone(&accept_state);
                std::thread::spawn(move || {
                    let _ = handle_connection(stream, &state);
                });
            }
        });
        Ok(MockServer {
            addr,
            state,
            stop,
            accept_thread: Some(accept_thread),
        })
    }

    /// Base URL, e.g. `http://127.0.0.1:41234`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn total_requests(&self) -> usize {
        self.state.counters.total.load(Ordering::SeqCst)
    }

    pub fn completion_requests(&self) -> usize {
        self.state.counters.completions.load(Ordering::SeqCst)
    }

    pub fn chat_requests(&self) -> usize {
        self.state.counters.chats.load(Ordering::SeqCst)
    }

    pub fn embedding_requests(&self) -> usize {
        self.state.counters.embeddings.load(Ordering::SeqCst)
    }

    pub fn injected_failures(&self) -> usize {
        self.state.counters.injected_failures.load(Ordering::SeqCst)
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop_now();
    }
}

fn handle_connection(mut stream: TcpStream, state: &State) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let (method, path, body) = match read_request(&mut stream)? {
        Some(parts) => parts,
        None => return Ok(()),
    };
    state.counters.total.fetch_add(1, Ordering::SeqCst);

    if let Some((lo, hi)) = state.config.latency_ms {
        let seq = state.jitter_seq.fetch_add(1, Ordering::SeqCst) as u64;
        let span = hi.saturating_sub(lo) + 1;
        let jitter = lo + xorshift(seq.wrapping_add(0x9e3779b97f4a7c15) | 1) % span;
        std::thread::sleep(Duration::from_millis(jitter));
    }

    if method == "GET" && path == "/health" {
        return write_response(&mut stream, 200, &json!({"ok": true}));
    }
    if method != "POST" {
        return write_response(&mut stream, 404, &json!({"error": "not found"}));
    }

    // Failure injection applies to all POST routes.
    let injected = state
        .fail_remaining
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok();
    if injected {
        state.counters.injected_failures.fetch_add(1, Ordering::SeqCst);
        return write_response(&mut stream, 500, &json!({"error": "injected failure"}));
    }

    let request: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => {
            return write_response(
                &mut stream,
                400,
                &json!({"error": format!("invalid JSON body: {e}")}),
            )
        }
    };

    match path.as_str() {
        "/v1/completions" => {
            state.counters.completions.fetch_add(1, Ordering::SeqCst);
            write_response(&mut stream, 200, &completions_response(&request, state))
        }
        "/v1/chat/completions" => {
            state.counters.chats.fetch_add(1, Ordering::SeqCst);
            write_response(&mut stream, 200, &chat_response(&request, state))
        }
        "/v1/embeddings" => {
            state.counters.embeddings.fetch_add(1, Ordering::SeqCst);
            write_response(&mut stream, 200, &embeddings_response(&request))
        }
        _ => write_response(&mut stream, 404, &json!({"error": "unknown route"})),
    }
}

type RequestParts = (String, String, Vec<u8>);

fn read_request(stream: &mut TcpStream) -> std::io::Result<Option<RequestParts>> {
    let mut reader = BufReader::new(stream);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(None); // Closed without a request (e.g. the shutdown poke).
    }
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();
    if method.is_empty() || path.is_empty() {
        return Ok(None);
    }

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                content_length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    if content_length > 0 {
        reader.read_exact(&mut body)?;
    }
    Ok(Some((method, path, body)))
}

fn write_response(stream: &mut TcpStream, status: u16, body: &Value) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        429 => "Too Many Requests",
        _ => "Internal Server Error",
    };
    let bytes = serde_json::to_vec(body).expect("mock body serializes");
    let header = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        bytes.len()
    );
    stream.write_all(header.as_bytes())?;
    stream.write_all(&bytes)?;
    stream.flush()
}

fn base_index(request: &Value) -> u64 {
    request.get("seed").and_then(Value::as_u64).unwrap_or(0)
}

/// Number of whole tokens the response should carry when logprobs are
/// requested: exactly `max_tokens`, so step-entropy runs see full-length
/// trajectories.
fn token_stream(text: &str, max_tokens: u64) -> Vec<String> {
    let base: Vec<&str> = text.split_whitespace().collect();
    (0..max_tokens as usize)
        .map(|i| base[i % base.len()].to_string())
        .collect()
}

fn completion_logprobs(tokens: &[String], k: u32) -> Value {
    let token_logprobs: Vec<f64> = tokens.iter().map(|_| alt_probability(0, k).ln()).collect();
    let top_logprobs: Vec<Value> = tokens
        .iter()
        .map(|token| {
            let mut map = serde_json::Map::new();
            for i in 0..k {
                let alt = if i == 0 {
                    token.clone()
                } else {
                    format!("{token}~{i}")
                };
                map.insert(alt, json!(alt_probability(i, k).ln()));
            }
            Value::Object(map)
        })
        .collect();
    json!({
        "tokens": tokens,
        "token_logprobs": token_logprobs,
        "top_logprobs": top_logprobs,
    })
}

fn chat_logprobs(tokens: &[String], k: u32) -> Value {
    let content: Vec<Value> = tokens
        .iter()
        .map(|token| {
            let top: Vec<Value> = (0..k)
                .map(|i| {
                    let alt = if i == 0 {
                        token.clone()
                    } else {
                        format!("{token}~{i}")
                    };
                    json!({"token": alt, "logprob": alt_probability(i, k).ln()})
                })
                .collect();
            json!({
                "token": token,
                "logprob": alt_probability(0, k).ln(),
                "top_logprobs": top,
            })
        })
        .collect();
    json!({"content": content})
}

fn generation_choice_text(request: &Value, state: &State, index: u64) -> String {
    if state.config.echo_prompt {
        if let Some(prompt) = request.get("prompt").and_then(Value::as_str) {
            return prompt.to_string();
        }
        if let Some(content) = chat_user_content(request) {
            return content.to_string();
        }
    }
    canned_text(base_index(request) + index)
}

fn completions_response(request: &Value, state: &State) -> Value {
    let n = request.get("n").and_then(Value::as_u64).unwrap_or(1);
    let top_k = request.get("logprobs").and_then(Value::as_u64).unwrap_or(0) as u32;
    let max_tokens = request.get("max_tokens").and_then(Value::as_u64).unwrap_or(16);
    let choices: Vec<Value> = (0..n)
        .map(|i| {
            let text = generation_choice_text(request, state, i);
            if top_k > 0 {
                let tokens = token_stream(&text, max_tokens);
                json!({
                    "index": i,
                    "text": tokens.join(" "),
                    "finish_reason": "length",
                    "logprobs": completion_logprobs(&tokens, top_k),
                })
            } else {
                json!({
                    "index": i,
                    "text": text,
                    "finish_reason": "stop",
                })
            }
        })
        .collect();
    json!({
        "id": "mock-cmpl",
        "object": "text_completion",
        "model": request.get("model").cloned().unwrap_or(Value::Null),
        "choices": choices,
    })
}

fn chat_user_content(request: &Value) -> Option<&str> {
    request
        .get("messages")?
        .as_array()?
        .last()?
        .get("content")?
        .as_str()
}

/// The marker distinguishing topic-extraction chats from generation chats.
const EXTRACTION_MARKER: &str = "single word naming its main topic category";

const KNOWN_TOPICS: [&str; 7] = [
    "sports",
    "health",
    "politics",
    "science",
    "technology",
    "business",
    "entertainment",
];

fn extraction_reply(content: &str) -> &'static str {
    let lower = content.to_lowercase();
    // Skip past the instruction so topic words in it don't match.
    let text = lower
        .split_once("text:")
        .map(|(_, rest)| rest.to_string())
        .unwrap_or(lower);
    KNOWN_TOPICS
        .iter()
        .find(|t| text.contains(**t))
        .copied()
        .unwrap_or("other")
}

fn chat_response(request: &Value, state: &State) -> Value {
    let content = chat_user_content(request).unwrap_or("");
    if content.contains(EXTRACTION_MARKER) {
        let reply = extraction_reply(content);
        return json!({
            "id": "mock-chat",
            "object": "chat.completion",
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": reply},
                "finish_reason": "stop",
            }],
        });
    }

    let n = request.get("n").and_then(Value::as_u64).unwrap_or(1);
    let top_k = request
        .get("top_logprobs")
        .and_then(Value::as_u64)
        .unwrap_or(0) as u32;
    let max_tokens = request.get("max_tokens").and_then(Value::as_u64).unwrap_or(16);
    let choices: Vec<Value> = (0..n)
        .map(|i| {
            let text = generation_choice_text(request, state, i);
            if top_k > 0 {
                let tokens = token_stream(&text, max_tokens);
                json!({
                    "index": i,
                    "message": {"role": "assistant", "content": tokens.join(" ")},
                    "finish_reason": "length",
                    "logprobs": chat_logprobs(&tokens, top_k),
                })
            } else {
                json!({
                    "index": i,
                    "message": {"role": "assistant", "content": text},
                    "finish_reason": "stop",
                })
            }
        })
        .collect();
    json!({
        "id": "mock-chat",
        "object": "chat.completion",
        "model": request.get("model").cloned().unwrap_or(Value::Null),
        "choices": choices,
    })
}

fn embeddings_response(request: &Value) -> Value {
    let inputs: Vec<String> = match request.get("input") {
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().unwrap_or("").to_string())
            .collect(),
        Some(Value::String(s)) => vec![s.clone()],
        _ => vec![],
    };
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, text)| {
            json!({
                "object": "embedding",
                "index": i,
                "embedding": canned_embedding(text),
            })
        })
        .collect();
    json!({
        "object": "list",
        "model": request.get("model").cloned().unwrap_or(Value::Null),
        "data": data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(url_addr: SocketAddr, path: &str, body: &Value) -> (u16, Value) {
        let mut stream = TcpStream::connect(url_addr).unwrap();
        let bytes = serde_json::to_vec(body).unwrap();
        let header = format!(
            "POST {path} HTTP/1.1\r\nHost: mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
            bytes.len()
        );
        stream.write_all(header.as_bytes()).unwrap();
        stream.write_all(&bytes).unwrap();
        let mut response = Vec::new();
        stream.read_to_end(&mut response).unwrap();
        let text = String::from_utf8(response).unwrap();
        let status: u16 = text
            .split_whitespace()
            .nth(1)
            .and_then(|s| s.parse().ok())
            .unwrap();
        let body_start = text.find("\r\n\r\n").unwrap() + 4;
        (status, serde_json::from_str(&text[body_start..]).unwrap())
    }

    #[test]
    fn canned_topic_distribution_is_32_16_8_8() {
        let mut counts = std::collections::BTreeMap::new();
        for i in 0..64 {
            *counts.entry(canned_topic(i)).or_insert(0) += 1;
        }
        assert_eq!(counts["sports"], 32);
        assert_eq!(counts["health"], 16);
        assert_eq!(counts["politics"], 8);
        assert_eq!(counts["science"], 8);
        // The cycle repeats identically.
        assert_eq!(canned_topic(0), canned_topic(64));
    }

    #[test]
    fn completions_choices_follow_seed_offset() {
        let server = MockServer::start(MockConfig::default()).unwrap();
        let (status, body) = post(
            server.addr(),
            "/v1/completions",
            &json!({"model": "m", "prompt": "p", "n": 2, "seed": 5}),
        );
        assert_eq!(status, 200);
        assert_eq!(body["choices"][0]["text"], canned_text(5));
        assert_eq!(body["choices"][1]["text"], canned_text(6));
        assert_eq!(server.completion_requests(), 1);
    }

    #[test]
    fn logprob_responses_carry_top_k_sorted_mass() {
        let server = MockServer::start(MockConfig::default()).unwrap();
        let (_, body) = post(
            server.addr(),
            "/v1/completions",
            &json!({"model": "m", "prompt": "p", "max_tokens": 4, "logprobs": 5}),
        );
        let choice = &body["choices"][0];
        assert_eq!(choice["finish_reason"], "length");
        let tokens = choice["logprobs"]["tokens"].as_array().unwrap();
        assert_eq!(tokens.len(), 4);
        let top = choice["logprobs"]["top_logprobs"][0].as_object().unwrap();
        assert_eq!(top.len(), 5);
        let mass: f64 = top.values().map(|lp| lp.as_f64().unwrap().exp()).sum();
        assert!((mass - 0.98).abs() < 1e-9);
    }

    #[test]
    fn extraction_chat_returns_topic_word() {
        let server = MockServer::start(MockConfig::default()).unwrap();
        let content = format!(
            "Read the following text and reply with a single word naming its main topic category. Text: {}",
            canned_text(40)
        );
        let (_, body) = post(
            server.addr(),
            "/v1/chat/completions",
            &json!({"model": "m", "messages": [{"role": "user", "content": content}]}),
        );
        assert_eq!(body["choices"][0]["message"]["content"], "health");
    }

    #[test]
    fn fail_first_n_injects_500s_then_recovers() {
        let server = MockServer::start(MockConfig {
            fail_first_n: 2,
            ..MockConfig::default()
        })
        .unwrap();
        let req = json!({"model": "m", "prompt": "p"});
        assert_eq!(post(server.addr(), "/v1/completions", &req).0, 500);
        assert_eq!(post(server.addr(), "/v1/completions", &req).0, 500);
        assert_eq!(post(server.addr(), "/v1/completions", &req).0, 200);
        assert_eq!(server.injected_failures(), 2);
        assert_eq!(server.total_requests(), 3);
    }

    #[test]
    fn embeddings_are_unit_norm_and_deterministic() {
        let server = MockServer::start(MockConfig::default()).unwrap();
        let req = json!({"model": "e", "input": ["alpha", "beta"]});
        let (_, body) = post(server.addr(), "/v1/embeddings", &req);
        let (_, body2) = post(server.addr(), "/v1/embeddings", &req);
        assert_eq!(body["data"], body2["data"]);
        let v: Vec<f64> = body["data"][0]["embedding"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(v.len(), 8);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert_ne!(body["data"][0]["embedding"], body["data"][1]["embedding"]);
    }

    #[test]
    fn echo_mode_returns_the_prompt_verbatim() {
        let server = MockServer::start(MockConfig {
            echo_prompt: true,
            ..MockConfig::default()
        })
        .unwrap();
        let (_, body) = post(
            server.addr(),
            "/v1/completions",
            &json!({"model": "m", "prompt": "<|tag|>\nexact text", "n": 1}),
        );
        assert_eq!(body["choices"][0]["text"], "<|tag|>\nexact text");
    }
}
