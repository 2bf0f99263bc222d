//! Shared networking plumbing: a blocking JSON-POST client with retries,
//! request telemetry, and a bounded-parallelism map that preserves input
//! order.
//!
//! Retry contract (shared by every endpoint client): transport errors,
//! HTTP 429, and HTTP 5xx are retried with exponential backoff and
//! multiplicative jitter up to the policy budget; other statuses and
//! malformed response bodies fail immediately (a schema problem is not
//! transient).

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};

/// Environment variable carrying the bearer token for the generation
/// endpoint.
pub const GEN_API_KEY_ENV: &str = "PROMPTDIV_API_KEY";
/// Bearer token for the embedding endpoint; falls back to
/// [`GEN_API_KEY_ENV`].
pub const EMBED_API_KEY_ENV: &str = "PROMPTDIV_EMBED_API_KEY";
/// Bearer token for the labeling endpoint; falls back to
/// [`GEN_API_KEY_ENV`].
pub const LABEL_API_KEY_ENV: &str = "PROMPTDIV_LABEL_API_KEY";

/// First non-empty value among `vars`, if any.
pub fn api_key_from_env(vars: &[&str]) -> Option<String> {
    vars.iter()
        .filter_map(|v| std::env::var(v).ok())
        .find(|v| !v.is_empty())
}

/// Retry schedule for transient endpoint failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Maximum number of retries after the first attempt.
    pub budget: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            budget: 3,
            base_delay_ms: 200,
            max_delay_ms: 5_000,
        }
    }
}

impl RetryPolicy {
    /// Near-zero delays for tests exercising the retry path.
    pub fn fast(budget: u32) -> RetryPolicy {
        RetryPolicy {
            budget,
            base_delay_ms: 1,
            max_delay_ms: 4,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(16))
            .min(self.max_delay_ms);
        // Jitter in [0.5x, 1.5x] de-synchronizes concurrent workers.
        let jittered = exp as f64 * (0.5 + rand::random::<f64>());
        Duration::from_millis(jittered as u64)
    }
}

/// Monotonic counters for endpoint traffic, shared across worker threads.
#[derive(Debug, Default)]
pub struct Telemetry {
    requests: AtomicU64,
    retries: AtomicU64,
    cache_hits: AtomicU64,
}

/// A point-in-time copy of [`Telemetry`] counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TelemetrySnapshot {
    pub requests: u64,
    pub retries: u64,
    pub cache_hits: u64,
}

impl Telemetry {
    pub fn record_request(&self) {
        self.requests.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_retry(&self) {
        self.retries.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_cache_hit(&self) {
        self.cache_hits.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> TelemetrySnapshot {
        TelemetrySnapshot {
            requests: self.requests.load(Ordering::Relaxed),
            retries: self.retries.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        }
    }
}

/// A blocking JSON-over-HTTP client with the shared retry contract.
#[derive(Clone)]
pub struct HttpClient {
    agent: reqwest::blocking::Client,
    api_key: Option<String>,
    retry: RetryPolicy,
    telemetry: Arc<Telemetry>,
}

enum Attempt {
    Success(serde_json::Value),
    Transient(String),
    Fatal(Error),
}

impl HttpClient {
    pub fn new(timeout: Duration, retry: RetryPolicy, api_key: Option<String>) -> Result<HttpClient> {
        let agent = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::invalid(format!("failed to build HTTP client: {e}")))?;
        Ok(HttpClient {
            agent,
            api_key,
            retry,
            telemetry: Arc::new(Telemetry::default()),
        })
    }

    /// A client for unit tests that never reach the network.
    pub fn for_tests() -> HttpClient {
        HttpClient::new(Duration::from_secs(5), RetryPolicy::fast(0), None)
            .expect("test client")
    }

    pub fn telemetry(&self) -> Arc<Telemetry> {
        Arc::clone(&self.telemetry)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    /// POSTs `body` as JSON and decodes a JSON response, retrying
    /// transient failures per the policy.
    pub fn post_json(&self, url: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let mut attempt = 0u32;
        loop {
            self.telemetry.record_request();
            match self.try_once(url, body) {
                Attempt::Success(value) => return Ok(value),
                Attempt::Fatal(err) => return Err(err),
                Attempt::Transient(msg) => {
                    if attempt >= self.retry.budget {
                        return Err(Error::Transport {
                            url: url.to_string(),
                            msg: format!("{msg} (after {attempt} retries)"),
                        });
                    }
                    thread::sleep(self.retry.delay(attempt));
                    self.telemetry.record_retry();
                    attempt += 1;
                }
            }
        }
    }

    fn try_once(&self, url: &str, body: &serde_json::Value) -> Attempt {
        let mut request = self.agent.post(url).json(body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(format!("transport error: {e}")),
        };
        let status = response.status();
        if status.is_success() {
            let bytes = match response.bytes() {
                Ok(b) => b,
                Err(e) => return Attempt::Transient(format!("failed reading response body: {e}")),
            };
            return match serde_json::from_slice(&bytes) {
                Ok(value) => Attempt::Success(value),
                Err(e) => Attempt::Fatal(Error::Response {
                    url: url.to_string(),
                    msg: format!("response is not valid JSON: {e}"),
                }),
            };
        }
        let code = status.as_u16();
        let excerpt: String = response
            .text()
            .unwrap_or_default()
            .chars()
            .take(200)
            .collect();
        if code == 429 || status.is_server_error() {
            Attempt::Transient(format!("HTTP {code}: {excerpt}"))
        } else {
            Attempt::Fatal(Error::Http {
                url: url.to_string(),
                status: code,
                body: excerpt,
            })
        }
    }
}

/// Applies `f` to every item with at most `parallelism` concurrent calls,
/// returning results in input order. Item failures are isolated: one
/// error never cancels the other jobs.
pub fn parallel_map<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<Result<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    if items.is_empty() {
        return Vec::new();
    }
    let workers = parallelism.max(1).min(items.len());
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<R>)>();
    thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let f = &f;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let result = f(&items[i]);
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut slots: Vec<Option<Result<R>>> = (0..items.len()).map(|_| None).collect();
        for (i, result) in rx {
            slots[i] = Some(result);
        }
        slots
            .into_iter()
            .map(|slot| slot.expect("every index is delivered exactly once"))
            .collect()
    })
}
