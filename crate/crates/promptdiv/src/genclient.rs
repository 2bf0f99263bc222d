//! Driver for OpenAI-compatible inference endpoints: k samples per
//! rendered prompt with logprob capture, retries, bounded concurrency,
//! and content-addressed caching.
//!
//! Prompts are always sent as literal strings to `/v1/completions` so the
//! server cannot re-wrap them in its own chat template (the chat endpoint
//! exists as an explicit opt-in). Where the server supports it, the `n`
//! parameter amortizes one request over many samples.

use std::sync::Arc;

use serde::Deserialize;

use crate::cache::{generation_cache_key, DiskCache};
use crate::corpus::{FinishReason, GenerationRecord, SamplingParams, StepLogprobs};
use crate::error::{Error, ItemFailure, PartialFailure, Result};
use crate::net::{parallel_map, HttpClient, Telemetry};
use crate::templates::RenderedPrompt;

/// Provider logprobs this close to zero are clamped to exactly 0.0;
/// anything larger is rejected as malformed.
const LOGPROB_CLAMP: f64 = 1e-6;

/// Endpoint and batching configuration for a [`GenClient`].
#[derive(Debug, Clone)]
pub struct GenClientConfig {
    /// Service base URL, e.g. `http://127.0.0.1:8000`.
    pub endpoint_url: String,
    pub model_name: String,
    /// Send prompts to `/v1/chat/completions` as a single user message
    /// instead of the raw completion endpoint. Off by default: raw
    /// completions are what keep client-side templates faithful.
    pub use_chat_endpoint: bool,
    /// Largest `n` packed into one request; 1 forces independent requests.
    pub max_samples_per_request: u32,
}

impl GenClientConfig {
    pub fn new(endpoint_url: &str, model_name: &str) -> GenClientConfig {
        GenClientConfig {
            endpoint_url: endpoint_url.to_string(),
            model_name: model_name.to_string(),
            use_chat_endpoint: false,
            max_samples_per_request: 128,
        }
    }
}

/// A generation endpoint client. Cheap to share across threads.
pub struct GenClient {
    http: HttpClient,
    config: GenClientConfig,
    completions_url: String,
    chat_url: String,
}

impl GenClient {
    pub fn new(config: GenClientConfig, http: HttpClient) -> Result<GenClient> {
        if config.endpoint_url.trim().is_empty() {
            return Err(Error::invalid("generation endpoint_url is empty"));
        }
        if config.model_name.trim().is_empty() {
            return Err(Error::invalid("model_name is empty"));
        }
        if config.max_samples_per_request == 0 {
            return Err(Error::invalid("max_samples_per_request must be >= 1"));
        }
        let base = config.endpoint_url.trim_end_matches('/').to_string();
        Ok(GenClient {
            completions_url: format!("{base}/v1/completions"),
            chat_url: format!("{base}/v1/chat/completions"),
            http,
            config,
        })
    }

    pub fn telemetry(&self) -> Arc<Telemetry> {
        self.http.telemetry()
    }

    pub fn config(&self) -> &GenClientConfig {
        &self.config
    }

    /// Samples `k` generations for one rendered prompt, indices `0..k`.
    pub fn generate(
        &self,
        prompt_id: &str,
        prompt: &RenderedPrompt,
        sampling: &SamplingParams,
        k: u32,
    ) -> Result<Vec<GenerationRecord>> {
        if k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        sampling.validate()?;
        let indices: Vec<u32> = (0..k).collect();
        self.generate_indices(prompt_id, prompt, sampling, &indices)
    }

    /// Samples exactly the given `sample_index` values (used for cache
    /// resume, where only some indices are missing).
    fn generate_indices(
        &self,
        prompt_id: &str,
        prompt: &RenderedPrompt,
        sampling: &SamplingParams,
        indices: &[u32],
    ) -> Result<Vec<GenerationRecord>> {
        let mut records = Vec::with_capacity(indices.len());
        for chunk in indices.chunks(self.config.max_samples_per_request as usize) {
            // Distinct requests must not reuse a fixed seed verbatim or
            // they would resample identical texts; offsetting by the chunk
            // start keeps runs reproducible while varying per request. The
            // record snapshot carries the seed actually sent.
            let request_sampling = SamplingParams {
                seed: sampling.seed.map(|s| s.wrapping_add(u64::from(chunk[0]))),
                ..sampling.clone()
            };
            let n = chunk.len() as u32;
            let url = if self.config.use_chat_endpoint {
                &self.chat_url
            } else {
                &self.completions_url
            };
            let body = if self.config.use_chat_endpoint {
                build_chat_body(&self.config.model_name, &prompt.text, &request_sampling, n)
            } else {
                build_completion_body(&self.config.model_name, &prompt.text, &request_sampling, n)
            };
            let response = self.http.post_json(url, &body)?;
            let choices = if self.config.use_chat_endpoint {
                chat_choices_from_value(&response, url)?
            } else {
                completion_choices_from_value(&response, url)?
            };
            if choices.len() != chunk.len() {
                return Err(Error::Response {
                    url: url.clone(),
                    msg: format!("requested n={} but got {} choices", chunk.len(), choices.len()),
                });
            }
            for (sample_index, choice) in chunk.iter().zip(choices) {
                records.push(record_from_choice(
                    prompt_id,
                    *sample_index,
                    choice,
                    &request_sampling,
                    prompt,
                    url,
                )?);
            }
        }
        Ok(records)
    }
}

fn build_completion_body(
    model: &str,
    prompt_text: &str,
    sampling: &SamplingParams,
    n: u32,
) -> serde_json::Value {
    let mut body = serde_json::json!({
        "model": model,
        "prompt": prompt_text,
        "temperature": sampling.temperature,
        "top_p": sampling.top_p,
        "max_tokens": sampling.max_tokens,
        "n": n,
    });
    if sampling.logprob_top_k > 0 {
        body["logprobs"] = serde_json::json!(sampling.logprob_top_k);
    }
    if let Some(seed) = sampling.seed {
        body["seed"] = serde_json::json!(seed);
    }
    body
}

fn build_chat_body(
    model: &str,
    prompt_text: &str,
    sampling: &SamplingParams,
    n: u32,
) -> serde_json::Value {
    let mut body = serde_json::json!({
        "model": model,
        "messages": [{"role": "user", "content": prompt_text}],
        "temperature": sampling.temperature,
        "top_p": sampling.top_p,
        "max_tokens": sampling.max_tokens,
        "n": n,
    });
    if sampling.logprob_top_k > 0 {
        body["logprobs"] = serde_json::json!(true);
        body["top_logprobs"] = serde_json::json!(sampling.logprob_top_k);
    }
    if let Some(seed) = sampling.seed {
        body["seed"] = serde_json::json!(seed);
    }
    body
}

/// One decoded choice from either endpoint flavor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedChoice {
    pub text: String,
    pub finish_reason: FinishReason,
    pub logprobs: Option<Vec<StepLogprobs>>,
}

#[derive(Deserialize)]
struct ApiCompletionResponse {
    choices: Vec<ApiCompletionChoice>,
}

#[derive(Deserialize)]
struct ApiCompletionChoice {
    text: String,
    #[serde(default)]
    index: Option<u32>,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<ApiCompletionLogprobs>,
}

#[derive(Deserialize)]
struct ApiCompletionLogprobs {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Option<Vec<Option<std::collections::BTreeMap<String, f64>>>>,
}

#[derive(Deserialize)]
struct ApiChatResponse {
    choices: Vec<ApiChatChoice>,
}

#[derive(Deserialize)]
struct ApiChatChoice {
    message: ApiChatMessage,
    #[serde(default)]
    index: Option<u32>,
    #[serde(default)]
    finish_reason: Option<String>,
    #[serde(default)]
    logprobs: Option<ApiChatLogprobs>,
}

#[derive(Deserialize)]
struct ApiChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ApiChatLogprobs {
    content: Option<Vec<ApiChatLogprobStep>>,
}

#[derive(Deserialize)]
struct ApiChatLogprobStep {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<ApiChatTopLogprob>,
}

#[derive(Deserialize)]
struct ApiChatTopLogprob {
    token: String,
    logprob: f64,
}

fn map_finish_reason(raw: Option<&str>) -> FinishReason {
    match raw {
        Some("length") => FinishReason::Length,
        // Absent means the server finished normally without tagging why.
        None | Some("stop") => FinishReason::Stop,
        Some(_) => FinishReason::Error,
    }
}

/// Clamps float noise above zero; rejects genuinely positive logprobs.
fn sanitize_logprob(lp: f64, context: &str, origin: &str) -> Result<f64> {
    if !lp.is_finite() {
        return Err(Error::Response {
            url: origin.to_string(),
            msg: format!("non-finite logprob in {context}"),
        });
    }
    if lp > LOGPROB_CLAMP {
        return Err(Error::Response {
            url: origin.to_string(),
            msg: format!("positive logprob {lp} in {context}"),
        });
    }
    Ok(lp.min(0.0))
}

fn sort_alternatives(mut alternatives: Vec<(String, f64)>) -> Vec<(String, f64)> {
    // Descending by logprob; ties broken by token for determinism.
    alternatives.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    alternatives
}

fn steps_from_completion_logprobs(
    lp: ApiCompletionLogprobs,
    origin: &str,
) -> Result<Vec<StepLogprobs>> {
    if lp.token_logprobs.len() != lp.tokens.len() {
        return Err(Error::Response {
            url: origin.to_string(),
            msg: format!(
                "logprobs arrays disagree: {} tokens vs {} token_logprobs",
                lp.tokens.len(),
                lp.token_logprobs.len()
            ),
        });
    }
    let top = lp.top_logprobs.unwrap_or_default();
    let mut steps = Vec::with_capacity(lp.tokens.len());
    for (i, token) in lp.tokens.into_iter().enumerate() {
        let context = format!("step {i}");
        let logprob = lp.token_logprobs[i].ok_or_else(|| Error::Response {
            url: origin.to_string(),
            msg: format!("null token logprob at {context}"),
        })?;
        let logprob = sanitize_logprob(logprob, &context, origin)?;
        let mut alternatives = Vec::new();
        if let Some(Some(map)) = top.get(i) {
            for (tok, alt_lp) in map {
                alternatives.push((tok.clone(), sanitize_logprob(*alt_lp, &context, origin)?));
            }
        }
        steps.push(StepLogprobs {
            token,
            logprob,
            top_alternatives: sort_alternatives(alternatives),
        });
    }
    Ok(steps)
}

fn steps_from_chat_logprobs(lp: ApiChatLogprobs, origin: &str) -> Result<Vec<StepLogprobs>> {
    let content = lp.content.unwrap_or_default();
    let mut steps = Vec::with_capacity(content.len());
    for (i, step) in content.into_iter().enumerate() {
        let context = format!("step {i}");
        let logprob = sanitize_logprob(step.logprob, &context, origin)?;
        let mut alternatives = Vec::with_capacity(step.top_logprobs.len());
        for alt in step.top_logprobs {
            alternatives.push((alt.token, sanitize_logprob(alt.logprob, &context, origin)?));
        }
        steps.push(StepLogprobs {
            token: step.token,
            logprob,
            top_alternatives: sort_alternatives(alternatives),
        });
    }
    Ok(steps)
}

fn order_choices<T>(mut indexed: Vec<(Option<u32>, T)>) -> Vec<T> {
    // Servers may deliver `n` choices out of order but tagged with an
    // index; restore request order when every choice carries one.
    if indexed.iter().all(|(i, _)| i.is_some()) {
        indexed.sort_by_key(|(i, _)| i.unwrap());
    }
    indexed.into_iter().map(|(_, c)| c).collect()
}

/// Decodes a `/v1/completions` response body already parsed as JSON.
pub fn completion_choices_from_value(
    value: &serde_json::Value,
    origin: &str,
) -> Result<Vec<ParsedChoice>> {
    let response: ApiCompletionResponse =
        serde_json::from_value(value.clone()).map_err(|e| Error::Response {
            url: origin.to_string(),
            msg: format!("completion response schema: {e}"),
        })?;
    let mut indexed = Vec::with_capacity(response.choices.len());
    for choice in response.choices {
        let logprobs = match choice.logprobs {
            Some(lp) => Some(steps_from_completion_logprobs(lp, origin)?),
            None => None,
        };
        indexed.push((
            choice.index,
            ParsedChoice {
                text: choice.text,
                finish_reason: map_finish_reason(choice.finish_reason.as_deref()),
                logprobs,
            },
        ));
    }
    Ok(order_choices(indexed))
}

/// Decodes a raw `/v1/completions` response body (fuzzable entry point).
pub fn parse_completion_response(bytes: &[u8], origin: &str) -> Result<Vec<ParsedChoice>> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| Error::Response {
        url: origin.to_string(),
        msg: format!("response is not valid JSON: {e}"),
    })?;
    completion_choices_from_value(&value, origin)
}

/// Decodes a `/v1/chat/completions` response body already parsed as JSON.
pub fn chat_choices_from_value(value: &serde_json::Value, origin: &str) -> Result<Vec<ParsedChoice>> {
    let response: ApiChatResponse =
        serde_json::from_value(value.clone()).map_err(|e| Error::Response {
            url: origin.to_string(),
            msg: format!("chat response schema: {e}"),
        })?;
    let mut indexed = Vec::with_capacity(response.choices.len());
    for choice in response.choices {
        let logprobs = match choice.logprobs {
            Some(lp) => Some(steps_from_chat_logprobs(lp, origin)?),
            None => None,
        };
        indexed.push((
            choice.index,
            ParsedChoice {
                text: choice.message.content.unwrap_or_default(),
                finish_reason: map_finish_reason(choice.finish_reason.as_deref()),
                logprobs,
            },
        ));
    }
    Ok(order_choices(indexed))
}

/// First chat choice's message content (used by the label extractor).
pub fn parse_chat_response(value: &serde_json::Value, origin: &str) -> Result<String> {
    let choices = chat_choices_from_value(value, origin)?;
    choices
        .into_iter()
        .next()
        .map(|c| c.text)
        .ok_or_else(|| Error::Response {
            url: origin.to_string(),
            msg: "chat response has no choices".to_string(),
        })
}

/// Decodes a raw chat response body (fuzzable entry point).
pub fn parse_chat_response_bytes(bytes: &[u8], origin: &str) -> Result<String> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| Error::Response {
        url: origin.to_string(),
        msg: format!("response is not valid JSON: {e}"),
    })?;
    parse_chat_response(&value, origin)
}

fn record_from_choice(
    prompt_id: &str,
    sample_index: u32,
    choice: ParsedChoice,
    sampling: &SamplingParams,
    prompt: &RenderedPrompt,
    origin: &str,
) -> Result<GenerationRecord> {
    let token_logprobs = if sampling.logprob_top_k == 0 {
        None
    } else {
        let mut steps = choice.logprobs.ok_or_else(|| Error::Response {
            url: origin.to_string(),
            msg: format!(
                "logprob_top_k={} requested but the response carries no logprobs",
                sampling.logprob_top_k
            ),
        })?;
        for step in &mut steps {
            step.top_alternatives.truncate(sampling.logprob_top_k as usize);
        }
        Some(steps)
    };
    let record = GenerationRecord {
        prompt_id: prompt_id.to_string(),
        sample_index,
        text: choice.text,
        finish_reason: choice.finish_reason,
        sampling: sampling.clone(),
        mode: prompt.resolved_mode,
        model_family: prompt.family,
        token_logprobs,
    };
    record.validate()?;
    Ok(record)
}

/// Result of a batch run: completed records plus per-prompt failures.
#[derive(Debug)]
pub struct BatchOutcome {
    /// Sorted by prompt input order, then `sample_index`.
    pub records: Vec<GenerationRecord>,
    pub failures: Vec<ItemFailure>,
    /// Total `(prompt, sample)` pairs requested.
    pub attempted_pairs: usize,
    /// Pairs served from the disk cache.
    pub cache_hits: u64,
}

impl BatchOutcome {
    /// The partial-failure summary, when any prompt failed.
    pub fn partial_failure(&self) -> Option<PartialFailure> {
        if self.failures.is_empty() {
            None
        } else {
            Some(PartialFailure {
                completed: self.records.len(),
                total: self.attempted_pairs,
                failures: self.failures.clone(),
            })
        }
    }

    pub fn into_result(self) -> Result<Vec<GenerationRecord>> {
        match self.partial_failure() {
            None => Ok(self.records),
            Some(partial) => Err(Error::Partial(partial)),
        }
    }
}

/// Samples `k` generations for every rendered prompt with at most
/// `parallelism` requests in flight.
///
/// Output order is deterministic (prompt input order, then sample index)
/// regardless of completion order. With a cache, previously completed
/// `(run_id, prompt_id, sample_index)` results are replayed without any
/// endpoint request, and only missing indices are fetched. Per-prompt
/// failures are collected into the outcome; they never abort other
/// prompts.
pub fn generate_batch(
    client: &GenClient,
    rendered: &[(String, RenderedPrompt)],
    sampling: &SamplingParams,
    k: u32,
    parallelism: usize,
    cache: Option<(&DiskCache, &str)>,
) -> Result<BatchOutcome> {
    if rendered.is_empty() {
        return Err(Error::invalid("generate_batch needs at least one rendered prompt"));
    }
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if parallelism == 0 {
        return Err(Error::invalid("parallelism must be >= 1"));
    }
    sampling.validate()?;
    {
        let mut seen = std::collections::BTreeSet::new();
        for (prompt_id, _) in rendered {
            if !seen.insert(prompt_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate prompt id {prompt_id:?} in rendered input"
                )));
            }
        }
    }

    // Resolve cache hits up front; plan one job per prompt with gaps.
    let telemetry = client.telemetry();
    let mut per_prompt_records: Vec<Vec<GenerationRecord>> = Vec::with_capacity(rendered.len());
    let mut jobs: Vec<(usize, Vec<u32>)> = Vec::new(); // (prompt position, missing indices)
    let mut cache_hits = 0u64;
    for (pos, (prompt_id, _)) in rendered.iter().enumerate() {
        let mut have: Vec<GenerationRecord> = Vec::new();
        let mut missing: Vec<u32> = Vec::new();
        for sample_index in 0..k {
            let cached = match cache {
                Some((disk, run_id)) => {
                    let key = generation_cache_key(run_id, prompt_id, sample_index);
                    disk.get(&key)?.and_then(|bytes| {
                        // A corrupt entry is treated as a miss and refetched.
                        serde_json::from_slice::<GenerationRecord>(&bytes)
                            .ok()
                            .filter(|r| r.validate().is_ok())
                    })
                }
                None => None,
            };
            match cached {
                Some(record) => {
                    cache_hits += 1;
                    telemetry.record_cache_hit();
                    have.push(record);
                }
                None => missing.push(sample_index),
            }
        }
        if !missing.is_empty() {
            jobs.push((pos, missing));
        }
        per_prompt_records.push(have);
    }

    let results = parallel_map(&jobs, parallelism, |(pos, missing)| {
        let (prompt_id, prompt) = &rendered[*pos];
        let records = client.generate_indices(prompt_id, prompt, sampling, missing)?;
        if let Some((disk, run_id)) = cache {
            for record in &records {
                let key = generation_cache_key(run_id, prompt_id, record.sample_index);
                let bytes = serde_json::to_vec(record)
                    .map_err(|e| Error::invalid(format!("serializing record: {e}")))?;
                disk.put(&key, &bytes)?;
            }
        }
        Ok(records)
    });

    let mut failures = Vec::new();
    for ((pos, _), result) in jobs.into_iter().zip(results) {
        match result {
            Ok(records) => per_prompt_records[pos].extend(records),
            Err(e) => failures.push(ItemFailure {
                item: rendered[pos].0.clone(),
                message: e.to_string(),
            }),
        }
    }

    let mut records = Vec::with_capacity(rendered.len() * k as usize);
    for mut group in per_prompt_records {
        group.sort_by_key(|r| r.sample_index);
        records.extend(group);
    }
    Ok(BatchOutcome {
        records,
        failures,
        attempted_pairs: rendered.len() * k as usize,
        cache_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::templates::{EndpointFlavor, ModeKind, ModelFamily, PromptMode};

    fn rendered() -> RenderedPrompt {
        RenderedPrompt {
            text: "user: hi\n assistant:".to_string(),
            endpoint_flavor: EndpointFlavor::RawCompletion,
            resolved_mode: PromptMode::new(ModeKind::MinimumDialog),
            family: ModelFamily::Qwen,
        }
    }

    #[test]
    fn parses_minimal_completion_response() {
        let body = br#"{
            "id": "cmpl-1", "object": "text_completion", "model": "m",
            "choices": [
                {"text": "hello", "index": 0, "finish_reason": "stop"},
                {"text": "world", "index": 1, "finish_reason": "length"}
            ],
            "usage": {"prompt_tokens": 1, "completion_tokens": 2}
        }"#;
        let choices = parse_completion_response(body, "test").unwrap();
        assert_eq!(choices.len(), 2);
        assert_eq!(choices[0].text, "hello");
        assert_eq!(choices[0].finish_reason, FinishReason::Stop);
        assert_eq!(choices[1].finish_reason, FinishReason::Length);
        assert!(choices[0].logprobs.is_none());
    }

    #[test]
    fn restores_choice_order_from_index_field() {
        let body = br#"{"choices": [
            {"text": "second", "index": 1},
            {"text": "first", "index": 0}
        ]}"#;
        let choices = parse_completion_response(body, "test").unwrap();
        assert_eq!(choices[0].text, "first");
        assert_eq!(choices[1].text, "second");
    }

    #[test]
    fn parses_completion_logprobs_sorted_descending() {
        let body = br#"{"choices": [{
            "text": "hi", "index": 0, "finish_reason": "stop",
            "logprobs": {
                "tokens": ["h", "i"],
                "token_logprobs": [-0.1, -0.2],
                "top_logprobs": [
                    {"x": -2.0, "h": -0.1, "q": -3.5},
                    {"i": -0.2, "j": -1.0}
                ]
            }
        }]}"#;
        let choices = parse_completion_response(body, "test").unwrap();
        let steps = choices[0].logprobs.as_ref().unwrap();
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[0].token, "h");
        assert_eq!(
            steps[0].top_alternatives,
            vec![("h".to_string(), -0.1), ("x".to_string(), -2.0), ("q".to_string(), -3.5)]
        );
        for step in steps {
            step.validate().unwrap();
        }
    }

    #[test]
    fn clamps_floating_noise_but_rejects_positive_logprobs() {
        let noisy = br#"{"choices": [{
            "text": "a",
            "logprobs": {"tokens": ["a"], "token_logprobs": [1e-9], "top_logprobs": [{"a": 1e-9}]}
        }]}"#;
        let choices = parse_completion_response(noisy, "test").unwrap();
        assert_eq!(choices[0].logprobs.as_ref().unwrap()[0].logprob, 0.0);

        let positive = br#"{"choices": [{
            "text": "a",
            "logprobs": {"tokens": ["a"], "token_logprobs": [0.5], "top_logprobs": [{"a": -0.5}]}
        }]}"#;
        assert!(parse_completion_response(positive, "test").is_err());
    }

    #[test]
    fn rejects_null_step_logprob_and_ragged_arrays() {
        let null_step = br#"{"choices": [{
            "text": "a",
            "logprobs": {"tokens": ["a"], "token_logprobs": [null]}
        }]}"#;
        assert!(parse_completion_response(null_step, "test").is_err());

        let ragged = br#"{"choices": [{
            "text": "a",
            "logprobs": {"tokens": ["a", "b"], "token_logprobs": [-0.1]}
        }]}"#;
        assert!(parse_completion_response(ragged, "test").is_err());
    }

    #[test]
    fn rejects_malformed_response_bodies() {
        assert!(parse_completion_response(b"not json", "test").is_err());
        assert!(parse_completion_response(b"{\"unexpected\": true}", "test").is_err());
        assert!(parse_completion_response(b"[1,2,3]", "test").is_err());
    }

    #[test]
    fn parses_chat_response_content() {
        let body = br#"{"choices": [{
            "message": {"role": "assistant", "content": " Sports \n"},
            "index": 0, "finish_reason": "stop"
        }]}"#;
        let content = parse_chat_response_bytes(body, "test").unwrap();
        assert_eq!(content, " Sports \n");
        assert!(parse_chat_response_bytes(br#"{"choices": []}"#, "test").is_err());
    }

    #[test]
    fn parses_chat_logprobs_schema() {
        let body = br#"{"choices": [{
            "message": {"content": "x"},
            "finish_reason": "length",
            "logprobs": {"content": [
                {"token": "x", "logprob": -0.3, "top_logprobs": [
                    {"token": "y", "logprob": -1.2}, {"token": "x", "logprob": -0.3}
                ]}
            ]}
        }]}"#;
        let choices = chat_choices_from_value(
            &serde_json::from_slice(body).unwrap(),
            "test",
        )
        .unwrap();
        let steps = choices[0].logprobs.as_ref().unwrap();
        assert_eq!(steps[0].top_alternatives[0], ("x".to_string(), -0.3));
        assert_eq!(choices[0].finish_reason, FinishReason::Length);
    }

    #[test]
    fn record_building_truncates_to_top_k_and_respects_zero() {
        let choice = ParsedChoice {
            text: "t".to_string(),
            finish_reason: FinishReason::Stop,
            logprobs: Some(vec![StepLogprobs {
                token: "t".to_string(),
                logprob: -0.5,
                top_alternatives: vec![
                    ("t".to_string(), -0.5),
                    ("u".to_string(), -1.0),
                    ("v".to_string(), -2.0),
                ],
            }]),
        };
        let sampling = SamplingParams {
            logprob_top_k: 2,
            ..SamplingParams::default()
        };
        let record =
            record_from_choice("p1", 0, choice.clone(), &sampling, &rendered(), "test").unwrap();
        assert_eq!(record.token_logprobs.as_ref().unwrap()[0].top_alternatives.len(), 2);
        assert_eq!(record.mode, PromptMode::new(ModeKind::MinimumDialog));
        assert_eq!(record.model_family, ModelFamily::Qwen);

        // logprob_top_k == 0: logprobs dropped even if the server sent them.
        let record = record_from_choice(
            "p1",
            0,
            choice.clone(),
            &SamplingParams::default(),
            &rendered(),
            "test",
        )
        .unwrap();
        assert!(record.token_logprobs.is_none());

        // Requested logprobs but none returned: hard error.
        let bare = ParsedChoice {
            logprobs: None,
            ..choice
        };
        assert!(record_from_choice("p1", 0, bare, &sampling, &rendered(), "test").is_err());
    }

    #[test]
    fn completion_body_includes_optional_fields_only_when_set() {
        let sampling = SamplingParams::default();
        let body = build_completion_body("m", "p", &sampling, 4);
        assert_eq!(body["n"], 4);
        assert!(body.get("logprobs").is_none());
        assert!(body.get("seed").is_none());

        let with_extras = SamplingParams {
            seed: Some(7),
            logprob_top_k: 5,
            ..SamplingParams::default()
        };
        let body = build_completion_body("m", "p", &with_extras, 1);
        assert_eq!(body["logprobs"], 5);
        assert_eq!(body["seed"], 7);
    }

    #[test]
    fn client_config_is_validated() {
        let http = HttpClient::for_tests();
        assert!(GenClient::new(GenClientConfig::new("", "m"), http.clone()).is_err());
        assert!(GenClient::new(GenClientConfig::new("http://x", ""), http.clone()).is_err());
        let mut config = GenClientConfig::new("http://x", "m");
        config.max_samples_per_request = 0;
        assert!(GenClient::new(config, http).is_err());
    }

    #[test]
    fn batch_rejects_invalid_plans() {
        let http = HttpClient::for_tests();
        let client = GenClient::new(GenClientConfig::new("http://localhost:1", "m"), http).unwrap();
        let pair = |id: &str| (id.to_string(), rendered());
        let sampling = SamplingParams::default();
        assert!(generate_batch(&client, &[], &sampling, 1, 1, None).is_err());
        assert!(generate_batch(&client, &[pair("a")], &sampling, 0, 1, None).is_err());
        assert!(generate_batch(&client, &[pair("a")], &sampling, 1, 0, None).is_err());
        assert!(
            generate_batch(&client, &[pair("a"), pair("a")], &sampling, 1, 1, None).is_err(),
            "duplicate prompt ids must be rejected"
        );
    }
}
