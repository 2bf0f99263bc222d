//! End-to-end experiment protocols: render → generate → embed/label →
//! score → report, with per-stage artifacts in a run directory and
//! resumability through artifact reuse plus the response caches.
//!
//! Three presets encode the measurement protocols:
//! `paper-commonsense` (many prompts, few samples each; semantic +
//! structural diversity), `paper-openended` (one instruction, many
//! samples; topic + lexical diversity), and `paper-entropy` (many
//! instructions, one sample each with logprob capture; decoding-step
//! entropy). Overrides scale any preset down for desk runs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::cache::DiskCache;
use crate::config::Config;
use crate::corpus::{
    compute_run_id, content_hash, load_generations, load_prompts, write_generations,
    GenerationRecord, RunManifest, SamplingParams,
};
use crate::embedclient::{load_embeddings, write_embeddings, EmbedClient, EmbedClientConfig, EmbeddingSet};
use crate::error::{Error, PartialFailure, Result};
use crate::genclient::{generate_batch, GenClient, GenClientConfig};
use crate::labeling::{
    classify_keyword_batch, extract_labels_llm, label_distribution, load_labels, load_taxonomy,
    write_labels, LabelMethod, LabelRecord, LlmLabeler, Taxonomy, DEFAULT_EXTRACTION_INSTRUCTION,
};
use crate::metrics::{
    entropy_trajectory, group_responses, lexical_diversity, names, semantic_diversity,
    structural_diversity, topic_diversity, LexicalDiversity, MetricOutput, PerPromptValue,
    StopwordSet,
};
use crate::net::{
    api_key_from_env, HttpClient, TelemetrySnapshot, EMBED_API_KEY_ENV, GEN_API_KEY_ENV,
    LABEL_API_KEY_ENV,
};
use crate::report::{
    build_report, emit, load_score_document, write_score_document, Report, ReportCell,
    ReportFormat, ScoreDocument,
};
use crate::templates::{
    load_rendered, write_rendered, ModeKind, PromptMode, RenderedRecord, Renderer, TemplateTable,
};

/// The three built-in measurement protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Many prompts × few samples; semantic + structural diversity.
    Commonsense,
    /// One instruction × many samples; topic + lexical diversity.
    Openended,
    /// Many instructions × one logprob-capturing sample; step entropy.
    Entropy,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Commonsense, Preset::Openended, Preset::Entropy];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Commonsense => "paper-commonsense",
            Preset::Openended => "paper-openended",
            Preset::Entropy => "paper-entropy",
        }
    }

    /// Default task tag stamped on report cells.
    pub fn task(self) -> &'static str {
        match self {
            Preset::Commonsense => "commonsense",
            Preset::Openended => "openended",
            Preset::Entropy => "entropy",
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Preset> {
        match s {
            "paper-commonsense" => Ok(Preset::Commonsense),
            "paper-openended" => Ok(Preset::Openended),
            "paper-entropy" => Ok(Preset::Entropy),
            other => Err(Error::invalid(format!(
                "unknown preset {other:?} (expected paper-commonsense, paper-openended, or paper-entropy)"
            ))),
        }
    }
}

/// Which metrics to compute for a cell.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MetricSelection {
    pub semantic: bool,
    pub topic: bool,
    pub structural: bool,
    /// Orders of distinct-n to compute (each in 2..=5).
    pub distinct: BTreeSet<usize>,
    pub self_bleu: bool,
    pub entropy: bool,
}

impl MetricSelection {
    pub fn is_empty(&self) -> bool {
        !(self.semantic || self.topic || self.structural || self.self_bleu || self.entropy)
            && self.distinct.is_empty()
    }

    pub fn all_lexical(mut self) -> MetricSelection {
        self.distinct = (2..=5).collect();
        self.self_bleu = true;
        self
    }

    /// Parses `--metrics` tokens: group names (`semantic`, `topic`,
    /// `structural`, `lexical`, `entropy`) or individual metric names
    /// (`semantic_diversity`, `distinct_3`, `self_bleu`, ...).
    pub fn parse(tokens: &[String]) -> Result<MetricSelection> {
        let mut selection = MetricSelection::default();
        for token in tokens {
            match token.trim() {
                "" => continue,
                "semantic" | names::SEMANTIC_DIVERSITY => selection.semantic = true,
                "topic" | names::TOPIC_DIVERSITY => selection.topic = true,
                "structural" | names::STD_TOKEN_COUNT | names::STD_SENTENCE_COUNT
                | names::STD_CONTENT_WORD_RATIO => selection.structural = true,
                "lexical" => {
                    selection.distinct.extend(2..=5usize);
                    selection.self_bleu = true;
                }
                names::SELF_BLEU => selection.self_bleu = true,
                "entropy" | names::MEAN_STEP_ENTROPY => selection.entropy = true,
                other => {
                    if let Some(n) = other
                        .strip_prefix("distinct_")
                        .and_then(|d| d.parse::<usize>().ok())
                    {
                        if !(2..=5).contains(&n) {
                            return Err(Error::invalid(format!(
                                "distinct_{n} is out of range (supported orders are 2..=5)"
                            )));
                        }
                        selection.distinct.insert(n);
                    } else {
                        return Err(Error::invalid(format!(
                            "unknown metric {other:?} (expected semantic, topic, structural, \
                             lexical, entropy, or a metric name like distinct_2)"
                        )));
                    }
                }
            }
        }
        if selection.is_empty() {
            return Err(Error::invalid("metric selection is empty"));
        }
        Ok(selection)
    }
}

/// Inputs to [`score_cell`]; embeddings/labels are only required when the
/// selection asks for semantic/topic diversity.
pub struct ScoreInputs<'a> {
    pub generations: &'a [GenerationRecord],
    pub embeddings: Option<&'a EmbeddingSet>,
    pub labels: Option<&'a [LabelRecord]>,
    pub selection: &'a MetricSelection,
    pub model_name: &'a str,
    pub task: &'a str,
    pub run_id: &'a str,
    /// Trajectory length for the entropy metric; defaults to the
    /// records' `max_tokens`.
    pub entropy_steps: Option<usize>,
}

/// Checks that the corpus is one homogeneous lane and returns its
/// (mode, family, temperature).
fn check_homogeneous(
    records: &[GenerationRecord],
) -> Result<(PromptMode, crate::templates::ModelFamily, f64)> {
    let first = &records[0];
    for record in records {
        if record.mode != first.mode
            || record.model_family != first.model_family
            || record.sampling.temperature != first.sampling.temperature
        {
            return Err(Error::invalid(format!(
                "generations mix lanes: ({}, {:?}, T={}) vs ({}, {:?}, T={}); score one \
                 (mode, family, temperature) lane at a time",
                first.mode,
                first.model_family,
                first.sampling.temperature,
                record.mode,
                record.model_family,
                record.sampling.temperature
            )));
        }
    }
    Ok((first.mode, first.model_family, first.sampling.temperature))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Computes the selected metric battery over one generation corpus and
/// assembles the report cell.
///
/// Lexical metrics are computed per prompt group and averaged across
/// groups, consistent with the mean-over-prompts convention of the
/// semantic and structural metrics; for a single-prompt corpus this is
/// exactly the pooled value over its responses.
pub fn score_cell(inputs: ScoreInputs<'_>) -> Result<ScoreDocument> {
    let records = inputs.generations;
    if records.is_empty() {
        return Err(Error::invalid("score needs at least one generation record"));
    }
    if inputs.selection.is_empty() {
        return Err(Error::invalid("metric selection is empty"));
    }
    let (mode, family, temperature) = check_homogeneous(records)?;
    let groups = group_responses(records);

    let mut metrics_map = std::collections::BTreeMap::new();
    let mut details: Vec<MetricOutput> = Vec::new();
    let mut entropy_out = None;

    if inputs.selection.semantic {
        let set = inputs.embeddings.ok_or_else(|| {
            Error::invalid("semantic diversity requires embeddings (pass --embeddings)")
        })?;
        let mut vector_groups = Vec::with_capacity(groups.len());
        for group in &groups {
            let mut vectors = Vec::with_capacity(group.texts.len());
            for text in &group.texts {
                vectors.push(set.vector_for_text(text)?.clone());
            }
            vector_groups.push((group.prompt_id.clone(), vectors));
        }
        let score = semantic_diversity(&vector_groups)?;
        metrics_map.insert(names::SEMANTIC_DIVERSITY.to_string(), score.value);
        details.push(MetricOutput {
            metric: names::SEMANTIC_DIVERSITY.to_string(),
            value: score.value,
            params: serde_json::json!({
                "num_prompts": score.num_prompts,
                "responses_per_prompt": score.responses_per_prompt,
            }),
            per_prompt: Some(
                score
                    .per_prompt
                    .iter()
                    .map(|(prompt_id, value)| PerPromptValue {
                        prompt_id: prompt_id.clone(),
                        value: *value,
                    })
                    .collect(),
            ),
        });
    }

    if inputs.selection.topic {
        let labels = inputs.labels.ok_or_else(|| {
            Error::invalid("topic diversity requires labels (pass --labels)")
        })?;
        if labels.len() != records.len() {
            return Err(Error::invalid(format!(
                "label count {} does not match generation count {}",
                labels.len(),
                records.len()
            )));
        }
        let dist = label_distribution(labels)?;
        let score = topic_diversity(&dist)?;
        metrics_map.insert(names::TOPIC_DIVERSITY.to_string(), score.value);
        details.push(MetricOutput {
            metric: names::TOPIC_DIVERSITY.to_string(),
            value: score.value,
            params: serde_json::json!({
                "support": score.support,
                "total": score.total,
                "entropy_nats": score.entropy_nats,
            }),
            per_prompt: None,
        });
    }

    if inputs.selection.structural {
        let score = structural_diversity(&groups, StopwordSet::english())?;
        for (name, value) in [
            (names::STD_TOKEN_COUNT, score.std_token_count),
            (names::STD_SENTENCE_COUNT, score.std_sentence_count),
            (names::STD_CONTENT_WORD_RATIO, score.std_content_word_ratio),
        ] {
            metrics_map.insert(name.to_string(), value);
            details.push(MetricOutput {
                metric: name.to_string(),
                value,
                params: serde_json::json!({"num_prompts": groups.len()}),
                per_prompt: None,
            });
        }
    }

    if !inputs.selection.distinct.is_empty() || inputs.selection.self_bleu {
        let mut per_group: Vec<(String, LexicalDiversity)> = Vec::with_capacity(groups.len());
        for group in &groups {
            per_group.push((group.prompt_id.clone(), lexical_diversity(&group.texts)?));
        }
        for n in &inputs.selection.distinct {
            let values: Vec<f64> = per_group.iter().map(|(_, l)| l.distinct[n]).collect();
            let value = mean(&values);
            metrics_map.insert(names::distinct(*n), value);
            details.push(MetricOutput {
                metric: names::distinct(*n),
                value,
                params: serde_json::json!({"n": n, "num_prompts": groups.len()}),
                per_prompt: Some(
                    per_group
                        .iter()
                        .zip(&values)
                        .map(|((prompt_id, _), v)| PerPromptValue {
                            prompt_id: prompt_id.clone(),
                            value: *v,
                        })
                        .collect(),
                ),
            });
        }
        if inputs.selection.self_bleu {
            let values: Vec<f64> = per_group.iter().map(|(_, l)| l.self_bleu).collect();
            let value = mean(&values);
            metrics_map.insert(names::SELF_BLEU.to_string(), value);
            details.push(MetricOutput {
                metric: names::SELF_BLEU.to_string(),
                value,
                params: serde_json::json!({"max_order": 4, "num_prompts": groups.len()}),
                per_prompt: Some(
                    per_group
                        .iter()
                        .zip(&values)
                        .map(|((prompt_id, _), v)| PerPromptValue {
                            prompt_id: prompt_id.clone(),
                            value: *v,
                        })
                        .collect(),
                ),
            });
        }
    }

    if inputs.selection.entropy {
        let steps = inputs
            .entropy_steps
            .unwrap_or(records[0].sampling.max_tokens as usize);
        let trajectory = entropy_trajectory(records, steps)?;
        let value = trajectory.mean_over_steps();
        metrics_map.insert(names::MEAN_STEP_ENTROPY.to_string(), value);
        details.push(MetricOutput {
            metric: names::MEAN_STEP_ENTROPY.to_string(),
            value,
            params: serde_json::json!({
                "steps": trajectory.steps,
                "top_k": trajectory.top_k_used,
                "num_records": trajectory.num_instructions,
            }),
            per_prompt: None,
        });
        entropy_out = Some(trajectory);
    }

    let cell = ReportCell {
        model_family: family,
        model_name: inputs.model_name.to_string(),
        task: inputs.task.to_string(),
        mode,
        temperature,
        metrics: metrics_map,
        run_id: inputs.run_id.to_string(),
    };
    cell.validate()?;
    Ok(ScoreDocument {
        cell,
        details,
        entropy_trajectory: entropy_out,
    })
}

/// Loads the template table per config (builtin unless `template_path`)
/// and checks the `template_revision` expectation.
pub fn build_renderer(config: &Config) -> Result<(Renderer, String)> {
    let table = match &config.template_path {
        Some(path) => TemplateTable::load(path)?,
        None => TemplateTable::builtin(),
    };
    let revision = table.revision().to_string();
    if let Some(expected) = &config.template_revision {
        if expected != &revision {
            return Err(Error::invalid(format!(
                "template revision mismatch: config expects {expected:?}, table is {revision:?}"
            )));
        }
    }
    let mut renderer = Renderer::new(table);
    if let Some(suffix) = &config.diversity_suffix {
        renderer = renderer.with_diversity_suffix(suffix);
    }
    Ok((renderer, revision))
}

/// Loads the keyword taxonomy per config (builtin news unless
/// `taxonomy_path`).
pub fn build_taxonomy(config: &Config) -> Result<Taxonomy> {
    match &config.taxonomy_path {
        Some(path) => load_taxonomy(path),
        None => Ok(Taxonomy::default_news()),
    }
}

pub fn build_gen_client(config: &Config) -> Result<GenClient> {
    let http = HttpClient::new(
        config.timeout(),
        config.retry_policy(),
        api_key_from_env(&[GEN_API_KEY_ENV]),
    )?;
    let mut gen_config = GenClientConfig::new(&config.endpoint_url, &config.model_name);
    gen_config.use_chat_endpoint = config.use_chat_endpoint;
    gen_config.max_samples_per_request = config.max_samples_per_request;
    GenClient::new(gen_config, http)
}

pub fn build_embed_client(config: &Config) -> Result<EmbedClient> {
    let http = HttpClient::new(
        config.timeout(),
        config.retry_policy(),
        api_key_from_env(&[EMBED_API_KEY_ENV, GEN_API_KEY_ENV]),
    )?;
    let mut embed_config = EmbedClientConfig::new(config.effective_embedding_endpoint());
    embed_config.model = config.embedding_model.clone();
    embed_config.batch_size = config.embed_batch_size;
    EmbedClient::new(embed_config, http)
}

pub fn build_labeler(config: &Config) -> Result<LlmLabeler> {
    let http = HttpClient::new(
        config.timeout(),
        config.retry_policy(),
        api_key_from_env(&[LABEL_API_KEY_ENV, GEN_API_KEY_ENV]),
    )?;
    let instruction = config
        .extraction_instruction
        .as_deref()
        .unwrap_or(DEFAULT_EXTRACTION_INSTRUCTION);
    LlmLabeler::new(
        http,
        config.effective_labeling_endpoint(),
        config.effective_labeling_model(),
        instruction,
    )
}

/// Writes a partial-failure gaps file next to the stage artifact.
pub fn write_gaps_file(path: &Path, partial: &PartialFailure) -> Result<()> {
    #[derive(Serialize)]
    struct GapsFile<'a> {
        completed: usize,
        total: usize,
        failures: &'a [crate::error::ItemFailure],
    }
    let body = serde_json::to_vec_pretty(&GapsFile {
        completed: partial.completed,
        total: partial.total,
        failures: &partial.failures,
    })
    .map_err(|e| Error::invalid(format!("serializing gaps file: {e}")))?;
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Scaling overrides and knobs for [`run_protocol`].
#[derive(Debug, Clone)]
pub struct ProtocolOptions {
    pub out_dir: PathBuf,
    pub prompts_path: PathBuf,
    /// Task tag on report cells; the preset's default when `None`.
    pub task: Option<String>,
    /// Override the number of prompts drawn from the prompt file.
    pub n: Option<usize>,
    /// Override samples per prompt.
    pub k: Option<u32>,
    /// Override trajectory length (entropy preset).
    pub steps: Option<u32>,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    /// Modes to run; the four comparison modes when `None`.
    pub modes: Option<Vec<PromptMode>>,
    /// Topic labeling method (openended preset).
    pub label_method: LabelMethod,
    pub use_cache: bool,
}

impl ProtocolOptions {
    pub fn new(out_dir: impl Into<PathBuf>, prompts_path: impl Into<PathBuf>) -> ProtocolOptions {
        ProtocolOptions {
            out_dir: out_dir.into(),
            prompts_path: prompts_path.into(),
            task: None,
            n: None,
            k: None,
            steps: None,
            temperature: None,
            top_p: None,
            modes: None,
            label_method: LabelMethod::Llm,
            use_cache: true,
        }
    }
}

/// What a protocol run produced; telemetry covers only this invocation,
/// so a fully-resumed rerun reports zero requests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolSummary {
    pub preset: String,
    pub task: String,
    pub modes: Vec<String>,
    pub num_prompts: usize,
    pub samples_per_prompt: u32,
    pub cell_paths: Vec<PathBuf>,
    pub report_json: PathBuf,
    pub report_markdown: PathBuf,
    pub report_gaps: usize,
    pub generation: TelemetrySnapshot,
    pub embedding: Option<TelemetrySnapshot>,
    pub labeling: Option<TelemetrySnapshot>,
    pub reused_stages: usize,
}

struct PresetSpec {
    n_prompts: usize,
    k: u32,
    steps: Option<u32>,
    logprob_top_k: u32,
    selection: MetricSelection,
}

fn preset_spec(preset: Preset, options: &ProtocolOptions) -> Result<PresetSpec> {
    let mut spec = match preset {
        Preset::Commonsense => PresetSpec {
            n_prompts: 512,
            k: 10,
            steps: None,
            logprob_top_k: 0,
            selection: MetricSelection {
                semantic: true,
                structural: true,
                ..MetricSelection::default()
            },
        },
        Preset::Openended => PresetSpec {
            n_prompts: 1,
            k: 1024,
            steps: None,
            logprob_top_k: 0,
            selection: MetricSelection {
                topic: true,
                ..MetricSelection::default()
            }
            .all_lexical(),
        },
        Preset::Entropy => PresetSpec {
            n_prompts: 128,
            k: 1,
            steps: Some(50),
            logprob_top_k: 5,
            selection: MetricSelection {
                entropy: true,
                ..MetricSelection::default()
            },
        },
    };
    if let Some(n) = options.n {
        if n == 0 {
            return Err(Error::invalid("--n must be at least 1"));
        }
        spec.n_prompts = n;
    }
    if let Some(k) = options.k {
        if k == 0 {
            return Err(Error::invalid("--k must be at least 1"));
        }
        spec.k = k;
    }
    if let Some(steps) = options.steps {
        if preset != Preset::Entropy {
            return Err(Error::invalid("--steps only applies to paper-entropy"));
        }
        if steps == 0 {
            return Err(Error::invalid("--steps must be at least 1"));
        }
        spec.steps = Some(steps);
    }
    let needs_multiple = spec.selection.semantic
        || spec.selection.structural
        || spec.selection.topic
        || spec.selection.self_bleu
        || !spec.selection.distinct.is_empty();
    if needs_multiple && spec.k < 2 {
        return Err(Error::invalid(format!(
            "preset {preset} computes per-prompt diversity and needs k >= 2, got {}",
            spec.k
        )));
    }
    Ok(spec)
}

/// Filesystem-safe directory name for a mode.
fn mode_dirname(mode: PromptMode) -> String {
    mode.to_string().replace('+', "_")
}

struct Stage<'a> {
    name: &'a str,
}

impl Stage<'_> {
    fn fail(&self, err: Error) -> Error {
        log::error!("protocol stage {} failed: {err}", self.name);
        err
    }
}

/// Runs a full preset pipeline. Every stage writes its artifact into
/// `out_dir/<preset>/<mode>/` and is skipped when the artifact already
/// exists and matches the run identity, so interrupted runs resume.
pub fn run_protocol(
    config: &Config,
    preset: Preset,
    options: &ProtocolOptions,
) -> Result<ProtocolSummary> {
    config.validate()?;
    let spec = preset_spec(preset, options)?;
    let task = options.task.clone().unwrap_or_else(|| preset.task().to_string());

    let mut prompts = load_prompts(&options.prompts_path)?;
    if prompts.len() > spec.n_prompts {
        prompts.truncate(spec.n_prompts);
    } else if prompts.len() < spec.n_prompts {
        log::info!(
            "prompt file has {} prompts; preset asks for {} — using all available",
            prompts.len(),
            spec.n_prompts
        );
    }

    let modes: Vec<PromptMode> = options.modes.clone().unwrap_or_else(|| {
        ModeKind::STRUCTURED.iter().map(|k| PromptMode::new(*k)).collect()
    });
    let baseline = PromptMode::new(ModeKind::SimpleSteer);
    if !modes.contains(&baseline) {
        return Err(Error::invalid(
            "protocol needs simple_steer among the modes (it is the comparison baseline)",
        ));
    }
    if modes.len() < 2 {
        return Err(Error::invalid("protocol needs at least two modes to compare"));
    }
    let comparison = *modes
        .iter()
        .find(|m| m.kind == ModeKind::FullTemplate)
        .or_else(|| modes.iter().find(|m| **m != baseline))
        .expect("checked len >= 2");

    let family = config.model_family.ok_or_else(|| {
        Error::invalid("config: model_family must be set to run a protocol")
    })?;
    let (renderer, template_revision) = build_renderer(config)?;

    let mut sampling = SamplingParams {
        max_tokens: spec.steps.unwrap_or(config.max_tokens),
        seed: config.seed,
        logprob_top_k: spec.logprob_top_k,
        ..SamplingParams::default()
    };
    if let Some(t) = options.temperature {
        sampling.temperature = t;
    }
    if let Some(p) = options.top_p {
        sampling.top_p = p;
    }
    sampling.validate()?;

    let preset_dir = options.out_dir.join(preset.name());
    std::fs::create_dir_all(&preset_dir).map_err(|e| Error::io(&preset_dir, e))?;
    let cache = if options.use_cache {
        Some(DiskCache::new(&config.cache_dir)?)
    } else {
        None
    };

    let gen_client = build_gen_client(config)?;
    let embed_client = if spec.selection.semantic {
        Some(build_embed_client(config)?)
    } else {
        None
    };
    let labeler = if spec.selection.topic && options.label_method == LabelMethod::Llm {
        Some(build_labeler(config)?)
    } else {
        None
    };
    let taxonomy = if spec.selection.topic && options.label_method == LabelMethod::Keyword {
        Some(build_taxonomy(config)?)
    } else {
        None
    };

    let mut reused_stages = 0usize;
    let mut cell_paths = Vec::new();
    let mut cells: Vec<ReportCell> = Vec::new();

    for mode in &modes {
        let mode_dir = preset_dir.join(mode_dirname(*mode));
        std::fs::create_dir_all(&mode_dir).map_err(|e| Error::io(&mode_dir, e))?;

        // ---- render ----
        let stage = Stage { name: "render" };
        let rendered_path = mode_dir.join("rendered.jsonl");
        let rendered: Vec<RenderedRecord> = match load_rendered(&rendered_path) {
            Ok(existing) if existing.len() == prompts.len() => {
                reused_stages += 1;
                existing
            }
            _ => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed.unwrap_or(0));
                let mut records = Vec::with_capacity(prompts.len());
                for prompt in prompts.records() {
                    let rendered_prompt = if mode.kind == ModeKind::MixedTemplate {
                        let pool: Vec<PromptMode> = ModeKind::STRUCTURED
                            .iter()
                            .map(|k| PromptMode {
                                kind: *k,
                                diversity_suffix: mode.diversity_suffix,
                            })
                            .collect();
                        renderer
                            .render_mixed(&prompt.instruction, family, &pool, &mut rng)
                            .map_err(|e| stage.fail(e))?
                    } else {
                        renderer
                            .render(&prompt.instruction, family, *mode)
                            .map_err(|e| stage.fail(e))?
                    };
                    records.push(RenderedRecord::from_rendered(
                        &prompt.id,
                        &task,
                        *mode,
                        rendered_prompt,
                    ));
                }
                write_rendered(&records, &rendered_path).map_err(|e| stage.fail(e))?;
                records
            }
        };

        // ---- generate ----
        let stage = Stage { name: "generate" };
        let generations_path = mode_dir.join("generations.jsonl");
        let manifest_path = mode_dir.join("generations.manifest.json");
        let rendered_bytes =
            std::fs::read(&rendered_path).map_err(|e| stage.fail(Error::io(&rendered_path, e)))?;
        let prompt_file_hash = content_hash(&rendered_bytes);
        let run_id = compute_run_id(
            &config.model_name,
            *mode,
            &sampling,
            &prompt_file_hash,
            &template_revision,
        )?;

        let expected_records = prompts.len() * spec.k as usize;
        let reuse_generations = match (load_generations(&generations_path), RunManifest::load(&manifest_path)) {
            (Ok(existing), Ok(manifest))
                if manifest.run_id == run_id && existing.len() == expected_records =>
            {
                Some(existing)
            }
            _ => None,
        };
        let generations = match reuse_generations {
            Some(existing) => {
                reused_stages += 1;
                existing
            }
            None => {
                let pairs: Vec<(String, crate::templates::RenderedPrompt)> = rendered
                    .iter()
                    .map(|r| (r.prompt_id.clone(), r.rendered_prompt()))
                    .collect();
                let outcome = generate_batch(
                    &gen_client,
                    &pairs,
                    &sampling,
                    spec.k,
                    config.parallelism,
                    cache.as_ref().map(|c| (c, run_id.as_str())),
                )
                .map_err(|e| stage.fail(e))?;
                if let Some(partial) = outcome.partial_failure() {
                    // Keep what completed so the rerun resumes from cache.
                    write_generations(&outcome.records, &generations_path)
                        .map_err(|e| stage.fail(e))?;
                    write_gaps_file(&mode_dir.join("generations.gaps.json"), &partial)?;
                    return Err(stage.fail(Error::Partial(partial)));
                }
                let records = outcome.into_result()?;
                write_generations(&records, &generations_path).map_err(|e| stage.fail(e))?;
                let mut manifest = RunManifest::new(
                    family,
                    &config.model_name,
                    *mode,
                    sampling.clone(),
                    &prompt_file_hash,
                    &template_revision,
                    &config.endpoint_url,
                )?;
                // Keep the original timestamp on reruns so the manifest
                // bytes stay stable.
                if let Ok(previous) = RunManifest::load(&manifest_path) {
                    if previous.run_id == manifest.run_id {
                        manifest.created_at = previous.created_at;
                    }
                }
                manifest.write(&manifest_path)?;
                records
            }
        };

        // ---- embed ----
        let mut embeddings: Option<EmbeddingSet> = None;
        if let Some(client) = &embed_client {
            let stage = Stage { name: "embed" };
            let embeddings_path = mode_dir.join("embeddings.jsonl");
            let texts: Vec<String> = generations.iter().map(|g| g.text.clone()).collect();
            let reuse = match load_embeddings(&embeddings_path) {
                Ok(set) if texts.iter().all(|t| set.vector_for_text(t).is_ok()) => Some(set),
                _ => None,
            };
            let set = match reuse {
                Some(set) => {
                    reused_stages += 1;
                    set
                }
                None => {
                    let vectors = client
                        .embed(&texts, config.parallelism, cache.as_ref())
                        .map_err(|e| stage.fail(e))?;
                    let mut set = EmbeddingSet::new();
                    for vector in vectors {
                        // Duplicate texts fan out to the same vector.
                        if set.get(&vector.source_text_hash).is_none() {
                            set.insert(vector)?;
                        }
                    }
                    write_embeddings(&set, &embeddings_path).map_err(|e| stage.fail(e))?;
                    set
                }
            };
            embeddings = Some(set);
        }

        // ---- label ----
        let mut labels: Option<Vec<LabelRecord>> = None;
        if spec.selection.topic {
            let stage = Stage { name: "label" };
            let labels_path = mode_dir.join("labels.jsonl");
            let reuse = match load_labels(&labels_path) {
                Ok(existing) if existing.len() == generations.len() => Some(existing),
                _ => None,
            };
            let records = match reuse {
                Some(existing) => {
                    reused_stages += 1;
                    existing
                }
                None => {
                    let records = match options.label_method {
                        LabelMethod::Keyword => classify_keyword_batch(
                            &generations,
                            taxonomy.as_ref().expect("taxonomy built for keyword labeling"),
                        ),
                        LabelMethod::Llm => {
                            let outcome = extract_labels_llm(
                                labeler.as_ref().expect("labeler built for llm labeling"),
                                &generations,
                                config.parallelism,
                                cache.as_ref(),
                            );
                            if let Some(partial) = outcome.partial_failure() {
                                write_labels(&outcome.labels, &labels_path)
                                    .map_err(|e| stage.fail(e))?;
                                write_gaps_file(&mode_dir.join("labels.gaps.json"), &partial)?;
                                return Err(stage.fail(Error::Partial(partial)));
                            }
                            outcome.into_result()?
                        }
                    };
                    write_labels(&records, &labels_path).map_err(|e| stage.fail(e))?;
                    records
                }
            };
            labels = Some(records);
        }

        // ---- score ----
        let stage = Stage { name: "score" };
        let cell_path = mode_dir.join("cell.json");
        let reuse = match load_score_document(&cell_path) {
            Ok(doc) if doc.cell.run_id == run_id => Some(doc),
            _ => None,
        };
        let doc = match reuse {
            Some(doc) => {
                reused_stages += 1;
                doc
            }
            None => {
                let doc = score_cell(ScoreInputs {
                    generations: &generations,
                    embeddings: embeddings.as_ref(),
                    labels: labels.as_deref(),
                    selection: &spec.selection,
                    model_name: &config.model_name,
                    task: &task,
                    run_id: &run_id,
                    entropy_steps: spec.steps.map(|s| s as usize),
                })
                .map_err(|e| stage.fail(e))?;
                write_score_document(&doc, &cell_path)?;
                if let Some(trajectory) = &doc.entropy_trajectory {
                    let trajectory_path = mode_dir.join("trajectory.json");
                    let mut bytes = serde_json::to_vec_pretty(trajectory)
                        .map_err(|e| Error::invalid(format!("serializing trajectory: {e}")))?;
                    bytes.push(b'\n');
                    std::fs::write(&trajectory_path, bytes)
                        .map_err(|e| Error::io(&trajectory_path, e))?;
                }
                doc
            }
        };
        cells.push(doc.cell.clone());
        cell_paths.push(cell_path);
    }

    // ---- report ----
    let stage = Stage { name: "report" };
    let report = build_report(cells, baseline, comparison, config.tau).map_err(|e| stage.fail(e))?;
    let report_json = preset_dir.join("report.json");
    let report_markdown = preset_dir.join("report.md");
    std::fs::write(&report_json, emit(&report, ReportFormat::Json))
        .map_err(|e| Error::io(&report_json, e))?;
    std::fs::write(&report_markdown, emit(&report, ReportFormat::Markdown))
        .map_err(|e| Error::io(&report_markdown, e))?;

    Ok(ProtocolSummary {
        preset: preset.name().to_string(),
        task,
        modes: modes.iter().map(|m| m.to_string()).collect(),
        num_prompts: prompts.len(),
        samples_per_prompt: spec.k,
        cell_paths,
        report_json,
        report_markdown,
        report_gaps: report.gaps.len(),
        generation: gen_client.telemetry().snapshot(),
        embedding: embed_client.as_ref().map(|c| c.telemetry().snapshot()),
        labeling: labeler.as_ref().map(|l| l.telemetry().snapshot()),
        reused_stages,
    })
}

/// Convenience wrapper returning the built report as well (used by the
/// CLI to print the verdict line).
pub fn load_report(path: &Path) -> Result<Report> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line().max(1) as u64,
        msg: e.to_string(),
    })
}
