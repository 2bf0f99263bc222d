//! Command-line front-end: one subcommand per pipeline stage plus the
//! full-protocol runner. Configuration comes from a single TOML/JSON
//! file; secrets come from the environment.
//!
//! Exit codes: 0 success, 1 runtime/partial failure (partial batch
//! failures also write a `<out>.gaps.json` file), 2 configuration or
//! validation error.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

use crate::cache::DiskCache;
use crate::config::{load_config, Config};
use crate::corpus::{
    compute_run_id, content_hash, load_generations, load_prompts, write_generations,
    GenerationRecord, RunManifest, SamplingParams,
};
use crate::embedclient::{write_embeddings, EmbeddingSet, load_embeddings};
use crate::error::{Error, Result};
use crate::genclient::generate_batch;
use crate::labeling::{
    classify_keyword_batch, extract_labels_llm, load_labels, write_labels, LabelMethod,
};
use crate::protocol::{
    build_embed_client, build_gen_client, build_labeler, build_renderer, build_taxonomy,
    run_protocol, score_cell, write_gaps_file, MetricSelection, Preset, ProtocolOptions,
    ScoreInputs,
};
use crate::report::{
    build_report, emit, load_score_document, write_score_document, ReportFormat,
};
use crate::templates::{
    load_rendered, write_rendered, ModeKind, ModelFamily, PromptMode, RenderedRecord,
};

#[derive(Parser, Debug)]
#[command(
    name = "promptdiv",
    version,
    about = "Measure how prompt-template structure changes generation diversity"
)]
pub struct Cli {
    /// Experiment config file (TOML or JSON).
    #[arg(long, short = 'c', global = true, default_value = "promptdiv.toml")]
    pub config: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Render instructions under a prompt template mode.
    Render(RenderArgs),
    /// Sample generations for rendered prompts.
    Generate(GenerateArgs),
    /// Embed generated texts.
    Embed(EmbedArgs),
    /// Assign topic labels to generated texts.
    Label(LabelArgs),
    /// Compute the diversity metric battery for one generation lane.
    Score(ScoreArgs),
    /// Compare scored cells: winners per metric plus collapse verdicts.
    Report(ReportArgs),
    /// Run a full measurement protocol preset end to end.
    Protocol(ProtocolArgs),
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Prompt corpus JSONL with {"id", "instruction"} records.
    #[arg(long)]
    pub prompts: PathBuf,
    /// full_template | fake_template | minimum_dialog | simple_steer |
    /// mixed_template | all; append "+diversity" for the steering suffix.
    #[arg(long)]
    pub mode: String,
    /// llama | qwen | tulu | mistral | phi (default: config model_family).
    #[arg(long)]
    pub family: Option<String>,
    /// Task tag for prompts that do not carry one.
    #[arg(long, default_value = "default")]
    pub task: String,
    /// Output rendered-prompt JSONL.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Rendered-prompt JSONL from `render` (one mode per file).
    #[arg(long)]
    pub rendered: PathBuf,
    /// Samples per prompt.
    #[arg(long, short = 'k', default_value_t = 1)]
    pub k: u32,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 0.9)]
    pub top_p: f64,
    /// Max tokens per sample (default: config max_tokens).
    #[arg(long)]
    pub max_tokens: Option<u32>,
    /// Base sampling seed (default: config seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Capture this many top-token logprobs per step (0 = off).
    #[arg(long, default_value_t = 0)]
    pub logprob_top_k: u32,
    /// Output generations JSONL; a manifest lands next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Bypass the response cache.
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Generations JSONL from `generate`.
    #[arg(long)]
    pub generations: PathBuf,
    /// Output embeddings JSONL.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    /// Generations JSONL from `generate`.
    #[arg(long)]
    pub generations: PathBuf,
    /// llm | keyword.
    #[arg(long, default_value = "llm")]
    pub method: String,
    /// Keyword taxonomy JSONL (default: config taxonomy_path or builtin).
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Output labels JSONL.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Generations JSONL from `generate`.
    #[arg(long)]
    pub generations: PathBuf,
    /// Embeddings JSONL (required for semantic diversity).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Labels JSONL (required for topic diversity).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Comma-separated metrics: semantic, topic, structural, lexical,
    /// entropy, or names like distinct_2. Default: everything the
    /// provided inputs support.
    #[arg(long)]
    pub metrics: Option<String>,
    /// Run manifest (default: <generations with .manifest.json>).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Task tag on the cell (overrides nothing if cells set it already).
    #[arg(long, default_value = "default")]
    pub task: String,
    /// Entropy trajectory length (default: the records' max_tokens).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output score document JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Score documents from `score` (at least one).
    #[arg(long, num_args = 1.., required = true)]
    pub cells: Vec<PathBuf>,
    /// Collapse threshold (default: config tau).
    #[arg(long)]
    pub tau: Option<f64>,
    /// json | csv | markdown.
    #[arg(long, default_value = "markdown")]
    pub format: String,
    /// Baseline mode.
    #[arg(long, default_value = "simple_steer")]
    pub baseline: String,
    /// Comparison mode.
    #[arg(long, default_value = "full_template")]
    pub comparison: String,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProtocolArgs {
    /// paper-commonsense | paper-openended | paper-entropy.
    #[arg(long)]
    pub preset: String,
    /// Prompt corpus JSONL.
    #[arg(long)]
    pub prompts: PathBuf,
    /// Run directory; artifacts land under <out-dir>/<preset>/<mode>/.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Task tag (default: derived from the preset).
    #[arg(long)]
    pub task: Option<String>,
    /// Override the number of prompts.
    #[arg(long)]
    pub n: Option<usize>,
    /// Override samples per prompt.
    #[arg(long, short = 'k')]
    pub k: Option<u32>,
    /// Override entropy trajectory steps.
    #[arg(long)]
    pub steps: Option<u32>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    /// Comma-separated modes (default: the four comparison modes).
    #[arg(long)]
    pub modes: Option<String>,
    /// llm | keyword (topic labeling for paper-openended).
    #[arg(long, default_value = "llm")]
    pub label_method: String,
    #[arg(long)]
    pub no_cache: bool,
}

/// Runs a parsed invocation and maps errors to exit codes.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}

fn load_cli_config(path: &Path) -> Result<Config> {
    if !path.exists() {
        return Err(Error::invalid(format!(
            "config file {} not found (pass --config)",
            path.display()
        )));
    }
    load_config(path)
}

fn execute(cli: Cli) -> Result<()> {
    let config = load_cli_config(&cli.config)?;
    match cli.command {
        Command::Render(args) => cmd_render(&config, args),
        Command::Generate(args) => cmd_generate(&config, args),
        Command::Embed(args) => cmd_embed(&config, args),
        Command::Label(args) => cmd_label(&config, args),
        Command::Score(args) => cmd_score(&config, args),
        Command::Report(args) => cmd_report(&config, args),
        Command::Protocol(args) => cmd_protocol(&config, args),
    }
}

/// Expands a `--mode` argument; `all` means the four comparison modes.
fn parse_mode_arg(raw: &str) -> Result<Vec<PromptMode>> {
    let (base, diversity_suffix) = match raw.strip_suffix("+diversity") {
        Some(base) => (base, true),
        None => (raw, false),
    };
    if base == "all" {
        return Ok(ModeKind::STRUCTURED
            .iter()
            .map(|kind| PromptMode {
                kind: *kind,
                diversity_suffix,
            })
            .collect());
    }
    Ok(vec![raw.parse()?])
}

fn parse_mode_list(raw: &str) -> Result<Vec<PromptMode>> {
    let mut modes = Vec::new();
    for token in raw.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        for mode in parse_mode_arg(token)? {
            if !modes.contains(&mode) {
                modes.push(mode);
            }
        }
    }
    if modes.is_empty() {
        return Err(Error::invalid("mode list is empty"));
    }
    Ok(modes)
}

fn open_cache(config: &Config, no_cache: bool) -> Result<Option<DiskCache>> {
    if no_cache {
        Ok(None)
    } else {
        DiskCache::new(&config.cache_dir).map(Some)
    }
}

fn manifest_path_for(generations: &Path) -> PathBuf {
    generations.with_extension("manifest.json")
}

fn gaps_path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".gaps.json");
    out.with_file_name(name)
}

fn cmd_render(config: &Config, args: RenderArgs) -> Result<()> {
    let family = match &args.family {
        Some(raw) => raw.parse::<ModelFamily>()?,
        None => config.model_family.ok_or_else(|| {
            Error::invalid(
                "no model family: pass --family or set model_family in the config \
                 (valid families: llama, qwen, tulu, mistral, phi)",
            )
        })?,
    };
    let modes = parse_mode_arg(&args.mode)?;
    let (renderer, _) = build_renderer(config)?;
    let prompts = load_prompts(&args.prompts)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed.unwrap_or(0));

    let mut records = Vec::with_capacity(prompts.len() * modes.len());
    for prompt in prompts.records() {
        let task = if prompt.task.is_empty() {
            args.task.as_str()
        } else {
            prompt.task.as_str()
        };
        for mode in &modes {
            let rendered = if mode.kind == ModeKind::MixedTemplate {
                let pool: Vec<PromptMode> = ModeKind::STRUCTURED
                    .iter()
                    .map(|kind| PromptMode {
                        kind: *kind,
                        diversity_suffix: mode.diversity_suffix,
                    })
                    .collect();
                renderer.render_mixed(&prompt.instruction, family, &pool, &mut rng)?
            } else {
                renderer.render(&prompt.instruction, family, *mode)?
            };
            records.push(RenderedRecord::from_rendered(&prompt.id, task, *mode, rendered));
        }
    }
    write_rendered(&records, &args.out)?;
    println!(
        "rendered {} prompts x {} mode(s) ({} lines) -> {}",
        prompts.len(),
        modes.len(),
        records.len(),
        args.out.display()
    );
    Ok(())
}

/// Checks the rendered file is a single (family, requested_mode) lane.
fn check_single_lane(records: &[RenderedRecord], origin: &Path) -> Result<()> {
    let first = &records[0];
    for record in records {
        if record.requested_mode != first.requested_mode || record.family != first.family {
            return Err(Error::invalid(format!(
                "{} mixes lanes ({}/{} vs {}/{}); generate runs one (family, mode) lane at a \
                 time — render each mode to its own file instead of --mode all",
                origin.display(),
                first.family,
                first.requested_mode,
                record.family,
                record.requested_mode
            )));
        }
    }
    Ok(())
}

fn cmd_generate(config: &Config, args: GenerateArgs) -> Result<()> {
    let rendered = load_rendered(&args.rendered)?;
    check_single_lane(&rendered, &args.rendered)?;

    let sampling = SamplingParams {
        temperature: args.temperature,
        top_p: args.top_p,
        max_tokens: args.max_tokens.unwrap_or(config.max_tokens),
        seed: args.seed.or(config.seed),
        logprob_top_k: args.logprob_top_k,
    };
    sampling.validate()?;

    let (_, template_revision) = build_renderer(config)?;
    let rendered_bytes =
        std::fs::read(&args.rendered).map_err(|e| Error::io(&args.rendered, e))?;
    let prompt_file_hash = content_hash(&rendered_bytes);
    let mode = rendered[0].requested_mode;
    let family = rendered[0].family;
    let run_id = compute_run_id(
        &config.model_name,
        mode,
        &sampling,
        &prompt_file_hash,
        &template_revision,
    )?;

    let client = build_gen_client(config)?;
    let cache = open_cache(config, args.no_cache)?;
    let pairs: Vec<(String, crate::templates::RenderedPrompt)> = rendered
        .iter()
        .map(|r| (r.prompt_id.clone(), r.rendered_prompt()))
        .collect();
    let outcome = generate_batch(
        &client,
        &pairs,
        &sampling,
        args.k,
        config.parallelism,
        cache.as_ref().map(|c| (c, run_id.as_str())),
    )?;

    let telemetry = client.telemetry().snapshot();
    if let Some(partial) = outcome.partial_failure() {
        write_generations(&outcome.records, &args.out)?;
        let gaps_path = gaps_path_for(&args.out);
        write_gaps_file(&gaps_path, &partial)?;
        eprintln!(
            "generated {}/{} samples; failures listed in {}",
            partial.completed,
            partial.total,
            gaps_path.display()
        );
        return Err(Error::Partial(partial));
    }
    let records = outcome.into_result()?;
    write_generations(&records, &args.out)?;

    let manifest_path = manifest_path_for(&args.out);
    let mut manifest = RunManifest::new(
        family,
        &config.model_name,
        mode,
        sampling,
        &prompt_file_hash,
        &template_revision,
        &config.endpoint_url,
    )?;
    // Keep the original timestamp when rerunning an identical lane so the
    // manifest bytes stay stable.
    if let Ok(previous) = RunManifest::load(&manifest_path) {
        if previous.run_id == manifest.run_id {
            manifest.created_at = previous.created_at;
        }
    }
    manifest.write(&manifest_path)?;
    println!(
        "generated {} samples ({} requests, {} retries, {} cache hits) -> {} (run {})",
        records.len(),
        telemetry.requests,
        telemetry.retries,
        telemetry.cache_hits,
        args.out.display(),
        manifest.run_id
    );
    Ok(())
}

fn cmd_embed(config: &Config, args: EmbedArgs) -> Result<()> {
    let generations = load_generations(&args.generations)?;
    let texts: Vec<String> = generations.iter().map(|g| g.text.clone()).collect();
    let client = build_embed_client(config)?;
    let cache = open_cache(config, args.no_cache)?;
    let vectors = client.embed(&texts, config.parallelism, cache.as_ref())?;
    let mut set = EmbeddingSet::new();
    for vector in vectors {
        // Duplicate texts fan out to the same vector; keep one copy.
        if set.get(&vector.source_text_hash).is_none() {
            set.insert(vector)?;
        }
    }
    write_embeddings(&set, &args.out)?;
    let telemetry = client.telemetry().snapshot();
    println!(
        "embedded {} texts ({} distinct, {} requests, {} cache hits) -> {}",
        texts.len(),
        set.len(),
        telemetry.requests,
        telemetry.cache_hits,
        args.out.display()
    );
    Ok(())
}

fn cmd_label(config: &Config, args: LabelArgs) -> Result<()> {
    let generations = load_generations(&args.generations)?;
    let method: LabelMethod = args.method.parse()?;
    match method {
        LabelMethod::Keyword => {
            let taxonomy = match &args.taxonomy {
                Some(path) => crate::labeling::load_taxonomy(path)?,
                None => build_taxonomy(config)?,
            };
            let labels = classify_keyword_batch(&generations, &taxonomy);
            write_labels(&labels, &args.out)?;
            println!(
                "labeled {} generations by keyword -> {}",
                labels.len(),
                args.out.display()
            );
        }
        LabelMethod::Llm => {
            let labeler = build_labeler(config)?;
            let cache = open_cache(config, args.no_cache)?;
            let outcome =
                extract_labels_llm(&labeler, &generations, config.parallelism, cache.as_ref());
            let telemetry = labeler.telemetry().snapshot();
            if let Some(partial) = outcome.partial_failure() {
                write_labels(&outcome.labels, &args.out)?;
                let gaps_path = gaps_path_for(&args.out);
                write_gaps_file(&gaps_path, &partial)?;
                eprintln!(
                    "labeled {}/{} generations; failures listed in {}",
                    partial.completed,
                    partial.total,
                    gaps_path.display()
                );
                return Err(Error::Partial(partial));
            }
            let labels = outcome.into_result()?;
            write_labels(&labels, &args.out)?;
            println!(
                "labeled {} generations via llm ({} requests, {} cache hits) -> {}",
                labels.len(),
                telemetry.requests,
                telemetry.cache_hits,
                args.out.display()
            );
        }
    }
    Ok(())
}

/// The default metric selection: everything the provided inputs support.
fn default_selection(
    records: &[GenerationRecord],
    have_embeddings: bool,
    have_labels: bool,
) -> MetricSelection {
    let mut selection = MetricSelection {
        structural: true,
        ..MetricSelection::default()
    }
    .all_lexical();
    selection.semantic = have_embeddings;
    selection.topic = have_labels;
    selection.entropy = !records.is_empty()
        && records.iter().all(|r| {
            r.sampling.logprob_top_k > 0
                && r.token_logprobs.as_ref().is_some_and(|t| !t.is_empty())
        });
    selection
}

fn cmd_score(config: &Config, args: ScoreArgs) -> Result<()> {
    let _ = config; // scoring is endpoint-free; config only locates files
    let generations = load_generations(&args.generations)?;
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| manifest_path_for(&args.generations));
    if !manifest_path.exists() {
        return Err(Error::invalid(format!(
            "run manifest {} not found (produced by `generate`; pass --manifest)",
            manifest_path.display()
        )));
    }
    let manifest = RunManifest::load(&manifest_path)?;

    let embeddings = match &args.embeddings {
        Some(path) => Some(load_embeddings(path)?),
        None => None,
    };
    let labels = match &args.labels {
        Some(path) => Some(load_labels(path)?),
        None => None,
    };
    let selection = match &args.metrics {
        Some(raw) => {
            let tokens: Vec<String> = raw.split(',').map(|t| t.trim().to_string()).collect();
            MetricSelection::parse(&tokens)?
        }
        None => default_selection(&generations, embeddings.is_some(), labels.is_some()),
    };

    let doc = score_cell(ScoreInputs {
        generations: &generations,
        embeddings: embeddings.as_ref(),
        labels: labels.as_deref(),
        selection: &selection,
        model_name: &manifest.model_name,
        task: &args.task,
        run_id: &manifest.run_id,
        entropy_steps: args.steps,
    })?;
    write_score_document(&doc, &args.out)?;
    let summary: Vec<String> = doc
        .cell
        .metrics
        .iter()
        .map(|(name, value)| format!("{name}={value:.4}"))
        .collect();
    println!(
        "scored {} generations: {} -> {}",
        generations.len(),
        summary.join(", "),
        args.out.display()
    );
    Ok(())
}

fn cmd_report(config: &Config, args: ReportArgs) -> Result<()> {
    let mut cells = Vec::with_capacity(args.cells.len());
    for path in &args.cells {
        cells.push(load_score_document(path)?.cell);
    }
    let tau = args.tau.unwrap_or(config.tau);
    let baseline: PromptMode = args.baseline.parse()?;
    let comparison: PromptMode = args.comparison.parse()?;
    let format: ReportFormat = args.format.parse()?;
    let report = build_report(cells, baseline, comparison, tau)?;
    let bytes = emit(&report, format);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
            let collapsed = report
                .rows
                .iter()
                .filter(|r| r.verdict.as_ref().is_some_and(|v| v.collapsed))
                .count();
            println!(
                "report: {} rows, {} collapse verdicts, {} gaps -> {}",
                report.rows.len(),
                collapsed,
                report.gaps.len(),
                path.display()
            );
        }
        None => {
            std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| Error::io(Path::new("stdout"), e))?;
        }
    }
    Ok(())
}

fn cmd_protocol(config: &Config, args: ProtocolArgs) -> Result<()> {
    let preset: Preset = args.preset.parse()?;
    let mut options = ProtocolOptions::new(&args.out_dir, &args.prompts);
    options.task = args.task.clone();
    options.n = args.n;
    options.k = args.k;
    options.steps = args.steps;
    options.temperature = args.temperature;
    options.top_p = args.top_p;
    options.label_method = args.label_method.parse()?;
    options.use_cache = !args.no_cache;
    if let Some(raw) = &args.modes {
        options.modes = Some(parse_mode_list(raw)?);
    }

    let summary = run_protocol(config, preset, &options)?;
    println!(
        "protocol {} over {} prompt(s) x {} sample(s), modes [{}]",
        summary.preset,
        summary.num_prompts,
        summary.samples_per_prompt,
        summary.modes.join(", ")
    );
    println!(
        "generation: {} requests, {} retries, {} cache hits; {} stage(s) reused",
        summary.generation.requests,
        summary.generation.retries,
        summary.generation.cache_hits,
        summary.reused_stages
    );
    if let Some(t) = &summary.embedding {
        println!(
            "embedding: {} requests, {} cache hits",
            t.requests, t.cache_hits
        );
    }
    if let Some(t) = &summary.labeling {
        println!(
            "labeling: {} requests, {} cache hits",
            t.requests, t.cache_hits
        );
    }
    println!(
        "report ({} gap note(s)): {} and {}",
        summary.report_gaps,
        summary.report_json.display(),
        summary.report_markdown.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_parses_subcommands() {
        let cli = Cli::try_parse_from([
            "promptdiv",
            "render",
            "--prompts",
            "p.jsonl",
            "--mode",
            "all",
            "--family",
            "llama",
            "--out",
            "r.jsonl",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::Render(_)));
        assert_eq!(cli.config, PathBuf::from("promptdiv.toml"));

        let cli = Cli::try_parse_from([
            "promptdiv",
            "--config",
            "exp.toml",
            "protocol",
            "--preset",
            "paper-openended",
            "--prompts",
            "p.jsonl",
            "--out-dir",
            "runs",
            "-k",
            "64",
        ])
        .unwrap();
        assert_eq!(cli.config, PathBuf::from("exp.toml"));
        match cli.command {
            Command::Protocol(args) => {
                assert_eq!(args.k, Some(64));
                assert_eq!(args.preset, "paper-openended");
            }
            other => panic!("unexpected command {other:?}"),
        }
    }

    #[test]
    fn mode_arg_expansion() {
        let all = parse_mode_arg("all").unwrap();
        assert_eq!(all.len(), 4);
        assert!(all.iter().all(|m| !m.diversity_suffix));

        let all_diversity = parse_mode_arg("all+diversity").unwrap();
        assert_eq!(all_diversity.len(), 4);
        assert!(all_diversity.iter().all(|m| m.diversity_suffix));

        let single = parse_mode_arg("simple_steer+diversity").unwrap();
        assert_eq!(single.len(), 1);
        assert!(single[0].diversity_suffix);

        assert!(parse_mode_arg("bogus").is_err());
    }

    #[test]
    fn mode_list_dedupes() {
        let modes = parse_mode_list("simple_steer, full_template, simple_steer").unwrap();
        assert_eq!(modes.len(), 2);
        assert!(parse_mode_list(" , ").is_err());
    }

    #[test]
    fn gaps_path_appends_suffix() {
        assert_eq!(
            gaps_path_for(Path::new("out/gen.jsonl")),
            PathBuf::from("out/gen.jsonl.gaps.json")
        );
    }

    #[test]
    fn manifest_path_swaps_extension() {
        assert_eq!(
            manifest_path_for(Path::new("out/generations.jsonl")),
            PathBuf::from("out/generations.manifest.json")
        );
    }

    #[test]
    fn default_selection_follows_inputs() {
        let selection = default_selection(&[], false, false);
        assert!(selection.structural);
        assert!(selection.self_bleu);
        assert!(!selection.semantic);
        assert!(!selection.topic);
        let selection = default_selection(&[], true, true);
        assert!(selection.semantic);
        assert!(selection.topic);
    }
}
