//! Acceptance gate: the eight criteria the project must meet, one test
//! per criterion, each printing a single PASS/FAIL line (visible with
//! `cargo test --test acceptance -- --nocapture`, and on any failure).

mod support;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use promptdiv::config::Config;
use promptdiv::corpus::{FinishReason, GenerationRecord, SamplingParams, StepLogprobs};
use promptdiv::embedclient::EmbeddingVector;
use promptdiv::labeling::LabelDistribution;
use promptdiv::metrics::semantic::mean_pairwise_distance;
use promptdiv::metrics::{
    collapse_verdict, cosine_distance, distinct_n, entropy_trajectory, names, self_bleu,
    semantic_diversity, step_entropy, structural_diversity, topic_diversity, ResponseGroup,
    StopwordSet,
};
use promptdiv::protocol::{run_protocol, Preset, ProtocolOptions};
use promptdiv::report::{build_report, load_score_document, ReportCell, Winner};
use promptdiv::templates::{ModeKind, ModelFamily, PromptMode, Renderer};
use promptdiv_mockserver::{MockConfig, MockServer};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use support::{assert_close, oracle};

/// Runs one criterion body and prints its PASS/FAIL line.
fn criterion(name: &str, body: impl FnOnce()) {
    let started = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(body));
    let elapsed = started.elapsed();
    match result {
        Ok(()) => println!("acceptance criterion {name}: PASS ({elapsed:.2?})"),
        Err(payload) => {
            println!("acceptance criterion {name}: FAIL ({elapsed:.2?})");
            panic::resume_unwind(payload);
        }
    }
}

// ---------------------------------------------------------------------
// Criterion 1 — template golden suite
// ---------------------------------------------------------------------

const CANONICAL_INSTRUCTION: &str = "Please write a news about a random topic.";

/// The 20 expected render outputs for the canonical instruction: every
/// model family under every structured mode, byte for byte.
const GOLDEN: &[(ModelFamily, ModeKind, &str)] = &[
    (
        ModelFamily::Llama,
        ModeKind::FullTemplate,
        "<|begin_of_text|><|start_header_id|>user<|end_header_id|> Please write a news about a random topic.<|eot_id|><|start_header_id|>assistant<|end_header_id|>",
    ),
    (
        ModelFamily::Llama,
        ModeKind::FakeTemplate,
        "<#init_seq><@user_name>user<@/user_name> Please write a news about a random topic.<#eot><@user_name>assistant<@/user_name>",
    ),
    (
        ModelFamily::Llama,
        ModeKind::MinimumDialog,
        "user: Please write a news about a random topic. \n assistant:",
    ),
    (
        ModelFamily::Llama,
        ModeKind::SimpleSteer,
        "Please write a news about a random topic.",
    ),
    (
        ModelFamily::Qwen,
        ModeKind::FullTemplate,
        "<|im_start|>system You are Qwen, created by Alibaba Cloud. You are a helpful assistant.<|im_end|>\n<|im_start|>user Please write a news about a random topic.<|im_end|>\n<|im_start|>assistant",
    ),
    (
        ModelFamily::Qwen,
        ModeKind::FakeTemplate,
        "<#meta_start>sys You are Qwen, created by Alibaba Cloud. You are a helpful assistant.<#meta_end>\n<#meta_start>usr Please write a news about a random topic.<#meta_end>\n<#meta_start>bot",
    ),
    (
        ModelFamily::Qwen,
        ModeKind::MinimumDialog,
        "user: Please write a news about a random topic.\n assistant:",
    ),
    (
        ModelFamily::Qwen,
        ModeKind::SimpleSteer,
        "Please write a news about a random topic.",
    ),
    (
        ModelFamily::Tulu,
        ModeKind::FullTemplate,
        "<|user|> Please write a news about a random topic. <|assistant|>",
    ),
    (
        ModelFamily::Tulu,
        ModeKind::FakeTemplate,
        "<<@@user@@>> Please write a news about a random topic. <<@@bot@@>>",
    ),
    (
        ModelFamily::Tulu,
        ModeKind::MinimumDialog,
        "user: Please write a news about a random topic.\n assistant:",
    ),
    (
        ModelFamily::Tulu,
        ModeKind::SimpleSteer,
        "Please write a news about a random topic.",
    ),
    (
        ModelFamily::Mistral,
        ModeKind::FullTemplate,
        "<s> [INST] Please write a news about a random topic. [/INST]",
    ),
    (
        ModelFamily::Mistral,
        ModeKind::FakeTemplate,
        "<@user> <Instruction> Please write a news about a random topic. </Instruction>",
    ),
    (
        ModelFamily::Mistral,
        ModeKind::MinimumDialog,
        "user: Please write a news about a random topic.\n assistant:",
    ),
    (
        ModelFamily::Mistral,
        ModeKind::SimpleSteer,
        "Please write a news about a random topic.",
    ),
    (
        ModelFamily::Phi,
        ModeKind::FullTemplate,
        "<|user|>\nPlease write a news about a random topic.<|end|>\n<|assistant|>\n",
    ),
    (
        ModelFamily::Phi,
        ModeKind::FakeTemplate,
        "<@user> Please write a news about a random topic. <@end> <@assistant>",
    ),
    (
        ModelFamily::Phi,
        ModeKind::MinimumDialog,
        "user: Please write a news about a random topic.\n assistant:",
    ),
    (
        ModelFamily::Phi,
        ModeKind::SimpleSteer,
        "Please write a news about a random topic.",
    ),
];

#[test]
fn criterion_1_template_golden_suite() {
    criterion("1 (template golden suite)", || {
        let started = Instant::now();
        let renderer = Renderer::builtin();
        assert_eq!(GOLDEN.len(), 20, "5 families x 4 modes");
        for (family, kind, expected) in GOLDEN {
            let rendered = renderer
                .render(CANONICAL_INSTRUCTION, *family, PromptMode::new(*kind))
                .unwrap_or_else(|e| panic!("render {family:?}/{kind:?}: {e}"));
            assert_eq!(
                rendered.text.as_bytes(),
                expected.as_bytes(),
                "render output for {family:?}/{kind:?} is not byte-identical:\n got: {:?}\nwant: {:?}",
                rendered.text,
                expected
            );
        }
        assert!(
            started.elapsed() < Duration::from_secs(1),
            "golden suite must finish in under 1s"
        );
    });
}

// ---------------------------------------------------------------------
// Criterion 2 — metric oracle equivalence
// ---------------------------------------------------------------------

#[test]
fn criterion_2_metric_oracle_equivalence() {
    criterion("2 (metric oracle equivalence)", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(0x0A0C_2E17);
        for case in 0..1000 {
            let corpus = support::random_corpus(&mut rng);

            for n in 2..=5 {
                let reference = oracle::distinct_n(&corpus, n);
                let computed = distinct_n(&corpus, n);
                match reference {
                    None => assert!(
                        computed.is_err(),
                        "case {case}: distinct_{n} must error when the corpus has no {n}-grams"
                    ),
                    Some(want) => assert_close(
                        computed.unwrap_or_else(|e| {
                            panic!("case {case}: distinct_{n} failed: {e}")
                        }),
                        want,
                        1e-9,
                        &format!("case {case}: distinct_{n}"),
                    ),
                }
            }

            let want = oracle::self_bleu(&corpus).expect("corpus always has >= 2 responses");
            let got = self_bleu(&corpus).expect("library self_bleu");
            assert_close(got, want, 1e-9, &format!("case {case}: self_bleu"));

            let labels = support::random_labels(&mut rng);
            let mut counts: BTreeMap<String, u64> = BTreeMap::new();
            for label in &labels {
                *counts.entry(label.clone()).or_insert(0) += 1;
            }
            let dist = LabelDistribution::from_counts(counts).expect("label distribution");
            let want = oracle::topic_diversity(&labels).expect("labels are non-empty");
            let got = topic_diversity(&dist).expect("library topic_diversity").value;
            assert_close(got, want, 1e-9, &format!("case {case}: topic_diversity"));

            let logprobs = support::random_step_logprobs(&mut rng);
            let step = StepLogprobs {
                token: "t0".to_string(),
                logprob: logprobs[0],
                top_alternatives: logprobs
                    .iter()
                    .enumerate()
                    .map(|(i, lp)| (format!("t{i}"), *lp))
                    .collect(),
            };
            let want = oracle::step_entropy(&logprobs);
            let got = step_entropy(&step).expect("library step_entropy");
            assert_close(got, want, 1e-9, &format!("case {case}: step_entropy"));
        }
        assert!(
            started.elapsed() < Duration::from_secs(30),
            "oracle equivalence must finish in under 30s"
        );
    });
}

// ---------------------------------------------------------------------
// Criterion 3 — semantic diversity analytic cases
// ---------------------------------------------------------------------

fn vector(values: &[f64], hash: &str) -> EmbeddingVector {
    EmbeddingVector::new(values.to_vec(), hash.to_string()).expect("valid embedding")
}

#[test]
fn criterion_3_semantic_diversity_analytic_cases() {
    criterion("3 (semantic diversity analytic cases)", || {
        // Identical embeddings: zero diversity.
        let same = vec![
            vector(&[0.3, 0.4, 0.5], "a"),
            vector(&[0.3, 0.4, 0.5], "a"),
            vector(&[0.3, 0.4, 0.5], "a"),
        ];
        let d = mean_pairwise_distance(&same).expect("identical corpus");
        assert_close(d, 0.0, 1e-12, "identical embeddings");

        // (1,0) / (0,1) / (1,0): pairwise distances 1, 0, 1 -> mean 2/3.
        let mixed = vec![
            vector(&[1.0, 0.0], "x"),
            vector(&[0.0, 1.0], "y"),
            vector(&[1.0, 0.0], "x"),
        ];
        let d = mean_pairwise_distance(&mixed).expect("orthogonal corpus");
        assert_close(d, 2.0 / 3.0, 1e-12, "orthogonal triple");

        // Antipodal pair: cosine distance exactly 2.
        let d = cosine_distance(&vector(&[1.0, 0.0], "x"), &vector(&[-1.0, 0.0], "nx"))
            .expect("antipodal pair");
        assert_close(d, 2.0, 1e-12, "antipodal pair");

        // The same analytic values through the per-prompt aggregate.
        let score = semantic_diversity(&[
            ("p1".to_string(), same),
            ("p2".to_string(), mixed),
        ])
        .expect("two prompt groups");
        assert_close(score.value, (0.0 + 2.0 / 3.0) / 2.0, 1e-12, "mean over prompts");
    });
}

// ---------------------------------------------------------------------
// Criterion 4 — entropy kernel hand computations
// ---------------------------------------------------------------------

fn step(logprobs: &[f64]) -> StepLogprobs {
    StepLogprobs {
        token: "t0".to_string(),
        logprob: logprobs[0],
        top_alternatives: logprobs
            .iter()
            .enumerate()
            .map(|(i, lp)| (format!("t{i}"), *lp))
            .collect(),
    }
}

#[test]
fn criterion_4_entropy_kernel() {
    criterion("4 (entropy kernel)", || {
        // One-hot: all mass on a single token, zero entropy.
        let h = step_entropy(&step(&[0.0])).expect("one-hot");
        assert_close(h, 0.0, 1e-12, "one-hot entropy");

        // Uniform over the top 4: ln 4.
        let quarter = 0.25f64.ln();
        let h = step_entropy(&step(&[quarter; 4])).expect("uniform top-4");
        assert_close(h, 4.0f64.ln(), 1e-9, "uniform top-4 entropy");

        // Two alternatives at p = 0.4 plus a residual bucket of 0.2:
        // H = -2 (0.4 ln 0.4) - 0.2 ln 0.2 ~= 1.054920.
        let lp = 0.4f64.ln();
        let h = step_entropy(&step(&[lp, lp])).expect("residual bucket");
        assert_close(h, 1.054920, 1e-6, "residual bucket entropy");
    });
}

// ---------------------------------------------------------------------
// Criterion 5 — reference-table fixture reproduces the bolding decisions
// ---------------------------------------------------------------------

/// Published distinct-2..5 and self-BLEU values for full-template vs
/// simple-steer news generation, per model.
struct FixtureRow {
    model: &'static str,
    family: ModelFamily,
    full: [f64; 5],
    simple: [f64; 5],
}

const FIXTURE: &[FixtureRow] = &[
    FixtureRow {
        model: "Llama-3-8B-Instruct",
        family: ModelFamily::Llama,
        full: [0.1556, 0.3249, 0.4699, 0.5826, 0.9319],
        simple: [0.2107, 0.4325, 0.5971, 0.7098, 0.8884],
    },
    FixtureRow {
        model: "Tulu-3-8B-SFT",
        family: ModelFamily::Tulu,
        full: [0.3646, 0.6908, 0.8615, 0.9375, 0.8186],
        simple: [0.3987, 0.7268, 0.8834, 0.9451, 0.7884],
    },
    FixtureRow {
        model: "Qwen2.5-7B-Instruct",
        family: ModelFamily::Qwen,
        full: [0.2158, 0.4715, 0.6532, 0.7654, 0.9157],
        simple: [0.2469, 0.5149, 0.6940, 0.8012, 0.8908],
    },
    FixtureRow {
        model: "Mistral-7B-Instruct-v0.1",
        family: ModelFamily::Mistral,
        full: [0.2192, 0.4504, 0.6208, 0.7368, 0.8969],
        simple: [0.2657, 0.5333, 0.7066, 0.8098, 0.8599],
    },
    FixtureRow {
        model: "Phi-3.5-mini-instruct",
        family: ModelFamily::Phi,
        full: [0.2775, 0.5943, 0.7996, 0.9030, 0.8792],
        simple: [0.3515, 0.6887, 0.8630, 0.9384, 0.8351],
    },
];

fn fixture_cell(row: &FixtureRow, kind: ModeKind, values: &[f64; 5]) -> ReportCell {
    let keys = [
        names::distinct(2),
        names::distinct(3),
        names::distinct(4),
        names::distinct(5),
        names::SELF_BLEU.to_string(),
    ];
    ReportCell {
        model_family: row.family,
        model_name: row.model.to_string(),
        task: "news".to_string(),
        mode: PromptMode::new(kind),
        temperature: 1.0,
        metrics: keys.into_iter().zip(values.iter().copied()).collect(),
        run_id: format!("fixture-{}-{}", row.model, kind.as_str()),
    }
}

#[test]
fn criterion_5_reference_fixture_bolding() {
    criterion("5 (lexical fixture bolding decisions)", || {
        let mut cells = Vec::new();
        for row in FIXTURE {
            cells.push(fixture_cell(row, ModeKind::FullTemplate, &row.full));
            cells.push(fixture_cell(row, ModeKind::SimpleSteer, &row.simple));
        }
        let report = build_report(
            cells,
            PromptMode::new(ModeKind::SimpleSteer),
            PromptMode::new(ModeKind::FullTemplate),
            0.2,
        )
        .expect("fixture report");

        assert!(report.gaps.is_empty(), "no gaps expected: {:?}", report.gaps);
        assert_eq!(report.rows.len(), 25, "5 models x 5 metrics");
        for row in &report.rows {
            assert_eq!(
                row.winner,
                Winner::Simple,
                "simple steer must win {} for {} ({} vs {})",
                row.metric,
                row.model_name,
                row.simple_value,
                row.template_value
            );
        }
    });
}

// ---------------------------------------------------------------------
// Criterion 6 — collapse verdict fixture
// ---------------------------------------------------------------------

#[test]
fn criterion_6_collapse_verdict_fixture() {
    criterion("6 (collapse verdict fixture)", || {
        let verdict = collapse_verdict(0.2107, 0.1556, 0.2).expect("fixture verdict");
        assert!(verdict.collapsed, "gap above tau must collapse");
        assert_close(verdict.relative_gap, 0.2615, 1e-4, "relative gap");
        assert_close(verdict.d_simple, 0.2107, 0.0, "d_simple passthrough");
        assert_close(verdict.d_template, 0.1556, 0.0, "d_template passthrough");
    });
}

// ---------------------------------------------------------------------
// Criterion 7 — end-to-end pipeline against the deterministic mock
// ---------------------------------------------------------------------

#[test]
fn criterion_7_end_to_end_mock_pipeline() {
    criterion("7 (end-to-end mock pipeline)", || {
        let started = Instant::now();
        let server = MockServer::start(MockConfig::default()).expect("mock server");
        let workdir = tempfile::tempdir().expect("tempdir");
        let config = Config {
            endpoint_url: server.url(),
            model_name: "mock-model".to_string(),
            model_family: Some(ModelFamily::Llama),
            seed: Some(0),
            cache_dir: workdir.path().join("cache"),
            ..Config::default()
        };
        let prompts =
            Path::new(env!("CARGO_MANIFEST_DIR")).join("data/prompts_openended.jsonl");
        let mut options = ProtocolOptions::new(workdir.path().join("run"), prompts);
        options.k = Some(64);
        options.modes = Some(vec![
            PromptMode::new(ModeKind::SimpleSteer),
            PromptMode::new(ModeKind::FullTemplate),
        ]);

        let summary = run_protocol(&config, Preset::Openended, &options).expect("first run");
        assert!(summary.generation.requests >= 1, "first run must hit the endpoint");
        assert_eq!(summary.cell_paths.len(), 2);

        // The canned label cycle per 64 samples is 32 sports / 16 health /
        // 8 politics / 8 science: H = 1.75 bits over support 4, so the
        // normalized topic entropy is exactly 7/8.
        for cell_path in &summary.cell_paths {
            let doc = load_score_document(cell_path).expect("cell document");
            let d_topic = *doc
                .cell
                .metrics
                .get(names::TOPIC_DIVERSITY)
                .unwrap_or_else(|| panic!("{} missing topic_diversity", cell_path.display()));
            assert_close(d_topic, 0.875, 1e-9, &format!("{}", cell_path.display()));
        }

        let report_json = std::fs::read(&summary.report_json).expect("report.json");
        let report_markdown = std::fs::read(&summary.report_markdown).expect("report.md");

        // Rerun in the same directory: artifacts are reused, zero endpoint
        // requests, byte-identical reports.
        let requests_before = server.total_requests();
        let rerun = run_protocol(&config, Preset::Openended, &options).expect("rerun");
        assert_eq!(
            server.total_requests(),
            requests_before,
            "rerun must not hit the endpoint"
        );
        assert_eq!(rerun.generation.requests, 0);
        assert_eq!(rerun.labeling.as_ref().map(|t| t.requests), Some(0));
        assert_eq!(
            std::fs::read(&rerun.report_json).expect("rerun report.json"),
            report_json,
            "report.json must be byte-identical after a rerun"
        );
        assert_eq!(
            std::fs::read(&rerun.report_markdown).expect("rerun report.md"),
            report_markdown,
            "report.md must be byte-identical after a rerun"
        );

        // Fresh run directory with the same response cache: everything is
        // served from the cache, still zero endpoint requests.
        let mut fresh = options.clone();
        fresh.out_dir = workdir.path().join("run2");
        let cached = run_protocol(&config, Preset::Openended, &fresh).expect("cached run");
        assert_eq!(
            server.total_requests(),
            requests_before,
            "cached run must not hit the endpoint"
        );
        assert_eq!(cached.generation.requests, 0);
        assert!(
            cached.generation.cache_hits >= 1,
            "cached run must be served from the response cache"
        );
        for cell_path in &cached.cell_paths {
            let doc = load_score_document(cell_path).expect("cached cell document");
            assert_close(
                doc.cell.metrics[names::TOPIC_DIVERSITY],
                0.875,
                1e-9,
                "cached run topic diversity",
            );
        }

        assert!(
            started.elapsed() < Duration::from_secs(60),
            "end-to-end mock pipeline must finish in under 60s"
        );
    });
}

// ---------------------------------------------------------------------
// Criterion 8 — degenerate corpus and permutation invariance
// ---------------------------------------------------------------------

fn assert_same_outcome(
    a: promptdiv::Result<f64>,
    b: promptdiv::Result<f64>,
    tolerance: f64,
    what: &str,
) {
    match (a, b) {
        (Ok(x), Ok(y)) => assert_close(x, y, tolerance, what),
        (Err(_), Err(_)) => {}
        (a, b) => panic!("{what}: outcomes differ: {a:?} vs {b:?}"),
    }
}

#[test]
fn criterion_8_degenerate_and_permutation_invariance() {
    criterion("8 (degenerate corpus and permutation invariance)", || {
        let text = "The quick brown fox jumps over the lazy dog. It runs fast!";
        for k in 2..=6usize {
            let corpus: Vec<String> = vec![text.to_string(); k];

            let d = mean_pairwise_distance(&vec![vector(&[0.6, 0.8], "t"); k])
                .expect("identical embeddings");
            assert_close(d, 0.0, 1e-12, &format!("k={k}: semantic D"));

            let groups = vec![ResponseGroup {
                prompt_id: "p".to_string(),
                texts: corpus.clone(),
            }];
            let structural = structural_diversity(&groups, StopwordSet::english())
                .expect("identical responses");
            assert_close(structural.std_token_count, 0.0, 1e-12, &format!("k={k}: std tokens"));
            assert_close(
                structural.std_sentence_count,
                0.0,
                1e-12,
                &format!("k={k}: std sentences"),
            );
            assert_close(
                structural.std_content_word_ratio,
                0.0,
                1e-12,
                &format!("k={k}: std content ratio"),
            );

            let bleu = self_bleu(&corpus).expect("identical responses");
            assert_close(bleu, 1.0, 1e-9, &format!("k={k}: self_bleu"));

            // distinct-n for k identical responses: the grams of one
            // response divided by k times its gram occurrences.
            let tokens = oracle::tokenize(text);
            for n in 2..=5 {
                let mut unique: Vec<&[String]> = Vec::new();
                for window in tokens.windows(n) {
                    if !unique.contains(&window) {
                        unique.push(window);
                    }
                }
                let per_response = tokens.len() - n + 1;
                let want = unique.len() as f64 / (k * per_response) as f64;
                let got = distinct_n(&corpus, n).expect("identical responses");
                assert_close(got, want, 1e-12, &format!("k={k}: distinct_{n}"));
            }
        }

        // Permutation invariance over randomized corpora and shuffles.
        let mut rng = ChaCha8Rng::seed_from_u64(0x0A0C_2E18);
        for case in 0..30 {
            // Lexical metrics over a flat, shuffled response pool.
            let corpus = support::random_corpus(&mut rng);
            let mut shuffled = corpus.clone();
            shuffled.shuffle(&mut rng);
            for n in 2..=5 {
                assert_same_outcome(
                    distinct_n(&corpus, n),
                    distinct_n(&shuffled, n),
                    1e-12,
                    &format!("case {case}: distinct_{n} permutation"),
                );
            }
            assert_same_outcome(
                self_bleu(&corpus),
                self_bleu(&shuffled),
                1e-12,
                &format!("case {case}: self_bleu permutation"),
            );

            // Topic diversity over a shuffled label multiset.
            let labels = support::random_labels(&mut rng);
            let mut shuffled_labels = labels.clone();
            shuffled_labels.shuffle(&mut rng);
            let dist = |labels: &[String]| {
                let mut counts: BTreeMap<String, u64> = BTreeMap::new();
                for label in labels {
                    *counts.entry(label.clone()).or_insert(0) += 1;
                }
                LabelDistribution::from_counts(counts).expect("distribution")
            };
            let a = topic_diversity(&dist(&labels)).expect("topic").value;
            let b = topic_diversity(&dist(&shuffled_labels)).expect("topic").value;
            assert_close(a, b, 0.0, &format!("case {case}: topic permutation"));

            // Structural and semantic diversity over shuffled prompt groups
            // with shuffled within-group order.
            let num_groups = rng.random_range(2..=4);
            let mut groups: Vec<ResponseGroup> = (0..num_groups)
                .map(|g| ResponseGroup {
                    prompt_id: format!("p{g}"),
                    texts: (0..rng.random_range(2..=5))
                        .map(|_| support::random_response(&mut rng))
                        .collect(),
                })
                .collect();
            let before = structural_diversity(&groups, StopwordSet::english())
                .expect("structural before");
            groups.shuffle(&mut rng);
            for group in &mut groups {
                group.texts.shuffle(&mut rng);
            }
            let after = structural_diversity(&groups, StopwordSet::english())
                .expect("structural after");
            assert_close(
                before.std_token_count,
                after.std_token_count,
                1e-12,
                &format!("case {case}: std tokens permutation"),
            );
            assert_close(
                before.std_sentence_count,
                after.std_sentence_count,
                1e-12,
                &format!("case {case}: std sentences permutation"),
            );
            assert_close(
                before.std_content_word_ratio,
                after.std_content_word_ratio,
                1e-12,
                &format!("case {case}: std ratio permutation"),
            );

            let mut embedded: Vec<(String, Vec<EmbeddingVector>)> = (0..num_groups)
                .map(|g| {
                    let vectors = (0..rng.random_range(2..=5))
                        .map(|i| {
                            let values: Vec<f64> = loop {
                                let candidate: Vec<f64> =
                                    (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                                let norm: f64 =
                                    candidate.iter().map(|v| v * v).sum::<f64>().sqrt();
                                if norm > 1e-3 {
                                    break candidate;
                                }
                            };
                            vector(&values, &format!("g{g}v{i}"))
                        })
                        .collect();
                    (format!("p{g}"), vectors)
                })
                .collect();
            let before = semantic_diversity(&embedded).expect("semantic before").value;
            embedded.shuffle(&mut rng);
            for (_, vectors) in &mut embedded {
                vectors.shuffle(&mut rng);
            }
            let after = semantic_diversity(&embedded).expect("semantic after").value;
            assert_close(before, after, 1e-12, &format!("case {case}: semantic permutation"));

            // Entropy trajectory over shuffled records.
            let mut records: Vec<GenerationRecord> = (0..rng.random_range(2..=5))
                .map(|i| {
                    let num_steps = rng.random_range(1..=5);
                    let steps: Vec<StepLogprobs> = (0..num_steps)
                        .map(|_| step(&support::random_step_logprobs(&mut rng)))
                        .collect();
                    GenerationRecord {
                        prompt_id: "p0".to_string(),
                        sample_index: i,
                        text: "unused".to_string(),
                        finish_reason: FinishReason::Stop,
                        sampling: SamplingParams {
                            logprob_top_k: 4,
                            ..SamplingParams::default()
                        },
                        mode: PromptMode::new(ModeKind::SimpleSteer),
                        model_family: ModelFamily::Llama,
                        token_logprobs: Some(steps),
                    }
                })
                .collect();
            let before = entropy_trajectory(&records, 5).expect("trajectory before");
            records.shuffle(&mut rng);
            let after = entropy_trajectory(&records, 5).expect("trajectory after");
            assert_eq!(before.steps, after.steps);
            for (t, (x, y)) in before
                .mean_entropy
                .iter()
                .zip(after.mean_entropy.iter())
                .enumerate()
            {
                assert_close(*x, *y, 1e-12, &format!("case {case}: step {t} entropy"));
            }
        }
    });
}
