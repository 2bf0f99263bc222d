//! Aggregation of scored cells into comparison tables, collapse
//! verdicts, and plot-ready temperature series.
//!
//! A [`ReportCell`] is one (model, task, mode, temperature) measurement
//! carrying its metric values and run id. [`build_report`] pairs a
//! baseline mode (conventionally simple steer) against a comparison mode
//! per (model, task, temperature), decides winners from the
//! metric-direction table, attaches collapse verdicts to the diversity
//! metrics, and lists anything unpaired in a gaps section instead of
//! dropping it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{collapse_verdict, names, CollapseVerdict, EntropyTrajectory, MetricOutput};
use crate::templates::{ModelFamily, PromptMode};

/// One measured (model, task, mode, temperature) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub model_family: ModelFamily,
    pub model_name: String,
    pub task: String,
    pub mode: PromptMode,
    pub temperature: f64,
    /// Metric name → value; names as in [`crate::metrics::names`].
    pub metrics: BTreeMap<String, f64>,
    pub run_id: String,
}

impl ReportCell {
    pub fn validate(&self) -> Result<()> {
        if self.model_name.trim().is_empty() {
            return Err(Error::invalid("report cell has an empty model_name"));
        }
        if self.task.trim().is_empty() {
            return Err(Error::invalid("report cell has an empty task"));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::invalid(format!(
                "report cell has invalid temperature {}",
                self.temperature
            )));
        }
        if self.metrics.is_empty() {
            return Err(Error::invalid(format!(
                "report cell ({}, {}, {}) has no metrics",
                self.model_name, self.task, self.mode
            )));
        }
        if let Some((name, value)) = self.metrics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "report cell metric {name} has non-finite value {value}"
            )));
        }
        Ok(())
    }

    fn key(&self) -> (String, String, String, u64) {
        (
            self.model_name.clone(),
            self.task.clone(),
            self.mode.to_string(),
            self.temperature.to_bits(),
        )
    }
}

/// A scored artifact: the cell plus per-metric detail, written by the
/// scoring command and consumed by the report command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDocument {
    pub cell: ReportCell,
    pub details: Vec<MetricOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_trajectory: Option<EntropyTrajectory>,
}

pub fn parse_score_document(bytes: &[u8], origin: &str) -> Result<ScoreDocument> {
    let doc: ScoreDocument = serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        path: origin.to_string(),
        line: 1,
        msg: format!("score document: {e}"),
    })?;
    doc.cell.validate()?;
    Ok(doc)
}

pub fn load_score_document(path: &Path) -> Result<ScoreDocument> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_score_document(&bytes, &path.display().to_string())
}

pub fn write_score_document(doc: &ScoreDocument, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(doc)
        .map_err(|e| Error::invalid(format!("serializing score document: {e}")))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Whether a larger value means more diversity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricDirection {
    HigherIsDiverse,
    LowerIsDiverse,
}

/// The static metric-direction table. Every diversity metric reads
/// "higher is more diverse" except self-BLEU; unknown metric names
/// default to higher-is-diverse.
pub fn metric_direction(metric: &str) -> MetricDirection {
    match metric {
        names::SELF_BLEU => MetricDirection::LowerIsDiverse,
        names::SEMANTIC_DIVERSITY
        | names::TOPIC_DIVERSITY
        | names::STD_TOKEN_COUNT
        | names::STD_SENTENCE_COUNT
        | names::STD_CONTENT_WORD_RATIO
        | names::MEAN_STEP_ENTROPY => MetricDirection::HigherIsDiverse,
        m if m.starts_with("distinct_") => MetricDirection::HigherIsDiverse,
        _ => MetricDirection::HigherIsDiverse,
    }
}

/// Which cell of a pairing is more diverse on a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    /// The baseline (simple-steer) cell.
    Simple,
    /// The comparison (templated) cell.
    Template,
    Tie,
}

fn decide_winner(metric: &str, simple_value: f64, template_value: f64) -> Winner {
    if simple_value == template_value {
        return Winner::Tie;
    }
    let simple_wins = match metric_direction(metric) {
        MetricDirection::HigherIsDiverse => simple_value > template_value,
        MetricDirection::LowerIsDiverse => simple_value < template_value,
    };
    if simple_wins {
        Winner::Simple
    } else {
        Winner::Template
    }
}

/// One metric compared across the mode pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model_name: String,
    pub model_family: ModelFamily,
    pub task: String,
    pub temperature: f64,
    pub metric: String,
    /// Value under the baseline mode.
    pub simple_value: f64,
    /// Value under the comparison mode.
    pub template_value: f64,
    pub winner: Winner,
    /// Collapse verdict; only for the semantic/topic diversity metrics,
    /// and absent when the baseline value is not positive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<CollapseVerdict>,
}

/// The full comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub baseline_mode: PromptMode,
    pub comparison_mode: PromptMode,
    pub tau: f64,
    pub rows: Vec<ComparisonRow>,
    /// Human-readable notes about unpaired cells or undefined verdicts.
    pub gaps: Vec<String>,
    /// Sorted, deduplicated run ids of every input cell.
    pub generated_from: Vec<String>,
    /// Every input cell, kept for the flat CSV emission.
    pub cells: Vec<ReportCell>,
}

/// Metrics that get a collapse verdict attached.
fn is_collapse_metric(metric: &str) -> bool {
    metric == names::SEMANTIC_DIVERSITY || metric == names::TOPIC_DIVERSITY
}

/// Builds the comparison report for one mode pairing.
///
/// Every input cell ends up either contributing to rows or mentioned in
/// `gaps`; duplicate (model, task, mode, temperature) cells are an error.
pub fn build_report(
    cells: Vec<ReportCell>,
    baseline_mode: PromptMode,
    comparison_mode: PromptMode,
    tau: f64,
) -> Result<Report> {
    if cells.is_empty() {
        return Err(Error::invalid("build_report needs at least one cell"));
    }
    if baseline_mode == comparison_mode {
        return Err(Error::invalid(format!(
            "baseline and comparison mode are both {baseline_mode}"
        )));
    }
    if !tau.is_finite() || tau <= 0.0 || tau >= 1.0 {
        return Err(Error::invalid(format!("tau must be in (0, 1), got {tau}")));
    }
    let mut seen = std::collections::BTreeSet::new();
    for cell in &cells {
        cell.validate()?;
        if !seen.insert(cell.key()) {
            return Err(Error::invalid(format!(
                "duplicate report cell ({}, {}, {}, T={})",
                cell.model_name, cell.task, cell.mode, cell.temperature
            )));
        }
    }

    // Group by (model_name, task, temperature-bits).
    let mut groups: BTreeMap<(String, String, u64), Vec<&ReportCell>> = BTreeMap::new();
    for cell in &cells {
        groups
            .entry((cell.model_name.clone(), cell.task.clone(), cell.temperature.to_bits()))
            .or_default()
            .push(cell);
    }

    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    for ((model_name, task, _), group) in &groups {
        let baseline = group.iter().find(|c| c.mode == baseline_mode);
        let comparison = group.iter().find(|c| c.mode == comparison_mode);
        let temperature = group[0].temperature;
        for cell in group {
            if cell.mode != baseline_mode && cell.mode != comparison_mode {
                gaps.push(format!(
                    "cell ({model_name}, {task}, {}, T={temperature}) does not participate in the {baseline_mode} vs {comparison_mode} pairing",
                    cell.mode
                ));
            }
        }
        let (baseline, comparison) = match (baseline, comparison) {
            (Some(b), Some(c)) => (b, c),
            (Some(_), None) => {
                gaps.push(format!(
                    "missing {comparison_mode} cell for ({model_name}, {task}, T={temperature})"
                ));
                continue;
            }
            (None, Some(_)) => {
                gaps.push(format!(
                    "missing {baseline_mode} cell for ({model_name}, {task}, T={temperature})"
                ));
                continue;
            }
            (None, None) => continue,
        };

        let metric_names: std::collections::BTreeSet<&String> =
            baseline.metrics.keys().chain(comparison.metrics.keys()).collect();
        for metric in metric_names {
            let (simple_value, template_value) =
                match (baseline.metrics.get(metric), comparison.metrics.get(metric)) {
                    (Some(s), Some(t)) => (*s, *t),
                    (present, _) => {
                        let missing_mode = if present.is_some() {
                            &comparison_mode
                        } else {
                            &baseline_mode
                        };
                        gaps.push(format!(
                            "metric {metric} missing from the {missing_mode} cell for ({model_name}, {task}, T={temperature})"
                        ));
                        continue;
                    }
                };
            let verdict = if is_collapse_metric(metric) {
                match collapse_verdict(simple_value, template_value, tau) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        gaps.push(format!(
                            "no collapse verdict for {metric} on ({model_name}, {task}, T={temperature}): {e}"
                        ));
                        None
                    }
                }
            } else {
                None
            };
            rows.push(ComparisonRow {
                model_name: model_name.clone(),
                model_family: baseline.model_family,
                task: task.clone(),
                temperature,
                metric: metric.clone(),
                simple_value,
                template_value,
                winner: decide_winner(metric, simple_value, template_value),
                verdict,
            });
        }
    }
    rows.sort_by(|a, b| {
        (&a.model_name, &a.task, &a.metric, a.temperature.to_bits()).cmp(&(
            &b.model_name,
            &b.task,
            &b.metric,
            b.temperature.to_bits(),
        ))
    });

    let mut generated_from: Vec<String> = cells.iter().map(|c| c.run_id.clone()).collect();
    generated_from.sort();
    generated_from.dedup();

    let mut sorted_cells = cells;
    sorted_cells.sort_by_key(|a| a.key());

    Ok(Report {
        baseline_mode,
        comparison_mode,
        tau,
        rows,
        gaps,
        generated_from,
        cells: sorted_cells,
    })
}

/// Output encodings for [`emit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<ReportFormat> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::invalid(format!(
                "unknown report format {other:?} (expected json, csv, or markdown)"
            ))),
        }
    }
}

/// Serializes a report; byte-deterministic for a given report.
pub fn emit(report: &Report, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut bytes =
                serde_json::to_vec_pretty(report).expect("report serialization cannot fail");
            bytes.push(b'\n');
            bytes
        }
        ReportFormat::Csv => emit_csv(report),
        ReportFormat::Markdown => emit_markdown(report).into_bytes(),
    }
}

/// RFC 4180 quoting: only fields containing a comma, quote, or newline
/// are quoted.
fn csv_field(raw: &str) -> String {
    if raw.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

fn emit_csv(report: &Report) -> Vec<u8> {
    let mut out = String::from("model,task,mode,temperature,metric,value,run_id\n");
    for cell in &report.cells {
        for (metric, value) in &cell.metrics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&cell.model_name),
                csv_field(&cell.task),
                cell.mode,
                cell.temperature,
                csv_field(metric),
                value,
                csv_field(&cell.run_id),
            );
        }
    }
    out.into_bytes()
}

fn md_value(value: f64, bold: bool) -> String {
    if bold {
        format!("**{value:.4}**")
    } else {
        format!("{value:.4}")
    }
}

fn emit_markdown(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# Diversity comparison: {} vs {}\n",
        report.baseline_mode, report.comparison_mode
    );
    let _ = writeln!(out, "Collapse threshold tau = {}.\n", report.tau);
    let _ = writeln!(
        out,
        "| model | task | T | metric | {} | {} | winner | gap | collapsed |",
        report.baseline_mode, report.comparison_mode
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|");
    for row in &report.rows {
        let (gap, collapsed) = match &row.verdict {
            Some(v) => (
                format!("{:.4}", v.relative_gap),
                if v.collapsed { "yes" } else { "no" }.to_string(),
            ),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            row.model_name,
            row.task,
            row.temperature,
            row.metric,
            md_value(row.simple_value, row.winner == Winner::Simple),
            md_value(row.template_value, row.winner == Winner::Template),
            match row.winner {
                Winner::Simple => "simple",
                Winner::Template => "template",
                Winner::Tie => "tie",
            },
            gap,
            collapsed,
        );
    }
    if !report.gaps.is_empty() {
        let _ = writeln!(out, "\n## Gaps\n");
        for gap in &report.gaps {
            let _ = writeln!(out, "- {gap}");
        }
    }
    out
}

/// One metric's trend over temperature for a fixed (model, task, mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSeries {
    pub model_name: String,
    pub task: String,
    pub mode: PromptMode,
    pub metric: String,
    /// `(temperature, value)` sorted by temperature ascending.
    pub points: Vec<(f64, f64)>,
    /// True when only one temperature is present (flagged, not an error).
    pub singleton: bool,
}

/// Temperature series plus gap notes for missing points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSet {
    pub series: Vec<TemperatureSeries>,
    pub gaps: Vec<String>,
}

/// Groups cells into per-(model, task, mode, metric) temperature series.
pub fn temperature_series(cells: &[ReportCell]) -> Result<SeriesSet> {
    if cells.is_empty() {
        return Err(Error::invalid("temperature_series needs at least one cell"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for cell in cells {
        cell.validate()?;
        if !seen.insert(cell.key()) {
            return Err(Error::invalid(format!(
                "duplicate report cell ({}, {}, {}, T={})",
                cell.model_name, cell.task, cell.mode, cell.temperature
            )));
        }
    }

    type SeriesKey = (String, String, String, String); // model, task, mode, metric
    let mut by_key: BTreeMap<SeriesKey, Vec<(f64, f64)>> = BTreeMap::new();
    let mut mode_of: BTreeMap<String, PromptMode> = BTreeMap::new();
    for cell in cells {
        mode_of.insert(cell.mode.to_string(), cell.mode);
        for (metric, value) in &cell.metrics {
            by_key
                .entry((
                    cell.model_name.clone(),
                    cell.task.clone(),
                    cell.mode.to_string(),
                    metric.clone(),
                ))
                .or_default()
                .push((cell.temperature, *value));
        }
    }

    // All temperatures observed per (model, task, metric), for gap notes.
    let mut temps_by_mtm: BTreeMap<(String, String, String), std::collections::BTreeSet<u64>> =
        BTreeMap::new();
    for ((model, task, _, metric), points) in &by_key {
        let entry = temps_by_mtm
            .entry((model.clone(), task.clone(), metric.clone()))
            .or_default();
        for (t, _) in points {
            entry.insert(t.to_bits());
        }
    }

    let mut series = Vec::new();
    let mut gaps = Vec::new();
    for ((model, task, mode_str, metric), mut points) in by_key {
        points.sort_by_key(|(t, _)| t.to_bits());
        let expected = &temps_by_mtm[&(model.clone(), task.clone(), metric.clone())];
        for t_bits in expected {
            if !points.iter().any(|(t, _)| t.to_bits() == *t_bits) {
                gaps.push(format!(
                    "missing T={} for mode {mode_str} on ({model}, {task}, {metric})",
                    f64::from_bits(*t_bits)
                ));
            }
        }
        let singleton = points.len() < 2;
        series.push(TemperatureSeries {
            model_name: model,
            task,
            mode: mode_of[&mode_str],
            metric,
            points,
            singleton,
        });
    }
    Ok(SeriesSet { series, gaps })
}
