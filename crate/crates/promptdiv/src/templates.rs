//! Prompt rendering: one instruction in, one byte-exact prompt string out,
//! per model family and structural mode.
//!
//! Template strings live in a versioned JSONL data file (JSON string
//! escapes only) with a single `{instruction}` insertion marker each.
//! Rendering substitutes the instruction literally and targets the raw
//! completion endpoint, so a server can never re-wrap the prompt in its
//! own chat template behind our back.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Insertion marker expected exactly once in every template string.
pub const INSTRUCTION_MARKER: &str = "{instruction}";

/// Default creativity clause appended when a mode asks for the diversity
/// suffix. Configurable; recorded in the run manifest via the mode string.
pub const DEFAULT_DIVERSITY_SUFFIX: &str = "Be creative and avoid repeating common choices.";

/// The instruction used by the built-in template table's golden strings.
pub const CANONICAL_INSTRUCTION: &str = "Please write a news about a random topic.";

/// Supported model families. Closed set in v1; each family has exactly one
/// template string per structured mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Llama,
    Qwen,
    Tulu,
    Mistral,
    Phi,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [
        ModelFamily::Llama,
        ModelFamily::Qwen,
        ModelFamily::Tulu,
        ModelFamily::Mistral,
        ModelFamily::Phi,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelFamily::Llama => "llama",
            ModelFamily::Qwen => "qwen",
            ModelFamily::Tulu => "tulu",
            ModelFamily::Mistral => "mistral",
            ModelFamily::Phi => "phi",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "llama" => Ok(ModelFamily::Llama),
            "qwen" => Ok(ModelFamily::Qwen),
            "tulu" => Ok(ModelFamily::Tulu),
            "mistral" => Ok(ModelFamily::Mistral),
            "phi" => Ok(ModelFamily::Phi),
            other => Err(Error::invalid(format!(
                "unknown model family \"{other}\"; valid families: llama, qwen, tulu, mistral, phi"
            ))),
        }
    }
}

/// Structural prompting strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    FullTemplate,
    FakeTemplate,
    MinimumDialog,
    SimpleSteer,
    MixedTemplate,
}

impl ModeKind {
    /// The four concrete modes of the template ablation, most to least
    /// structured. `MixedTemplate` is excluded: it resolves to one of these.
    pub const STRUCTURED: [ModeKind; 4] = [
        ModeKind::FullTemplate,
        ModeKind::FakeTemplate,
        ModeKind::MinimumDialog,
        ModeKind::SimpleSteer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModeKind::FullTemplate => "full_template",
            ModeKind::FakeTemplate => "fake_template",
            ModeKind::MinimumDialog => "minimum_dialog",
            ModeKind::SimpleSteer => "simple_steer",
            ModeKind::MixedTemplate => "mixed_template",
        }
    }
}

impl fmt::Display for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full_template" => Ok(ModeKind::FullTemplate),
            "fake_template" => Ok(ModeKind::FakeTemplate),
            "minimum_dialog" => Ok(ModeKind::MinimumDialog),
            "simple_steer" => Ok(ModeKind::SimpleSteer),
            "mixed_template" => Ok(ModeKind::MixedTemplate),
            other => Err(Error::invalid(format!(
                "unknown prompt mode \"{other}\"; valid modes: full_template, fake_template, \
                 minimum_dialog, simple_steer, mixed_template"
            ))),
        }
    }
}

/// A mode plus the explicit-diversity flag. Serializes as a single string,
/// e.g. `"full_template"` or `"full_template+diversity"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PromptMode {
    pub kind: ModeKind,
    pub diversity_suffix: bool,
}

impl PromptMode {
    pub fn new(kind: ModeKind) -> Self {
        PromptMode {
            kind,
            diversity_suffix: false,
        }
    }

    pub fn with_diversity_suffix(kind: ModeKind) -> Self {
        PromptMode {
            kind,
            diversity_suffix: true,
        }
    }
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.diversity_suffix {
            write!(f, "{}+diversity", self.kind)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind_str, diversity_suffix) = match s.strip_suffix("+diversity") {
            Some(base) => (base, true),
            None => (s, false),
        };
        Ok(PromptMode {
            kind: kind_str.parse()?,
            diversity_suffix,
        })
    }
}

impl Serialize for PromptMode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PromptMode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which endpoint a rendered prompt must be sent to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointFlavor {
    RawCompletion,
    ChatMessages,
}

/// The exact prompt string produced for (instruction, family, mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub endpoint_flavor: EndpointFlavor,
    pub resolved_mode: PromptMode,
    pub family: ModelFamily,
}

/// Append the creativity clause after a single space. An empty suffix
/// leaves the instruction unchanged. Applied before template substitution.
pub fn apply_diversity_suffix(instruction: &str, suffix: &str) -> String {
    if suffix.is_empty() {
        instruction.to_string()
    } else {
        format!("{instruction} {suffix}")
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct TemplateEntry {
    family: String,
    mode: String,
    template: String,
    revision: String,
}

/// Immutable family x mode template strings, loaded once and shared.
#[derive(Debug, Clone)]
pub struct TemplateTable {
    revision: String,
    templates: BTreeMap<(ModelFamily, ModeKind), String>,
}

impl TemplateTable {
    /// The v1 table shipped with the tool.
    pub fn builtin() -> TemplateTable {
        static DATA: &str = include_str!("../data/templates.jsonl");
        TemplateTable::parse(DATA.as_bytes(), "<builtin templates>")
            .expect("built-in template table is valid")
    }

    /// Parse a template data file. Rejects unknown families/modes, duplicate
    /// pairs, mixed revisions, and templates without exactly one
    /// `{instruction}` marker.
    pub fn parse(bytes: &[u8], origin: &str) -> Result<TemplateTable> {
        let rows = crate::corpus::parse_jsonl::<TemplateEntry>(bytes, origin)?;
        if rows.is_empty() {
            return Err(Error::EmptyFile {
                path: origin.into(),
            });
        }
        let mut revision: Option<String> = None;
        let mut templates = BTreeMap::new();
        for (line, entry) in rows {
            let family: ModelFamily = entry.family.parse().map_err(|e: Error| Error::Parse {
                path: origin.into(),
                line,
                msg: e.to_string(),
            })?;
            let kind: ModeKind = entry.mode.parse().map_err(|e: Error| Error::Parse {
                path: origin.into(),
                line,
                msg: e.to_string(),
            })?;
            if kind == ModeKind::MixedTemplate {
                return Err(Error::Parse {
                    path: origin.into(),
                    line,
                    msg: "mixed_template is resolved at render time and cannot appear in a \
                          template file"
                        .into(),
                });
            }
            let markers = entry.template.matches(INSTRUCTION_MARKER).count();
            if markers != 1 {
                return Err(Error::Parse {
                    path: origin.into(),
                    line,
                    msg: format!(
                        "template for {family}/{kind} contains {markers} \"{INSTRUCTION_MARKER}\" \
                         markers; exactly one is required"
                    ),
                });
            }
            match &revision {
                None => revision = Some(entry.revision.clone()),
                Some(rev) if *rev != entry.revision => {
                    return Err(Error::Parse {
                        path: origin.into(),
                        line,
                        msg: format!(
                            "mixed revisions in one file: \"{rev}\" and \"{}\"",
                            entry.revision
                        ),
                    });
                }
                Some(_) => {}
            }
            if templates.insert((family, kind), entry.template).is_some() {
                return Err(Error::Parse {
                    path: origin.into(),
                    line,
                    msg: format!("duplicate template for {family}/{kind}"),
                });
            }
        }
        Ok(TemplateTable {
            revision: revision.expect("at least one row"),
            templates,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TemplateTable> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        TemplateTable::parse(&bytes, &path.display().to_string())
    }

    pub fn revision(&self) -> &str {
        &self.revision
    }

    pub fn template(&self, family: ModelFamily, kind: ModeKind) -> Option<&str> {
        self.templates.get(&(family, kind)).map(String::as_str)
    }
}

/// Renders instructions through a template table with a configured
/// diversity suffix. Pure and freely shareable across threads.
#[derive(Debug, Clone)]
pub struct Renderer {
    table: TemplateTable,
    diversity_suffix: String,
}

impl Renderer {
    pub fn new(table: TemplateTable) -> Renderer {
        Renderer {
            table,
            diversity_suffix: DEFAULT_DIVERSITY_SUFFIX.to_string(),
        }
    }

    pub fn builtin() -> Renderer {
        Renderer::new(TemplateTable::builtin())
    }

    pub fn with_diversity_suffix(mut self, suffix: impl Into<String>) -> Renderer {
        self.diversity_suffix = suffix.into();
        self
    }

    pub fn table(&self) -> &TemplateTable {
        &self.table
    }

    pub fn revision(&self) -> &str {
        self.table.revision()
    }

    /// Substitute the instruction into the family x mode template.
    /// Output bytes match the table verbatim; the only transformations are
    /// marker substitution and the optional diversity suffix.
    pub fn render(
        &self,
        instruction: &str,
        family: ModelFamily,
        mode: PromptMode,
    ) -> Result<RenderedPrompt> {
        if mode.kind == ModeKind::MixedTemplate {
            return Err(Error::invalid(
                "mixed_template must be rendered via render_mixed with a mode pool".to_string(),
            ));
        }
        if instruction.trim().is_empty() {
            return Err(Error::invalid("instruction is empty".to_string()));
        }
        let template = self.table.template(family, mode.kind).ok_or_else(|| {
            Error::invalid(format!(
                "no template for family \"{family}\" mode \"{}\" in revision \"{}\"",
                mode.kind,
                self.table.revision()
            ))
        })?;
        let instruction = if mode.diversity_suffix {
            apply_diversity_suffix(instruction, &self.diversity_suffix)
        } else {
            instruction.to_string()
        };
        Ok(RenderedPrompt {
            text: template.replace(INSTRUCTION_MARKER, &instruction),
            endpoint_flavor: EndpointFlavor::RawCompletion,
            resolved_mode: mode,
            family,
        })
    }

    /// Uniformly pick one mode from the pool and render it. The selection
    /// is a pure function of the rng state, so a fixed seed reproduces the
    /// same sequence of picks.
    pub fn render_mixed<R: Rng>(
        &self,
        instruction: &str,
        family: ModelFamily,
        pool: &[PromptMode],
        rng: &mut R,
    ) -> Result<RenderedPrompt> {
        if pool.is_empty() {
            return Err(Error::invalid(
                "mixed_template requires a non-empty mode pool".to_string(),
            ));
        }
        if let Some(bad) = pool.iter().find(|m| m.kind == ModeKind::MixedTemplate) {
            return Err(Error::invalid(format!(
                "mode pool cannot contain {bad}; pools must hold concrete modes"
            )));
        }
        let pick = pool[rng.random_range(0..pool.len())];
        self.render(instruction, family, pick)
    }
}

/// One rendered prompt as written to the render → generate handoff file.
///
/// A file may mix modes (`--mode all` writes one line per mode), so the
/// uniqueness key is `(prompt_id, requested_mode)`; generation itself
/// requires a homogeneous file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedRecord {
    pub prompt_id: String,
    /// Task tag carried through to report cells (e.g. `"news"`).
    #[serde(default)]
    pub task: String,
    pub family: ModelFamily,
    /// The mode asked for; differs from `resolved_mode` only for mixed.
    pub requested_mode: PromptMode,
    pub resolved_mode: PromptMode,
    pub endpoint_flavor: EndpointFlavor,
    pub text: String,
}

impl RenderedRecord {
    pub fn from_rendered(
        prompt_id: &str,
        task: &str,
        requested_mode: PromptMode,
        rendered: RenderedPrompt,
    ) -> RenderedRecord {
        RenderedRecord {
            prompt_id: prompt_id.to_string(),
            task: task.to_string(),
            family: rendered.family,
            requested_mode,
            resolved_mode: rendered.resolved_mode,
            endpoint_flavor: rendered.endpoint_flavor,
            text: rendered.text,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompt_id.trim().is_empty() {
            return Err(Error::invalid("rendered record has an empty prompt_id"));
        }
        if self.text.is_empty() {
            return Err(Error::invalid(format!(
                "rendered record {} has empty text",
                self.prompt_id
            )));
        }
        Ok(())
    }

    pub fn rendered_prompt(&self) -> RenderedPrompt {
        RenderedPrompt {
            text: self.text.clone(),
            endpoint_flavor: self.endpoint_flavor,
            resolved_mode: self.resolved_mode,
            family: self.family,
        }
    }
}

/// Parses rendered records from JSONL, rejecting duplicate
/// `(prompt_id, requested_mode)` pairs.
pub fn parse_rendered(bytes: &[u8], origin: &str) -> Result<Vec<RenderedRecord>> {
    let rows: Vec<(u64, RenderedRecord)> = crate::corpus::parse_jsonl(bytes, origin)?;
    let mut seen = std::collections::BTreeSet::new();
    for (line, record) in &rows {
        record.validate().map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: *line,
            msg: e.to_string(),
        })?;
        if !seen.insert((record.prompt_id.clone(), record.requested_mode.to_string())) {
            return Err(Error::DuplicateId {
                path: origin.to_string(),
                line: *line,
                id: format!("{}/{}", record.prompt_id, record.requested_mode),
            });
        }
    }
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn load_rendered(path: impl AsRef<Path>) -> Result<Vec<RenderedRecord>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_rendered(&bytes, &path.display().to_string())
}

pub fn write_rendered(records: &[RenderedRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    crate::corpus::write_jsonl(records, &mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
