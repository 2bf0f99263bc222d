//! Experiment configuration: one TOML or JSON file per experiment,
//! checked into the run directory next to the manifest so the pair fully
//! determines a rerun. Secrets never live here — API keys come from the
//! environment (see [`crate::net`]).

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embedclient::DEFAULT_EMBEDDING_MODEL;
use crate::error::{Error, Result};
use crate::labeling::TEXT_MARKER;
use crate::metrics::DEFAULT_TAU;
use crate::net::RetryPolicy;
use crate::templates::ModelFamily;

pub const DEFAULT_CACHE_DIR: &str = ".promptdiv-cache";

/// Experiment configuration. Unknown keys are rejected so typos fail
/// loudly instead of silently falling back to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Base URL of the generation endpoint, e.g. `http://localhost:8000`.
    pub endpoint_url: String,
    /// Model name sent to the generation endpoint.
    pub model_name: String,
    /// Template family of the model; used as the default `--family`.
    pub model_family: Option<ModelFamily>,
    /// Embedding endpoint; falls back to `endpoint_url` when unset.
    pub embedding_endpoint_url: Option<String>,
    pub embedding_model: String,
    /// Labeling endpoint; falls back to `endpoint_url` when unset.
    pub labeling_endpoint_url: Option<String>,
    /// Labeling model; falls back to `model_name` when unset.
    pub labeling_model: Option<String>,
    /// Maximum in-flight requests per stage.
    pub parallelism: usize,
    /// Retries per request after the first attempt.
    pub retry_budget: u32,
    pub timeout_seconds: u64,
    /// Collapse threshold in (0, 1).
    pub tau: f64,
    /// Template table JSONL; the builtin table when unset.
    pub template_path: Option<PathBuf>,
    /// When set, the loaded template table's revision must match.
    pub template_revision: Option<String>,
    /// Keyword taxonomy JSONL; the builtin news taxonomy when unset.
    pub taxonomy_path: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub embed_batch_size: usize,
    pub max_tokens: u32,
    /// Base sampling seed; offset per request chunk.
    pub seed: Option<u64>,
    /// Override for the diversity-steering suffix.
    pub diversity_suffix: Option<String>,
    /// Override for the topic-extraction instruction; must contain `{text}`.
    pub extraction_instruction: Option<String>,
    /// Use the chat completions endpoint instead of raw completions.
    pub use_chat_endpoint: bool,
    /// Largest `n` sent in one completion request; bigger jobs are chunked.
    pub max_samples_per_request: u32,
}

impl Default for Config {
    fn default() -> Config {
        Config {
            endpoint_url: String::new(),
            model_name: String::new(),
            model_family: None,
            embedding_endpoint_url: None,
            embedding_model: DEFAULT_EMBEDDING_MODEL.to_string(),
            labeling_endpoint_url: None,
            labeling_model: None,
            parallelism: 4,
            retry_budget: 3,
            timeout_seconds: 60,
            tau: DEFAULT_TAU,
            template_path: None,
            template_revision: None,
            taxonomy_path: None,
            cache_dir: PathBuf::from(DEFAULT_CACHE_DIR),
            embed_batch_size: 32,
            max_tokens: 512,
            seed: None,
            diversity_suffix: None,
            extraction_instruction: None,
            use_chat_endpoint: false,
            max_samples_per_request: 128,
        }
    }
}

fn check_url(field: &str, url: &str) -> Result<()> {
    if url.trim().is_empty() {
        return Err(Error::invalid(format!("config: {field} must be set")));
    }
    if !url.starts_with("http://") && !url.starts_with("https://") {
        return Err(Error::invalid(format!(
            "config: {field} must start with http:// or https://, got {url:?}"
        )));
    }
    Ok(())
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        check_url("endpoint_url", &self.endpoint_url)?;
        if let Some(url) = &self.embedding_endpoint_url {
            check_url("embedding_endpoint_url", url)?;
        }
        if let Some(url) = &self.labeling_endpoint_url {
            check_url("labeling_endpoint_url", url)?;
        }
        if self.model_name.trim().is_empty() {
            return Err(Error::invalid("config: model_name must be set"));
        }
        if self.parallelism == 0 {
            return Err(Error::invalid("config: parallelism must be at least 1"));
        }
        if self.retry_budget > 32 {
            return Err(Error::invalid(format!(
                "config: retry_budget {} is unreasonably large (max 32)",
                self.retry_budget
            )));
        }
        if self.timeout_seconds == 0 {
            return Err(Error::invalid("config: timeout_seconds must be at least 1"));
        }
        if !self.tau.is_finite() || self.tau <= 0.0 || self.tau >= 1.0 {
            return Err(Error::invalid(format!(
                "config: tau must be in (0, 1), got {}",
                self.tau
            )));
        }
        if self.embed_batch_size == 0 {
            return Err(Error::invalid("config: embed_batch_size must be at least 1"));
        }
        if self.max_tokens == 0 {
            return Err(Error::invalid("config: max_tokens must be at least 1"));
        }
        if self.max_samples_per_request == 0 {
            return Err(Error::invalid(
                "config: max_samples_per_request must be at least 1",
            ));
        }
        if self.embedding_model.trim().is_empty() {
            return Err(Error::invalid("config: embedding_model must be set"));
        }
        if let Some(m) = &self.labeling_model {
            if m.trim().is_empty() {
                return Err(Error::invalid("config: labeling_model must not be empty"));
            }
        }
        if let Some(instruction) = &self.extraction_instruction {
            if !instruction.contains(TEXT_MARKER) {
                return Err(Error::invalid(format!(
                    "config: extraction_instruction must contain the {TEXT_MARKER} marker"
                )));
            }
        }
        if let Some(suffix) = &self.diversity_suffix {
            if suffix.trim().is_empty() {
                return Err(Error::invalid(
                    "config: diversity_suffix must not be empty when set",
                ));
            }
        }
        Ok(())
    }

    pub fn effective_embedding_endpoint(&self) -> &str {
        self.embedding_endpoint_url
            .as_deref()
            .unwrap_or(&self.endpoint_url)
    }

    pub fn effective_labeling_endpoint(&self) -> &str {
        self.labeling_endpoint_url
            .as_deref()
            .unwrap_or(&self.endpoint_url)
    }

    pub fn effective_labeling_model(&self) -> &str {
        self.labeling_model.as_deref().unwrap_or(&self.model_name)
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            budget: self.retry_budget,
            ..RetryPolicy::default()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_seconds)
    }
}

/// Parses a config from TOML or JSON depending on `format`.
pub fn parse_config(bytes: &[u8], origin: &str, format: ConfigFormat) -> Result<Config> {
    let config: Config = match format {
        ConfigFormat::Toml => {
            let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: 1,
                msg: format!("config is not valid UTF-8: {e}"),
            })?;
            toml::from_str(text).map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: 1,
                msg: format!("config: {}", e.message()),
            })?
        }
        ConfigFormat::Json => serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.line().max(1) as u64,
            msg: format!("config: {e}"),
        })?,
    };
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

/// Loads a config file, dispatching on the `.toml` / `.json` extension.
pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let path = path.as_ref();
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => ConfigFormat::Toml,
        Some("json") => ConfigFormat::Json,
        other => {
            return Err(Error::invalid(format!(
                "config file {} has unsupported extension {:?} (expected .toml or .json)",
                path.display(),
                other.unwrap_or("")
            )))
        }
    };
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_config(&bytes, &path.display().to_string(), format)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> &'static str {
        "endpoint_url = \"http://localhost:8000\"\nmodel_name = \"test-model\"\n"
    }

    #[test]
    fn minimal_toml_fills_defaults() {
        let config =
            parse_config(minimal_toml().as_bytes(), "mem.toml", ConfigFormat::Toml).unwrap();
        assert_eq!(config.endpoint_url, "http://localhost:8000");
        assert_eq!(config.model_name, "test-model");
        assert_eq!(config.parallelism, 4);
        assert_eq!(config.retry_budget, 3);
        assert_eq!(config.timeout_seconds, 60);
        assert_eq!(config.tau, DEFAULT_TAU);
        assert_eq!(config.embedding_model, DEFAULT_EMBEDDING_MODEL);
        assert_eq!(config.cache_dir, PathBuf::from(DEFAULT_CACHE_DIR));
        assert_eq!(config.embed_batch_size, 32);
        assert_eq!(config.max_tokens, 512);
        assert_eq!(config.max_samples_per_request, 128);
        assert!(!config.use_chat_endpoint);
        assert!(config.seed.is_none());
    }

    #[test]
    fn json_and_toml_agree() {
        let toml_config =
            parse_config(minimal_toml().as_bytes(), "mem.toml", ConfigFormat::Toml).unwrap();
        let json = r#"{"endpoint_url": "http://localhost:8000", "model_name": "test-model"}"#;
        let json_config =
            parse_config(json.as_bytes(), "mem.json", ConfigFormat::Json).unwrap();
        assert_eq!(toml_config, json_config);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{}retry_budgett = 5\n", minimal_toml());
        let err =
            parse_config(text.as_bytes(), "mem.toml", ConfigFormat::Toml).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("retry_budgett"), "{err}");
    }

    #[test]
    fn missing_endpoint_is_a_validation_error() {
        let err = parse_config(
            b"model_name = \"m\"\n",
            "mem.toml",
            ConfigFormat::Toml,
        )
        .unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("endpoint_url"));
    }

    #[test]
    fn bad_scheme_and_bad_tau_are_rejected() {
        let text = "endpoint_url = \"localhost:8000\"\nmodel_name = \"m\"\n";
        let err = parse_config(text.as_bytes(), "mem.toml", ConfigFormat::Toml).unwrap_err();
        assert!(err.to_string().contains("http://"), "{err}");

        let text = format!("{}tau = 1.5\n", minimal_toml());
        let err = parse_config(text.as_bytes(), "mem.toml", ConfigFormat::Toml).unwrap_err();
        assert!(err.to_string().contains("tau"), "{err}");
    }

    #[test]
    fn extraction_instruction_requires_marker() {
        let text = format!(
            "{}extraction_instruction = \"name the topic\"\n",
            minimal_toml()
        );
        let err = parse_config(text.as_bytes(), "mem.toml", ConfigFormat::Toml).unwrap_err();
        assert!(err.to_string().contains("{text}"), "{err}");
    }

    #[test]
    fn effective_fallbacks() {
        let mut config =
            parse_config(minimal_toml().as_bytes(), "mem.toml", ConfigFormat::Toml).unwrap();
        assert_eq!(config.effective_embedding_endpoint(), "http://localhost:8000");
        assert_eq!(config.effective_labeling_endpoint(), "http://localhost:8000");
        assert_eq!(config.effective_labeling_model(), "test-model");
        config.embedding_endpoint_url = Some("http://embed:1".to_string());
        config.labeling_endpoint_url = Some("http://label:2".to_string());
        config.labeling_model = Some("labeler".to_string());
        assert_eq!(config.effective_embedding_endpoint(), "http://embed:1");
        assert_eq!(config.effective_labeling_endpoint(), "http://label:2");
        assert_eq!(config.effective_labeling_model(), "labeler");
    }

    #[test]
    fn load_dispatches_on_extension() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("config.toml");
        std::fs::write(&toml_path, minimal_toml()).unwrap();
        assert!(load_config(&toml_path).is_ok());

        let json_path = dir.path().join("config.json");
        std::fs::write(
            &json_path,
            r#"{"endpoint_url": "http://localhost:8000", "model_name": "m"}"#,
        )
        .unwrap();
        assert!(load_config(&json_path).is_ok());

        let yaml_path = dir.path().join("config.yaml");
        std::fs::write(&yaml_path, "x: 1").unwrap();
        let err = load_config(&yaml_path).unwrap_err();
        assert!(err.to_string().contains("unsupported extension"));
    }

    #[test]
    fn retry_policy_uses_budget() {
        let text = format!("{}retry_budget = 7\n", minimal_toml());
        let config = parse_config(text.as_bytes(), "mem.toml", ConfigFormat::Toml).unwrap();
        assert_eq!(config.retry_policy().budget, 7);
    }
}
