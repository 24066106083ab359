//! Pipeline configuration: one JSON document driving every subcommand.
//!
//! `${VAR}` references in the file are interpolated from the environment
//! before parsing (for endpoints and other deploy-specific values; auth
//! tokens stay out of the config entirely and are named by env var in the
//! backend section). A stable fingerprint of the effective config is
//! embedded in every output file for provenance.

use crate::gateway::BackendConfig;
use crate::retrieval::{Strategy, DEFAULT_BM25_B, DEFAULT_BM25_K1};
use crate::schema::DocumentMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("environment variable {0} referenced by config is not set")]
    MissingEnvVar(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config path {role} ({path}) does not exist")]
    MissingPath { role: &'static str, path: String },
}

/// File locations consumed and produced by the subcommands. Inputs are
/// never mutated; each stage writes to its own output path.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// Raw schema JSONL (input to build-pool / consolidate).
    pub schemas: Option<PathBuf>,
    /// Sample corpus JSONL.
    pub samples: Option<PathBuf>,
    /// Built (paraphrased) pool file.
    pub pool: Option<PathBuf>,
    /// Consolidated pool file written by `consolidate`.
    pub consolidated_pool: Option<PathBuf>,
    /// Merge-redirect log written by `consolidate`.
    pub merge_log: Option<PathBuf>,
    /// Filtered/split corpus written by `consolidate`.
    pub filtered_samples: Option<PathBuf>,
    /// Retrieval index snapshot (built on demand, reused when present).
    pub index: Option<PathBuf>,
    /// Rankings JSONL written by `retrieve`.
    pub rankings: Option<PathBuf>,
    /// Extraction results JSONL written by `extract`.
    pub results: Option<PathBuf>,
    /// SFT pair export written by `export-sft`.
    pub sft: Option<PathBuf>,
    /// Evaluation report (JSON) written by `evaluate`.
    pub report_json: Option<PathBuf>,
    /// Evaluation report (markdown table) written by `evaluate`.
    pub report_markdown: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendsConfig {
    pub generation: Option<BackendConfig>,
    pub embedding: Option<BackendConfig>,
    pub reranker: Option<BackendConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalSection {
    pub strategy: Strategy,
    pub k: usize,
    pub mode: DocumentMode,
    pub k1: f64,
    pub b: f64,
    pub rerank_pool_size: usize,
    pub query_token_cap: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        RetrievalSection {
            strategy: Strategy::Bm25,
            k: 10,
            mode: DocumentMode::Paraphrased,
            k1: DEFAULT_BM25_K1,
            b: DEFAULT_BM25_B,
            rerank_pool_size: crate::retrieval::DEFAULT_RERANK_POOL_SIZE,
            query_token_cap: crate::retrieval::DEFAULT_QUERY_TOKEN_CAP,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsolidationSection {
    pub name_threshold: f64,
    pub cosine_threshold: f64,
    pub max_labels: usize,
    pub split_seed: u64,
}

impl Default for ConsolidationSection {
    fn default() -> Self {
        ConsolidationSection {
            name_threshold: crate::consolidate::DEFAULT_NAME_THRESHOLD,
            cosine_threshold: crate::consolidate::DEFAULT_COSINE_THRESHOLD,
            max_labels: crate::consolidate::DEFAULT_MAX_LABELS,
            split_seed: 17,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionSection {
    /// Extraction prompt template file; a built-in template is used when
    /// unset.
    pub template_path: Option<PathBuf>,
    /// Paraphrase prompt template file; built-in default when unset.
    pub paraphrase_template_path: Option<PathBuf>,
    /// One schema per generation call instead of all retrieved schemas in
    /// one prompt.
    pub batching: bool,
    pub k_demos: usize,
}

impl Default for ExtractionSection {
    fn default() -> Self {
        ExtractionSection {
            template_path: None,
            paraphrase_template_path: None,
            batching: false,
            k_demos: crate::paraphrase::DEFAULT_DEMOS_PER_SCHEMA,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSection {
    /// K values for Recall@K.
    pub recall_ks: Vec<usize>,
    /// Row label in comparison tables; defaults to "strategy/mode".
    pub label: Option<String>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            recall_ks: vec![10],
            label: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub backends: BackendsConfig,
    pub retrieval: RetrievalSection,
    pub consolidation: ConsolidationSection,
    pub extraction: ExtractionSection,
    pub evaluation: EvaluationSection,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.retrieval.k < 1 {
            return Err(ConfigError::Invalid("retrieval.k must be >= 1".into()));
        }
        if self.retrieval.rerank_pool_size < 1 {
            return Err(ConfigError::Invalid(
                "retrieval.rerank_pool_size must be >= 1".into(),
            ));
        }
        for (name, value) in [
            (
                "consolidation.name_threshold",
                self.consolidation.name_threshold,
            ),
            (
                "consolidation.cosine_threshold",
                self.consolidation.cosine_threshold,
            ),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ConfigError::Invalid(format!("{name} must be in (0, 1]")));
            }
        }
        if self.consolidation.max_labels < 1 {
            return Err(ConfigError::Invalid(
                "consolidation.max_labels must be >= 1".into(),
            ));
        }
        if self.extraction.k_demos < 1 {
            return Err(ConfigError::Invalid(
                "extraction.k_demos must be >= 1".into(),
            ));
        }
        for (name, backend) in [
            ("generation", &self.backends.generation),
            ("embedding", &self.backends.embedding),
            ("reranker", &self.backends.reranker),
        ] {
            if let Some(backend) = backend {
                backend
                    .validate()
                    .map_err(|e| ConfigError::Invalid(format!("backends.{name}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Stable hash of the effective configuration, embedded in outputs.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Fails when a required input path is unset or absent on disk.
    pub fn require_input(
        &self,
        role: &'static str,
        path: &Option<PathBuf>,
    ) -> Result<PathBuf, ConfigError> {
        let path = path.as_ref().ok_or(ConfigError::Invalid(role_unset(role)))?;
        if !path.exists() {
            return Err(ConfigError::MissingPath {
                role,
                path: path.display().to_string(),
            });
        }
        Ok(path.clone())
    }

    /// Fails when an output path is unset (the file itself may not exist
    /// yet, but its parent directory must).
    pub fn require_output(
        &self,
        role: &'static str,
        path: &Option<PathBuf>,
    ) -> Result<PathBuf, ConfigError> {
        let path = path.as_ref().ok_or(ConfigError::Invalid(role_unset(role)))?;
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() && !parent.exists() {
                return Err(ConfigError::MissingPath {
                    role,
                    path: parent.display().to_string(),
                });
            }
        }
        Ok(path.clone())
    }
}

fn role_unset(role: &str) -> String {
    format!("paths.{role} is required by this command but not set")
}

/// Replaces `${VAR}` references with environment values.
fn interpolate_env(raw: &str) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let Some(end) = after.find('}') else {
            out.push_str(&rest[start..]);
            rest = "";
            break;
        };
        let var = &after[..end];
        let value = std::env::var(var).map_err(|_| ConfigError::MissingEnvVar(var.to_string()))?;
        out.push_str(&value);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Loads, interpolates, and validates a config file; `seed_override`
/// replaces the file's seed before the fingerprint is computed.
pub fn load_config(path: &Path, seed_override: Option<u64>) -> Result<PipelineConfig, ConfigError> {
    let display = path.display().to_string();
    let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: display.clone(),
        source,
    })?;
    let interpolated = interpolate_env(&raw)?;
    let mut config: PipelineConfig =
        serde_json::from_str(&interpolated).map_err(|e| ConfigError::Parse {
            path: display,
            message: e.to_string(),
        })?;
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), "{}").unwrap();
        let config = load_config(f.path(), None).unwrap();
        assert_eq!(config.retrieval.k, 10);
        assert_eq!(config.consolidation.max_labels, 15);
        assert!(!config.extraction.batching);
    }

    #[test]
    fn env_interpolation_resolves_and_reports_missing() {
        std::env::set_var("ASEE_TEST_ENDPOINT_VAR", "http://example.test");
        let raw = r#"{"backends": {"generation": {"kind": "generation", "endpoint": "${ASEE_TEST_ENDPOINT_VAR}"}}}"#;
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), raw).unwrap();
        let config = load_config(f.path(), None).unwrap();
        assert_eq!(
            config.backends.generation.unwrap().endpoint,
            "http://example.test"
        );

        let raw = r#"{"paths": {"schemas": "${ASEE_TEST_UNSET_VAR_XYZ}"}}"#;
        std::fs::write(f.path(), raw).unwrap();
        assert!(matches!(
            load_config(f.path(), None),
            Err(ConfigError::MissingEnvVar(_))
        ));
    }

    #[test]
    fn fingerprint_stable_and_seed_sensitive() {
        let config = PipelineConfig::default();
        assert_eq!(config.fingerprint(), config.fingerprint());
        let mut other = config.clone();
        other.seed = 99;
        assert_ne!(config.fingerprint(), other.fingerprint());
    }

    #[test]
    fn invalid_threshold_rejected() {
        let mut config = PipelineConfig::default();
        config.consolidation.cosine_threshold = 1.5;
        assert!(matches!(config.validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn seed_override_applies_before_fingerprint() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), r#"{"seed": 1}"#).unwrap();
        let a = load_config(f.path(), None).unwrap();
        let b = load_config(f.path(), Some(2)).unwrap();
        assert_eq!(a.seed, 1);
        assert_eq!(b.seed, 2);
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn missing_input_path_detected() {
        let config = PipelineConfig {
            paths: PathsConfig {
                schemas: Some(PathBuf::from("/nonexistent/schemas.jsonl")),
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(matches!(
            config.require_input("schemas", &config.paths.schemas),
            Err(ConfigError::MissingPath { .. })
        ));
        assert!(matches!(
            config.require_input("samples", &config.paths.samples),
            Err(ConfigError::Invalid(_))
        ));
    }
}
