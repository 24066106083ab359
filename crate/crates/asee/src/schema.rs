//! Event schemas and the schema pool.
//!
//! A [`Schema`] declares an event type and its argument slots. A
//! [`SchemaPool`] holds raw schemas plus their paraphrased revisions
//! (same ids, enriched descriptions) and round-trips through a JSONL
//! file: one schema record per line, paraphrased records tagged
//! `"revision": "paraphrased"`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::SystemTime;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate schema_id {0}")]
    DuplicateId(String),
    #[error("empty pool file {0}")]
    EmptyFile(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid schema {schema_id}: {message}")]
    InvalidSchema { schema_id: String, message: String },
    #[error("paraphrase references unknown schema {0}")]
    UnknownSchema(String),
    #[error("paraphrase of {0} changes the argument-name set")]
    ArgumentNamesChanged(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Zh,
    Other,
}

impl std::fmt::Display for Language {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Language::En => write!(f, "en"),
            Language::Zh => write!(f, "zh"),
            Language::Other => write!(f, "other"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Argument {
    pub name: String,
    #[serde(default)]
    pub description: String,
}

impl Argument {
    pub fn new(name: impl Into<String>) -> Self {
        Argument {
            name: name.into(),
            description: String::new(),
        }
    }

    pub fn described(name: impl Into<String>, description: impl Into<String>) -> Self {
        Argument {
            name: name.into(),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub schema_id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub language: Language,
    #[serde(default)]
    pub source_dataset: String,
    pub arguments: Vec<Argument>,
}

impl Schema {
    pub fn argument_names(&self) -> Vec<&str> {
        self.arguments.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn has_argument(&self, name: &str) -> bool {
        self.arguments.iter().any(|a| a.name == name)
    }

    pub fn validate(&self) -> Result<(), PoolError> {
        let invalid = |message: &str| PoolError::InvalidSchema {
            schema_id: self.schema_id.clone(),
            message: message.to_string(),
        };
        if self.schema_id.is_empty() {
            return Err(invalid("schema_id is empty"));
        }
        if self.name.is_empty() {
            return Err(invalid("name is empty"));
        }
        if self.arguments.is_empty() {
            return Err(invalid("arguments list is empty"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for arg in &self.arguments {
            if arg.name.is_empty() {
                return Err(invalid("argument with empty name"));
            }
            if !seen.insert(arg.name.as_str()) {
                return Err(invalid(&format!("duplicate argument name {:?}", arg.name)));
            }
        }
        Ok(())
    }
}

/// A paraphrased revision of a schema: identical id and argument names,
/// enriched event/argument descriptions. Paraphrasing may only add or
/// modify descriptions, never add, drop, or rename arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParaphrasedSchema {
    pub base: Schema,
    pub paraphrase_of: String,
    pub demo_sample_ids: Vec<String>,
}

impl ParaphrasedSchema {
    /// Checks the rename-free invariant against the source schema.
    pub fn validate_against(&self, source: &Schema) -> Result<(), PoolError> {
        if self.base.schema_id != source.schema_id || self.paraphrase_of != source.schema_id {
            return Err(PoolError::UnknownSchema(self.base.schema_id.clone()));
        }
        if self.base.argument_names() != source.argument_names() {
            return Err(PoolError::ArgumentNamesChanged(source.schema_id.clone()));
        }
        Ok(())
    }
}

/// Rendering mode for the retrieval document of a schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocumentMode {
    Raw,
    Paraphrased,
}

/// Renders a schema as retrieval-document text. Deterministic, no trailing
/// whitespace on any line.
///
/// - raw: name, then argument names joined by `"; "`.
/// - paraphrased: name, the description when present, and one
///   `name: description` line per argument.
pub fn schema_document_text(schema: &Schema, mode: DocumentMode) -> String {
    match mode {
        DocumentMode::Raw => {
            format!("{}\n{}", schema.name, schema.argument_names().join("; "))
        }
        DocumentMode::Paraphrased => {
            let mut lines = vec![schema.name.clone()];
            if !schema.description.is_empty() {
                lines.push(schema.description.clone());
            }
            for arg in &schema.arguments {
                lines.push(format!("{}: {}", arg.name, arg.description).trim_end().to_string());
            }
            lines.join("\n")
        }
    }
}

/// Versioned collection of raw and paraphrased schemas with stable ids.
#[derive(Debug, Clone)]
pub struct SchemaPool {
    pub pool_id: String,
    pub schemas: BTreeMap<String, Schema>,
    pub paraphrased: BTreeMap<String, ParaphrasedSchema>,
    pub created_at: SystemTime,
}

impl SchemaPool {
    pub fn new(pool_id: impl Into<String>) -> Self {
        SchemaPool {
            pool_id: pool_id.into(),
            schemas: BTreeMap::new(),
            paraphrased: BTreeMap::new(),
            created_at: SystemTime::now(),
        }
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }

    pub fn insert_schema(&mut self, schema: Schema) -> Result<(), PoolError> {
        schema.validate()?;
        if self.schemas.contains_key(&schema.schema_id) {
            return Err(PoolError::DuplicateId(schema.schema_id));
        }
        self.schemas.insert(schema.schema_id.clone(), schema);
        Ok(())
    }

    pub fn insert_paraphrase(&mut self, paraphrase: ParaphrasedSchema) -> Result<(), PoolError> {
        let source = self
            .schemas
            .get(&paraphrase.paraphrase_of)
            .ok_or_else(|| PoolError::UnknownSchema(paraphrase.paraphrase_of.clone()))?;
        paraphrase.validate_against(source)?;
        self.paraphrased
            .insert(paraphrase.paraphrase_of.clone(), paraphrase);
        Ok(())
    }

    /// The retrieval document for one schema. Paraphrased mode prefers the
    /// paraphrased revision and falls back to the raw schema rendered in
    /// paraphrased layout when no revision exists.
    pub fn document_text(&self, schema_id: &str, mode: DocumentMode) -> Option<String> {
        match mode {
            DocumentMode::Raw => self
                .schemas
                .get(schema_id)
                .map(|s| schema_document_text(s, DocumentMode::Raw)),
            DocumentMode::Paraphrased => self
                .paraphrased
                .get(schema_id)
                .map(|p| schema_document_text(&p.base, DocumentMode::Paraphrased))
                .or_else(|| {
                    self.schemas
                        .get(schema_id)
                        .map(|s| schema_document_text(s, DocumentMode::Paraphrased))
                }),
        }
    }
}

/// On-disk pool line: a schema record, optionally tagged as a paraphrased
/// revision. Unknown extra fields are ignored on load.
#[derive(Serialize, Deserialize)]
struct PoolRecord {
    #[serde(flatten)]
    schema: Schema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    revision: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    paraphrase_of: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    demo_sample_ids: Option<Vec<String>>,
}

/// Loads and validates a pool from JSONL. Duplicate raw schema ids are
/// rejected; paraphrased records must reference a schema in the same file.
pub fn load_schemas(path: &Path) -> Result<SchemaPool, PoolError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| PoolError::Io {
        path: display.clone(),
        source,
    })?;
    let pool_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "pool".to_string());
    let mut pool = SchemaPool::new(pool_id);
    let mut saw_record = false;
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| PoolError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        saw_record = true;
        let record: PoolRecord =
            serde_json::from_str(&line).map_err(|e| PoolError::Parse {
                path: display.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        if record.revision.as_deref() == Some("paraphrased") {
            let paraphrase_of = record
                .paraphrase_of
                .clone()
                .unwrap_or_else(|| record.schema.schema_id.clone());
            pool.insert_paraphrase(ParaphrasedSchema {
                base: record.schema,
                paraphrase_of,
                demo_sample_ids: record.demo_sample_ids.unwrap_or_default(),
            })?;
        } else {
            pool.insert_schema(record.schema)?;
        }
    }
    if !saw_record {
        return Err(PoolError::EmptyFile(display));
    }
    Ok(pool)
}

/// Writes the pool as JSONL: raw schemas in id order, then paraphrased
/// revisions in id order. Byte-identical across reruns for equal pools.
pub fn save_pool(pool: &SchemaPool, path: &Path) -> Result<(), PoolError> {
    let display = path.display().to_string();
    let io_err = |source| PoolError::Io {
        path: display.clone(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    let io_err = |source| PoolError::Io {
        path: display.clone(),
        source,
    };
    for schema in pool.schemas.values() {
        let record = PoolRecord {
            schema: schema.clone(),
            revision: None,
            paraphrase_of: None,
            demo_sample_ids: None,
        };
        serde_json::to_writer(&mut out, &record).map_err(|e| PoolError::Parse {
            path: display.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    for paraphrase in pool.paraphrased.values() {
        let record = PoolRecord {
            schema: paraphrase.base.clone(),
            revision: Some("paraphrased".to_string()),
            paraphrase_of: Some(paraphrase.paraphrase_of.clone()),
            demo_sample_ids: Some(paraphrase.demo_sample_ids.clone()),
        };
        serde_json::to_writer(&mut out, &record).map_err(|e| PoolError::Parse {
            path: display.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}
