//! Schema-aware extraction: prompt assembly, reply parsing, validation,
//! and SFT-pair export.
//!
//! Prompts carry the query plus the retrieved schemas rendered as JSON;
//! the model answers with an object keyed by schema *name* (names are what
//! generation models reproduce reliably; the id mapping stays local).
//! Validation is strict about hallucinations: schema names that were not
//! prompted and argument keys that were not declared are dropped and
//! tallied, never stored. Extraction keeps verbatim model spans; all value
//! normalization is deferred to evaluation.

use crate::corpus::{ArgumentValueMap, Sample};
use crate::gateway::{GatewayError, GenerationRequest, TextGenerator};
use crate::paraphrase::schema_prompt_json;
use crate::reply::{find_first_json, JsonSource};
use crate::retrieval::RankedList;
use crate::schema::{ParaphrasedSchema, Schema, SchemaPool};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_EXTRACTION_TEMPLATE: &str = "\
Extract events from the query below using only the provided schemas.
Reply with exactly one fenced JSON object mapping schema names to lists of
event objects; each event object maps an argument name to the list of values
extracted for it. Use only the given schema names and argument names. Omit
schemas and arguments that do not occur in the query.

Schemas:
{{schemas}}

Query:
{{query}}
";

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("template is missing placeholder {0}")]
    TemplateError(String),
    #[error("prompt of {len} chars exceeds cap of {cap}")]
    PromptTooLarge { len: usize, cap: usize },
    #[error("no retrieved schemas for sample {0}")]
    EmptyRetrieval(String),
    #[error("schema {0} is not in the pool")]
    UnresolvableSchema(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    /// Reply was JSON where the prompt asked for it, all names declared.
    Clean,
    /// Repair heuristics fired (scan extraction, drops, coercions).
    Repaired,
    /// No usable JSON in the reply.
    Failed,
}

/// Counters for model output that had to be discarded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardTally {
    pub hallucinated_schemas: usize,
    pub dropped_args: usize,
}

/// A fully rendered extraction prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionPrompt {
    pub sample_id: String,
    pub schema_ids: Vec<String>,
    pub rendered: String,
    pub template_id: String,
}

/// Validated per-(query, schema) predictions with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub sample_id: String,
    pub per_schema: BTreeMap<String, Vec<ArgumentValueMap>>,
    pub backend_id: String,
    pub parse_status: ParseStatus,
    #[serde(default)]
    pub tallies: DiscardTally,
}

impl ExtractionResult {
    pub fn failed(sample_id: impl Into<String>, backend_id: impl Into<String>) -> Self {
        ExtractionResult {
            sample_id: sample_id.into(),
            per_schema: BTreeMap::new(),
            backend_id: backend_id.into(),
            parse_status: ParseStatus::Failed,
            tallies: DiscardTally::default(),
        }
    }
}

/// Stable id for a template text (used for provenance in prompts).
pub fn template_fingerprint(template: &str) -> String {
    format!("{:016x}", crate::stablehash::fnv1a64(template.as_bytes()))
}

/// Renders the extraction prompt for one query and its candidate schemas.
/// The schemas appear as a JSON array of {name, description, arguments};
/// the template must contain `{{query}}` and `{{schemas}}`.
pub fn assemble_prompt(
    sample_id: &str,
    query: &str,
    schemas: &[&ParaphrasedSchema],
    template: &str,
    prompt_cap: usize,
) -> Result<ExtractionPrompt, ExtractionError> {
    assert!(!schemas.is_empty(), "schemas must be non-empty");
    for placeholder in ["{{query}}", "{{schemas}}"] {
        if !template.contains(placeholder) {
            return Err(ExtractionError::TemplateError(placeholder.to_string()));
        }
    }
    let schema_array = serde_json::Value::Array(
        schemas.iter().map(|p| schema_prompt_json(&p.base)).collect(),
    );
    let rendered = template
        .replace("{{schemas}}", &serde_json::to_string_pretty(&schema_array).unwrap())
        .replace("{{query}}", query);
    let len = rendered.chars().count();
    if len > prompt_cap {
        return Err(ExtractionError::PromptTooLarge {
            len,
            cap: prompt_cap,
        });
    }
    Ok(ExtractionPrompt {
        sample_id: sample_id.to_string(),
        schema_ids: schemas.iter().map(|p| p.base.schema_id.clone()).collect(),
        rendered,
        template_id: template_fingerprint(template),
    })
}

/// Outcome of parsing one raw reply (before merging across batches).
#[derive(Debug, Clone, Default)]
pub struct ParsedOutput {
    pub per_schema: BTreeMap<String, Vec<ArgumentValueMap>>,
    pub tallies: DiscardTally,
    pub failed: bool,
    repaired: bool,
}

impl ParsedOutput {
    pub fn status(&self) -> ParseStatus {
        if self.failed {
            ParseStatus::Failed
        } else if self.repaired || self.tallies != DiscardTally::default() {
            ParseStatus::Repaired
        } else {
            ParseStatus::Clean
        }
    }
}

fn value_to_strings(value: &serde_json::Value, repaired: &mut bool) -> Vec<String> {
    let scalar = |v: &serde_json::Value, repaired: &mut bool| -> Option<String> {
        match v {
            serde_json::Value::String(s) => Some(s.clone()),
            serde_json::Value::Null => None,
            other => {
                *repaired = true;
                Some(other.to_string())
            }
        }
    };
    match value {
        serde_json::Value::Array(items) => items
            .iter()
            .filter_map(|v| scalar(v, repaired))
            .collect(),
        other => {
            // Scalar coerced to a single-element list.
            *repaired = true;
            scalar(other, repaired).into_iter().collect()
        }
    }
}

fn parse_event(
    raw: &serde_json::Map<String, serde_json::Value>,
    schema: &Schema,
    tallies: &mut DiscardTally,
    repaired: &mut bool,
) -> ArgumentValueMap {
    let mut event = ArgumentValueMap::default();
    for (key, value) in raw {
        let declared = schema
            .arguments
            .iter()
            .find(|a| a.name == *key)
            .or_else(|| {
                schema
                    .arguments
                    .iter()
                    .find(|a| a.name.to_lowercase() == key.to_lowercase())
            });
        let Some(declared) = declared else {
            tallies.dropped_args += 1;
            continue;
        };
        if declared.name != *key {
            *repaired = true;
        }
        let values = value_to_strings(value, repaired);
        if values.is_empty() {
            continue;
        }
        // Merge (rather than overwrite) if a case-variant key already
        // landed on the same declared argument.
        event
            .values
            .entry(declared.name.clone())
            .or_default()
            .extend(values);
    }
    event
}

/// Parses and validates a raw model reply against the prompted schemas.
///
/// Never fails: an unusable reply produces `ParseStatus::Failed` with an
/// empty result. Schema names map back to ids case-insensitively;
/// hallucinated names and undeclared argument keys are dropped and
/// tallied.
pub fn parse_extraction_output(
    raw_reply: &str,
    schemas: &[&ParaphrasedSchema],
) -> ParsedOutput {
    let mut output = ParsedOutput::default();
    let Some((value, source)) = find_first_json(raw_reply) else {
        output.failed = true;
        return output;
    };
    let serde_json::Value::Object(by_name) = value else {
        output.failed = true;
        return output;
    };
    output.repaired = !matches!(source, JsonSource::Fenced | JsonSource::Whole);

    for (name, events_value) in &by_name {
        let schema = schemas
            .iter()
            .find(|p| p.base.name == *name)
            .or_else(|| {
                schemas
                    .iter()
                    .find(|p| p.base.name.to_lowercase() == name.to_lowercase())
            });
        let Some(paraphrase) = schema else {
            output.tallies.hallucinated_schemas += 1;
            continue;
        };
        let schema = &paraphrase.base;
        if schema.name != *name {
            output.repaired = true;
        }

        let raw_events: Vec<&serde_json::Map<String, serde_json::Value>> = match events_value {
            serde_json::Value::Array(items) => items
                .iter()
                .filter_map(|v| match v {
                    serde_json::Value::Object(map) => Some(map),
                    _ => {
                        output.repaired = true;
                        None
                    }
                })
                .collect(),
            serde_json::Value::Object(single) => {
                // A bare event object coerced to a one-event list.
                output.repaired = true;
                vec![single]
            }
            _ => {
                output.repaired = true;
                Vec::new()
            }
        };

        let events: Vec<ArgumentValueMap> = raw_events
            .into_iter()
            .map(|raw| parse_event(raw, schema, &mut output.tallies, &mut output.repaired))
            .collect();
        output
            .per_schema
            .entry(schema.schema_id.clone())
            .or_default()
            .extend(events);
    }
    output
}

/// Resolves a retrieved schema id to its paraphrased revision, or wraps
/// the raw schema when no paraphrase exists.
fn resolve_candidate(
    pool: &SchemaPool,
    schema_id: &str,
) -> Result<ParaphrasedSchema, ExtractionError> {
    if let Some(p) = pool.paraphrased.get(schema_id) {
        return Ok(p.clone());
    }
    pool.schemas
        .get(schema_id)
        .map(|s| ParaphrasedSchema {
            base: s.clone(),
            paraphrase_of: s.schema_id.clone(),
            demo_sample_ids: vec![],
        })
        .ok_or_else(|| ExtractionError::UnresolvableSchema(schema_id.to_string()))
}

/// Runs assemble -> generate -> parse -> validate for one sample.
///
/// `batching` sends one schema per generation call instead of all retrieved
/// schemas in one prompt (the escape hatch when the joint prompt exceeds
/// the backend cap). Transport failures yield a `Failed` result rather
/// than an error so a corpus run can continue past flaky calls.
pub fn extract(
    sample: &Sample,
    retrieved: &RankedList,
    pool: &SchemaPool,
    generator: &TextGenerator,
    template: &str,
    batching: bool,
) -> Result<ExtractionResult, ExtractionError> {
    if retrieved.entries.is_empty() {
        return Err(ExtractionError::EmptyRetrieval(sample.sample_id.clone()));
    }
    let candidates: Vec<ParaphrasedSchema> = retrieved
        .entries
        .iter()
        .map(|e| resolve_candidate(pool, &e.schema_id))
        .collect::<Result<_, _>>()?;
    let candidate_refs: Vec<&ParaphrasedSchema> = candidates.iter().collect();

    let batches: Vec<Vec<&ParaphrasedSchema>> = if batching {
        candidate_refs.iter().map(|p| vec![*p]).collect()
    } else {
        vec![candidate_refs.clone()]
    };

    let mut merged = ParsedOutput::default();
    let mut statuses = Vec::new();
    for batch in &batches {
        let prompt = assemble_prompt(
            &sample.sample_id,
            &sample.query,
            batch,
            template,
            generator.prompt_cap(),
        )?;
        match generator.generate(&GenerationRequest::new(&prompt.rendered)) {
            Ok(reply) => {
                let parsed = parse_extraction_output(&reply, batch);
                statuses.push(parsed.status());
                merged.tallies.hallucinated_schemas += parsed.tallies.hallucinated_schemas;
                merged.tallies.dropped_args += parsed.tallies.dropped_args;
                for (schema_id, events) in parsed.per_schema {
                    merged.per_schema.entry(schema_id).or_default().extend(events);
                }
            }
            Err(GatewayError::PromptTooLarge { len, cap }) => {
                return Err(ExtractionError::PromptTooLarge { len, cap })
            }
            Err(e) => {
                log::warn!("generation failed for sample {}: {e}", sample.sample_id);
                statuses.push(ParseStatus::Failed);
            }
        }
    }

    let parse_status = if statuses.iter().all(|s| *s == ParseStatus::Failed) {
        ParseStatus::Failed
    } else if statuses.iter().any(|s| *s != ParseStatus::Clean)
        || merged.tallies != DiscardTally::default()
    {
        ParseStatus::Repaired
    } else {
        ParseStatus::Clean
    };

    Ok(ExtractionResult {
        sample_id: sample.sample_id.clone(),
        per_schema: merged.per_schema,
        backend_id: generator.backend_id().to_string(),
        parse_status,
        tallies: merged.tallies,
    })
}

/// Canonical serialization of events for one or more schemas: an object
/// keyed by schema name, each event with argument keys in schema
/// declaration order and values in corpus order. This is the exact shape
/// [`parse_extraction_output`] reads back.
pub fn canonical_output(entries: &[(&Schema, &[ArgumentValueMap])]) -> String {
    let mut root = serde_json::Map::new();
    for (schema, events) in entries {
        let rendered: Vec<serde_json::Value> = events
            .iter()
            .map(|event| {
                let mut obj = serde_json::Map::new();
                for arg in &schema.arguments {
                    if let Some(values) = event.values.get(&arg.name) {
                        obj.insert(
                            arg.name.clone(),
                            serde_json::Value::Array(
                                values
                                    .iter()
                                    .map(|v| serde_json::Value::String(v.clone()))
                                    .collect(),
                            ),
                        );
                    }
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        root.insert(schema.name.clone(), serde_json::Value::Array(rendered));
    }
    serde_json::Value::Object(root).to_string()
}

/// One instruction-tuning pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SftRecord {
    pub instruction: String,
    pub output: String,
}

/// Writes one `{"instruction", "output"}` record per (train sample, gold
/// schema) pair: a single-schema prompt paired with the canonical gold
/// serialization. Returns the record count.
pub fn export_sft(
    samples: &[Sample],
    pool: &SchemaPool,
    template: &str,
    out: &Path,
    prompt_cap: usize,
) -> Result<usize, ExtractionError> {
    let display = out.display().to_string();
    let io_err = |source| ExtractionError::Io {
        path: display.clone(),
        source,
    };
    let mut writer = std::io::BufWriter::new(std::fs::File::create(out).map_err(io_err)?);
    let io_err = |source| ExtractionError::Io {
        path: display.clone(),
        source,
    };
    let mut count = 0usize;
    for sample in samples {
        if sample.split != crate::corpus::Split::Train {
            continue;
        }
        for gold in &sample.gold {
            let candidate = resolve_candidate(pool, &gold.schema_id)?;
            let prompt = assemble_prompt(
                &sample.sample_id,
                &sample.query,
                &[&candidate],
                template,
                prompt_cap,
            )?;
            let record = SftRecord {
                instruction: prompt.rendered,
                output: canonical_output(&[(&candidate.base, &gold.events)]),
            };
            serde_json::to_writer(&mut writer, &record).map_err(|e| ExtractionError::Parse {
                path: display.clone(),
                line: 0,
                message: e.to_string(),
            })?;
            writer.write_all(b"\n").map_err(io_err)?;
            count += 1;
        }
    }
    writer.flush().map_err(io_err)?;
    Ok(count)
}

/// One line of an extraction run output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub sample_id: String,
    pub parse_status: ParseStatus,
    pub per_schema: BTreeMap<String, Vec<ArgumentValueMap>>,
    #[serde(default)]
    pub tallies: DiscardTally,
    #[serde(default)]
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
}

impl From<ExtractionResult> for ExtractionRecord {
    fn from(result: ExtractionResult) -> Self {
        ExtractionRecord {
            sample_id: result.sample_id,
            parse_status: result.parse_status,
            per_schema: result.per_schema,
            tallies: result.tallies,
            backend_id: result.backend_id,
            config_fingerprint: None,
        }
    }
}

impl From<ExtractionRecord> for ExtractionResult {
    fn from(record: ExtractionRecord) -> Self {
        ExtractionResult {
            sample_id: record.sample_id,
            per_schema: record.per_schema,
            backend_id: record.backend_id,
            parse_status: record.parse_status,
            tallies: record.tallies,
        }
    }
}

pub fn save_results(records: &[ExtractionRecord], path: &Path) -> Result<(), ExtractionError> {
    let display = path.display().to_string();
    let io_err = |source| ExtractionError::Io {
        path: display.clone(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    let io_err = |source| ExtractionError::Io {
        path: display.clone(),
        source,
    };
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|e| ExtractionError::Parse {
            path: display.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_results(path: &Path) -> Result<Vec<ExtractionRecord>, ExtractionError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| ExtractionError::Io {
        path: display.clone(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ExtractionError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| ExtractionError::Parse {
            path: display.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(records)
}
