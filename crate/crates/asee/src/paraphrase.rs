//! Schema paraphrasing and translation.
//!
//! Paraphrasing enriches a raw schema with an event description and
//! per-argument descriptions, generated by an LLM guided by few-shot
//! demonstrations drawn from the training corpus. The argument-name set is
//! sacred: a reply that adds, drops, or renames arguments is rejected,
//! retried once with a repair instruction, and finally degraded to the raw
//! schema. Pool construction over hundreds of schemas must survive
//! individual bad generations, so malformed output never aborts a build.

use crate::corpus::Sample;
use crate::gateway::{GatewayError, GenerationRequest, TextGenerator};
use crate::reply::find_first_json;
use crate::schema::{Argument, Language, ParaphrasedSchema, Schema, SchemaPool};
use crate::stablehash::seeded_hash;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::Deserialize;
use thiserror::Error;

/// Default number of few-shot demonstrations per schema.
pub const DEFAULT_DEMOS_PER_SCHEMA: usize = 3;

/// Longest query excerpt serialized into a demonstration.
const DEMO_QUERY_EXCERPT_CHARS: usize = 500;

pub const DEFAULT_PARAPHRASE_TEMPLATE: &str = "\
You rewrite event extraction schemas to make them easier to retrieve and apply.
Given the schema below and example records that follow it, write a clear one-sentence
description of the event type and a detailed description for every argument.
Keep every argument name exactly as given. Do not add, remove, or rename arguments.
Reply with exactly one fenced JSON object of the form:
{\"name\": \"...\", \"description\": \"...\", \"arguments\": [{\"name\": \"...\", \"description\": \"...\"}]}

Schema:
{{schema_json}}

Demonstrations:
{{demonstrations}}
";

const REPAIR_INSTRUCTION: &str = "\
Your previous reply was invalid: {{reason}}.
Reply again with exactly one fenced JSON object, keeping every argument name \
from the schema unchanged.";

const TRANSLATE_TEMPLATE: &str = "\
Translate the event extraction schema below into {{target_language}}.
Translate the schema name, its description, and every argument name and description.
Keep the number and order of arguments unchanged.
Reply with exactly one fenced JSON object of the form:
{\"name\": \"...\", \"description\": \"...\", \"arguments\": [{\"name\": \"...\", \"description\": \"...\"}]}

Schema:
{{schema_json}}
";

#[derive(Debug, Error)]
pub enum ParaphraseError {
    #[error("generation failed for schema {schema_id}: {source}")]
    GenerationFailed {
        schema_id: String,
        #[source]
        source: GatewayError,
    },
    #[error("template is missing placeholder {0}")]
    TemplateError(String),
    #[error("target language {0} equals the schema language")]
    SameLanguage(Language),
}

/// How a paraphrase (or translation) was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParaphraseStatus {
    /// First reply parsed and honored the argument-name invariant.
    Clean,
    /// The repair retry succeeded.
    Repaired,
    /// Both attempts failed; the raw schema was kept.
    Fallback,
}

#[derive(Debug)]
pub struct ParaphraseOutcome {
    pub paraphrase: ParaphrasedSchema,
    pub status: ParaphraseStatus,
    pub warning: Option<String>,
}

/// Per-schema outcome summary of a pool build. Transport failures are
/// collected here instead of aborting; the affected schemas carry fallback
/// paraphrases.
#[derive(Debug, Default)]
pub struct BuildPoolReport {
    pub fallbacks: Vec<(String, String)>,
    pub failures: Vec<(String, String)>,
}

impl BuildPoolReport {
    pub fn is_clean(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Picks up to `k` training samples whose gold schemas include this
/// schema. Candidates are ordered by sample_id, then shuffled with a seed
/// derived from (seed, schema_id), so the choice is stable across runs and
/// insensitive to corpus file order.
pub fn select_demonstrations<'a>(
    schema: &Schema,
    training_corpus: &'a [Sample],
    k: usize,
    seed: u64,
) -> Vec<&'a Sample> {
    assert!(k >= 1, "demonstration count must be >= 1");
    let mut adhering: Vec<&Sample> = training_corpus
        .iter()
        .filter(|s| s.gold.iter().any(|g| g.schema_id == schema.schema_id))
        .collect();
    adhering.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seeded_hash(&schema.schema_id, seed));
    adhering.shuffle(&mut rng);
    adhering.truncate(k);
    adhering
}

/// The schema as presented to the model: name, description, arguments.
pub fn schema_prompt_json(schema: &Schema) -> serde_json::Value {
    serde_json::json!({
        "name": schema.name,
        "description": schema.description,
        "arguments": schema.arguments.iter().map(|a| {
            serde_json::json!({"name": a.name, "description": a.description})
        }).collect::<Vec<_>>(),
    })
}

fn truncate_chars(text: &str, max_chars: usize) -> &str {
    match text.char_indices().nth(max_chars) {
        Some((byte_idx, _)) => &text[..byte_idx],
        None => text,
    }
}

fn render_demonstrations(schema_id: &str, demos: &[&Sample]) -> String {
    if demos.is_empty() {
        return "(none)".to_string();
    }
    demos
        .iter()
        .map(|sample| {
            let events: Vec<_> = sample
                .gold
                .iter()
                .filter(|g| g.schema_id == schema_id)
                .flat_map(|g| g.events.iter())
                .collect();
            format!(
                "Query: {}\nEvents: {}",
                truncate_chars(&sample.query, DEMO_QUERY_EXCERPT_CHARS),
                serde_json::to_string(&events).unwrap_or_else(|_| "[]".to_string())
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_paraphrase_prompt(
    template: &str,
    schema: &Schema,
    demos: &[&Sample],
) -> Result<String, ParaphraseError> {
    for placeholder in ["{{schema_json}}", "{{demonstrations}}"] {
        if !template.contains(placeholder) {
            return Err(ParaphraseError::TemplateError(placeholder.to_string()));
        }
    }
    Ok(template
        .replace("{{schema_json}}", &schema_prompt_json(schema).to_string())
        .replace(
            "{{demonstrations}}",
            &render_demonstrations(&schema.schema_id, demos),
        ))
}

#[derive(Deserialize)]
struct ReplyArgument {
    name: String,
    #[serde(default)]
    description: String,
}

#[derive(Deserialize)]
struct SchemaReply {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    arguments: Vec<ReplyArgument>,
}

fn parse_schema_reply(reply: &str) -> Result<SchemaReply, String> {
    let (value, _) = find_first_json(reply).ok_or("reply contains no JSON")?;
    serde_json::from_value(value).map_err(|e| format!("JSON has the wrong shape: {e}"))
}

/// Applies a parsed paraphrase reply onto the source schema, enforcing the
/// rename-free invariant: the returned argument names must be exactly the
/// source names (order-insensitive); only descriptions are taken from the
/// reply. The schema name is always preserved.
fn apply_paraphrase_reply(source: &Schema, reply: SchemaReply) -> Result<Schema, String> {
    let mut by_name: std::collections::BTreeMap<&str, &str> = std::collections::BTreeMap::new();
    for arg in &reply.arguments {
        if by_name
            .insert(arg.name.as_str(), arg.description.as_str())
            .is_some()
        {
            return Err(format!("duplicate argument {:?} in reply", arg.name));
        }
    }
    if reply.arguments.len() != source.arguments.len() {
        return Err(format!(
            "reply has {} arguments, schema declares {}",
            reply.arguments.len(),
            source.arguments.len()
        ));
    }
    let mut arguments = Vec::with_capacity(source.arguments.len());
    for arg in &source.arguments {
        match by_name.get(arg.name.as_str()) {
            Some(description) => arguments.push(Argument::described(&arg.name, *description)),
            None => return Err(format!("reply dropped or renamed argument {:?}", arg.name)),
        }
    }
    Ok(Schema {
        schema_id: source.schema_id.clone(),
        name: source.name.clone(),
        description: reply.description.unwrap_or_default(),
        language: source.language,
        source_dataset: source.source_dataset.clone(),
        arguments,
    })
}

/// Paraphrases one schema. Malformed output is retried once with a repair
/// instruction, then degraded to the raw schema with a warning; only
/// transport-level failures surface as errors.
pub fn paraphrase_schema(
    schema: &Schema,
    demos: &[&Sample],
    generator: &TextGenerator,
    template: &str,
) -> Result<ParaphraseOutcome, ParaphraseError> {
    let prompt = render_paraphrase_prompt(template, schema, demos)?;
    let demo_sample_ids: Vec<String> = demos.iter().map(|d| d.sample_id.clone()).collect();
    let generation_failed = |source| ParaphraseError::GenerationFailed {
        schema_id: schema.schema_id.clone(),
        source,
    };

    let outcome = |base, status, warning| ParaphraseOutcome {
        paraphrase: ParaphrasedSchema {
            base,
            paraphrase_of: schema.schema_id.clone(),
            demo_sample_ids: demo_sample_ids.clone(),
        },
        status,
        warning,
    };

    let first_reply = generator
        .generate(&GenerationRequest::new(&prompt))
        .map_err(generation_failed)?;
    let first_failure = match parse_schema_reply(&first_reply)
        .and_then(|reply| apply_paraphrase_reply(schema, reply))
    {
        Ok(base) => return Ok(outcome(base, ParaphraseStatus::Clean, None)),
        Err(reason) => reason,
    };

    let repair_prompt = format!(
        "{prompt}\n\n{}",
        REPAIR_INSTRUCTION.replace("{{reason}}", &first_failure)
    );
    let second_failure = match generator.generate(&GenerationRequest::new(&repair_prompt)) {
        Ok(second_reply) => match parse_schema_reply(&second_reply)
            .and_then(|reply| apply_paraphrase_reply(schema, reply))
        {
            Ok(base) => {
                return Ok(outcome(
                    base,
                    ParaphraseStatus::Repaired,
                    Some(first_failure),
                ))
            }
            Err(reason) => reason,
        },
        // An oversized repair prompt is a lost cause, not a transport
        // failure; take the fallback path.
        Err(GatewayError::PromptTooLarge { .. }) => "repair prompt over cap".to_string(),
        Err(e) => return Err(generation_failed(e)),
    };

    let warning = format!(
        "paraphrase of {} fell back to the raw schema: {first_failure}; retry: {second_failure}",
        schema.schema_id
    );
    log::warn!("{warning}");
    Ok(outcome(
        schema.clone(),
        ParaphraseStatus::Fallback,
        Some(warning),
    ))
}

/// Paraphrases every schema in `raw`, fanning calls out across worker
/// threads (actual concurrency is bounded by the generator's in-flight
/// limit). The returned pool carries a paraphrase for every schema id;
/// schemas whose generation failed outright keep a raw fallback and are
/// listed in the report.
pub fn build_pool(
    raw: &SchemaPool,
    training_corpus: &[Sample],
    generator: &TextGenerator,
    k_demos: usize,
    seed: u64,
    template: &str,
) -> Result<(SchemaPool, BuildPoolReport), ParaphraseError> {
    // Surface template defects before spending any generation budget.
    for placeholder in ["{{schema_json}}", "{{demonstrations}}"] {
        if !template.contains(placeholder) {
            return Err(ParaphraseError::TemplateError(placeholder.to_string()));
        }
    }

    let schemas: Vec<&Schema> = raw.schemas.values().collect();
    let worker_count = generator.max_in_flight().min(schemas.len()).max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<ParaphraseOutcome, ParaphraseError>>>> =
        (0..schemas.len()).map(|_| std::sync::Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..worker_count {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= schemas.len() {
                    break;
                }
                let schema = schemas[idx];
                let demos = select_demonstrations(schema, training_corpus, k_demos.max(1), seed);
                let result = paraphrase_schema(schema, &demos, generator, template);
                *results[idx].lock().unwrap() = Some(result);
            });
        }
    });

    let mut pool = SchemaPool::new(raw.pool_id.clone());
    pool.schemas = raw.schemas.clone();
    let mut report = BuildPoolReport::default();
    for (schema, slot) in schemas.iter().zip(results) {
        let outcome = match slot.into_inner().unwrap().expect("worker filled every slot") {
            Ok(outcome) => outcome,
            Err(e) => {
                report
                    .failures
                    .push((schema.schema_id.clone(), e.to_string()));
                ParaphraseOutcome {
                    paraphrase: ParaphrasedSchema {
                        base: (*schema).clone(),
                        paraphrase_of: schema.schema_id.clone(),
                        demo_sample_ids: vec![],
                    },
                    status: ParaphraseStatus::Fallback,
                    warning: None,
                }
            }
        };
        if outcome.status == ParaphraseStatus::Fallback {
            report.fallbacks.push((
                schema.schema_id.clone(),
                outcome.warning.clone().unwrap_or_default(),
            ));
        }
        pool.paraphrased
            .insert(schema.schema_id.clone(), outcome.paraphrase);
    }
    Ok((pool, report))
}

#[derive(Debug)]
pub struct TranslateOutcome {
    pub schema: Schema,
    pub status: ParaphraseStatus,
    pub warning: Option<String>,
}

/// Translates a schema into `target_language`, producing a new schema with
/// the id suffixed `@<lang>`. The argument count and order are preserved;
/// a reply that changes the count falls back to the untranslated argument
/// names.
pub fn translate_schema(
    schema: &Schema,
    target_language: Language,
    generator: &TextGenerator,
) -> Result<TranslateOutcome, ParaphraseError> {
    if target_language == schema.language {
        return Err(ParaphraseError::SameLanguage(target_language));
    }
    let prompt = TRANSLATE_TEMPLATE
        .replace("{{target_language}}", &target_language.to_string())
        .replace("{{schema_json}}", &schema_prompt_json(schema).to_string());
    let reply = generator
        .generate(&GenerationRequest::new(prompt))
        .map_err(|source| ParaphraseError::GenerationFailed {
            schema_id: schema.schema_id.clone(),
            source,
        })?;

    let translated_id = format!("{}@{}", schema.schema_id, target_language);
    let fallback = |reason: String| {
        let warning = format!(
            "translation of {} kept source argument names: {reason}",
            schema.schema_id
        );
        log::warn!("{warning}");
        TranslateOutcome {
            schema: Schema {
                schema_id: translated_id.clone(),
                language: target_language,
                ..schema.clone()
            },
            status: ParaphraseStatus::Fallback,
            warning: Some(warning),
        }
    };

    match parse_schema_reply(&reply) {
        Ok(parsed) => {
            if parsed.arguments.len() != schema.arguments.len() {
                return Ok(fallback(format!(
                    "reply has {} arguments, schema declares {}",
                    parsed.arguments.len(),
                    schema.arguments.len()
                )));
            }
            Ok(TranslateOutcome {
                schema: Schema {
                    schema_id: translated_id,
                    name: parsed.name.unwrap_or_else(|| schema.name.clone()),
                    description: parsed.description.unwrap_or_default(),
                    language: target_language,
                    source_dataset: schema.source_dataset.clone(),
                    arguments: parsed
                        .arguments
                        .into_iter()
                        .map(|a| Argument::described(a.name, a.description))
                        .collect(),
                },
                status: ParaphraseStatus::Clean,
                warning: None,
            })
        }
        Err(reason) => Ok(fallback(reason)),
    }
}
