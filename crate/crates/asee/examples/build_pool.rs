//! Build a paraphrased schema pool with a scripted offline backend, then
//! translate one schema for a cross-lingual subset.
//!
//! Run: cargo run -p asee --example build_pool

use asee::gateway::{BackendConfig, BackendKind, MockGeneration, TextGenerator};
use asee::paraphrase::{
    build_pool, translate_schema, ParaphraseStatus, DEFAULT_PARAPHRASE_TEMPLATE,
};
use asee::schema::{schema_document_text, Argument, DocumentMode, Language, Schema, SchemaPool};
use std::collections::BTreeMap;
use std::sync::Arc;

fn main() -> anyhow::Result<()> {
    let mut pool = SchemaPool::new("demo");
    pool.insert_schema(Schema {
        schema_id: "quake".into(),
        name: "Earthquake".into(),
        description: String::new(),
        language: Language::En,
        source_dataset: "demo".into(),
        arguments: vec![Argument::new("magnitude"), Argument::new("location")],
    })?;
    pool.insert_schema(Schema {
        schema_id: "merger".into(),
        name: "Merger".into(),
        description: String::new(),
        language: Language::En,
        source_dataset: "demo".into(),
        arguments: vec![Argument::new("acquirer"), Argument::new("target")],
    })?;

    // A real deployment points BackendConfig.endpoint at a completion
    // service; here a scripted mock stands in. Unscripted prompts fall
    // back to the raw schema, which is exactly what happens to flaky
    // generations in a large pool build.
    let quake_reply = r#"```json
{"name": "Earthquake",
 "description": "A seismic event where the ground shakes.",
 "arguments": [
   {"name": "magnitude", "description": "Strength of the quake on the Richter scale."},
   {"name": "location", "description": "Place name of the epicenter."}]}
```"#;
    let script = BTreeMap::from([(
        paraphrase_prompt_for(&pool, "quake"),
        quake_reply.to_string(),
    )]);
    let generator = TextGenerator::with_backend(
        Arc::new(MockGeneration::scripted(script)),
        &BackendConfig::mock(BackendKind::Generation),
    );

    let (built, report) = build_pool(&pool, &[], &generator, 3, 7, DEFAULT_PARAPHRASE_TEMPLATE)?;
    println!("=== Pool build ===");
    println!(
        "{} schemas, {} paraphrased, {} fallbacks",
        built.len(),
        built.paraphrased.len(),
        report.fallbacks.len()
    );
    for (schema_id, _) in &report.fallbacks {
        println!("  fallback (kept raw): {schema_id}");
    }

    println!("\n=== Retrieval documents for `quake` ===");
    println!(
        "raw:\n{}\n",
        built.document_text("quake", DocumentMode::Raw).unwrap()
    );
    println!(
        "paraphrased:\n{}",
        built
            .document_text("quake", DocumentMode::Paraphrased)
            .unwrap()
    );

    // Cross-lingual subsets translate the schema while the queries stay in
    // the source language; an unscripted mock exercises the fallback path
    // (argument names kept untranslated).
    let outcome = translate_schema(&built.schemas["merger"], Language::Zh, &generator)?;
    println!("\n=== Translation (merger -> zh) ===");
    println!(
        "id: {}  status: {:?}",
        outcome.schema.schema_id,
        outcome.status
    );
    println!(
        "document:\n{}",
        schema_document_text(&outcome.schema, DocumentMode::Raw)
    );
    assert_eq!(outcome.status, ParaphraseStatus::Fallback);
    Ok(())
}

/// The exact prompt build_pool will render for one schema (zero demos).
fn paraphrase_prompt_for(pool: &SchemaPool, schema_id: &str) -> String {
    let schema = &pool.schemas[schema_id];
    DEFAULT_PARAPHRASE_TEMPLATE
        .replace(
            "{{schema_json}}",
            &asee::paraphrase::schema_prompt_json(schema).to_string(),
        )
        .replace("{{demonstrations}}", "(none)")
}
