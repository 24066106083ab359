//! Assemble an extraction prompt, parse a model reply, and watch the
//! validator drop hallucinated schemas and undeclared arguments.
//!
//! Run: cargo run -p asee --example extract

use asee::extraction::{assemble_prompt, parse_extraction_output, DEFAULT_EXTRACTION_TEMPLATE};
use asee::gateway::DEFAULT_PROMPT_CAP_CHARS;
use asee::schema::{Argument, Language, ParaphrasedSchema, Schema};

fn main() -> anyhow::Result<()> {
    let quake = ParaphrasedSchema {
        paraphrase_of: "quake".into(),
        demo_sample_ids: vec![],
        base: Schema {
            schema_id: "quake".into(),
            name: "Earthquake".into(),
            description: "A seismic event.".into(),
            language: Language::En,
            source_dataset: "demo".into(),
            arguments: vec![
                Argument::described("magnitude", "Richter-scale strength"),
                Argument::described("location", "Epicenter place name"),
            ],
        },
    };

    let prompt = assemble_prompt(
        "demo-query",
        "A magnitude 7.1 earthquake struck near Valparaiso on Monday.",
        &[&quake],
        DEFAULT_EXTRACTION_TEMPLATE,
        DEFAULT_PROMPT_CAP_CHARS,
    )?;
    println!("=== Rendered prompt (template {}) ===", prompt.template_id);
    println!("{}\n", prompt.rendered);

    // A messy but salvageable reply: prose around the JSON, a hallucinated
    // schema, an undeclared argument, and a scalar value.
    let reply = r#"Sure! Here is what I found:
{"Earthquake": [{"magnitude": "7.1", "location": ["Valparaiso"], "casualties": ["3"]}],
 "AlienLanding": [{"craft": ["saucer"]}]}
Let me know if you need anything else."#;

    let parsed = parse_extraction_output(reply, &[&quake]);
    println!("=== Parsed result ===");
    println!("status: {:?}", parsed.status());
    println!(
        "tallies: {} hallucinated schema(s), {} dropped argument key(s)",
        parsed.tallies.hallucinated_schemas, parsed.tallies.dropped_args
    );
    for (schema_id, events) in &parsed.per_schema {
        for event in events {
            println!("{schema_id}: {}", serde_json::to_string(event)?);
        }
    }

    // A reply with no JSON at all never aborts the pipeline.
    let failed = parse_extraction_output("no events found", &[&quake]);
    println!("\nprose reply -> status {:?}, {} schemas", failed.status(), failed.per_schema.len());
    Ok(())
}
