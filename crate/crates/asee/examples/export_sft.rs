//! Export (instruction, output) fine-tuning pairs: one record per
//! (train sample, gold schema), with the gold events serialized in the
//! exact shape the extraction parser reads back.
//!
//! Run: cargo run -p asee --example export_sft

use asee::corpus::{ArgumentValueMap, GoldEntry, Sample, Split};
use asee::extraction::{
    export_sft, parse_extraction_output, SftRecord, DEFAULT_EXTRACTION_TEMPLATE,
};
use asee::gateway::DEFAULT_PROMPT_CAP_CHARS;
use asee::schema::{Argument, Language, ParaphrasedSchema, Schema, SchemaPool};

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

    let event: ArgumentValueMap = [
        ("magnitude".to_string(), vec!["7.1".to_string()]),
        ("location".to_string(), vec!["Valparaiso".to_string()]),
    ]
    .into_iter()
    .collect();
    let samples = vec![
        Sample {
            sample_id: "t1".into(),
            query: "A magnitude 7.1 earthquake struck near Valparaiso.".into(),
            language: Language::En,
            source_dataset: "demo".into(),
            split: Split::Train,
            gold: vec![GoldEntry {
                schema_id: "quake".into(),
                events: vec![event.clone()],
            }],
        },
        // Dev/test samples are not exported.
        Sample {
            sample_id: "d1".into(),
            query: "Held out.".into(),
            language: Language::En,
            source_dataset: "demo".into(),
            split: Split::Dev,
            gold: vec![GoldEntry {
                schema_id: "quake".into(),
                events: vec![event.clone()],
            }],
        },
    ];

    let out = std::env::temp_dir().join("asee-example-sft.jsonl");
    let count = export_sft(
        &samples,
        &pool,
        DEFAULT_EXTRACTION_TEMPLATE,
        &out,
        DEFAULT_PROMPT_CAP_CHARS,
    )?;
    println!("exported {count} record(s) to {}", out.display());

    let content = std::fs::read_to_string(&out)?;
    let record: SftRecord = serde_json::from_str(content.lines().next().unwrap())?;
    println!("\n=== output field ===\n{}", record.output);

    // The output field round-trips through the extraction parser.
    let candidate = ParaphrasedSchema {
        paraphrase_of: "quake".into(),
        demo_sample_ids: vec![],
        base: pool.schemas["quake"].clone(),
    };
    let parsed = parse_extraction_output(&record.output, &[&candidate]);
    assert_eq!(parsed.per_schema["quake"], vec![event]);
    println!("\nround-trip through parse_extraction_output: exact match");
    std::fs::remove_file(&out).ok();
    Ok(())
}
