//! The whole pipeline in-process: build a paraphrased pool, retrieve
//! top-k schemas per query, extract with a gold-echoing offline backend,
//! and evaluate Recall@K / extraction F1 / end-to-end F1.
//!
//! Run: cargo run -p asee --example end_to_end

use asee::corpus::{ArgumentValueMap, GoldEntry, Sample, Split};
use asee::eval::{e2e_f1, extraction_f1, recall_at_k};
use asee::extraction::{assemble_prompt, canonical_output, extract, DEFAULT_EXTRACTION_TEMPLATE};
use asee::gateway::{
    BackendConfig, BackendKind, Embedder, MockGeneration, TextGenerator, DEFAULT_PROMPT_CAP_CHARS,
};
use asee::paraphrase::{build_pool, DEFAULT_PARAPHRASE_TEMPLATE};
use asee::retrieval::{build_index, search, RankedList, SearchOptions, Strategy};
use asee::schema::{Argument, DocumentMode, Language, ParaphrasedSchema, Schema, SchemaPool};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

const TOPICS: &[(&str, &str, [&str; 2])] = &[
    ("ev-quake", "Earthquake", ["magnitude", "epicenter"]),
    ("ev-merger", "Merger", ["acquirer", "target"]),
    ("ev-storm", "Storm", ["wind", "landfall"]),
    ("ev-launch", "Launch", ["rocket", "payload"]),
    ("ev-strike", "Strike", ["union", "employer"]),
    ("ev-verdict", "Verdict", ["court", "sentence"]),
];

fn main() -> anyhow::Result<()> {
    // 1. Schema pool (paraphrasing degrades to raw schemas under the
    //    unscripted mock, which is fine for retrieval here).
    let mut raw = SchemaPool::new("demo");
    for (id, name, args) in TOPICS {
        raw.insert_schema(Schema {
            schema_id: (*id).into(),
            name: (*name).into(),
            description: String::new(),
            language: Language::En,
            source_dataset: "demo".into(),
            arguments: args.iter().map(|a| Argument::new(*a)).collect(),
        })?;
    }
    let mock_generator = TextGenerator::from_config(&BackendConfig::mock(BackendKind::Generation))?;
    let (pool, _) = build_pool(&raw, &[], &mock_generator, 3, 7, DEFAULT_PARAPHRASE_TEMPLATE)?;
    println!("pool: {} schemas", pool.len());

    // 2. Queries with gold annotations.
    let samples: Vec<Sample> = vec![
        labeled("q1", "The earthquake epicenter saw magnitude seven", &[("ev-quake", &[("magnitude", "7.0"), ("epicenter", "coast")])]),
        labeled("q2", "The merger: acquirer MegaCorp, target MiniCo", &[("ev-merger", &[("acquirer", "MegaCorp"), ("target", "MiniCo")])]),
        labeled("q3", "Storm wind at landfall; union strike at the employer", &[
            ("ev-storm", &[("wind", "150kph"), ("landfall", "Tuesday")]),
            ("ev-strike", &[("union", "dockworkers"), ("employer", "the port")]),
        ]),
        labeled("q4", "Court verdict: the sentence was announced", &[("ev-verdict", &[("court", "high court"), ("sentence", "five years")])]),
        // Gold schema whose vocabulary never appears: retrieval will miss
        // it and end-to-end F1 pays the price.
        labeled("q5", "completely unrelated text about gardening", &[("ev-launch", &[("rocket", "Heavy-1")])]),
    ];

    // 3. Retrieval (dense over the mock hashing embedder).
    let embedder = Embedder::from_config(&BackendConfig::mock(BackendKind::Embedding))?;
    let index = build_index(&pool, DocumentMode::Paraphrased, Some(&embedder))?;
    let options = SearchOptions::new(Strategy::Dense, 2);
    let mut ranked: BTreeMap<String, RankedList> = BTreeMap::new();
    for s in &samples {
        ranked.insert(s.sample_id.clone(), search(&index, &s.query, &options, Some(&embedder), None)?);
    }
    for (id, list) in &ranked {
        println!("{id}: retrieved {:?}", list.schema_ids());
    }

    // 4. Extraction with a gold-echo script: the backend answers each
    //    prompt with the canonical serialization of the gold events for
    //    whichever gold schemas were retrieved.
    let mut script = BTreeMap::new();
    for s in &samples {
        let list = &ranked[&s.sample_id];
        let candidates: Vec<ParaphrasedSchema> = list
            .schema_ids()
            .iter()
            .map(|id| pool.paraphrased[**&id].clone())
            .collect();
        let refs: Vec<&ParaphrasedSchema> = candidates.iter().collect();
        let prompt = assemble_prompt(&s.sample_id, &s.query, &refs, DEFAULT_EXTRACTION_TEMPLATE, DEFAULT_PROMPT_CAP_CHARS)?;
        let retrieved: BTreeSet<&str> = list.schema_ids().into_iter().collect();
        let entries: Vec<(&Schema, &[ArgumentValueMap])> = s
            .gold
            .iter()
            .filter(|g| retrieved.contains(g.schema_id.as_str()))
            .map(|g| (&pool.paraphrased[&g.schema_id].base, g.events.as_slice()))
            .collect();
        script.insert(prompt.rendered, canonical_output(&entries));
    }
    let generator = TextGenerator::with_backend(
        Arc::new(MockGeneration::scripted(script)),
        &BackendConfig::mock(BackendKind::Generation),
    );
    let results: Vec<_> = samples
        .iter()
        .map(|s| extract(s, &ranked[&s.sample_id], &pool, &generator, DEFAULT_EXTRACTION_TEMPLATE, false))
        .collect::<Result<_, _>>()?;

    // 5. Metrics.
    let gold_ids: BTreeMap<String, BTreeSet<String>> = samples
        .iter()
        .map(|s| (s.sample_id.clone(), s.gold_schema_ids().into_iter().map(String::from).collect()))
        .collect();
    let recall = recall_at_k(&gold_ids, &ranked, 2)?;
    let extraction = extraction_f1(&samples, &results, &pool)?;
    let e2e = e2e_f1(&samples, &ranked, &results, &pool)?;
    println!("\nRecall@2        = {:.4}", recall.value);
    println!("extraction F1   = {:.4}", extraction.value);
    println!("end-to-end F1   = {:.4}", e2e.value);
    println!("\n(gold-echo extraction makes E2E equal Recall@2: retrieval is the only loss)");
    assert_eq!(e2e.value, recall.value);
    Ok(())
}

fn labeled(id: &str, query: &str, gold: &[(&str, &[(&str, &str)])]) -> Sample {
    Sample {
        sample_id: id.into(),
        query: query.into(),
        language: Language::En,
        source_dataset: "demo".into(),
        split: Split::Test,
        gold: gold
            .iter()
            .map(|(schema_id, pairs)| GoldEntry {
                schema_id: (*schema_id).into(),
                events: vec![pairs
                    .iter()
                    .map(|(k, v)| (k.to_string(), vec![v.to_string()]))
                    .collect()],
            })
            .collect(),
    }
}
