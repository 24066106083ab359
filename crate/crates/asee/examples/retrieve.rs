//! Rank schemas for queries with BM25, dense cosine search, and a
//! reranked pipeline, over raw vs paraphrased schema documents.
//!
//! Run: cargo run -p asee --example retrieve

use asee::gateway::{BackendConfig, BackendKind, Embedder, Reranker};
use asee::retrieval::{build_index, search, SearchOptions, Strategy};
use asee::schema::{Argument, DocumentMode, Language, ParaphrasedSchema, Schema, SchemaPool};

fn main() -> anyhow::Result<()> {
    // Schemas with opaque names; the paraphrased revisions carry the
    // vocabulary queries actually use.
    let topics = [
        ("ev-quake", "E17", "ground shaking earthquake tremor epicenter"),
        ("ev-merger", "E42", "company acquisition merger takeover deal"),
        ("ev-storm", "E56", "hurricane storm wind rainfall landfall"),
        ("ev-launch", "E73", "rocket launch payload orbit countdown"),
    ];
    let mut pool = SchemaPool::new("demo");
    for (id, name, description) in topics {
        let raw = Schema {
            schema_id: id.into(),
            name: name.into(),
            description: String::new(),
            language: Language::En,
            source_dataset: "demo".into(),
            arguments: vec![Argument::new("slot_one"), Argument::new("slot_two")],
        };
        pool.insert_schema(raw.clone())?;
        let mut described = raw.clone();
        described.arguments[0].description = description.into();
        pool.insert_paraphrase(ParaphrasedSchema {
            base: described,
            paraphrase_of: raw.schema_id.clone(),
            demo_sample_ids: vec![],
        })?;
    }

    let embedder = Embedder::from_config(&BackendConfig::mock(BackendKind::Embedding))?;
    let reranker = Reranker::from_config(&BackendConfig::mock(BackendKind::Generation))?;
    let query = "a hurricane made landfall with record wind";

    for mode in [DocumentMode::Raw, DocumentMode::Paraphrased] {
        let index = build_index(&pool, mode, Some(&embedder))?;
        println!("=== mode {mode:?} ===");
        for strategy in [Strategy::Bm25, Strategy::Dense, Strategy::Bm25ThenRerank] {
            let ranked = search(
                &index,
                query,
                &SearchOptions::new(strategy, 2),
                Some(&embedder),
                Some(&reranker),
            )?;
            let rendered: Vec<String> = ranked
                .entries
                .iter()
                .map(|e| format!("{} ({:.3})", e.schema_id, e.score))
                .collect();
            println!("{strategy:?}: {}", rendered.join(", "));
        }
        println!();
    }
    println!("(paraphrased mode surfaces ev-storm first; raw-mode scores are tie-broken by id)");
    Ok(())
}
