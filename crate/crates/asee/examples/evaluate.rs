//! Score retrieval and extraction: Recall@K, argument-level F1, and the
//! end-to-end F1 that only credits schemas the retriever returned.
//!
//! Run: cargo run -p asee --example evaluate

use asee::corpus::{ArgumentValueMap, GoldEntry, Sample, Split};
use asee::eval::{argument_f1, e2e_f1, extraction_f1, recall_at_k, render_markdown};
use asee::extraction::{ExtractionResult, ParseStatus};
use asee::retrieval::{RankedEntry, RankedList};
use asee::schema::{Argument, Language, Schema, SchemaPool};
use std::collections::{BTreeMap, BTreeSet};

fn main() -> anyhow::Result<()> {
    let mut pool = SchemaPool::new("demo");
    pool.insert_schema(Schema {
        schema_id: "quake".into(),
        name: "Earthquake".into(),
        description: String::new(),
        language: Language::En,
        source_dataset: "demo".into(),
        arguments: vec![Argument::new("who"), Argument::new("where")],
    })?;

    // Value matching is normalized exact match: case folds, whitespace
    // collapses, surrounding punctuation strips.
    let gold = vec![av(&[("who", &["alice"]), ("where", &["paris"])])];
    let pred = vec![av(&[("who", &["Alice"]), ("where", &["london"])])];
    println!(
        "argument_f1(gold, pred) = {:.2}  (who matches after case fold, where does not)",
        argument_f1(&gold, &pred, &pool.schemas["quake"])
    );

    let samples = vec![Sample {
        sample_id: "q1".into(),
        query: "Alice reported from Paris.".into(),
        language: Language::En,
        source_dataset: "demo".into(),
        split: Split::Test,
        gold: vec![GoldEntry {
            schema_id: "quake".into(),
            events: gold.clone(),
        }],
    }];
    let results = vec![ExtractionResult {
        sample_id: "q1".into(),
        per_schema: BTreeMap::from([("quake".to_string(), pred.clone())]),
        backend_id: "demo".into(),
        parse_status: ParseStatus::Clean,
        tallies: Default::default(),
    }];

    let hit = ranked(&["quake", "other"]);
    let miss = ranked(&["other"]);
    let gold_ids: BTreeMap<String, BTreeSet<String>> =
        BTreeMap::from([("q1".to_string(), BTreeSet::from(["quake".to_string()]))]);

    let mut reports = Vec::new();
    for (label, lists) in [("retriever-hit", hit), ("retriever-miss", miss)] {
        let lists = BTreeMap::from([("q1".to_string(), lists)]);
        let mut recall = recall_at_k(&gold_ids, &lists, 2)?;
        let mut extraction = extraction_f1(&samples, &results, &pool)?;
        let mut e2e = e2e_f1(&samples, &lists, &results, &pool)?;
        println!(
            "{label}: Recall@2 {:.2}  extraction F1 {:.2}  E2E-F1 {:.2}",
            recall.value, extraction.value, e2e.value
        );
        for report in [&mut recall, &mut extraction, &mut e2e] {
            report.label = Some(label.to_string());
        }
        reports.extend([recall, extraction, e2e]);
    }

    println!("\n{}", render_markdown(&reports));
    println!("(E2E-F1 collapses to zero when retrieval misses the gold schema,\n however good the extractor is.)");
    Ok(())
}

fn av(pairs: &[(&str, &[&str])]) -> ArgumentValueMap {
    pairs
        .iter()
        .map(|(k, vals)| (k.to_string(), vals.iter().map(|v| v.to_string()).collect()))
        .collect()
}

fn ranked(ids: &[&str]) -> RankedList {
    RankedList {
        entries: ids
            .iter()
            .enumerate()
            .map(|(i, id)| RankedEntry {
                schema_id: id.to_string(),
                score: 2.0 - i as f64,
            })
            .collect(),
        k: 2,
    }
}
