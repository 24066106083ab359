//! Consolidate a merged multi-source pool: heuristic merging of
//! near-duplicates, numbered-variant collapsing, a greedy maximum
//! independent set over the embedding similarity graph, and corpus
//! preparation (redirects, splits, label filter).
//!
//! Run: cargo run -p asee --example consolidate

use asee::consolidate::{
    build_similarity_graph, collapse_numeric_variants, filter_corpus, filter_label_count,
    greedy_max_independent_set, heuristic_merge, name_similarity, split_corpus,
};
use asee::corpus::{ArgumentValueMap, GoldEntry, Sample, Split};
use asee::gateway::{BackendConfig, BackendKind, Embedder};
use asee::schema::{Argument, Language, Schema, SchemaPool};

fn schema(id: &str, name: &str, args: &[&str]) -> Schema {
    Schema {
        schema_id: id.into(),
        name: name.into(),
        description: String::new(),
        language: Language::En,
        source_dataset: "demo".into(),
        arguments: args.iter().map(|a| Argument::new(*a)).collect(),
    }
}

fn main() -> anyhow::Result<()> {
    let mut pool = SchemaPool::new("merged-sources");
    for s in [
        schema("src1-attack", "Attack", &["attacker", "target"]),
        schema("src2-attacks", "Attacks", &["attacker", "targets"]),
        schema("src1-quake", "Earthquake", &["place", "place1", "place2", "time"]),
        schema("src2-quake", "Earthquake", &["place", "time"]),
        schema("src3-merger", "Company Merger", &["acquirer", "target"]),
    ] {
        pool.insert_schema(s)?;
    }

    println!("=== Heuristic merge (name threshold 0.8) ===");
    println!(
        "name_similarity(\"Attack\", \"Attacks\") = {:.3}",
        name_similarity("Attack", "Attacks")
    );
    let (merged, log) = heuristic_merge(&pool, 0.8);
    for record in &log.records {
        println!("merged {} -> {} (sim {:.3})", record.merged, record.into, record.name_sim);
    }
    println!("pool: {} -> {} schemas", pool.len(), merged.len());

    println!("\n=== Numbered-variant collapse ===");
    let mut collapsed = SchemaPool::new(merged.pool_id.clone());
    for (id, s) in &merged.schemas {
        let c = collapse_numeric_variants(s);
        if c.arguments.len() != s.arguments.len() {
            println!(
                "{id}: [{}] -> [{}]",
                s.argument_names().join(", "),
                c.argument_names().join(", ")
            );
        }
        collapsed.schemas.insert(id.clone(), c);
    }

    println!("\n=== Similarity graph + greedy MIS (cosine > 0.85) ===");
    let embedder = Embedder::from_config(&BackendConfig::mock(BackendKind::Embedding))?;
    let graph = build_similarity_graph(&collapsed, &embedder, 0.85)?;
    println!("{} nodes, {} edges", graph.nodes.len(), graph.edge_count());
    let kept = greedy_max_independent_set(&graph);
    println!("kept: {:?}", kept);
    let mut final_pool = SchemaPool::new(collapsed.pool_id.clone());
    for id in &kept {
        final_pool
            .schemas
            .insert(id.clone(), collapsed.schemas[id].clone());
    }

    println!("\n=== Corpus preparation ===");
    let ev = |pairs: &[(&str, &str)]| -> ArgumentValueMap {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), vec![v.to_string()]))
            .collect()
    };
    let mut samples: Vec<Sample> = vec![
        Sample {
            sample_id: "s1".into(),
            query: "An attack on the depot.".into(),
            language: Language::En,
            source_dataset: "demo".into(),
            split: Split::Unassigned,
            gold: vec![GoldEntry {
                schema_id: "src2-attacks".into(),
                events: vec![ev(&[("attacker", "raiders")])],
            }],
        },
        Sample {
            sample_id: "s2".into(),
            query: "Quake near the coast.".into(),
            language: Language::En,
            source_dataset: "demo".into(),
            split: Split::Unassigned,
            gold: vec![GoldEntry {
                schema_id: "src1-quake".into(),
                events: vec![ev(&[("place", "Lima"), ("time", "noon")])],
            }],
        },
    ];
    // A sample exceeding the 15-label cap gets filtered out.
    samples.push(Sample {
        sample_id: "s3-heavy".into(),
        query: "Sixteen attacks.".into(),
        language: Language::En,
        source_dataset: "demo".into(),
        split: Split::Unassigned,
        gold: vec![GoldEntry {
            schema_id: "src1-attack".into(),
            events: (0..16).map(|i| ev(&[("attacker", &format!("a{i}"))])).collect(),
        }],
    });

    let filtered = filter_corpus(&samples, &kept, &log);
    println!("filter_corpus: {} -> {} samples", samples.len(), filtered.len());
    let split = split_corpus(&filtered, 17);
    let final_samples = filter_label_count(&split, 15);
    println!("filter_label_count(15): {} -> {}", split.len(), final_samples.len());
    for s in &final_samples {
        println!(
            "  {} split={:?} gold={:?}",
            s.sample_id,
            s.split,
            s.gold_schema_ids()
        );
    }
    Ok(())
}
