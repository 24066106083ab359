//! Shared fixture builders for integration tests.
#![allow(dead_code)]

use asee::corpus::{ArgumentValueMap, GoldEntry, Sample, Split};
use asee::schema::{Argument, Language, Schema, SchemaPool};
use std::path::Path;
use std::process::Output;

pub fn schema(id: &str, name: &str, args: &[&str]) -> Schema {
    Schema {
        schema_id: id.to_string(),
        name: name.to_string(),
        description: String::new(),
        language: Language::En,
        source_dataset: "fixture".to_string(),
        arguments: args.iter().map(|a| Argument::new(*a)).collect(),
    }
}

pub fn pool_of(schemas: Vec<Schema>) -> SchemaPool {
    let mut pool = SchemaPool::new("fixture");
    for s in schemas {
        pool.insert_schema(s).unwrap();
    }
    pool
}

pub fn event(pairs: &[(&str, &[&str])]) -> ArgumentValueMap {
    pairs
        .iter()
        .map(|(k, vals)| (k.to_string(), vals.iter().map(|v| v.to_string()).collect()))
        .collect()
}

pub fn sample(id: &str, query: &str, gold: Vec<(&str, Vec<ArgumentValueMap>)>) -> Sample {
    Sample {
        sample_id: id.to_string(),
        query: query.to_string(),
        language: Language::En,
        source_dataset: "fixture".to_string(),
        split: Split::Unassigned,
        gold: gold
            .into_iter()
            .map(|(schema_id, events)| GoldEntry {
                schema_id: schema_id.to_string(),
                events,
            })
            .collect(),
    }
}

/// Synthetic identity-run pool: schema `i` owns the topic tokens
/// `t{i}a t{i}b t{i}c`; its name carries the first, its arguments the
/// other two, so both sparse and dense retrieval see a clear signal.
pub fn identity_pool(n: usize) -> Vec<Schema> {
    (0..n)
        .map(|i| {
            schema(
                &format!("ev{i:02}"),
                &format!("T{i}a Happening"),
                &[&format!("t{i}b"), &format!("t{i}c")],
            )
        })
        .collect()
}

/// Samples over the identity pool. Most queries spell out every topic
/// token of their gold schemas; every third sample also carries a gold
/// schema whose tokens are absent from the query, so retrieval recall
/// stays strictly below 1 and the end-to-end identity is non-vacuous.
pub fn identity_samples(n_samples: usize, n_schemas: usize) -> Vec<Sample> {
    (0..n_samples)
        .map(|s| {
            let first = s % n_schemas;
            let second = (s * 7 + 3) % n_schemas;
            let mut gold_ids = vec![first];
            if second != first {
                gold_ids.push(second);
            }
            // The ordinal keeps queries (and so extraction prompts) unique
            // even when two samples share a gold set.
            let mut query = format!("Report {s}:");
            for &g in &gold_ids {
                query.push_str(&format!(" t{g}a t{g}b t{g}c"));
            }
            let mut gold: Vec<(String, Vec<ArgumentValueMap>)> = gold_ids
                .iter()
                .map(|&g| {
                    (
                        format!("ev{g:02}"),
                        vec![event(&[
                            (format!("t{g}b").as_str(), &["value one"]),
                            (format!("t{g}c").as_str(), &["value two", "value three"]),
                        ])],
                    )
                })
                .collect();
            // Hidden gold: tokens never appear in the query.
            if s % 3 == 0 {
                let hidden = (s * 11 + 5) % n_schemas;
                if !gold_ids.contains(&hidden) {
                    gold.push((
                        format!("ev{hidden:02}"),
                        vec![event(&[(format!("t{hidden}b").as_str(), &["ghost"])])],
                    ));
                }
            }
            let gold_refs: Vec<(&str, Vec<ArgumentValueMap>)> = gold
                .iter()
                .map(|(id, events)| (id.as_str(), events.clone()))
                .collect();
            sample(&format!("q{s:03}"), &query, gold_refs)
        })
        .collect()
}

/// Runs the asee binary with the given arguments and env vars.
pub fn run_asee(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_asee"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("asee binary runs")
}

pub fn write_json(path: &Path, value: &serde_json::Value) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

pub fn read_to_string(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}
