//! Pool deduplication and corpus preparation.
//!
//! A merged multi-dataset pool carries near-duplicate schemas: plural or
//! tense variants of the same event name, argument lists that differ only
//! in numbered suffixes, and semantically identical schemas under
//! different names. Consolidation runs in stages:
//!
//! 1. [`heuristic_merge`] unions schemas whose names and argument sets
//!    exceed a character-similarity threshold, recording id redirects.
//! 2. [`collapse_numeric_variants`] folds argument families like
//!    `place, place1, place2` into the single base argument.
//! 3. [`build_similarity_graph`] + [`greedy_max_independent_set`] keep a
//!    maximal subset of mutually dissimilar schemas by embedding cosine.
//! 4. [`filter_corpus`], [`split_corpus`], [`filter_label_count`] align
//!    the sample corpus with the surviving pool.

use crate::corpus::{ArgumentValueMap, Sample, Split};
use crate::gateway::{cosine_similarity, Embedder, GatewayError};
use crate::schema::{DocumentMode, Schema, SchemaPool};
use crate::stablehash::seeded_hash;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

/// Name/argument similarity threshold for heuristic merging.
pub const DEFAULT_NAME_THRESHOLD: f64 = 0.8;
/// Embedding cosine threshold above which two schemas are "the same".
pub const DEFAULT_COSINE_THRESHOLD: f64 = 0.85;
/// Samples with more gold event labels than this are dropped.
pub const DEFAULT_MAX_LABELS: usize = 15;

#[derive(Debug, Error)]
pub enum ConsolidateError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
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

/// Character-level similarity in [0, 1]: normalized Levenshtein distance
/// over Unicode scalar values, after case folding and whitespace
/// collapsing. Two empty strings are fully similar.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    let a = fold(a);
    let b = fold(b);
    let max_len = a.len().max(b.len());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / max_len as f64
}

fn fold(s: &str) -> Vec<char> {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .chars()
        .flat_map(|c| c.to_lowercase())
        .collect()
}

/// Two-row dynamic-programming edit distance.
fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            curr[j + 1] = (prev[j + 1] + 1).min(curr[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// One merge event: `merged` was redirected into `into`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub merged: String,
    pub into: String,
    pub name_sim: f64,
}

/// Redirect log produced by merging; resolves ids transitively.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeLog {
    pub records: Vec<MergeRecord>,
}

impl MergeLog {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Follows redirect chains to the final surviving id.
    pub fn resolve<'a>(&'a self, id: &'a str) -> &'a str {
        let map: BTreeMap<&str, &str> = self
            .records
            .iter()
            .map(|r| (r.merged.as_str(), r.into.as_str()))
            .collect();
        let mut current = id;
        let mut hops = 0;
        while let Some(next) = map.get(current) {
            current = next;
            hops += 1;
            if hops > self.records.len() {
                break; // defensive: a cycle would be a construction bug
            }
        }
        current
    }

    pub fn save(&self, path: &Path) -> Result<(), ConsolidateError> {
        let display = path.display().to_string();
        let io_err = |source| ConsolidateError::Io {
            path: display.clone(),
            source,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        let io_err = |source| ConsolidateError::Io {
            path: display.clone(),
            source,
        };
        for record in &self.records {
            serde_json::to_writer(&mut out, record).map_err(|e| ConsolidateError::Parse {
                path: display.clone(),
                line: 0,
                message: e.to_string(),
            })?;
            out.write_all(b"\n").map_err(io_err)?;
        }
        out.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConsolidateError> {
        let display = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|source| ConsolidateError::Io {
            path: display.clone(),
            source,
        })?;
        let mut records = Vec::new();
        for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| ConsolidateError::Io {
                path: display.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| ConsolidateError::Parse {
                path: display.clone(),
                line: idx + 1,
                message: e.to_string(),
            })?);
        }
        Ok(MergeLog { records })
    }
}

/// Mean over the candidate's arguments of the best name match among the
/// survivor's arguments.
fn argument_set_similarity(candidate: &Schema, survivor: &Schema) -> f64 {
    if candidate.arguments.is_empty() {
        return 1.0;
    }
    let total: f64 = candidate
        .arguments
        .iter()
        .map(|a| {
            survivor
                .arguments
                .iter()
                .map(|b| name_similarity(&a.name, &b.name))
                .fold(0.0f64, f64::max)
        })
        .sum();
    total / candidate.arguments.len() as f64
}

/// Survivor keeps the richer structure: more arguments wins, ties go to
/// the lexicographically smaller schema_id.
fn pick_survivor<'a>(a: &'a Schema, b: &'a Schema) -> (&'a Schema, &'a Schema) {
    if a.arguments.len() > b.arguments.len()
        || (a.arguments.len() == b.arguments.len() && a.schema_id < b.schema_id)
    {
        (a, b)
    } else {
        (b, a)
    }
}

/// Greedily unions schemas whose names and arguments exceed the
/// similarity threshold. Samples are untouched here; redirects are applied
/// later by [`filter_corpus`]. Runs to a fixpoint, so applying it twice
/// equals applying it once.
pub fn heuristic_merge(pool: &SchemaPool, name_threshold: f64) -> (SchemaPool, MergeLog) {
    let mut schemas: Vec<Schema> = pool.schemas.values().cloned().collect();
    let mut log = MergeLog::default();

    'outer: loop {
        for i in 0..schemas.len() {
            for j in (i + 1)..schemas.len() {
                let name_sim = name_similarity(&schemas[i].name, &schemas[j].name);
                if name_sim <= name_threshold {
                    continue;
                }
                let (survivor, merged) = pick_survivor(&schemas[i], &schemas[j]);
                if argument_set_similarity(merged, survivor) <= name_threshold {
                    continue;
                }
                log.records.push(MergeRecord {
                    merged: merged.schema_id.clone(),
                    into: survivor.schema_id.clone(),
                    name_sim,
                });
                let merged_id = merged.schema_id.clone();
                schemas.retain(|s| s.schema_id != merged_id);
                continue 'outer;
            }
        }
        break;
    }

    let mut out = SchemaPool::new(pool.pool_id.clone());
    for schema in schemas {
        if let Some(paraphrase) = pool.paraphrased.get(&schema.schema_id) {
            out.paraphrased
                .insert(schema.schema_id.clone(), paraphrase.clone());
        }
        out.schemas.insert(schema.schema_id.clone(), schema);
    }
    (out, log)
}

fn split_digit_suffix(name: &str) -> (&str, &str) {
    let base_end = name
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_digit())
        .last()
        .map(|(i, _)| i)
        .unwrap_or(name.len());
    (&name[..base_end], &name[base_end..])
}

/// Rename plan for numbered argument variants: every member of a family
/// with at least two members (e.g. `place, place1, place2`, or `a1, a2`)
/// maps to the bare base name. Singleton digit-suffixed names stay put.
pub fn numeric_variant_plan(schema: &Schema) -> BTreeMap<String, String> {
    let mut families: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for arg in &schema.arguments {
        let (base, _suffix) = split_digit_suffix(&arg.name);
        if !base.is_empty() {
            families.entry(base).or_default().push(&arg.name);
        }
    }
    let mut plan = BTreeMap::new();
    for (base, members) in families {
        if members.len() < 2 {
            continue;
        }
        for member in members {
            if member != base {
                plan.insert(member.to_string(), base.to_string());
            }
        }
    }
    plan
}

/// Collapses numbered argument variants into their base argument,
/// preserving first-occurrence order. Idempotent.
pub fn collapse_numeric_variants(schema: &Schema) -> Schema {
    let plan = numeric_variant_plan(schema);
    if plan.is_empty() {
        return schema.clone();
    }
    let mut seen = BTreeSet::new();
    let mut arguments = Vec::new();
    for arg in &schema.arguments {
        let target = plan.get(&arg.name).cloned().unwrap_or_else(|| arg.name.clone());
        if seen.insert(target.clone()) {
            let mut collapsed = arg.clone();
            collapsed.name = target;
            arguments.push(collapsed);
        }
    }
    Schema {
        arguments,
        ..schema.clone()
    }
}

/// Applies a variant-collapse plan to gold events: renamed keys merge into
/// the base key with value lists concatenated in occurrence order.
pub fn collapse_event_arguments(
    event: &ArgumentValueMap,
    plan: &BTreeMap<String, String>,
) -> ArgumentValueMap {
    let mut out = ArgumentValueMap::default();
    for (key, values) in &event.values {
        let target = plan.get(key).unwrap_or(key);
        out.values
            .entry(target.clone())
            .or_default()
            .extend(values.iter().cloned());
    }
    out
}

/// Undirected schema-similarity graph; nodes are schema ids, edges join
/// pairs whose document embeddings exceed the cosine threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityGraph {
    pub nodes: Vec<String>,
    pub adjacency: BTreeMap<String, BTreeSet<String>>,
    pub threshold: f64,
}

impl SimilarityGraph {
    pub fn edgeless(nodes: Vec<String>, threshold: f64) -> Self {
        let adjacency = nodes.iter().map(|n| (n.clone(), BTreeSet::new())).collect();
        SimilarityGraph {
            nodes,
            adjacency,
            threshold,
        }
    }

    pub fn add_edge(&mut self, a: &str, b: &str) {
        if a == b {
            return;
        }
        self.adjacency
            .get_mut(a)
            .expect("node exists")
            .insert(b.to_string());
        self.adjacency
            .get_mut(b)
            .expect("node exists")
            .insert(a.to_string());
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }
}

/// Embeds every schema document (paraphrased revision when available,
/// raw otherwise) and connects pairs with cosine strictly above the
/// threshold.
pub fn build_similarity_graph(
    pool: &SchemaPool,
    embedder: &Embedder,
    threshold: f64,
) -> Result<SimilarityGraph, ConsolidateError> {
    let ids: Vec<String> = pool.schemas.keys().cloned().collect();
    let mut graph = SimilarityGraph::edgeless(ids.clone(), threshold);
    if ids.is_empty() {
        return Ok(graph);
    }
    let documents: Vec<String> = ids
        .iter()
        .map(|id| {
            let mode = if pool.paraphrased.contains_key(id) {
                DocumentMode::Paraphrased
            } else {
                DocumentMode::Raw
            };
            pool.document_text(id, mode).expect("id from pool")
        })
        .collect();
    let vectors = embedder.embed(&documents)?;
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            if cosine_similarity(&vectors[i], &vectors[j])? > threshold {
                graph.add_edge(&ids[i], &ids[j]);
            }
        }
    }
    Ok(graph)
}

/// Greedy maximum independent set: repeatedly take the remaining node of
/// minimum current degree (ties broken by ascending schema_id), drop its
/// neighbors, and decrement the degrees of their remaining neighbors.
pub fn greedy_max_independent_set(graph: &SimilarityGraph) -> BTreeSet<String> {
    let mut remaining: BTreeSet<&str> = graph.nodes.iter().map(String::as_str).collect();
    let mut degrees: BTreeMap<&str, usize> = graph
        .nodes
        .iter()
        .map(|n| {
            (
                n.as_str(),
                graph.adjacency.get(n).map(BTreeSet::len).unwrap_or(0),
            )
        })
        .collect();
    let empty = BTreeSet::new();
    let neighbors = |n: &str| graph.adjacency.get(n).unwrap_or(&empty);

    let mut independent = BTreeSet::new();
    while !remaining.is_empty() {
        // argmin by (degree, id); BTreeSet iteration makes the id ascending.
        let node = *remaining
            .iter()
            .min_by_key(|n| (degrees[**n], **n))
            .expect("remaining non-empty");
        independent.insert(node.to_string());
        remaining.remove(node);
        degrees.remove(node);
        for dropped in neighbors(node) {
            if !remaining.remove(dropped.as_str()) {
                continue;
            }
            degrees.remove(dropped.as_str());
            for second in neighbors(dropped) {
                if let Some(d) = degrees.get_mut(second.as_str()) {
                    *d = d.saturating_sub(1);
                }
            }
        }
    }
    independent
}

/// Applies merge redirects to gold schema ids, keeps only entries whose
/// final id survived consolidation, and drops samples left with no gold.
/// Entries redirected onto the same id are unified, events concatenated
/// in their original order. Sample order is preserved.
pub fn filter_corpus(
    samples: &[Sample],
    kept_ids: &BTreeSet<String>,
    redirects: &MergeLog,
) -> Vec<Sample> {
    samples
        .iter()
        .filter_map(|sample| {
            let mut by_id: Vec<(String, Vec<ArgumentValueMap>)> = Vec::new();
            for gold in &sample.gold {
                let final_id = redirects.resolve(&gold.schema_id);
                if !kept_ids.contains(final_id) {
                    continue;
                }
                match by_id.iter_mut().find(|(id, _)| id == final_id) {
                    Some((_, events)) => events.extend(gold.events.iter().cloned()),
                    None => by_id.push((final_id.to_string(), gold.events.clone())),
                }
            }
            if by_id.is_empty() {
                return None;
            }
            let mut filtered = sample.clone();
            filtered.gold = by_id
                .into_iter()
                .map(|(schema_id, events)| crate::corpus::GoldEntry { schema_id, events })
                .collect();
            Some(filtered)
        })
        .collect()
}

/// Assigns 80/10/10 train/dev/test splits to unassigned samples by seeded
/// hash of the sample id; samples with a pre-existing split pass through
/// untouched. Deterministic for identical (samples, seed).
pub fn split_corpus(samples: &[Sample], seed: u64) -> Vec<Sample> {
    samples
        .iter()
        .map(|sample| {
            if sample.split != Split::Unassigned {
                return sample.clone();
            }
            let bucket = seeded_hash(&sample.sample_id, seed) % 100;
            let mut assigned = sample.clone();
            assigned.split = if bucket < 80 {
                Split::Train
            } else if bucket < 90 {
                Split::Dev
            } else {
                Split::Test
            };
            assigned
        })
        .collect()
}

/// Drops samples whose total gold event count exceeds `max_labels`
/// (boundary inclusive: exactly `max_labels` is kept).
pub fn filter_label_count(samples: &[Sample], max_labels: usize) -> Vec<Sample> {
    assert!(max_labels >= 1);
    samples
        .iter()
        .filter(|s| s.total_event_count() <= max_labels)
        .cloned()
        .collect()
}
