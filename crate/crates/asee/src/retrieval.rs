//! Schema retrieval: rank the pool against a query.
//!
//! An immutable [`RetrievalIndex`] is built once per (pool, document mode)
//! and then shared freely across threads. Four strategies are supported:
//! exact BM25 over an inverted index, dense cosine search over document
//! embeddings, and either one followed by a second-stage reranker over the
//! first-stage pool. Ties always break by ascending schema_id so results
//! are reproducible regardless of insertion order.

use crate::gateway::{cosine_similarity, Embedder, EmbeddingVector, GatewayError, Reranker};
use crate::schema::{DocumentMode, SchemaPool};
use crate::tokenize::tokenize;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_BM25_K1: f64 = 1.2;
pub const DEFAULT_BM25_B: f64 = 0.75;
/// First-stage pool handed to a reranker.
pub const DEFAULT_RERANK_POOL_SIZE: usize = 100;
/// Queries longer than this many tokens are truncated (document-level
/// queries must stay indexable).
pub const DEFAULT_QUERY_TOKEN_CAP: usize = 8192;

/// Version header of index snapshot files.
pub const INDEX_SNAPSHOT_HEADER: &str = "ASEE-IDX1";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("document ordinal {0} out of range")]
    OrdinalOutOfRange(usize),
    #[error("index contains no documents")]
    EmptyIndex,
    #[error("strategy {0} requires an embedding backend")]
    EmbedderRequired(&'static str),
    #[error("strategy {0} requires a rerank backend")]
    RerankerRequired(&'static str),
    #[error("index has no dense vectors; rebuild with an embedding backend")]
    DenseUnavailable,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{path}: {message}")]
    Snapshot { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Bm25,
    Dense,
    Bm25ThenRerank,
    DenseThenRerank,
}

impl Strategy {
    pub fn needs_dense(self) -> bool {
        matches!(self, Strategy::Dense | Strategy::DenseThenRerank)
    }

    pub fn needs_reranker(self) -> bool {
        matches!(self, Strategy::Bm25ThenRerank | Strategy::DenseThenRerank)
    }
}

/// One posting: (document ordinal, term frequency).
type Posting = (u32, u32);

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Bm25Data {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
}

/// Immutable searchable form of a schema pool.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalIndex {
    pub pool_ref: String,
    pub mode: DocumentMode,
    bm25: Bm25Data,
    dense: Option<Vec<EmbeddingVector>>,
    /// ordinal -> schema_id, ascending by schema_id.
    id_map: Vec<String>,
    /// Document texts, kept for reranking.
    documents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub schema_id: String,
    pub score: f64,
}

/// Top-k retrieval result; scores are non-increasing and ids distinct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
    pub k: usize,
}

impl RankedList {
    pub fn schema_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.schema_id.as_str()).collect()
    }

    pub fn contains(&self, schema_id: &str) -> bool {
        self.entries.iter().any(|e| e.schema_id == schema_id)
    }

    /// Ids of the first `k` entries.
    pub fn top(&self, k: usize) -> Vec<&str> {
        self.entries
            .iter()
            .take(k)
            .map(|e| e.schema_id.as_str())
            .collect()
    }
}

/// Builds the BM25 postings (and optionally dense vectors) over the pool's
/// schema documents in the given mode. Documents are ordered by ascending
/// schema_id, so the index is independent of pool insertion order.
pub fn build_index(
    pool: &SchemaPool,
    mode: DocumentMode,
    embedder: Option<&Embedder>,
) -> Result<RetrievalIndex, RetrievalError> {
    let id_map: Vec<String> = pool.schemas.keys().cloned().collect();
    let documents: Vec<String> = id_map
        .iter()
        .map(|id| pool.document_text(id, mode).expect("id is from this pool"))
        .collect();

    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(documents.len());
    for (ordinal, doc) in documents.iter().enumerate() {
        let tokens = tokenize(doc);
        doc_lengths.push(tokens.len() as u32);
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for token in tokens {
            *counts.entry(token).or_insert(0) += 1;
        }
        for (term, tf) in counts {
            postings.entry(term).or_default().push((ordinal as u32, tf));
        }
    }
    let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
    let avg_doc_length = if doc_lengths.is_empty() {
        0.0
    } else {
        total as f64 / doc_lengths.len() as f64
    };

    let dense = match embedder {
        Some(embedder) if !documents.is_empty() => Some(embedder.embed(&documents)?),
        _ => None,
    };

    Ok(RetrievalIndex {
        pool_ref: pool.pool_id.clone(),
        mode,
        bm25: Bm25Data {
            postings,
            doc_lengths,
            avg_doc_length,
        },
        dense,
        id_map,
        documents,
    })
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.id_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_map.is_empty()
    }

    pub fn has_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn schema_id(&self, ordinal: usize) -> Option<&str> {
        self.id_map.get(ordinal).map(String::as_str)
    }

    pub fn document(&self, ordinal: usize) -> Option<&str> {
        self.documents.get(ordinal).map(String::as_str)
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.id_map.len() as f64;
        let df = self
            .bm25
            .postings
            .get(term)
            .map(|p| p.len())
            .unwrap_or(0) as f64;
        ((n + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_frequency(&self, term: &str, ordinal: u32) -> u32 {
        self.bm25
            .postings
            .get(term)
            .and_then(|postings| {
                postings
                    .binary_search_by_key(&ordinal, |&(doc, _)| doc)
                    .ok()
                    .map(|idx| postings[idx].1)
            })
            .unwrap_or(0)
    }
}

/// BM25 score of one document against the query tokens:
/// sum over query tokens of IDF(t) * tf / (tf + k1 * (1 - b + b * dl/avgdl)),
/// with IDF(t) = ln((N + 0.5)/(df + 0.5) + 1). Repeated query tokens
/// contribute once per occurrence. Zero when nothing overlaps.
pub fn bm25_score(
    index: &RetrievalIndex,
    query_tokens: &[String],
    doc_ordinal: usize,
    k1: f64,
    b: f64,
) -> Result<f64, RetrievalError> {
    if doc_ordinal >= index.id_map.len() {
        return Err(RetrievalError::OrdinalOutOfRange(doc_ordinal));
    }
    let dl = f64::from(index.bm25.doc_lengths[doc_ordinal]);
    let avgdl = index.bm25.avg_doc_length;
    let mut score = 0.0;
    for term in query_tokens {
        let tf = f64::from(index.term_frequency(term, doc_ordinal as u32));
        if tf == 0.0 {
            continue;
        }
        let norm = k1 * (1.0 - b + b * dl / avgdl);
        score += index.idf(term) * tf / (tf + norm);
    }
    Ok(score)
}

/// Search-time knobs; `Default` gives BM25 with the standard parameters.
#[derive(Debug, Clone)]
pub struct SearchOptions {
    pub strategy: Strategy,
    pub k: usize,
    pub k1: f64,
    pub b: f64,
    pub rerank_pool_size: usize,
    pub query_token_cap: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            strategy: Strategy::Bm25,
            k: 10,
            k1: DEFAULT_BM25_K1,
            b: DEFAULT_BM25_B,
            rerank_pool_size: DEFAULT_RERANK_POOL_SIZE,
            query_token_cap: DEFAULT_QUERY_TOKEN_CAP,
        }
    }
}

impl SearchOptions {
    pub fn new(strategy: Strategy, k: usize) -> Self {
        SearchOptions {
            strategy,
            k,
            ..SearchOptions::default()
        }
    }
}

/// Sorts (ordinal, score) pairs by descending score, ascending schema_id,
/// and materializes the top `k`.
fn take_top_k(index: &RetrievalIndex, mut scored: Vec<(usize, f64)>, k: usize) -> RankedList {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| index.id_map[a.0].cmp(&index.id_map[b.0]))
    });
    scored.truncate(k);
    RankedList {
        entries: scored
            .into_iter()
            .map(|(ordinal, score)| RankedEntry {
                schema_id: index.id_map[ordinal].clone(),
                score,
            })
            .collect(),
        k,
    }
}

fn bm25_rank(
    index: &RetrievalIndex,
    query_tokens: &[String],
    k: usize,
    k1: f64,
    b: f64,
) -> Result<RankedList, RetrievalError> {
    let mut scores = vec![0.0f64; index.id_map.len()];
    // Walk postings once per query token occurrence; equivalent to scoring
    // every document with bm25_score.
    for term in query_tokens {
        let idf = index.idf(term);
        if let Some(postings) = index.bm25.postings.get(term) {
            for &(ordinal, tf) in postings {
                let dl = f64::from(index.bm25.doc_lengths[ordinal as usize]);
                let tf = f64::from(tf);
                let norm = k1 * (1.0 - b + b * dl / index.bm25.avg_doc_length);
                scores[ordinal as usize] += idf * tf / (tf + norm);
            }
        }
    }
    Ok(take_top_k(
        index,
        scores.into_iter().enumerate().collect(),
        k,
    ))
}

fn dense_rank(
    index: &RetrievalIndex,
    query: &str,
    k: usize,
    embedder: &Embedder,
) -> Result<RankedList, RetrievalError> {
    let vectors = index.dense.as_ref().ok_or(RetrievalError::DenseUnavailable)?;
    let query_vector = &embedder.embed(&[query.to_string()])?[0];
    let mut scored = Vec::with_capacity(vectors.len());
    for (ordinal, doc_vector) in vectors.iter().enumerate() {
        scored.push((ordinal, cosine_similarity(query_vector, doc_vector)?));
    }
    Ok(take_top_k(index, scored, k))
}

fn rerank(
    index: &RetrievalIndex,
    first_stage: RankedList,
    query: &str,
    k: usize,
    reranker: &Reranker,
) -> Result<RankedList, RetrievalError> {
    let ordinals: Vec<usize> = first_stage
        .entries
        .iter()
        .map(|e| {
            index
                .id_map
                .binary_search(&e.schema_id)
                .expect("first stage ids come from this index")
        })
        .collect();
    let texts: Vec<String> = ordinals
        .iter()
        .map(|&o| index.documents[o].clone())
        .collect();
    let scores = reranker.score(query, &texts)?;
    Ok(take_top_k(
        index,
        ordinals.into_iter().zip(scores).collect(),
        k,
    ))
}

/// Ranks the pool against `query` and returns the top `k`.
///
/// Rerank strategies score the first-stage top `rerank_pool_size` with the
/// reranker and cut to `k`; set `rerank_pool_size >= pool size` to rerank
/// the whole pool.
pub fn search(
    index: &RetrievalIndex,
    query: &str,
    options: &SearchOptions,
    embedder: Option<&Embedder>,
    reranker: Option<&Reranker>,
) -> Result<RankedList, RetrievalError> {
    if index.is_empty() {
        return Err(RetrievalError::EmptyIndex);
    }
    assert!(options.k >= 1, "k must be >= 1");
    let mut query_tokens = tokenize(query);
    query_tokens.truncate(options.query_token_cap);

    let first_stage_k = if options.strategy.needs_reranker() {
        options.rerank_pool_size
    } else {
        options.k
    };

    let first_stage = match options.strategy {
        Strategy::Bm25 | Strategy::Bm25ThenRerank => {
            bm25_rank(index, &query_tokens, first_stage_k, options.k1, options.b)?
        }
        Strategy::Dense | Strategy::DenseThenRerank => {
            let embedder = embedder.ok_or(RetrievalError::EmbedderRequired("dense"))?;
            dense_rank(index, query, first_stage_k, embedder)?
        }
    };

    if !options.strategy.needs_reranker() {
        return Ok(first_stage);
    }
    let reranker = reranker.ok_or(RetrievalError::RerankerRequired("rerank"))?;
    rerank(index, first_stage, query, options.k, reranker)
}

/// Saves the index as a versioned snapshot: a header line followed by the
/// JSON body. Round-tripping yields bit-identical search results.
pub fn save_index(index: &RetrievalIndex, path: &Path) -> Result<(), RetrievalError> {
    let display = path.display().to_string();
    let body = serde_json::to_string(index).map_err(|e| RetrievalError::Snapshot {
        path: display.clone(),
        message: e.to_string(),
    })?;
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|source| {
            RetrievalError::Io {
                path: display.clone(),
                source,
            }
        })?);
    out.write_all(INDEX_SNAPSHOT_HEADER.as_bytes())
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.write_all(body.as_bytes()))
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.flush())
        .map_err(|source| RetrievalError::Io {
            path: display,
            source,
        })
}

pub fn load_index(path: &Path) -> Result<RetrievalIndex, RetrievalError> {
    let display = path.display().to_string();
    let content = std::fs::read_to_string(path).map_err(|source| RetrievalError::Io {
        path: display.clone(),
        source,
    })?;
    let (header, body) = content
        .split_once('\n')
        .ok_or_else(|| RetrievalError::Snapshot {
            path: display.clone(),
            message: "missing header line".to_string(),
        })?;
    if header != INDEX_SNAPSHOT_HEADER {
        return Err(RetrievalError::Snapshot {
            path: display,
            message: format!("unsupported snapshot version {header:?}"),
        });
    }
    serde_json::from_str(body).map_err(|e| RetrievalError::Snapshot {
        path: display,
        message: e.to_string(),
    })
}

/// One line of a retrieval run output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankingRecord {
    pub sample_id: String,
    pub topk: Vec<RankedEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
}

pub fn save_rankings(records: &[RankingRecord], path: &Path) -> Result<(), RetrievalError> {
    let display = path.display().to_string();
    let io_err = |source| RetrievalError::Io {
        path: display.clone(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    let io_err = |source| RetrievalError::Io {
        path: display.clone(),
        source,
    };
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|e| RetrievalError::Snapshot {
            path: display.clone(),
            message: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

pub fn load_rankings(path: &Path) -> Result<Vec<RankingRecord>, RetrievalError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| RetrievalError::Io {
        path: display.clone(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| RetrievalError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line).map_err(|e| RetrievalError::Snapshot {
                path: display.clone(),
                message: format!("line {}: {e}", idx + 1),
            })?,
        );
    }
    Ok(records)
}
