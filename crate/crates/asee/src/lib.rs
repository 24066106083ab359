//! Schema-retrieval-augmented event extraction.
//!
//! This crate implements a full pipeline for extracting structured events
//! from free text when the right event schema is not known up front:
//!
//! 1. **Schema pool construction** ([`schema`], [`paraphrase`]) — load raw
//!    event schemas, enrich them with generated argument descriptions, and
//!    persist the pool as JSONL.
//! 2. **Consolidation** ([`consolidate`]) — deduplicate near-identical
//!    schemas (name/argument similarity, numeric-variant collapsing, a
//!    greedy maximum-independent-set pass over an embedding similarity
//!    graph) and prepare corpora (redirects, splits, label-count filters).
//! 3. **Retrieval** ([`retrieval`]) — rank schemas against a query with
//!    BM25 over schema documents, dense cosine search over embeddings, or
//!    either followed by a second-stage reranker.
//! 4. **Extraction** ([`extraction`]) — assemble prompts from a query plus
//!    retrieved schemas, call a text-generation backend, and parse/validate
//!    the structured reply against the schema declarations.
//! 5. **Evaluation** ([`eval`]) — Recall@K, argument-level extraction F1,
//!    and an end-to-end F1 that only credits extraction on schemas the
//!    retriever actually returned.
//!
//! All generation and embedding calls go through the [`gateway`] module,
//! which also provides deterministic offline mock backends so the entire
//! pipeline runs (and is tested) without network access.
//!
//! The `asee` binary exposes the pipeline as subcommands (`build-pool`,
//! `consolidate`, `retrieve`, `extract`, `evaluate`, `export-sft`) driven
//! by a single JSON config; see [`config`] and [`pipeline`]. Runnable
//! walkthroughs of each capability live under `examples/`.

pub mod config;
pub mod consolidate;
pub mod corpus;
pub mod eval;
pub mod extraction;
pub mod gateway;
pub mod paraphrase;
pub mod pipeline;
pub mod reply;
pub mod retrieval;
pub mod schema;
pub mod stablehash;
pub mod tokenize;
