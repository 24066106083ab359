//! Subcommand orchestration: each function here is one CLI command.
//!
//! Commands read inputs named in the config, never mutate them, and write
//! their own outputs with the config fingerprint embedded in every record.
//! Rerunning a command with an identical config and mock backends yields
//! byte-identical output files.
//!
//! Exit-code convention (mapped by the binary): 0 success, 1 fatal,
//! 2 partial (the output was still written, some items degraded).

use crate::config::PipelineConfig;
use crate::consolidate::{
    build_similarity_graph, collapse_event_arguments, collapse_numeric_variants, filter_corpus,
    filter_label_count, greedy_max_independent_set, heuristic_merge, numeric_variant_plan,
    split_corpus,
};
use crate::corpus::{load_samples, save_samples, Sample, Split};
use crate::eval::{e2e_f1, emit_report, extraction_f1, recall_at_k, EvalReport, ReportFormat};
use crate::extraction::{
    export_sft, extract, load_results, save_results, ExtractionRecord, ExtractionResult,
    ParseStatus, DEFAULT_EXTRACTION_TEMPLATE,
};
use crate::gateway::{Embedder, Reranker, TextGenerator, DEFAULT_PROMPT_CAP_CHARS};
use crate::paraphrase::{build_pool, DEFAULT_PARAPHRASE_TEMPLATE};
use crate::retrieval::{
    build_index, load_index, load_rankings, save_index, save_rankings, search, RankedList,
    RankingRecord, RetrievalIndex, SearchOptions,
};
use crate::schema::{load_schemas, save_pool, SchemaPool};
use anyhow::{bail, Context};
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

/// Result of a successfully dispatched command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandOutcome {
    Success,
    /// Output written, but some items degraded (failed paraphrases,
    /// failed extractions).
    Partial,
}

impl CommandOutcome {
    pub fn exit_code(self) -> u8 {
        match self {
            CommandOutcome::Success => 0,
            CommandOutcome::Partial => 2,
        }
    }
}

fn read_template(path: &Option<PathBuf>, built_in: &str) -> anyhow::Result<String> {
    match path {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("template {}", path.display())),
        None => Ok(built_in.to_string()),
    }
}

/// Training corpus for demonstration selection: train-split samples, or
/// the whole file when no split has been assigned yet.
fn training_corpus(samples: Vec<Sample>) -> Vec<Sample> {
    let has_train = samples.iter().any(|s| s.split == Split::Train);
    if has_train {
        samples
            .into_iter()
            .filter(|s| s.split == Split::Train)
            .collect()
    } else {
        samples
    }
}

/// Builds the paraphrased schema pool (build-pool).
pub fn cmd_build_pool(config: &PipelineConfig, dry_run: bool) -> anyhow::Result<CommandOutcome> {
    let schemas_path = config.require_input("schemas", &config.paths.schemas)?;
    let pool_out = config.require_output("pool", &config.paths.pool)?;
    let generation = config
        .backends
        .generation
        .as_ref()
        .context("backends.generation is required by build-pool")?;
    let template = read_template(
        &config.extraction.paraphrase_template_path,
        DEFAULT_PARAPHRASE_TEMPLATE,
    )?;
    if dry_run {
        println!(
            "build-pool: would paraphrase schemas from {} into {}",
            schemas_path.display(),
            pool_out.display()
        );
        return Ok(CommandOutcome::Success);
    }

    let raw = load_schemas(&schemas_path)?;
    let corpus = match &config.paths.samples {
        Some(path) if path.exists() => training_corpus(load_samples(path)?),
        _ => Vec::new(),
    };
    let generator = TextGenerator::from_config(generation)?;
    let (pool, report) = build_pool(
        &raw,
        &corpus,
        &generator,
        config.extraction.k_demos,
        config.seed,
        &template,
    )?;
    save_pool(&pool, &pool_out)?;
    println!(
        "build-pool: {} schemas, {} paraphrased ({} fallbacks, {} failures) -> {}",
        pool.len(),
        pool.paraphrased.len(),
        report.fallbacks.len(),
        report.failures.len(),
        pool_out.display()
    );
    for (schema_id, error) in &report.failures {
        log::error!("paraphrase failure for {schema_id}: {error}");
    }
    if report.is_clean() {
        Ok(CommandOutcome::Success)
    } else {
        Ok(CommandOutcome::Partial)
    }
}

/// Deduplicates the pool and prepares the corpus (consolidate).
pub fn cmd_consolidate(config: &PipelineConfig, dry_run: bool) -> anyhow::Result<CommandOutcome> {
    // The input pool is the built pool when present, else raw schemas.
    let pool_in = if config.paths.pool.as_ref().is_some_and(|p| p.exists()) {
        config.require_input("pool", &config.paths.pool)?
    } else {
        config.require_input("schemas", &config.paths.schemas)?
    };
    let samples_path = config.require_input("samples", &config.paths.samples)?;
    let pool_out = config.require_output("consolidated_pool", &config.paths.consolidated_pool)?;
    let merge_log_out = config.require_output("merge_log", &config.paths.merge_log)?;
    let filtered_out =
        config.require_output("filtered_samples", &config.paths.filtered_samples)?;
    let embedding = config
        .backends
        .embedding
        .as_ref()
        .context("backends.embedding is required by consolidate")?;
    if dry_run {
        println!(
            "consolidate: would consolidate {} + {} into {}, {}, {}",
            pool_in.display(),
            samples_path.display(),
            pool_out.display(),
            merge_log_out.display(),
            filtered_out.display()
        );
        return Ok(CommandOutcome::Success);
    }

    let pool = load_schemas(&pool_in)?;
    let samples = load_samples(&samples_path)?;
    let initial_schemas = pool.len();
    let initial_samples = samples.len();

    let (merged, merge_log) = heuristic_merge(&pool, config.consolidation.name_threshold);

    // Collapse numbered argument variants in schemas and paraphrases, and
    // remember each schema's rename plan for the sample-side fix-up.
    let mut collapsed = SchemaPool::new(merged.pool_id.clone());
    let mut plans = BTreeMap::new();
    for (schema_id, schema) in &merged.schemas {
        let plan = numeric_variant_plan(schema);
        collapsed
            .schemas
            .insert(schema_id.clone(), collapse_numeric_variants(schema));
        if let Some(paraphrase) = merged.paraphrased.get(schema_id) {
            let mut paraphrase = paraphrase.clone();
            paraphrase.base = collapse_numeric_variants(&paraphrase.base);
            collapsed.paraphrased.insert(schema_id.clone(), paraphrase);
        }
        if !plan.is_empty() {
            plans.insert(schema_id.clone(), plan);
        }
    }

    let embedder = Embedder::from_config(embedding)?;
    let graph =
        build_similarity_graph(&collapsed, &embedder, config.consolidation.cosine_threshold)?;
    let kept = greedy_max_independent_set(&graph);
    let mut final_pool = SchemaPool::new(collapsed.pool_id.clone());
    for id in &kept {
        final_pool
            .schemas
            .insert(id.clone(), collapsed.schemas[id].clone());
        if let Some(p) = collapsed.paraphrased.get(id) {
            final_pool.paraphrased.insert(id.clone(), p.clone());
        }
    }

    let mut filtered = filter_corpus(&samples, &kept, &merge_log);
    for sample in &mut filtered {
        for gold in &mut sample.gold {
            if let Some(plan) = plans.get(&gold.schema_id) {
                gold.events = gold
                    .events
                    .iter()
                    .map(|e| collapse_event_arguments(e, plan))
                    .collect();
            }
        }
    }
    let split = split_corpus(&filtered, config.consolidation.split_seed);
    let final_samples = filter_label_count(&split, config.consolidation.max_labels);

    save_pool(&final_pool, &pool_out)?;
    merge_log.save(&merge_log_out)?;
    save_samples(&final_samples, &filtered_out)?;

    println!(
        "consolidate: schemas {initial_schemas} -> {} ({} merged, {} dropped by similarity graph); samples {initial_samples} -> {} ({} dropped by label filter)",
        final_pool.len(),
        merge_log.len(),
        collapsed.len() - final_pool.len(),
        final_samples.len(),
        split.len() - final_samples.len(),
    );
    Ok(CommandOutcome::Success)
}

fn build_or_load_index(
    config: &PipelineConfig,
    pool: &SchemaPool,
    embedder: Option<&Embedder>,
) -> anyhow::Result<RetrievalIndex> {
    let mode = config.retrieval.mode;
    if let Some(index_path) = &config.paths.index {
        if index_path.exists() {
            let index = load_index(index_path)?;
            let dense_ok = !config.retrieval.strategy.needs_dense() || index.has_dense();
            if index.mode == mode && index.pool_ref == pool.pool_id && dense_ok {
                log::info!("reusing index snapshot {}", index_path.display());
                return Ok(index);
            }
            log::info!(
                "index snapshot {} does not match config; rebuilding",
                index_path.display()
            );
        }
        let index = build_index(pool, mode, embedder)?;
        save_index(&index, index_path)?;
        return Ok(index);
    }
    Ok(build_index(pool, mode, embedder)?)
}

/// Ranks schemas for every sample and writes rankings JSONL (retrieve).
pub fn cmd_retrieve(config: &PipelineConfig, dry_run: bool) -> anyhow::Result<CommandOutcome> {
    let pool_path = config.require_input("pool", &config.paths.pool)?;
    let samples_path = config.require_input("samples", &config.paths.samples)?;
    let rankings_out = config.require_output("rankings", &config.paths.rankings)?;

    let needs_dense = config.retrieval.strategy.needs_dense();
    let embedder = match (&config.backends.embedding, needs_dense) {
        (Some(backend), _) => Some(Embedder::from_config(backend)?),
        (None, false) => None,
        (None, true) => bail!("strategy requires backends.embedding"),
    };
    let reranker = match (
        &config.backends.reranker,
        config.retrieval.strategy.needs_reranker(),
    ) {
        (Some(backend), _) => Some(Reranker::from_config(backend)?),
        (None, false) => None,
        (None, true) => bail!("strategy requires backends.reranker"),
    };
    if dry_run {
        println!(
            "retrieve: would rank {} against {} ({:?}, mode {:?}, k={}) into {}",
            samples_path.display(),
            pool_path.display(),
            config.retrieval.strategy,
            config.retrieval.mode,
            config.retrieval.k,
            rankings_out.display()
        );
        return Ok(CommandOutcome::Success);
    }

    let pool = load_schemas(&pool_path)?;
    let samples = load_samples(&samples_path)?;
    // Only build dense vectors when the strategy needs them; BM25 runs
    // stay offline-cheap.
    let dense_embedder = if needs_dense { embedder.as_ref() } else { None };
    let index = build_or_load_index(config, &pool, dense_embedder)?;

    let options = SearchOptions {
        strategy: config.retrieval.strategy,
        k: config.retrieval.k,
        k1: config.retrieval.k1,
        b: config.retrieval.b,
        rerank_pool_size: config.retrieval.rerank_pool_size,
        query_token_cap: config.retrieval.query_token_cap,
    };
    let fingerprint = config.fingerprint();
    let mut records = Vec::with_capacity(samples.len());
    for sample in &samples {
        let ranked = search(
            &index,
            &sample.query,
            &options,
            embedder.as_ref(),
            reranker.as_ref(),
        )?;
        records.push(RankingRecord {
            sample_id: sample.sample_id.clone(),
            topk: ranked.entries,
            config_fingerprint: Some(fingerprint.clone()),
        });
    }
    save_rankings(&records, &rankings_out)?;
    println!(
        "retrieve: ranked {} samples over {} schemas -> {}",
        records.len(),
        pool.len(),
        rankings_out.display()
    );
    Ok(CommandOutcome::Success)
}

/// Runs schema-aware extraction for every ranked sample (extract).
pub fn cmd_extract(config: &PipelineConfig, dry_run: bool) -> anyhow::Result<CommandOutcome> {
    let pool_path = config.require_input("pool", &config.paths.pool)?;
    let samples_path = config.require_input("samples", &config.paths.samples)?;
    let rankings_path = config.require_input("rankings", &config.paths.rankings)?;
    let results_out = config.require_output("results", &config.paths.results)?;
    let generation = config
        .backends
        .generation
        .as_ref()
        .context("backends.generation is required by extract")?;
    let template = read_template(&config.extraction.template_path, DEFAULT_EXTRACTION_TEMPLATE)?;
    if dry_run {
        println!(
            "extract: would extract {} x {} into {}",
            samples_path.display(),
            rankings_path.display(),
            results_out.display()
        );
        return Ok(CommandOutcome::Success);
    }

    let pool = load_schemas(&pool_path)?;
    let samples = load_samples(&samples_path)?;
    let rankings = load_rankings(&rankings_path)?;
    if rankings.is_empty() {
        bail!("rankings file {} is empty", rankings_path.display());
    }
    let ranked_by_id: BTreeMap<&str, &RankingRecord> = rankings
        .iter()
        .map(|r| (r.sample_id.as_str(), r))
        .collect();

    let generator = TextGenerator::from_config(generation)?;
    let fingerprint = config.fingerprint();
    let mut records = Vec::new();
    let mut failed = 0usize;
    for sample in &samples {
        let Some(ranking) = ranked_by_id.get(sample.sample_id.as_str()) else {
            continue;
        };
        let ranked = RankedList {
            entries: ranking.topk.clone(),
            k: config.retrieval.k,
        };
        let result = match extract(
            sample,
            &ranked,
            &pool,
            &generator,
            &template,
            config.extraction.batching,
        ) {
            Ok(result) => result,
            Err(e) => {
                log::error!("extraction failed for {}: {e}", sample.sample_id);
                ExtractionResult::failed(&sample.sample_id, generator.backend_id())
            }
        };
        if result.parse_status == ParseStatus::Failed {
            failed += 1;
        }
        let mut record = ExtractionRecord::from(result);
        record.config_fingerprint = Some(fingerprint.clone());
        records.push(record);
    }
    save_results(&records, &results_out)?;
    println!(
        "extract: {} samples extracted ({} failed) -> {}",
        records.len(),
        failed,
        results_out.display()
    );
    if failed > 0 {
        Ok(CommandOutcome::Partial)
    } else {
        Ok(CommandOutcome::Success)
    }
}

/// Computes requested metrics and writes reports (evaluate).
pub fn cmd_evaluate(config: &PipelineConfig, dry_run: bool) -> anyhow::Result<CommandOutcome> {
    let pool_path = config.require_input("pool", &config.paths.pool)?;
    let samples_path = config.require_input("samples", &config.paths.samples)?;
    if config.paths.report_json.is_none() && config.paths.report_markdown.is_none() {
        bail!("evaluate needs paths.report_json and/or paths.report_markdown");
    }
    if dry_run {
        println!("evaluate: would score {} and write reports", samples_path.display());
        return Ok(CommandOutcome::Success);
    }

    let pool = load_schemas(&pool_path)?;
    let samples: Vec<Sample> = load_samples(&samples_path)?
        .into_iter()
        .filter(|s| !s.gold.is_empty())
        .collect();
    if samples.is_empty() {
        bail!("no labeled samples to evaluate");
    }

    let rankings = match &config.paths.rankings {
        Some(path) if path.exists() => Some(load_rankings(path)?),
        _ => None,
    };
    let results = match &config.paths.results {
        Some(path) if path.exists() => Some(load_results(path)?),
        _ => None,
    };
    if rankings.is_none() && results.is_none() {
        bail!("evaluate needs paths.rankings and/or paths.results to exist");
    }

    let label = config.evaluation.label.clone().unwrap_or_else(|| {
        format!(
            "{:?}/{:?}",
            config.retrieval.strategy, config.retrieval.mode
        )
        .to_lowercase()
    });
    let fingerprint = config.fingerprint();
    let mut reports: Vec<EvalReport> = Vec::new();

    let ranked_map: Option<BTreeMap<String, RankedList>> = rankings.as_ref().map(|records| {
        records
            .iter()
            .map(|r| {
                (
                    r.sample_id.clone(),
                    RankedList {
                        entries: r.topk.clone(),
                        k: config.retrieval.k,
                    },
                )
            })
            .collect()
    });

    if let Some(ranked_map) = &ranked_map {
        let gold: BTreeMap<String, BTreeSet<String>> = samples
            .iter()
            .map(|s| {
                (
                    s.sample_id.clone(),
                    s.gold_schema_ids().into_iter().map(String::from).collect(),
                )
            })
            .collect();
        for &k in &config.evaluation.recall_ks {
            reports.push(recall_at_k(&gold, ranked_map, k)?);
        }
    }

    let result_list: Option<Vec<ExtractionResult>> = results.as_ref().map(|records| {
        records
            .iter()
            .map(|r| ExtractionResult::from(r.clone()))
            .collect()
    });

    if let Some(result_list) = &result_list {
        reports.push(extraction_f1(&samples, result_list, &pool)?);
        if let Some(ranked_map) = &ranked_map {
            reports.push(e2e_f1(&samples, ranked_map, result_list, &pool)?);
        }
    }

    for report in &mut reports {
        report.config_fingerprint = fingerprint.clone();
        report.label = Some(label.clone());
    }

    if let Some(path) = &config.paths.report_json {
        let path = config.require_output("report_json", &Some(path.clone()))?;
        emit_report(&reports, &path, ReportFormat::Json)?;
    }
    if let Some(path) = &config.paths.report_markdown {
        let path = config.require_output("report_markdown", &Some(path.clone()))?;
        emit_report(&reports, &path, ReportFormat::MarkdownTable)?;
    }
    for report in &reports {
        println!(
            "evaluate: {}{} = {:.4}",
            report.metric,
            report.k.map(|k| format!("@{k}")).unwrap_or_default(),
            report.value
        );
    }
    Ok(CommandOutcome::Success)
}

/// Exports (instruction, output) SFT pairs for train samples (export-sft).
pub fn cmd_export_sft(config: &PipelineConfig, dry_run: bool) -> anyhow::Result<CommandOutcome> {
    let pool_path = config.require_input("pool", &config.paths.pool)?;
    let samples_path = config.require_input("samples", &config.paths.samples)?;
    let sft_out = config.require_output("sft", &config.paths.sft)?;
    let template = read_template(&config.extraction.template_path, DEFAULT_EXTRACTION_TEMPLATE)?;
    if dry_run {
        println!(
            "export-sft: would export train pairs from {} into {}",
            samples_path.display(),
            sft_out.display()
        );
        return Ok(CommandOutcome::Success);
    }

    let pool = load_schemas(&pool_path)?;
    let samples = load_samples(&samples_path)?;
    let prompt_cap = config
        .backends
        .generation
        .as_ref()
        .map(|b| b.prompt_cap_chars)
        .unwrap_or(DEFAULT_PROMPT_CAP_CHARS);
    let count = export_sft(&samples, &pool, &template, &sft_out, prompt_cap)?;
    println!("export-sft: {count} records -> {}", sft_out.display());
    Ok(CommandOutcome::Success)
}
