//! Evaluation: Recall@K, argument-level extraction F1, and end-to-end F1.
//!
//! All three metrics are macro-averaged over queries. Value matching is
//! normalized exact string match (NFC, case fold, whitespace collapse,
//! surrounding punctuation strip); multi-event gold/prediction lists are
//! aligned greedily by pairwise event F1 with content-based tie-breaking,
//! which keeps the score invariant under permuting event order on either
//! side. End-to-end F1 credits a gold schema only when the retriever
//! actually returned it: retrieved-but-not-gold schemas are ignored,
//! non-retrieved gold schemas score zero.

use crate::corpus::{ArgumentValueMap, Sample};
use crate::extraction::ExtractionResult;
use crate::retrieval::RankedList;
use crate::schema::{Schema, SchemaPool};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no ranking for sample {0}")]
    MissingRankings(String),
    #[error("sample/result mismatch: {0}")]
    SampleResultMismatch(String),
    #[error("gold schema {0} is not in the pool")]
    UnknownSchema(String),
    #[error("sample {0} has an empty gold schema set")]
    EmptyGold(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Serde { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RecallAtK,
    ExtractionF1,
    E2eF1,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Metric::RecallAtK => write!(f, "recall_at_k"),
            Metric::ExtractionF1 => write!(f, "extraction_f1"),
            Metric::E2eF1 => write!(f, "e2e_f1"),
        }
    }
}

/// One computed metric with optional per-query breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub k: Option<usize>,
    pub value: f64,
    pub per_query: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub config_fingerprint: String,
    /// Row label for comparison tables (e.g. "bm25/raw").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl EvalReport {
    fn from_per_query(metric: Metric, k: Option<usize>, per_query: BTreeMap<String, f64>) -> Self {
        let value = if per_query.is_empty() {
            0.0
        } else {
            per_query.values().sum::<f64>() / per_query.len() as f64
        };
        EvalReport {
            metric,
            k,
            value,
            per_query: Some(per_query),
            config_fingerprint: String::new(),
            label: None,
        }
    }
}

/// Canonical value normalization: Unicode NFC, case fold, internal
/// whitespace collapsed to single spaces, surrounding punctuation (and any
/// whitespace it exposes) stripped. Idempotent.
pub fn normalize_value(value: &str) -> String {
    fn is_strippable(c: char) -> bool {
        c.is_whitespace()
            || c.is_ascii_punctuation()
            || matches!(c as u32,
                0x2000..=0x206F     // general punctuation
                | 0x3000..=0x303F   // CJK symbols and punctuation
                | 0xFF01..=0xFF0F   // fullwidth punctuation blocks
                | 0xFF1A..=0xFF20
                | 0xFF3B..=0xFF40
                | 0xFF5B..=0xFF65)
    }
    let folded: String = value.nfc().collect::<String>().to_lowercase();
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_matches(is_strippable).to_string()
}

fn normalized_multiset(values: &[String]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for v in values {
        *counts.entry(normalize_value(v)).or_insert(0) += 1;
    }
    counts
}

/// Precision/recall/F1 of one argument's value multisets under normalized
/// exact match.
fn value_f1(gold: &[String], pred: &[String]) -> f64 {
    if gold.is_empty() && pred.is_empty() {
        return 1.0; // callers exclude this case; kept total for safety
    }
    if gold.is_empty() || pred.is_empty() {
        return 0.0;
    }
    let gold_counts = normalized_multiset(gold);
    let pred_counts = normalized_multiset(pred);
    let matched: usize = gold_counts
        .iter()
        .map(|(v, &g)| g.min(pred_counts.get(v).copied().unwrap_or(0)))
        .sum();
    if matched == 0 {
        return 0.0;
    }
    let precision = matched as f64 / pred.len() as f64;
    let recall = matched as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

static EMPTY_EVENT: std::sync::LazyLock<ArgumentValueMap> =
    std::sync::LazyLock::new(ArgumentValueMap::default);

/// Per-argument F1 values of one aligned (gold, pred) event pair.
/// Arguments empty on both sides are excluded.
fn pair_argument_scores(gold: &ArgumentValueMap, pred: &ArgumentValueMap) -> Vec<f64> {
    let mut names: Vec<&String> = gold.values.keys().collect();
    for key in pred.values.keys() {
        if !gold.values.contains_key(key) {
            names.push(key);
        }
    }
    names
        .into_iter()
        .filter_map(|name| {
            let gold_values = gold.values.get(name).map(Vec::as_slice).unwrap_or(&[]);
            let pred_values = pred.values.get(name).map(Vec::as_slice).unwrap_or(&[]);
            if gold_values.is_empty() && pred_values.is_empty() {
                None
            } else {
                Some(value_f1(gold_values, pred_values))
            }
        })
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        // Vacuously perfect: no argument carries any value on either side.
        1.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Content key used to break alignment ties independently of input order.
fn event_content_key(event: &ArgumentValueMap) -> String {
    let mut parts: Vec<String> = event
        .values
        .iter()
        .map(|(k, vs)| {
            let mut normalized: Vec<String> = vs.iter().map(|v| normalize_value(v)).collect();
            normalized.sort();
            format!("{k}={normalized:?}")
        })
        .collect();
    parts.sort();
    parts.join(";")
}

/// Argument-level F1 between gold and predicted event lists for one
/// schema: events are aligned greedily by descending pairwise F1 (ties by
/// event content, so permuting either list cannot change the score),
/// unmatched events pair against an empty counterpart, and the result is
/// the mean per-argument F1 across aligned pairs.
pub fn argument_f1(
    gold_events: &[ArgumentValueMap],
    pred_events: &[ArgumentValueMap],
    _schema: &Schema,
) -> f64 {
    // Candidate pairs ranked by (score desc, content keys, indices).
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, gold) in gold_events.iter().enumerate() {
        for (j, pred) in pred_events.iter().enumerate() {
            candidates.push((mean(&pair_argument_scores(gold, pred)), i, j));
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                event_content_key(&gold_events[a.1]).cmp(&event_content_key(&gold_events[b.1]))
            })
            .then_with(|| {
                event_content_key(&pred_events[a.2]).cmp(&event_content_key(&pred_events[b.2]))
            })
            .then_with(|| (a.1, a.2).cmp(&(b.1, b.2)))
    });

    let mut gold_used = vec![false; gold_events.len()];
    let mut pred_used = vec![false; pred_events.len()];
    let mut scores: Vec<f64> = Vec::new();
    for (_, i, j) in candidates {
        if gold_used[i] || pred_used[j] {
            continue;
        }
        gold_used[i] = true;
        pred_used[j] = true;
        scores.extend(pair_argument_scores(&gold_events[i], &pred_events[j]));
    }
    for (i, used) in gold_used.iter().enumerate() {
        if !used {
            scores.extend(pair_argument_scores(&gold_events[i], &EMPTY_EVENT));
        }
    }
    for (j, used) in pred_used.iter().enumerate() {
        if !used {
            scores.extend(pair_argument_scores(&EMPTY_EVENT, &pred_events[j]));
        }
    }
    mean(&scores)
}

/// Macro-averaged Recall@K: per query, the fraction of gold schemas found
/// in the top-K retrieved list.
pub fn recall_at_k(
    gold: &BTreeMap<String, BTreeSet<String>>,
    ranked: &BTreeMap<String, RankedList>,
    k: usize,
) -> Result<EvalReport, EvalError> {
    assert!(k >= 1, "k must be >= 1");
    let mut per_query = BTreeMap::new();
    for (sample_id, gold_set) in gold {
        if gold_set.is_empty() {
            return Err(EvalError::EmptyGold(sample_id.clone()));
        }
        let list = ranked
            .get(sample_id)
            .ok_or_else(|| EvalError::MissingRankings(sample_id.clone()))?;
        let top: BTreeSet<&str> = list.top(k).into_iter().collect();
        let hits = gold_set.iter().filter(|s| top.contains(s.as_str())).count();
        per_query.insert(sample_id.clone(), hits as f64 / gold_set.len() as f64);
    }
    Ok(EvalReport::from_per_query(
        Metric::RecallAtK,
        Some(k),
        per_query,
    ))
}

fn results_by_sample<'a>(
    samples: &[Sample],
    results: &'a [ExtractionResult],
) -> Result<BTreeMap<&'a str, &'a ExtractionResult>, EvalError> {
    let by_id: BTreeMap<&str, &ExtractionResult> = results
        .iter()
        .map(|r| (r.sample_id.as_str(), r))
        .collect();
    if by_id.len() != results.len() {
        return Err(EvalError::SampleResultMismatch(
            "duplicate result sample_id".to_string(),
        ));
    }
    for sample in samples {
        if !by_id.contains_key(sample.sample_id.as_str()) {
            return Err(EvalError::SampleResultMismatch(format!(
                "no result for sample {}",
                sample.sample_id
            )));
        }
    }
    Ok(by_id)
}

fn gold_pair_f1(
    sample: &Sample,
    result: &ExtractionResult,
    pool: &SchemaPool,
    restrict_to: Option<&BTreeSet<&str>>,
) -> Result<f64, EvalError> {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for gold in &sample.gold {
        let schema = pool
            .schemas
            .get(&gold.schema_id)
            .ok_or_else(|| EvalError::UnknownSchema(gold.schema_id.clone()))?;
        pairs += 1;
        if let Some(retrieved) = restrict_to {
            if !retrieved.contains(gold.schema_id.as_str()) {
                continue; // not retrieved: contributes zero
            }
        }
        let predicted = result
            .per_schema
            .get(&gold.schema_id)
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        total += argument_f1(&gold.events, predicted, schema);
    }
    if pairs == 0 {
        return Err(EvalError::EmptyGold(sample.sample_id.clone()));
    }
    Ok(total / pairs as f64)
}

/// Schema-aware extraction F1 with ground-truth schemas: for every
/// (sample, gold schema) pair, argument-level F1 of the prediction for
/// that schema (missing prediction scores zero); pairs are averaged within
/// a query and queries macro-averaged.
pub fn extraction_f1(
    samples: &[Sample],
    results: &[ExtractionResult],
    pool: &SchemaPool,
) -> Result<EvalReport, EvalError> {
    let by_id = results_by_sample(samples, results)?;
    let mut per_query = BTreeMap::new();
    for sample in samples {
        let value = gold_pair_f1(sample, by_id[sample.sample_id.as_str()], pool, None)?;
        per_query.insert(sample_id_of(sample), value);
    }
    Ok(EvalReport::from_per_query(Metric::ExtractionF1, None, per_query))
}

fn sample_id_of(sample: &Sample) -> String {
    sample.sample_id.clone()
}

/// End-to-end F1: per query, (1/|S_q|) * sum over gold schemas of
/// F1(s, q) * [s was retrieved]; queries are macro-averaged. Retrieved
/// schemas outside the gold set are ignored; gold schemas the retriever
/// missed contribute zero.
pub fn e2e_f1(
    samples: &[Sample],
    ranked: &BTreeMap<String, RankedList>,
    results: &[ExtractionResult],
    pool: &SchemaPool,
) -> Result<EvalReport, EvalError> {
    let by_id = results_by_sample(samples, results)?;
    let mut per_query = BTreeMap::new();
    for sample in samples {
        let list = ranked
            .get(&sample.sample_id)
            .ok_or_else(|| EvalError::MissingRankings(sample.sample_id.clone()))?;
        let retrieved: BTreeSet<&str> = list.schema_ids().into_iter().collect();
        let value = gold_pair_f1(
            sample,
            by_id[sample.sample_id.as_str()],
            pool,
            Some(&retrieved),
        )?;
        per_query.insert(sample_id_of(sample), value);
    }
    Ok(EvalReport::from_per_query(Metric::E2eF1, None, per_query))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    MarkdownTable,
}

fn column_header(report: &EvalReport) -> String {
    match (report.metric, report.k) {
        (Metric::RecallAtK, Some(k)) => format!("Recall@{k}"),
        (Metric::RecallAtK, None) => "Recall@K".to_string(),
        (Metric::ExtractionF1, _) => "Extraction-F1".to_string(),
        (Metric::E2eF1, _) => "E2E-F1".to_string(),
    }
}

/// Renders reports as a comparison table: one row per label (retrieval
/// strategy / document mode), one column per metric (and per K for
/// recall). Cells without a report stay blank.
pub fn render_markdown(reports: &[EvalReport]) -> String {
    let mut columns: Vec<String> = Vec::new();
    let mut rows: Vec<String> = Vec::new();
    for report in reports {
        let column = column_header(report);
        if !columns.contains(&column) {
            columns.push(column);
        }
        let row = report.label.clone().unwrap_or_else(|| "overall".to_string());
        if !rows.contains(&row) {
            rows.push(row);
        }
    }
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    for report in reports {
        let row = report.label.clone().unwrap_or_else(|| "overall".to_string());
        cells.insert((row, column_header(report)), report.value);
    }

    let mut out = String::new();
    let fingerprints: BTreeSet<&str> = reports
        .iter()
        .map(|r| r.config_fingerprint.as_str())
        .filter(|f| !f.is_empty())
        .collect();
    if !fingerprints.is_empty() {
        out.push_str(&format!(
            "<!-- config_fingerprint: {} -->\n",
            fingerprints.into_iter().collect::<Vec<_>>().join(", ")
        ));
    }
    out.push_str("| |");
    for column in &columns {
        out.push_str(&format!(" {column} |"));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &columns {
        out.push_str("---|");
    }
    out.push('\n');
    for row in &rows {
        out.push_str(&format!("| {row} |"));
        for column in &columns {
            match cells.get(&(row.clone(), column.clone())) {
                Some(value) => out.push_str(&format!(" {value:.4} |")),
                None => out.push_str("  |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Writes reports to `out` as a JSON array or a markdown table.
pub fn emit_report(
    reports: &[EvalReport],
    out: &Path,
    format: ReportFormat,
) -> Result<(), EvalError> {
    let display = out.display().to_string();
    let content = match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(reports).map_err(|e| EvalError::Serde {
                path: display.clone(),
                message: e.to_string(),
            })? + "\n"
        }
        ReportFormat::MarkdownTable => render_markdown(reports),
    };
    std::fs::write(out, content).map_err(|source| EvalError::Io {
        path: display,
        source,
    })
}

pub fn load_reports(path: &Path) -> Result<Vec<EvalReport>, EvalError> {
    let display = path.display().to_string();
    let content = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: display.clone(),
        source,
    })?;
    serde_json::from_str(&content).map_err(|e| EvalError::Serde {
        path: display,
        message: e.to_string(),
    })
}
