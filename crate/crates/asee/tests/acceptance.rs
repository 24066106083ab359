//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `--nocapture` to see them) and enforcing its
//! runtime budget. Oracles here are deliberately independent scalar
//! re-implementations, never the library's own code paths.

mod common;

use asee::consolidate::{
    collapse_numeric_variants, filter_label_count, greedy_max_independent_set, split_corpus,
    SimilarityGraph,
};
use asee::corpus::{load_samples, save_samples, ArgumentValueMap, Sample, Split};
use asee::eval::{e2e_f1, extraction_f1, recall_at_k, load_reports, Metric};
use asee::extraction::{
    assemble_prompt, canonical_output, parse_extraction_output, ParseStatus,
    DEFAULT_EXTRACTION_TEMPLATE,
};
use asee::gateway::DEFAULT_PROMPT_CAP_CHARS;
use asee::retrieval::{
    build_index, load_rankings, save_rankings, search, RankedEntry, RankedList, RankingRecord,
    SearchOptions, Strategy,
};
use asee::schema::{
    load_schemas, save_pool, DocumentMode, ParaphrasedSchema, Schema, SchemaPool,
};
use asee::tokenize::tokenize;
use common::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::Instant;

// ---------------------------------------------------------------------
// Criterion: BM25 oracle equivalence on random corpora.
// ---------------------------------------------------------------------

/// Independent scalar BM25: no inverted index, no shared code with the
/// library implementation.
fn oracle_bm25_rank(
    docs: &[(String, Vec<String>)],
    query: &[String],
    k1: f64,
    b: f64,
) -> Vec<(String, f64)> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|(_, t)| t.len()).sum::<usize>() as f64 / n;
    let mut scored: Vec<(String, f64)> = docs
        .iter()
        .map(|(id, tokens)| {
            let dl = tokens.len() as f64;
            let mut score = 0.0;
            for term in query {
                let tf = tokens.iter().filter(|t| *t == term).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs
                    .iter()
                    .filter(|(_, t)| t.iter().any(|x| x == term))
                    .count() as f64;
                let idf = ((n + 0.5) / (df + 0.5) + 1.0).ln();
                score += idf * tf / (tf + k1 * (1.0 - b + b * dl / avgdl));
            }
            (id.clone(), score)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored
}

#[test]
fn bm25_oracle_equivalence() {
    let started = Instant::now();
    let vocab = [
        "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa",
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    for round in 0..200 {
        let n_docs = rng.gen_range(1..=20);
        let schemas: Vec<Schema> = (0..n_docs)
            .map(|i| {
                let n_args = rng.gen_range(1..=6);
                let mut names: Vec<&str> = (0..n_args)
                    .map(|_| vocab[rng.gen_range(0..vocab.len())])
                    .collect();
                names.sort_unstable();
                names.dedup();
                schema(
                    &format!("s{i:02}"),
                    vocab[rng.gen_range(0..vocab.len())],
                    &names,
                )
            })
            .collect();
        let pool = pool_of(schemas);
        let index = build_index(&pool, DocumentMode::Raw, None).unwrap();
        let query: Vec<String> = (0..rng.gen_range(1..=6))
            .map(|_| vocab[rng.gen_range(0..vocab.len())].to_string())
            .collect();
        let k = rng.gen_range(1..=n_docs);

        let ranked = search(
            &index,
            &query.join(" "),
            &SearchOptions::new(Strategy::Bm25, k),
            None,
            None,
        )
        .unwrap();

        let docs: Vec<(String, Vec<String>)> = (0..index.len())
            .map(|o| {
                (
                    index.schema_id(o).unwrap().to_string(),
                    tokenize(index.document(o).unwrap()),
                )
            })
            .collect();
        let expected = oracle_bm25_rank(&docs, &query, 1.2, 0.75);
        assert_eq!(ranked.entries.len(), k);
        for (got, want) in ranked.entries.iter().zip(&expected) {
            assert_eq!(got.schema_id, want.0, "round {round}: order mismatch");
            assert!(
                (got.score - want.1).abs() <= 1e-9,
                "round {round}: score {} vs oracle {}",
                got.score,
                want.1
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("PASS: BM25 oracle equivalence (200 corpora, exact order + scores within 1e-9, {elapsed:?})");
}

// ---------------------------------------------------------------------
// Criterion: BM25 hand-computed value.
// ---------------------------------------------------------------------

#[test]
fn bm25_hand_value() {
    let started = Instant::now();
    // Single doc "a b", query [a]: IDF = ln 2, tf part = 1/2.2.
    let pool = pool_of(vec![schema("only", "a", &["b"])]);
    let index = build_index(&pool, DocumentMode::Raw, None).unwrap();
    let score =
        asee::retrieval::bm25_score(&index, &["a".to_string()], 0, 1.2, 0.75).unwrap();
    assert!(
        (score - 0.3151).abs() <= 1e-4,
        "single-doc fixture scored {score}"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0);
    println!("PASS: BM25 hand value 0.3151 +/- 1e-4 (got {score:.6}, {elapsed:?})");
}

// ---------------------------------------------------------------------
// Criterion: greedy maximum-independent-set correctness.
// ---------------------------------------------------------------------

fn random_graph(n: usize, edge_prob: f64, rng: &mut impl Rng) -> SimilarityGraph {
    let nodes: Vec<String> = (0..n).map(|i| format!("n{i:02}")).collect();
    let mut graph = SimilarityGraph::edgeless(nodes.clone(), 0.85);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(edge_prob) {
                let (a, b) = (nodes[i].clone(), nodes[j].clone());
                graph.add_edge(&a, &b);
            }
        }
    }
    graph
}

/// Exact MIS size by subset enumeration over adjacency bitmasks.
fn exact_mis_size(graph: &SimilarityGraph) -> usize {
    let n = graph.nodes.len();
    assert!(n <= 16);
    let index: BTreeMap<&str, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut adj = vec![0u32; n];
    for (node, neighbors) in &graph.adjacency {
        for other in neighbors {
            adj[index[node.as_str()]] |= 1 << index[other.as_str()];
        }
    }
    let mut best = 0;
    for mask in 0u32..(1 << n) {
        if (0..n).all(|i| mask & (1 << i) == 0 || adj[i] & mask == 0) {
            best = best.max(mask.count_ones() as usize);
        }
    }
    best
}

#[test]
fn greedy_mis_correctness() {
    let started = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut exact_checked = 0usize;
    for round in 0..1000 {
        let n = rng.gen_range(1..=30);
        let graph = random_graph(n, rng.gen_range(0.05..0.6), &mut rng);
        let result = greedy_max_independent_set(&graph);
        // Independence: no two selected nodes adjacent.
        for node in &result {
            assert!(
                graph.adjacency[node].intersection(&result).count() == 0,
                "round {round}: dependent pair"
            );
        }
        if n <= 12 {
            let exact = exact_mis_size(&graph);
            assert!(
                result.len() <= exact,
                "round {round}: greedy {} beat exact {exact}",
                result.len()
            );
            if graph.edge_count() == 0 {
                assert_eq!(result.len(), exact);
            }
            exact_checked += 1;
        }
    }
    assert!(exact_checked >= 100, "exact oracle exercised enough");

    // Hand-traced path graph A--B--C keeps the two endpoints.
    let mut path = SimilarityGraph::edgeless(
        vec!["A".to_string(), "B".to_string(), "C".to_string()],
        0.85,
    );
    path.add_edge("A", "B");
    path.add_edge("B", "C");
    assert_eq!(
        greedy_max_independent_set(&path),
        BTreeSet::from(["A".to_string(), "C".to_string()])
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "PASS: greedy MIS independent on 1000 graphs, <= exact on {exact_checked} graphs (n<=12), path graph = {{A, C}} ({elapsed:?})"
    );
}

// ---------------------------------------------------------------------
// Criterion: metric identities.
// ---------------------------------------------------------------------

fn metric_fixture(rng: &mut impl Rng) -> (SchemaPool, Vec<Sample>) {
    let pool = pool_of(vec![
        schema("a", "Alpha", &["x", "y"]),
        schema("b", "Beta", &["z"]),
        schema("c", "Gamma", &["w"]),
    ]);
    let ids = ["a", "b", "c"];
    let samples: Vec<Sample> = (0..6)
        .map(|i| {
            let n_gold = rng.gen_range(1..=3);
            let mut chosen = ids.to_vec();
            chosen.shuffle(rng);
            let gold: Vec<(&str, Vec<ArgumentValueMap>)> = chosen
                .iter()
                .take(n_gold)
                .map(|id| {
                    let arg = match *id {
                        "a" => "x",
                        "b" => "z",
                        _ => "w",
                    };
                    let values: &[&str] = if rng.gen_bool(0.5) { &["v1"] } else { &["v1", "v2"] };
                    (*id, vec![event(&[(arg, values)])])
                })
                .collect();
            sample(&format!("q{i}"), "text", gold)
        })
        .collect();
    (pool, samples)
}

/// Results that echo gold, with random per-value corruption.
fn noisy_results(samples: &[Sample], rng: &mut impl Rng) -> Vec<asee::extraction::ExtractionResult> {
    samples
        .iter()
        .map(|s| {
            let mut per_schema = BTreeMap::new();
            for gold in &s.gold {
                let mut events = gold.events.clone();
                for event in &mut events {
                    for values in event.values.values_mut() {
                        for v in values.iter_mut() {
                            if rng.gen_bool(0.3) {
                                *v = "corrupted".to_string();
                            }
                        }
                    }
                }
                per_schema.insert(gold.schema_id.clone(), events);
            }
            asee::extraction::ExtractionResult {
                sample_id: s.sample_id.clone(),
                per_schema,
                backend_id: "fixture".to_string(),
                parse_status: ParseStatus::Clean,
                tallies: Default::default(),
            }
        })
        .collect()
}

fn ranked_of(ids: &[&str]) -> RankedList {
    RankedList {
        entries: ids
            .iter()
            .enumerate()
            .map(|(i, id)| RankedEntry {
                schema_id: id.to_string(),
                score: 5.0 - i as f64,
            })
            .collect(),
        k: ids.len().max(1),
    }
}

#[test]
fn metric_identities() {
    let started = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);

    for _round in 0..50 {
        let (pool, samples) = metric_fixture(&mut rng);
        let results = noisy_results(&samples, &mut rng);

        // Perfect retrieval: every gold schema retrieved for every query.
        let perfect: BTreeMap<String, RankedList> = samples
            .iter()
            .map(|s| (s.sample_id.clone(), ranked_of(&["a", "b", "c"])))
            .collect();
        let e2e = e2e_f1(&samples, &perfect, &results, &pool).unwrap().value;
        let extraction = extraction_f1(&samples, &results, &pool).unwrap().value;
        assert_eq!(e2e, extraction, "perfect retrieval must reduce E2E to extraction F1");

        // Zero recall: retrieved set never intersects gold.
        let zero: BTreeMap<String, RankedList> = samples
            .iter()
            .map(|s| (s.sample_id.clone(), ranked_of(&["nope"])))
            .collect();
        let e2e_zero = e2e_f1(&samples, &zero, &results, &pool).unwrap().value;
        assert_eq!(e2e_zero, 0.0, "zero-recall retrieval must zero E2E");
    }

    // Recall@K monotone in K over random fixtures.
    for _round in 0..100 {
        let ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        let mut gold = BTreeMap::new();
        let mut lists = BTreeMap::new();
        for q in 0..4 {
            let mut shuffled = ids.clone();
            shuffled.shuffle(&mut rng);
            gold.insert(
                format!("q{q}"),
                shuffled
                    .iter()
                    .take(rng.gen_range(1..4))
                    .cloned()
                    .collect::<BTreeSet<_>>(),
            );
            shuffled.shuffle(&mut rng);
            let refs: Vec<&str> = shuffled.iter().map(String::as_str).collect();
            lists.insert(format!("q{q}"), ranked_of(&refs));
        }
        let mut previous = 0.0;
        for k in 1..=10 {
            let value = recall_at_k(&gold, &lists, k).unwrap().value;
            assert!(value >= previous, "Recall@K must be monotone in K");
            previous = value;
        }
        assert_eq!(previous, 1.0, "full-depth recall over complete rankings");
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 2.0, "took {elapsed:?}");
    println!("PASS: metric identities (E2E==extraction under perfect retrieval, E2E==0 under zero recall, Recall@K monotone, {elapsed:?})");
}

// ---------------------------------------------------------------------
// Criterion: full-pipeline identity run through the CLI.
// ---------------------------------------------------------------------

fn wrap_candidate(pool: &SchemaPool, schema_id: &str) -> ParaphrasedSchema {
    pool.paraphrased
        .get(schema_id)
        .cloned()
        .unwrap_or_else(|| {
            let s = pool.schemas[schema_id].clone();
            ParaphrasedSchema {
                paraphrase_of: s.schema_id.clone(),
                demo_sample_ids: vec![],
                base: s,
            }
        })
}

/// Builds the gold-echo generation script: for every sample, the exact
/// prompt the extract command will issue against these rankings, answered
/// with the canonical serialization of the gold events for retrieved gold
/// schemas.
fn gold_echo_script(
    pool: &SchemaPool,
    samples: &[Sample],
    rankings: &[RankingRecord],
    out: &PathBuf,
) {
    let by_id: BTreeMap<&str, &RankingRecord> =
        rankings.iter().map(|r| (r.sample_id.as_str(), r)).collect();
    let mut lines = Vec::new();
    for sample in samples {
        let ranking = by_id[sample.sample_id.as_str()];
        let candidates: Vec<ParaphrasedSchema> = ranking
            .topk
            .iter()
            .map(|e| wrap_candidate(pool, &e.schema_id))
            .collect();
        let refs: Vec<&ParaphrasedSchema> = candidates.iter().collect();
        let prompt = assemble_prompt(
            &sample.sample_id,
            &sample.query,
            &refs,
            DEFAULT_EXTRACTION_TEMPLATE,
            DEFAULT_PROMPT_CAP_CHARS,
        )
        .unwrap();
        let retrieved: BTreeSet<&str> =
            ranking.topk.iter().map(|e| e.schema_id.as_str()).collect();
        let entries: Vec<(&Schema, &[ArgumentValueMap])> = sample
            .gold
            .iter()
            .filter(|g| retrieved.contains(g.schema_id.as_str()))
            .map(|g| {
                let candidate = refs
                    .iter()
                    .find(|c| c.base.schema_id == g.schema_id)
                    .expect("retrieved candidate");
                (&candidate.base, g.events.as_slice())
            })
            .collect();
        let reply = canonical_output(&entries);
        lines.push(json!({"prompt": prompt.rendered, "reply": reply}).to_string());
    }
    std::fs::write(out, lines.join("\n") + "\n").unwrap();
}

#[test]
fn pipeline_identity_run() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let ps = |name: &str| p(name).display().to_string();

    save_pool(&pool_of(identity_pool(20)), &p("schemas.jsonl")).unwrap();
    save_samples(&identity_samples(50, 20), &p("samples.jsonl")).unwrap();

    let mut config = json!({
        "paths": {
            "schemas": ps("schemas.jsonl"),
            "samples": ps("samples.jsonl"),
            "pool": ps("pool.jsonl"),
            "rankings": ps("rankings.jsonl"),
            "results": ps("results.jsonl"),
            "report_json": ps("report.json"),
            "report_markdown": ps("report.md"),
        },
        "backends": {
            "generation": {"kind": "generation", "endpoint": "mock"},
            "embedding": {"kind": "embedding", "endpoint": "mock"},
        },
        "retrieval": {"strategy": "dense", "k": 5, "mode": "paraphrased"},
        "evaluation": {"recall_ks": [5]},
        "seed": 11,
    });
    let config_path = p("config.json");
    write_json(&config_path, &config);
    let config_arg = config_path.display().to_string();

    let out = run_asee(&["--config", &config_arg, "build-pool"], &[]);
    assert_eq!(out.status.code(), Some(0), "build-pool: {}", String::from_utf8_lossy(&out.stderr));
    let out = run_asee(&["--config", &config_arg, "retrieve"], &[]);
    assert_eq!(out.status.code(), Some(0), "retrieve: {}", String::from_utf8_lossy(&out.stderr));

    // Script the generation mock to echo gold for whatever was retrieved.
    let pool = load_schemas(&p("pool.jsonl")).unwrap();
    let samples = load_samples(&p("samples.jsonl")).unwrap();
    let rankings = load_rankings(&p("rankings.jsonl")).unwrap();
    gold_echo_script(&pool, &samples, &rankings, &p("script.jsonl"));
    config["backends"]["generation"] =
        json!({"kind": "generation", "endpoint": format!("mock:{}", ps("script.jsonl"))});
    write_json(&config_path, &config);

    let out = run_asee(&["--config", &config_arg, "extract"], &[]);
    assert_eq!(out.status.code(), Some(0), "extract: {}", String::from_utf8_lossy(&out.stderr));
    let out = run_asee(&["--config", &config_arg, "evaluate"], &[]);
    assert_eq!(out.status.code(), Some(0), "evaluate: {}", String::from_utf8_lossy(&out.stderr));

    let reports = load_reports(&p("report.json")).unwrap();
    let value_of = |metric: Metric| {
        reports
            .iter()
            .find(|r| r.metric == metric)
            .unwrap_or_else(|| panic!("missing {metric:?}"))
            .value
    };
    let recall5 = value_of(Metric::RecallAtK);
    let e2e = value_of(Metric::E2eF1);
    assert!(recall5 < 1.0, "fixture must leave headroom (recall {recall5})");
    assert!(recall5 > 0.0);
    assert_eq!(
        e2e, recall5,
        "gold-echo extraction must make E2E-F1 equal Recall@5"
    );

    // Forced-perfect retrieval: rankings carry exactly the gold schemas.
    let perfect: Vec<RankingRecord> = samples
        .iter()
        .map(|s| RankingRecord {
            sample_id: s.sample_id.clone(),
            topk: s
                .gold
                .iter()
                .enumerate()
                .map(|(i, g)| RankedEntry {
                    schema_id: g.schema_id.clone(),
                    score: 5.0 - i as f64,
                })
                .collect(),
            config_fingerprint: None,
        })
        .collect();
    save_rankings(&perfect, &p("rankings-perfect.jsonl")).unwrap();
    gold_echo_script(&pool, &samples, &perfect, &p("script-perfect.jsonl"));
    config["paths"]["rankings"] = json!(ps("rankings-perfect.jsonl"));
    config["paths"]["results"] = json!(ps("results-perfect.jsonl"));
    config["paths"]["report_json"] = json!(ps("report-perfect.json"));
    config["backends"]["generation"] =
        json!({"kind": "generation", "endpoint": format!("mock:{}", ps("script-perfect.jsonl"))});
    write_json(&config_path, &config);

    let out = run_asee(&["--config", &config_arg, "extract"], &[]);
    assert_eq!(out.status.code(), Some(0), "extract perfect: {}", String::from_utf8_lossy(&out.stderr));
    let out = run_asee(&["--config", &config_arg, "evaluate"], &[]);
    assert_eq!(out.status.code(), Some(0), "evaluate perfect: {}", String::from_utf8_lossy(&out.stderr));

    let reports = load_reports(&p("report-perfect.json")).unwrap();
    let e2e_perfect = reports
        .iter()
        .find(|r| r.metric == Metric::E2eF1)
        .unwrap()
        .value;
    assert_eq!(e2e_perfect, 1.0, "perfect retrieval + gold echo must be exactly 1.0");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "PASS: pipeline identity run (E2E == Recall@5 == {recall5:.4}; forced-perfect E2E == 1.0, {elapsed:?})"
    );
}

// ---------------------------------------------------------------------
// Criterion: paraphrasing helps retrieval when queries match argument
// descriptions rather than schema names.
// ---------------------------------------------------------------------

#[test]
fn directional_paraphrasing_effect() {
    let started = Instant::now();
    let n = 30;
    let mut pool = SchemaPool::new("directional");
    for i in 0..n {
        // Opaque names and argument names share no vocabulary with queries.
        let raw = schema(&format!("sch{i:02}"), &format!("Proc{i:02}"), &["fielda", "fieldb"]);
        pool.insert_schema(raw.clone()).unwrap();
        let mut described = raw.clone();
        described.arguments[0].description = format!("w{i}a w{i}b captured here");
        described.arguments[1].description = format!("w{i}c w{i}d captured here");
        pool.insert_paraphrase(ParaphrasedSchema {
            base: described,
            paraphrase_of: raw.schema_id.clone(),
            demo_sample_ids: vec![],
        })
        .unwrap();
    }
    let samples: Vec<Sample> = (0..n)
        .map(|i| {
            sample(
                &format!("q{i:02}"),
                &format!("please review w{i}a w{i}b w{i}c w{i}d"),
                vec![(&format!("sch{i:02}"), vec![])],
            )
        })
        .collect();
    let gold: BTreeMap<String, BTreeSet<String>> = samples
        .iter()
        .map(|s| {
            (
                s.sample_id.clone(),
                s.gold_schema_ids().into_iter().map(String::from).collect(),
            )
        })
        .collect();

    let embedder =
        asee::gateway::Embedder::from_config(&asee::gateway::BackendConfig::mock(
            asee::gateway::BackendKind::Embedding,
        ))
        .unwrap();
    let mut recalls: BTreeMap<(&str, &str), f64> = BTreeMap::new();
    for (mode_name, mode) in [("raw", DocumentMode::Raw), ("paraphrased", DocumentMode::Paraphrased)]
    {
        let index = build_index(&pool, mode, Some(&embedder)).unwrap();
        for (strategy_name, strategy) in
            [("bm25", Strategy::Bm25), ("dense", Strategy::Dense)]
        {
            let lists: BTreeMap<String, RankedList> = samples
                .iter()
                .map(|s| {
                    (
                        s.sample_id.clone(),
                        search(
                            &index,
                            &s.query,
                            &SearchOptions::new(strategy, 10),
                            Some(&embedder),
                            None,
                        )
                        .unwrap(),
                    )
                })
                .collect();
            let report = recall_at_k(&gold, &lists, 10).unwrap();
            recalls.insert((strategy_name, mode_name), report.value);
        }
    }
    for strategy in ["bm25", "dense"] {
        let raw = recalls[&(strategy, "raw")];
        let para = recalls[&(strategy, "paraphrased")];
        assert!(
            para > raw,
            "{strategy}: paraphrased Recall@10 ({para}) must strictly exceed raw ({raw})"
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "PASS: directional paraphrasing (bm25 raw {:.2} -> paraphrased {:.2}; dense raw {:.2} -> paraphrased {:.2}, {elapsed:?})",
        recalls[&("bm25", "raw")],
        recalls[&("bm25", "paraphrased")],
        recalls[&("dense", "raw")],
        recalls[&("dense", "paraphrased")],
    );
}

// ---------------------------------------------------------------------
// Criterion: consolidation reproduces the documented rules.
// ---------------------------------------------------------------------

#[test]
fn consolidation_documented_rules() {
    let started = Instant::now();

    // Numbered-variant collapse.
    let s = schema("d", "Disaster", &["place", "place1", "place2", "time"]);
    assert_eq!(
        collapse_numeric_variants(&s).argument_names(),
        vec!["place", "time"]
    );

    // Label-count filter: 16 dropped, 15 kept.
    let heavy: Vec<ArgumentValueMap> =
        (0..16).map(|i| event(&[("x", &[format!("v{i}").as_str()])])).collect();
    let limit: Vec<ArgumentValueMap> =
        (0..15).map(|i| event(&[("x", &[format!("v{i}").as_str()])])).collect();
    let samples = vec![
        sample("heavy", "q", vec![("d", heavy)]),
        sample("limit", "q", vec![("d", limit)]),
    ];
    let kept = filter_label_count(&samples, 15);
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].sample_id, "limit");

    // 80/10/10 split within +/-2% of 1000, bit-identical across reruns.
    let corpus: Vec<Sample> = (0..1000)
        .map(|i| sample(&format!("sample-{i:04}"), "q", vec![("d", vec![])]))
        .collect();
    let split = split_corpus(&corpus, 42);
    let count = |which: Split| split.iter().filter(|s| s.split == which).count() as i64;
    let (train, dev, test) = (count(Split::Train), count(Split::Dev), count(Split::Test));
    assert_eq!(train + dev + test, 1000);
    assert!((train - 800).abs() <= 20, "train {train}");
    assert!((dev - 100).abs() <= 20, "dev {dev}");
    assert!((test - 100).abs() <= 20, "test {test}");
    assert_eq!(split, split_corpus(&corpus, 42));

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 2.0, "took {elapsed:?}");
    println!(
        "PASS: consolidation rules (place-variant collapse, 16>15 label filter, split {train}/{dev}/{test} within +/-2%, {elapsed:?})"
    );
}

// ---------------------------------------------------------------------
// Criterion: serializer/parser inverse and hallucination filtering.
// ---------------------------------------------------------------------

#[test]
fn serializer_inverse_and_hallucination_filtering() {
    let started = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(500);
    let value_pool = ["Alice", "bob smith", "7.0", "Lima Peru", "第七区", "x y z"];

    // 500 random samples round-trip export serialization -> parse exactly.
    for round in 0..500 {
        let n_args = rng.gen_range(1..=4);
        let arg_names: Vec<String> = (0..n_args).map(|i| format!("arg{i}")).collect();
        let arg_refs: Vec<&str> = arg_names.iter().map(String::as_str).collect();
        let s = schema("s", &format!("Type{round}"), &arg_refs);
        let candidate = ParaphrasedSchema {
            paraphrase_of: s.schema_id.clone(),
            demo_sample_ids: vec![],
            base: s.clone(),
        };
        let events: Vec<ArgumentValueMap> = (0..rng.gen_range(0..=3))
            .map(|_| {
                let mut e = ArgumentValueMap::default();
                for name in &arg_names {
                    if rng.gen_bool(0.7) {
                        let values: Vec<String> = (0..rng.gen_range(1..=3))
                            .map(|_| value_pool[rng.gen_range(0..value_pool.len())].to_string())
                            .collect();
                        e.insert(name.clone(), values);
                    }
                }
                e
            })
            .collect();
        let text = canonical_output(&[(&s, events.as_slice())]);
        let parsed = parse_extraction_output(&text, &[&candidate]);
        assert_eq!(parsed.status(), ParseStatus::Clean, "round {round}");
        let got = parsed.per_schema.get("s").cloned().unwrap_or_default();
        assert_eq!(got, events, "round {round}: round-trip mismatch");
    }

    // Adversarial replies: unknown schemas/arguments never leak through.
    let declared = ParaphrasedSchema {
        paraphrase_of: "quake".to_string(),
        demo_sample_ids: vec![],
        base: schema("quake", "Earthquake", &["magnitude", "location"]),
    };
    for round in 0..200 {
        let mut root = serde_json::Map::new();
        for _ in 0..rng.gen_range(1..4) {
            let name = if rng.gen_bool(0.5) {
                "Earthquake".to_string()
            } else {
                format!("Fake{}", rng.gen_range(0..1000))
            };
            let mut ev = serde_json::Map::new();
            for _ in 0..rng.gen_range(0..4) {
                let key = if rng.gen_bool(0.5) {
                    "magnitude".to_string()
                } else {
                    format!("bogus{}", rng.gen_range(0..1000))
                };
                ev.insert(key, json!(["v"]));
            }
            root.insert(name, json!([ev]));
        }
        let reply = serde_json::Value::Object(root).to_string();
        let parsed = parse_extraction_output(&reply, &[&declared]);
        for (schema_id, events) in &parsed.per_schema {
            assert_eq!(schema_id, "quake", "round {round}: leaked schema");
            for e in events {
                for key in e.values.keys() {
                    assert!(
                        declared.base.has_argument(key),
                        "round {round}: leaked argument {key}"
                    );
                }
            }
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("PASS: serializer/parser inverse (500 samples) + hallucination filtering (200 adversarial replies, {elapsed:?})");
}
