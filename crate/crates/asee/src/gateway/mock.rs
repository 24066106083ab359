//! Deterministic offline backends.
//!
//! All three mocks are pure functions of their inputs (no clocks, no RNG,
//! no interior mutability), so pipelines driven by them are bit-reproducible
//! across runs and thread schedules.

use super::{GatewayError, GenerationBackend, GenerationRequest, RerankBackend};
use crate::stablehash::fnv1a64;
use crate::tokenize::tokenize;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

/// Dimension of the mock feature-hashing embedder.
pub const MOCK_EMBEDDING_DIMENSION: usize = 64;

/// Reply used when a prompt is not in the script.
pub const MOCK_FALLBACK_REPLY: &str = "UNKNOWN";

/// Table-driven generation mock: exact prompt match returns the scripted
/// reply, anything else returns [`MOCK_FALLBACK_REPLY`].
pub struct MockGeneration {
    script: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct ScriptLine {
    prompt: String,
    reply: String,
}

impl MockGeneration {
    pub fn scripted(script: BTreeMap<String, String>) -> Self {
        MockGeneration { script }
    }

    pub fn empty() -> Self {
        MockGeneration {
            script: BTreeMap::new(),
        }
    }

    /// Loads a JSONL script of `{"prompt": ..., "reply": ...}` records.
    pub fn from_script_file(path: &Path) -> Result<Self, GatewayError> {
        let file = std::fs::File::open(path).map_err(|e| {
            GatewayError::InvalidConfig(format!("mock script {}: {e}", path.display()))
        })?;
        let mut script = BTreeMap::new();
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| {
                GatewayError::InvalidConfig(format!("mock script {}: {e}", path.display()))
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptLine = serde_json::from_str(&line).map_err(|e| {
                GatewayError::InvalidConfig(format!(
                    "mock script {} line {}: {e}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            script.insert(entry.prompt, entry.reply);
        }
        Ok(MockGeneration { script })
    }

    /// `"mock"` is an empty script; `"mock:<path>"` loads one from a file.
    pub fn from_endpoint(endpoint: &str) -> Result<Self, GatewayError> {
        match endpoint.strip_prefix("mock:") {
            Some(path) if !path.is_empty() => Self::from_script_file(Path::new(path)),
            _ => Ok(Self::empty()),
        }
    }
}

impl GenerationBackend for MockGeneration {
    fn id(&self) -> &str {
        "mock-generation"
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        Ok(self
            .script
            .get(&request.prompt)
            .cloned()
            .unwrap_or_else(|| MOCK_FALLBACK_REPLY.to_string()))
    }
}

/// Feature-hashing embedder: each token hashes to one of 64 buckets with a
/// +/-1 sign. Language-agnostic (CJK handled by the shared tokenizer) and
/// gives non-degenerate similarity structure: texts sharing tokens share
/// bucket mass.
pub struct HashingEmbedder {
    dimension: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder {
            dimension: MOCK_EMBEDDING_DIMENSION,
        }
    }
}

impl HashingEmbedder {
    pub fn with_dimension(dimension: usize) -> Self {
        assert!(dimension >= 1);
        HashingEmbedder { dimension }
    }
}

impl super::EmbeddingBackend for HashingEmbedder {
    fn id(&self) -> &str {
        "mock-hashing-embedder"
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut values = vec![0.0f64; self.dimension];
                for token in tokenize(text) {
                    let h = fnv1a64(token.as_bytes());
                    let bucket = (h % self.dimension as u64) as usize;
                    // Sign comes from a bit disjoint from the bucket bits.
                    if (h >> 32) & 1 == 0 {
                        values[bucket] += 1.0;
                    } else {
                        values[bucket] -= 1.0;
                    }
                }
                values
            })
            .collect())
    }
}

/// Token-overlap reranker: score = |query tokens ∩ document tokens|.
pub struct OverlapReranker;

impl RerankBackend for OverlapReranker {
    fn id(&self) -> &str {
        "mock-overlap-reranker"
    }

    fn score(&self, query: &str, documents: &[String]) -> Result<Vec<f64>, GatewayError> {
        let query_tokens: std::collections::BTreeSet<String> =
            tokenize(query).into_iter().collect();
        Ok(documents
            .iter()
            .map(|doc| {
                let doc_tokens: std::collections::BTreeSet<String> =
                    tokenize(doc).into_iter().collect();
                query_tokens.intersection(&doc_tokens).count() as f64
            })
            .collect())
    }
}
