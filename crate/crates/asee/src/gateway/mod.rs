//! Uniform access to text-generation, embedding, and reranking backends.
//!
//! Every other module calls models through the wrappers here
//! ([`TextGenerator`], [`Embedder`], [`Reranker`]), which add the service
//! hygiene a backend should not have to care about: per-backend bounded
//! concurrency, retry with exponential backoff on transient transport
//! failures, prompt-size enforcement, and L2 normalization of every
//! embedding at the boundary (so cosine similarity reduces to a dot
//! product everywhere downstream).
//!
//! A [`BackendConfig`] with endpoint `"mock"` (or `"mock:<script.jsonl>"`
//! for generation) selects the deterministic offline backends in [`mock`];
//! any other endpoint is treated as a JSON-over-HTTP service ([`http`]).

pub mod http;
pub mod mock;

use serde::{Deserialize, Serialize};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;

pub use mock::{HashingEmbedder, MockGeneration, OverlapReranker, MOCK_EMBEDDING_DIMENSION};

/// Default prompt cap in characters; oversized prompts are rejected, never
/// silently truncated.
pub const DEFAULT_PROMPT_CAP_CHARS: usize = 16_000;

/// Default generation parameters, overridable per request.
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;
pub const DEFAULT_TEMPERATURE: f64 = 0.0;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend refused request: {0}")]
    BackendRefused(String),
    #[error("prompt of {len} chars exceeds cap of {cap}")]
    PromptTooLarge { len: usize, cap: usize },
    #[error("embedding input is empty")]
    EmptyInput,
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Generation,
    Embedding,
}

/// Connection settings for one backend.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Service URL, `"mock"`, or `"mock:<script.jsonl>"`.
    pub endpoint: String,
    /// Name of the env var holding the auth token; the value itself is
    /// read lazily and never logged.
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_retry_limit")]
    pub retry_limit: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_prompt_cap")]
    pub prompt_cap_chars: usize,
}

fn default_max_in_flight() -> usize {
    4
}
fn default_retry_limit() -> u32 {
    3
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_prompt_cap() -> usize {
    DEFAULT_PROMPT_CAP_CHARS
}

impl BackendConfig {
    /// A mock backend of the given kind, for tests and offline runs.
    pub fn mock(kind: BackendKind) -> Self {
        BackendConfig {
            kind,
            endpoint: "mock".to_string(),
            auth_token_env: None,
            max_in_flight: default_max_in_flight(),
            retry_limit: default_retry_limit(),
            timeout_ms: default_timeout_ms(),
            prompt_cap_chars: default_prompt_cap(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_in_flight < 1 {
            return Err(GatewayError::InvalidConfig(
                "max_in_flight must be >= 1".into(),
            ));
        }
        if self.retry_limit > 10 {
            return Err(GatewayError::InvalidConfig(
                "retry_limit must be <= 10".into(),
            ));
        }
        if self.timeout_ms == 0 {
            return Err(GatewayError::InvalidConfig(
                "timeout_ms must be positive".into(),
            ));
        }
        if self.endpoint.is_empty() {
            return Err(GatewayError::InvalidConfig("endpoint is empty".into()));
        }
        Ok(())
    }

    fn is_mock(&self) -> bool {
        self.endpoint == "mock" || self.endpoint.starts_with("mock:")
    }
}

/// One text-generation call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
            stop_sequences: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_output_tokens must be >= 1".into(),
            ));
        }
        if self.temperature < 0.0 || !self.temperature.is_finite() {
            return Err(GatewayError::InvalidRequest(
                "temperature must be a non-negative finite number".into(),
            ));
        }
        Ok(())
    }
}

/// An L2-normalized embedding with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub dimension: usize,
    pub backend_id: String,
}

/// cos(a, b) = dot / (|a||b|), clamped into [-1, 1] against rounding.
/// For gateway-normalized vectors this is just the dot product.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, GatewayError> {
    if a.dimension != b.dimension {
        return Err(GatewayError::DimensionMismatch(a.dimension, b.dimension));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let na: f64 = a.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Raw (pre-normalization) text generation service.
pub trait GenerationBackend: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError>;
}

/// Raw embedding service; the [`Embedder`] wrapper normalizes its output.
pub trait EmbeddingBackend: Send + Sync {
    fn id(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

/// Second-stage relevance scorer over (query, document) pairs.
pub trait RerankBackend: Send + Sync {
    fn id(&self) -> &str;
    fn score(&self, query: &str, documents: &[String]) -> Result<Vec<f64>, GatewayError>;
}

/// Counting semaphore bounding in-flight requests per backend.
struct Limiter {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Limiter {
    fn new(permits: usize) -> Self {
        Limiter {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> LimiterGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        LimiterGuard { limiter: self }
    }
}

struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        *self.limiter.permits.lock().unwrap() += 1;
        self.limiter.available.notify_one();
    }
}

/// Exponential backoff: base 250 ms, doubling per attempt, jitter +/-20%.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub base_ms: u64,
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            base_ms: 250,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    /// Zero-delay policy so tests exercise retry logic without sleeping.
    pub fn immediate() -> Self {
        RetryPolicy {
            base_ms: 0,
            jitter: 0.0,
        }
    }

    fn sleep(&self, attempt: u32) {
        if self.base_ms == 0 {
            return;
        }
        let backoff = self.base_ms.saturating_mul(1u64 << attempt.min(16)) as f64;
        let spread = if self.jitter > 0.0 {
            use rand::Rng;
            rand::thread_rng().gen_range(-self.jitter..=self.jitter)
        } else {
            0.0
        };
        std::thread::sleep(Duration::from_millis((backoff * (1.0 + spread)) as u64));
    }
}

fn retrying<T>(
    retry_limit: u32,
    policy: &RetryPolicy,
    mut call: impl FnMut() -> Result<T, GatewayError>,
) -> Result<T, GatewayError> {
    let mut attempt = 0u32;
    loop {
        match call() {
            Err(GatewayError::Transport { message, .. }) if attempt < retry_limit => {
                log::warn!("transient backend failure (attempt {}): {message}", attempt + 1);
                policy.sleep(attempt);
                attempt += 1;
            }
            Err(GatewayError::Transport { message, .. }) => {
                return Err(GatewayError::Transport {
                    attempts: attempt + 1,
                    message,
                })
            }
            other => return other,
        }
    }
}

/// Generation backend plus concurrency/retry/prompt-cap policy.
pub struct TextGenerator {
    backend: Arc<dyn GenerationBackend>,
    limiter: Limiter,
    retry_limit: u32,
    retry: RetryPolicy,
    prompt_cap: usize,
    max_in_flight: usize,
}

impl TextGenerator {
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        if config.kind != BackendKind::Generation {
            return Err(GatewayError::InvalidConfig(
                "generation gateway requires kind=generation".into(),
            ));
        }
        let backend: Arc<dyn GenerationBackend> = if config.is_mock() {
            Arc::new(MockGeneration::from_endpoint(&config.endpoint)?)
        } else {
            Arc::new(http::HttpGeneration::new(config)?)
        };
        Ok(Self::with_backend(backend, config))
    }

    /// Wraps an arbitrary backend (used by tests to instrument concurrency).
    pub fn with_backend(backend: Arc<dyn GenerationBackend>, config: &BackendConfig) -> Self {
        TextGenerator {
            backend,
            limiter: Limiter::new(config.max_in_flight),
            retry_limit: config.retry_limit,
            retry: RetryPolicy::default(),
            prompt_cap: config.prompt_cap_chars,
            max_in_flight: config.max_in_flight,
        }
    }

    pub fn with_retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.retry = policy;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    pub fn prompt_cap(&self) -> usize {
        self.prompt_cap
    }

    pub fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        request.validate()?;
        let len = request.prompt.chars().count();
        if len > self.prompt_cap {
            return Err(GatewayError::PromptTooLarge {
                len,
                cap: self.prompt_cap,
            });
        }
        let _permit = self.limiter.acquire();
        retrying(self.retry_limit, &self.retry, || {
            self.backend.generate(request)
        })
    }
}

/// Embedding backend plus normalization and dimension pinning.
pub struct Embedder {
    backend: Arc<dyn EmbeddingBackend>,
    limiter: Limiter,
    retry_limit: u32,
    retry: RetryPolicy,
    // First observed dimension; later drift is a backend defect.
    dimension: Mutex<Option<usize>>,
}

impl Embedder {
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        if config.kind != BackendKind::Embedding {
            return Err(GatewayError::InvalidConfig(
                "embedding gateway requires kind=embedding".into(),
            ));
        }
        let backend: Arc<dyn EmbeddingBackend> = if config.is_mock() {
            Arc::new(HashingEmbedder::default())
        } else {
            Arc::new(http::HttpEmbedding::new(config)?)
        };
        Ok(Self::with_backend(backend, config))
    }

    pub fn with_backend(backend: Arc<dyn EmbeddingBackend>, config: &BackendConfig) -> Self {
        Embedder {
            backend,
            limiter: Limiter::new(config.max_in_flight),
            retry_limit: config.retry_limit,
            retry: RetryPolicy::default(),
            dimension: Mutex::new(None),
        }
    }

    pub fn with_retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.retry = policy;
        self
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    /// Embeds every text, in order, one normalized vector per input.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() || texts.iter().any(|t| t.is_empty()) {
            return Err(GatewayError::EmptyInput);
        }
        let raw = {
            let _permit = self.limiter.acquire();
            retrying(self.retry_limit, &self.retry, || self.backend.embed(texts))?
        };
        if raw.len() != texts.len() {
            return Err(GatewayError::BackendRefused(format!(
                "backend returned {} vectors for {} inputs",
                raw.len(),
                texts.len()
            )));
        }
        let mut out = Vec::with_capacity(raw.len());
        for (text, values) in texts.iter().zip(raw) {
            let mut pinned = self.dimension.lock().unwrap();
            match *pinned {
                None => *pinned = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(GatewayError::DimensionMismatch(d, values.len()))
                }
                Some(_) => {}
            }
            drop(pinned);
            out.push(normalize(text, values, self.backend.id()));
        }
        Ok(out)
    }
}

/// L2-normalizes; a degenerate all-zero vector falls back to a
/// deterministic unit basis vector derived from the text so the
/// "never all-zero" contract holds for any input.
fn normalize(text: &str, mut values: Vec<f64>, backend_id: &str) -> EmbeddingVector {
    let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut values {
            *v /= norm;
        }
    } else {
        let bucket = (crate::stablehash::fnv1a64(text.as_bytes()) % values.len().max(1) as u64)
            as usize;
        values[bucket] = 1.0;
    }
    EmbeddingVector {
        dimension: values.len(),
        backend_id: backend_id.to_string(),
        values,
    }
}

/// Rerank backend plus concurrency/retry policy.
pub struct Reranker {
    backend: Arc<dyn RerankBackend>,
    limiter: Limiter,
    retry_limit: u32,
    retry: RetryPolicy,
}

impl Reranker {
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let backend: Arc<dyn RerankBackend> = if config.is_mock() {
            Arc::new(OverlapReranker)
        } else {
            Arc::new(http::HttpRerank::new(config)?)
        };
        Ok(Self::with_backend(backend, config))
    }

    pub fn with_backend(backend: Arc<dyn RerankBackend>, config: &BackendConfig) -> Self {
        Reranker {
            backend,
            limiter: Limiter::new(config.max_in_flight),
            retry_limit: config.retry_limit,
            retry: RetryPolicy::default(),
        }
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn score(&self, query: &str, documents: &[String]) -> Result<Vec<f64>, GatewayError> {
        if documents.is_empty() {
            return Ok(Vec::new());
        }
        let scores = {
            let _permit = self.limiter.acquire();
            retrying(self.retry_limit, &self.retry, || {
                self.backend.score(query, documents)
            })?
        };
        if scores.len() != documents.len() {
            return Err(GatewayError::BackendRefused(format!(
                "reranker returned {} scores for {} documents",
                scores.len(),
                documents.len()
            )));
        }
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;
    use std::sync::atomic::{AtomicI64, AtomicU32, Ordering};

    fn gen_config() -> BackendConfig {
        BackendConfig::mock(BackendKind::Generation)
    }

    #[test]
    fn scripted_mock_echoes_table() {
        let mock = MockGeneration::scripted(BTreeMap::from([("P1".to_string(), "R1".to_string())]));
        let gen = TextGenerator::with_backend(Arc::new(mock), &gen_config());
        assert_eq!(gen.generate(&GenerationRequest::new("P1")).unwrap(), "R1");
    }

    #[test]
    fn unscripted_prompt_falls_back_to_unknown() {
        let gen = TextGenerator::from_config(&gen_config()).unwrap();
        assert_eq!(
            gen.generate(&GenerationRequest::new("never scripted")).unwrap(),
            "UNKNOWN"
        );
    }

    #[test]
    fn prompt_over_cap_rejected_at_boundary() {
        let mut config = gen_config();
        config.prompt_cap_chars = 20_000;
        let gen = TextGenerator::from_config(&config).unwrap();
        // Exactly at the cap passes; one char over is rejected.
        let at_cap = "x".repeat(20_000);
        assert!(gen.generate(&GenerationRequest::new(at_cap)).is_ok());
        let over = "x".repeat(20_001);
        match gen.generate(&GenerationRequest::new(over)) {
            Err(GatewayError::PromptTooLarge { len, cap }) => {
                assert_eq!((len, cap), (20_001, 20_000));
            }
            other => panic!("expected PromptTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn embed_is_deterministic_and_order_preserving() {
        let embedder = Embedder::from_config(&BackendConfig::mock(BackendKind::Embedding)).unwrap();
        let texts = vec!["abc".to_string(), "abc".to_string()];
        let vectors = embedder.embed(&texts).unwrap();
        assert_eq!(vectors.len(), 2);
        assert_eq!(vectors[0], vectors[1]);
        let again = embedder.embed(&texts).unwrap();
        assert_eq!(vectors, again);
    }

    #[test]
    fn embed_output_is_unit_norm() {
        let embedder = Embedder::from_config(&BackendConfig::mock(BackendKind::Embedding)).unwrap();
        let v = &embedder.embed(&["abc".to_string()]).unwrap()[0];
        let norm = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-9, "norm was {norm}");
    }

    #[test]
    fn embed_rejects_empty_inputs() {
        let embedder = Embedder::from_config(&BackendConfig::mock(BackendKind::Embedding)).unwrap();
        assert!(matches!(embedder.embed(&[]), Err(GatewayError::EmptyInput)));
        assert!(matches!(
            embedder.embed(&["ok".to_string(), String::new()]),
            Err(GatewayError::EmptyInput)
        ));
    }

    #[test]
    fn cosine_self_similarity_is_one() {
        let embedder = Embedder::from_config(&BackendConfig::mock(BackendKind::Embedding)).unwrap();
        let v = &embedder.embed(&["quake magnitude".to_string()]).unwrap()[0];
        assert!((cosine_similarity(v, v).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cosine_orthogonal_and_diagonal() {
        let mk = |values: Vec<f64>| EmbeddingVector {
            dimension: values.len(),
            backend_id: "test".into(),
            values,
        };
        let e1 = mk(vec![1.0, 0.0]);
        let e2 = mk(vec![0.0, 1.0]);
        assert_eq!(cosine_similarity(&e1, &e2).unwrap(), 0.0);
        // Hand arithmetic: cos([1,1],[1,0]) = 1/sqrt(2).
        let d = mk(vec![1.0, 1.0]);
        assert!((cosine_similarity(&d, &e1).unwrap() - 0.7071).abs() <= 1e-4);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let a = EmbeddingVector {
            values: vec![1.0, 0.0],
            dimension: 2,
            backend_id: "t".into(),
        };
        let b = EmbeddingVector {
            values: vec![1.0, 0.0, 0.0],
            dimension: 3,
            backend_id: "t".into(),
        };
        assert!(matches!(
            cosine_similarity(&a, &b),
            Err(GatewayError::DimensionMismatch(2, 3))
        ));
    }

    /// Independent scalar re-implementation of the hashing scheme, kept
    /// deliberately naive: hash every whitespace-ish token, accumulate
    /// +/-1 into buckets, normalize, then take plain dot products.
    fn oracle_hash_embed(text: &str) -> Vec<f64> {
        let mut v = vec![0.0f64; MOCK_EMBEDDING_DIMENSION];
        for token in crate::tokenize::tokenize(text) {
            let h = crate::stablehash::fnv1a64(token.as_bytes());
            let bucket = (h % MOCK_EMBEDDING_DIMENSION as u64) as usize;
            if (h >> 32) & 1 == 0 {
                v[bucket] += 1.0;
            } else {
                v[bucket] -= 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / norm).collect()
    }

    fn oracle_cosine(a: &str, b: &str) -> f64 {
        oracle_hash_embed(a)
            .iter()
            .zip(oracle_hash_embed(b))
            .map(|(x, y)| x * y)
            .sum()
    }

    #[test]
    fn hashing_embedder_preserves_topical_similarity() {
        // Oracle values computed with the scalar implementation above:
        // shared-topic pair must beat the unrelated pair.
        let near = oracle_cosine("earthquake magnitude location", "earthquake magnitude depth");
        let far = oracle_cosine("earthquake magnitude location", "company merger acquisition");
        assert!(near > far, "oracle disagrees: near={near} far={far}");

        let embedder = Embedder::from_config(&BackendConfig::mock(BackendKind::Embedding)).unwrap();
        let texts = vec![
            "earthquake magnitude location".to_string(),
            "earthquake magnitude depth".to_string(),
            "company merger acquisition".to_string(),
        ];
        let vs = embedder.embed(&texts).unwrap();
        let near_impl = cosine_similarity(&vs[0], &vs[1]).unwrap();
        let far_impl = cosine_similarity(&vs[0], &vs[2]).unwrap();
        assert!(near_impl > far_impl);
        assert!((near_impl - near).abs() <= 1e-12);
        assert!((far_impl - far).abs() <= 1e-12);
    }

    struct CountingBackend {
        current: AtomicI64,
        peak: AtomicI64,
    }

    impl GenerationBackend for CountingBackend {
        fn id(&self) -> &str {
            "counting"
        }
        fn generate(&self, _request: &GenerationRequest) -> Result<String, GatewayError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok("ok".into())
        }
    }

    #[test]
    fn in_flight_requests_never_exceed_limit() {
        let backend = Arc::new(CountingBackend {
            current: AtomicI64::new(0),
            peak: AtomicI64::new(0),
        });
        let mut config = gen_config();
        config.max_in_flight = 3;
        let gen = Arc::new(TextGenerator::with_backend(backend.clone(), &config));
        std::thread::scope(|scope| {
            for _ in 0..16 {
                let gen = Arc::clone(&gen);
                scope.spawn(move || {
                    gen.generate(&GenerationRequest::new("p")).unwrap();
                });
            }
        });
        assert!(backend.peak.load(Ordering::SeqCst) <= 3);
        assert!(backend.peak.load(Ordering::SeqCst) >= 1);
    }

    struct FlakyBackend {
        calls: AtomicU32,
        fail_first: u32,
    }

    impl GenerationBackend for FlakyBackend {
        fn id(&self) -> &str {
            "flaky"
        }
        fn generate(&self, _request: &GenerationRequest) -> Result<String, GatewayError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(GatewayError::Transport {
                    attempts: 1,
                    message: "connection reset".into(),
                })
            } else {
                Ok("recovered".into())
            }
        }
    }

    #[test]
    fn transient_failures_retried_up_to_limit() {
        let backend = Arc::new(FlakyBackend {
            calls: AtomicU32::new(0),
            fail_first: 2,
        });
        let mut config = gen_config();
        config.retry_limit = 3;
        let gen = TextGenerator::with_backend(backend.clone(), &config)
            .with_retry_policy(RetryPolicy::immediate());
        assert_eq!(gen.generate(&GenerationRequest::new("p")).unwrap(), "recovered");
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retries_exhausted_surfaces_transport_error() {
        let backend = Arc::new(FlakyBackend {
            calls: AtomicU32::new(0),
            fail_first: u32::MAX,
        });
        let mut config = gen_config();
        config.retry_limit = 2;
        let gen = TextGenerator::with_backend(backend.clone(), &config)
            .with_retry_policy(RetryPolicy::immediate());
        match gen.generate(&GenerationRequest::new("p")) {
            Err(GatewayError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected transport error, got {other:?}"),
        }
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn refusals_are_not_retried() {
        struct Refusing(AtomicU32);
        impl GenerationBackend for Refusing {
            fn id(&self) -> &str {
                "refusing"
            }
            fn generate(&self, _r: &GenerationRequest) -> Result<String, GatewayError> {
                self.0.fetch_add(1, Ordering::SeqCst);
                Err(GatewayError::BackendRefused("bad token".into()))
            }
        }
        let backend = Arc::new(Refusing(AtomicU32::new(0)));
        let gen = TextGenerator::with_backend(backend.clone(), &gen_config())
            .with_retry_policy(RetryPolicy::immediate());
        assert!(matches!(
            gen.generate(&GenerationRequest::new("p")),
            Err(GatewayError::BackendRefused(_))
        ));
        assert_eq!(backend.0.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn mock_outputs_identical_across_thread_schedules() {
        let embedder =
            Arc::new(Embedder::from_config(&BackendConfig::mock(BackendKind::Embedding)).unwrap());
        let texts: Vec<String> = (0..8).map(|i| format!("sample text {i}")).collect();
        let baseline = embedder.embed(&texts).unwrap();
        std::thread::scope(|scope| {
            for _ in 0..4 {
                let embedder = Arc::clone(&embedder);
                let texts = texts.clone();
                let baseline = baseline.clone();
                scope.spawn(move || {
                    assert_eq!(embedder.embed(&texts).unwrap(), baseline);
                });
            }
        });
    }

    #[test]
    fn embed_order_preserved_under_permutation() {
        let embedder = Embedder::from_config(&BackendConfig::mock(BackendKind::Embedding)).unwrap();
        let texts = vec!["alpha".to_string(), "beta".to_string(), "gamma".to_string()];
        let fwd = embedder.embed(&texts).unwrap();
        let rev_texts: Vec<String> = texts.iter().rev().cloned().collect();
        let rev = embedder.embed(&rev_texts).unwrap();
        assert_eq!(fwd[0], rev[2]);
        assert_eq!(fwd[1], rev[1]);
        assert_eq!(fwd[2], rev[0]);
    }
}
