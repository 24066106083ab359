//! JSON-over-HTTP backends in the common completion/embedding shape.
//!
//! Request/response bodies follow the de-facto endpoint conventions:
//!
//! - generation: `POST {prompt, max_tokens, temperature, stop}` ->
//!   `{"choices": [{"text": ...}]}`
//! - embedding:  `POST {input: [...]}` -> `{"data": [{"embedding": [...]}]}`
//! - rerank:     `POST {query, documents: [...]}` -> `{"scores": [...]}`
//!
//! Auth tokens are read from the env var named in the config and sent as a
//! bearer header; the value is never logged. 4xx auth/quota statuses map to
//! [`GatewayError::BackendRefused`] (not retried); network errors, timeouts,
//! and 5xx map to [`GatewayError::Transport`] (retried by the wrappers).

use super::{BackendConfig, GatewayError, GenerationBackend, GenerationRequest, RerankBackend};
use serde::Deserialize;
use serde_json::json;
use std::time::Duration;

struct HttpClient {
    client: reqwest::blocking::Client,
    endpoint: String,
    auth_token: Option<String>,
    id: String,
}

impl HttpClient {
    fn new(config: &BackendConfig) -> Result<Self, GatewayError> {
        let auth_token = match &config.auth_token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::InvalidConfig(format!("auth token env var {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GatewayError::InvalidConfig(format!("http client: {e}")))?;
        Ok(HttpClient {
            client,
            endpoint: config.endpoint.clone(),
            auth_token,
            id: config.endpoint.clone(),
        })
    }

    fn post(&self, body: serde_json::Value) -> Result<serde_json::Value, GatewayError> {
        let mut request = self.client.post(&self.endpoint).json(&body);
        if let Some(token) = &self.auth_token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| GatewayError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = response.status();
        if status == reqwest::StatusCode::UNAUTHORIZED
            || status == reqwest::StatusCode::FORBIDDEN
            || status == reqwest::StatusCode::TOO_MANY_REQUESTS
        {
            return Err(GatewayError::BackendRefused(format!(
                "{} from {}",
                status, self.endpoint
            )));
        }
        if !status.is_success() {
            return Err(GatewayError::Transport {
                attempts: 1,
                message: format!("{} from {}", status, self.endpoint),
            });
        }
        response.json().map_err(|e| GatewayError::Transport {
            attempts: 1,
            message: format!("invalid json body: {e}"),
        })
    }
}

pub struct HttpGeneration {
    http: HttpClient,
}

impl HttpGeneration {
    pub fn new(config: &BackendConfig) -> Result<Self, GatewayError> {
        Ok(HttpGeneration {
            http: HttpClient::new(config)?,
        })
    }
}

#[derive(Deserialize)]
struct CompletionChoice {
    text: String,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<CompletionChoice>,
}

impl GenerationBackend for HttpGeneration {
    fn id(&self) -> &str {
        &self.http.id
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        let body = self.http.post(json!({
            "prompt": request.prompt,
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
            "stop": request.stop_sequences,
        }))?;
        let parsed: CompletionBody =
            serde_json::from_value(body).map_err(|e| GatewayError::Transport {
                attempts: 1,
                message: format!("unexpected completion shape: {e}"),
            })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.text)
            .ok_or_else(|| GatewayError::BackendRefused("empty choices array".into()))
    }
}

pub struct HttpEmbedding {
    http: HttpClient,
}

impl HttpEmbedding {
    pub fn new(config: &BackendConfig) -> Result<Self, GatewayError> {
        Ok(HttpEmbedding {
            http: HttpClient::new(config)?,
        })
    }
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct EmbeddingBody {
    data: Vec<EmbeddingDatum>,
}

impl super::EmbeddingBackend for HttpEmbedding {
    fn id(&self) -> &str {
        &self.http.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        let body = self.http.post(json!({ "input": texts }))?;
        let parsed: EmbeddingBody =
            serde_json::from_value(body).map_err(|e| GatewayError::Transport {
                attempts: 1,
                message: format!("unexpected embedding shape: {e}"),
            })?;
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

pub struct HttpRerank {
    http: HttpClient,
}

impl HttpRerank {
    pub fn new(config: &BackendConfig) -> Result<Self, GatewayError> {
        Ok(HttpRerank {
            http: HttpClient::new(config)?,
        })
    }
}

#[derive(Deserialize)]
struct RerankBody {
    scores: Vec<f64>,
}

impl RerankBackend for HttpRerank {
    fn id(&self) -> &str {
        &self.http.id
    }

    fn score(&self, query: &str, documents: &[String]) -> Result<Vec<f64>, GatewayError> {
        let body = self.http.post(json!({
            "query": query,
            "documents": documents,
        }))?;
        let parsed: RerankBody =
            serde_json::from_value(body).map_err(|e| GatewayError::Transport {
                attempts: 1,
                message: format!("unexpected rerank shape: {e}"),
            })?;
        Ok(parsed.scores)
    }
}
