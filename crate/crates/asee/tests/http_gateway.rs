//! HTTP backend tests against a scripted loopback server: wire shapes,
//! bearer auth, retry-on-5xx, and refusal handling.

use asee::gateway::{
    BackendConfig, BackendKind, Embedder, GenerationRequest, Reranker, RetryPolicy, TextGenerator,
};
use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

/// One-shot HTTP server: answers `responses.len()` requests with the
/// scripted (status, body) pairs and records each request's head.
fn spawn_server(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1/run", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let seen_writer = Arc::clone(&seen);
    std::thread::spawn(move || {
        for (status, body) in responses {
            let (mut conn, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            // Read until the full header block plus content-length body.
            loop {
                let n = conn.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                if let Some(header_end) = find_header_end(&buf) {
                    let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
                    let content_length = head
                        .lines()
                        .find_map(|l| l.to_lowercase().strip_prefix("content-length:").map(str::trim).map(String::from))
                        .and_then(|v| v.parse::<usize>().ok())
                        .unwrap_or(0);
                    if buf.len() >= header_end + 4 + content_length {
                        seen_writer.lock().unwrap().push(head);
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            let reason = if status == 200 { "OK" } else { "ERR" };
            let reply = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            conn.write_all(reply.as_bytes()).unwrap();
        }
    });
    (endpoint, seen)
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

fn http_config(kind: BackendKind, endpoint: &str) -> BackendConfig {
    BackendConfig {
        kind,
        endpoint: endpoint.to_string(),
        auth_token_env: None,
        max_in_flight: 2,
        retry_limit: 2,
        timeout_ms: 5_000,
        prompt_cap_chars: 16_000,
    }
}

#[test]
fn generation_round_trip_with_bearer_auth() {
    let (endpoint, seen) = spawn_server(vec![(
        200,
        r#"{"choices": [{"text": "generated text"}]}"#.to_string(),
    )]);
    std::env::set_var("ASEE_TEST_HTTP_TOKEN", "sekrit-token");
    let mut config = http_config(BackendKind::Generation, &endpoint);
    config.auth_token_env = Some("ASEE_TEST_HTTP_TOKEN".to_string());
    let generator = TextGenerator::from_config(&config).unwrap();
    let reply = generator
        .generate(&GenerationRequest::new("say something"))
        .unwrap();
    assert_eq!(reply, "generated text");
    let heads = seen.lock().unwrap();
    assert!(
        heads[0].to_lowercase().contains("authorization: bearer sekrit-token"),
        "missing bearer header in: {}",
        heads[0]
    );
}

#[test]
fn transient_500_is_retried_then_succeeds() {
    let (endpoint, seen) = spawn_server(vec![
        (500, r#"{"error": "boom"}"#.to_string()),
        (200, r#"{"choices": [{"text": "second try"}]}"#.to_string()),
    ]);
    let generator = TextGenerator::from_config(&http_config(BackendKind::Generation, &endpoint))
        .unwrap()
        .with_retry_policy(RetryPolicy::immediate());
    let reply = generator.generate(&GenerationRequest::new("p")).unwrap();
    assert_eq!(reply, "second try");
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn auth_failure_is_refused_without_retry() {
    let (endpoint, seen) = spawn_server(vec![(401, r#"{"error": "no"}"#.to_string())]);
    let generator = TextGenerator::from_config(&http_config(BackendKind::Generation, &endpoint))
        .unwrap()
        .with_retry_policy(RetryPolicy::immediate());
    let err = generator
        .generate(&GenerationRequest::new("p"))
        .unwrap_err();
    assert!(
        matches!(err, asee::gateway::GatewayError::BackendRefused(_)),
        "got {err:?}"
    );
    // Give any erroneous retry a moment to land, then confirm one call.
    std::thread::sleep(std::time::Duration::from_millis(50));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn embedding_response_is_normalized_at_the_gateway() {
    let (endpoint, _) = spawn_server(vec![(
        200,
        r#"{"data": [{"embedding": [3.0, 4.0]}, {"embedding": [0.0, 2.0]}]}"#.to_string(),
    )]);
    let embedder = Embedder::from_config(&http_config(BackendKind::Embedding, &endpoint)).unwrap();
    let vectors = embedder
        .embed(&["one".to_string(), "two".to_string()])
        .unwrap();
    assert_eq!(vectors[0].values, vec![0.6, 0.8]);
    assert_eq!(vectors[1].values, vec![0.0, 1.0]);
    assert_eq!(vectors[0].dimension, 2);
}

#[test]
fn rerank_scores_pass_through() {
    let (endpoint, _) = spawn_server(vec![(200, r#"{"scores": [0.2, 0.9]}"#.to_string())]);
    let reranker = Reranker::from_config(&http_config(BackendKind::Generation, &endpoint)).unwrap();
    let scores = reranker
        .score("query", &["doc a".to_string(), "doc b".to_string()])
        .unwrap();
    assert_eq!(scores, vec![0.2, 0.9]);
}

#[test]
fn missing_auth_env_var_fails_at_construction() {
    let mut config = http_config(BackendKind::Generation, "http://127.0.0.1:1/v1");
    config.auth_token_env = Some("ASEE_TEST_DEFINITELY_UNSET_VAR".to_string());
    assert!(TextGenerator::from_config(&config).is_err());
}
