//! Exercises the OpenAI-compatible client against a local canned HTTP
//! server: request shape, logprob parsing, 429 retries, and cache
//! transparency (a warm cache reproduces cold-cache results without
//! touching the network).

#![cfg(feature = "live")]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use spuq::gateway::openai::{OpenAiClient, RetryPolicy};
use spuq::gateway::{GatewayError, ModelInput, ProviderProfile, ResponseCache, TextGenerator};

/// Serves canned HTTP responses; one response per request, in order, then
/// repeats the last one.
fn spawn_server(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind local port");
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, body) = responses
                .get(n)
                .unwrap_or(responses.last().unwrap())
                .clone();
            let mut reader = BufReader::new(stream);
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let lower = line.to_lowercase();
                if let Some(rest) = lower.strip_prefix("content-length:") {
                    content_length = rest.trim().parse().unwrap_or(0);
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0u8; content_length];
            let _ = reader.read_exact(&mut payload);
            let mut stream = reader.into_inner();
            let reason = if status == 200 {
                "OK"
            } else {
                "Too Many Requests"
            };
            let response = format!(
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n\
                 Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (format!("http://{addr}/v1"), hits)
}

fn chat_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{ "message": { "content": text } }]
    })
    .to_string()
}

#[test]
fn client_parses_a_chat_completion() {
    let (endpoint, hits) = spawn_server(vec![(200, chat_body("Hello there"))]);
    let client = OpenAiClient::new(endpoint, "test-model", None, ProviderProfile::chat("t"));
    let sample = client
        .generate(&ModelInput::new("Say hello", 0.7), 0)
        .unwrap();
    assert_eq!(sample.text, "Hello there");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn rate_limits_are_retried_and_recover() {
    let (endpoint, hits) = spawn_server(vec![
        (429, "{\"error\": \"slow down\"}".into()),
        (200, chat_body("eventually")),
    ]);
    let client = OpenAiClient::new(endpoint, "test-model", None, ProviderProfile::chat("t"))
        .with_retry(RetryPolicy {
            attempts: 3,
            initial_backoff: Duration::from_millis(1),
        });
    let sample = client.generate(&ModelInput::new("q", 0.7), 0).unwrap();
    assert_eq!(sample.text, "eventually");
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn logprobs_flow_through_when_supported() {
    let body = serde_json::json!({
        "choices": [{
            "message": { "content": "sure" },
            "logprobs": { "content": [
                { "token": "s", "logprob": -0.1 },
                { "token": "ure", "logprob": -0.3 },
            ]}
        }]
    })
    .to_string();
    let (endpoint, _) = spawn_server(vec![(200, body)]);
    let profile = ProviderProfile::text("t"); // supports_logprobs = true
    let client = OpenAiClient::new(endpoint, "test-model", None, profile);
    let sample = client
        .generate(&ModelInput::new("q", 0.7).with_logprobs(true), 0)
        .unwrap();
    assert_eq!(sample.token_logprobs, Some(vec![-0.1, -0.3]));

    // A profile without logprob support refuses before dialing out.
    let client = OpenAiClient::new(
        "http://127.0.0.1:1/v1", // unreachable on purpose
        "test-model",
        None,
        ProviderProfile::chat("t"),
    );
    let err = client
        .generate(&ModelInput::new("q", 0.7).with_logprobs(true), 0)
        .unwrap_err();
    assert!(matches!(err, GatewayError::Capability(c) if c == "logprobs"));
}

#[test]
fn warm_cache_reproduces_cold_cache_results_without_network() {
    let dir = tempfile::tempdir().unwrap();
    let (endpoint, hits) = spawn_server(vec![(200, chat_body("cached answer"))]);
    let input = ModelInput::new("What is the answer?", 0.7);

    let cold = {
        let cache = ResponseCache::open(dir.path()).unwrap();
        let client = OpenAiClient::new(
            endpoint.clone(),
            "test-model",
            None,
            ProviderProfile::chat("t"),
        )
        .with_cache(Some(cache));
        let first = client.generate(&input, 0).unwrap();
        // Immediate re-ask is served from cache.
        let second = client.generate(&input, 0).unwrap();
        assert_eq!(first, second);
        // A distinct ordinal is a distinct draw and goes to the network.
        let _third = client.generate(&input, 1).unwrap();
        first
    };
    assert_eq!(
        hits.load(Ordering::SeqCst),
        2,
        "ordinals 0 and 1 each hit the server once"
    );

    // A fresh client over the same cache directory never dials out.
    let cache = ResponseCache::open(dir.path()).unwrap();
    let client = OpenAiClient::new(
        "http://127.0.0.1:1/v1", // unreachable: any network use would fail
        "test-model",
        None,
        ProviderProfile::chat("t"),
    )
    .with_cache(Some(cache));
    let warm = client.generate(&input, 0).unwrap();
    assert_eq!(
        warm, cold,
        "warm-cache result identical to the cold-cache result"
    );
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}
