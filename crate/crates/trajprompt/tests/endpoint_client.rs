mod common;

use std::time::Duration;

use common::{chat_reply, completion_reply, embeddings_reply, MockServer, Reply};
use serde_json::json;
use trajprompt::endpoint::{CompletionApi, CompletionClient, EndpointConfig, HttpClient, RemoteEmbedder};
use trajprompt::Error;
use trajprompt_core::embedding::EmbeddingBackend;

fn config(server: &MockServer, route: &str) -> EndpointConfig {
    EndpointConfig {
        url: format!("{}{route}", server.base_url),
        model: "test-model".into(),
        initial_backoff_ms: 5,
        timeout_ms: 5_000,
        ..Default::default()
    }
}

#[test]
fn embeddings_keep_input_order_across_batches() {
    let server = MockServer::start(|_, req| embeddings_reply(req, 16));
    let cfg = EndpointConfig { batch_size: 3, concurrency: 3, ..config(&server, "/v1/embeddings") };
    let emb = RemoteEmbedder::new(cfg, 16).unwrap();
    let texts: Vec<String> = (0..10).map(|i| format!("trajectory text number {i}")).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let got = emb.embed(&refs).unwrap();
    let local = trajprompt_core::HashingEmbedder::new(16, 1);
    for (t, v) in refs.iter().zip(&got) {
        assert_eq!(v, &local.embed_one(t).unwrap());
    }
    assert_eq!(server.hits(), 4);
    let reqs = server.requests.lock().unwrap();
    assert!(reqs.iter().all(|r| r.body["model"] == "test-model" && r.path == "/v1/embeddings"));
}

#[test]
fn out_of_order_indices_are_reordered() {
    let server = MockServer::start(|_, _| {
        Reply::ok(json!({"data": [
            {"index": 1, "embedding": [0.0, 1.0]},
            {"index": 0, "embedding": [1.0, 0.0]},
        ]}))
    });
    let emb = RemoteEmbedder::new(config(&server, "/e"), 2).unwrap();
    assert_eq!(emb.embed(&["a", "b"]).unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
}

#[test]
fn rate_limit_then_success_retries_once() {
    let server = MockServer::start(|n, req| if n == 0 { Reply::status(429) } else { embeddings_reply(req, 8) });
    let client = HttpClient::new(config(&server, "/e")).unwrap();
    let resp = client.post_json::<serde_json::Value>(&json!({"input": ["x"], "model": "m"})).unwrap();
    assert_eq!(resp.retries, 1);
    assert_eq!(server.hits(), 2);
    let reqs = server.requests.lock().unwrap();
    let ids: Vec<_> = reqs.iter().map(|r| r.header("x-request-id").unwrap().to_string()).collect();
    assert_eq!(ids[0], ids[1], "one request id across retries");
}

#[test]
fn dimension_mismatch_is_consistency_error() {
    let server = MockServer::start(|_, req| embeddings_reply(req, 512));
    let emb = RemoteEmbedder::new(config(&server, "/e"), 256).unwrap();
    assert!(matches!(emb.embed(&["x"]), Err(Error::Consistency(_))));
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(|_, _| Reply::status(400));
    let client = HttpClient::new(config(&server, "/e")).unwrap();
    let err = client.post_json::<serde_json::Value>(&json!({})).unwrap_err();
    assert!(matches!(err, Error::Transport { status: Some(400), .. }));
    assert_eq!(server.hits(), 1);
}

#[test]
fn persistent_server_errors_exhaust_attempts() {
    let server = MockServer::start(|_, _| Reply::status(503));
    let client = HttpClient::new(EndpointConfig { max_attempts: 4, ..config(&server, "/e") }).unwrap();
    assert!(matches!(client.post_json::<serde_json::Value>(&json!({})), Err(Error::Transport { status: Some(503), .. })));
    assert_eq!(server.hits(), 4);
}

#[test]
fn bearer_token_comes_from_named_env_var() {
    std::env::set_var("TRAJPROMPT_TEST_TOKEN_A", "s3cret");
    let server = MockServer::start(|_, _| completion_reply("POI id 3"));
    let cfg = EndpointConfig { api_key_env: "TRAJPROMPT_TEST_TOKEN_A".into(), ..config(&server, "/c") };
    CompletionClient::new(cfg, CompletionApi::Completions, 48).unwrap().complete("q").unwrap();
    let reqs = server.requests.lock().unwrap();
    assert_eq!(reqs[0].header("authorization"), Some("Bearer s3cret"));
}

#[test]
fn completions_request_is_greedy_and_capped() {
    let server = MockServer::start(|_, _| completion_reply(" At 2012-05-01 09:00, user 1 will visit POI id 42."));
    let c = CompletionClient::new(config(&server, "/v1/completions"), CompletionApi::Completions, 48).unwrap();
    let text = c.complete("<question> ...").unwrap();
    assert!(!text.is_empty());
    let reqs = server.requests.lock().unwrap();
    assert_eq!(reqs[0].body["temperature"], 0);
    assert_eq!(reqs[0].body["max_tokens"], 48);
    assert_eq!(reqs[0].body["prompt"], "<question> ...");
}

#[test]
fn chat_api_reads_message_content() {
    let server = MockServer::start(|_, _| chat_reply("POI id 7"));
    let c = CompletionClient::new(config(&server, "/v1/chat/completions"), CompletionApi::Chat, 16).unwrap();
    assert_eq!(c.complete("hi").unwrap(), "POI id 7");
    let reqs = server.requests.lock().unwrap();
    assert_eq!(reqs[0].body["messages"][0]["content"], "hi");
}

#[test]
fn two_timeouts_then_success() {
    let server = MockServer::start(|n, _| {
        let r = completion_reply("POI id 5");
        if n < 2 {
            r.delayed(Duration::from_millis(800))
        } else {
            r
        }
    });
    let cfg = EndpointConfig { timeout_ms: 300, ..config(&server, "/c") };
    let c = CompletionClient::new(cfg, CompletionApi::Completions, 48).unwrap();
    assert_eq!(c.complete("q").unwrap(), "POI id 5");
    assert_eq!(server.hits(), 3);
}

#[test]
fn invalid_config_rejected() {
    assert!(matches!(HttpClient::new(EndpointConfig::default()), Err(Error::Config(_))));
}
