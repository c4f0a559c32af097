//! HTTP adapters against a local mock server.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use predmap_core::providers::{ChatClient, EmbeddingClient, ProviderConfig, ProviderKind};
use predmap_core::ProviderError;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Request {
    path: String,
    authorization: Option<String>,
    body: Value,
}

/// Serves the queued `(status, body)` replies in order, one per
/// connection, and records what it was sent.
struct MockServer {
    url: String,
    requests: Arc<Mutex<Vec<Request>>>,
}

impl MockServer {
    fn start(replies: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = requests.clone();
        let mut replies: VecDeque<_> = replies.into();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Some((status, body)) = replies.pop_front() else { break };
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
                let mut length = 0;
                let mut authorization = None;
                loop {
                    let mut header = String::new();
                    reader.read_line(&mut header).unwrap();
                    let header = header.trim_end();
                    if header.is_empty() {
                        break;
                    }
                    let (name, value) = header.split_once(':').unwrap();
                    match name.to_ascii_lowercase().as_str() {
                        "content-length" => length = value.trim().parse().unwrap(),
                        "authorization" => authorization = Some(value.trim().to_string()),
                        _ => {}
                    }
                }
                let mut raw = vec![0; length];
                reader.read_exact(&mut raw).unwrap();
                log.lock().unwrap().push(Request {
                    path,
                    authorization,
                    body: serde_json::from_slice(&raw).unwrap_or(Value::Null),
                });
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
        });
        Self { url, requests }
    }

    fn requests(&self) -> Vec<Request> {
        self.requests.lock().unwrap().clone()
    }
}

fn config(url: &str, model: &str, retries: u32) -> ProviderConfig {
    let mut c = ProviderConfig::new(ProviderKind::Http, model);
    c.base_url = Some(format!("{url}/v1/"));
    c.max_retries = retries;
    c.timeout_secs = 5.0;
    c
}

fn chat_body(content: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

#[test]
fn embeddings_follow_the_openai_shape() {
    let body = json!({"data": [
        {"index": 1, "embedding": [0.0, 2.0]},
        {"index": 0, "embedding": [3.0, 4.0]},
    ]})
    .to_string();
    let server = MockServer::start(vec![(200, body)]);
    let client = EmbeddingClient::from_config(&config(&server.url, "embed-model", 0), 0).unwrap();
    let out = client.embed_texts::<f64>(&["treats", "causes"]).unwrap();
    assert_eq!(out[0].values(), &[3.0, 4.0]);
    assert_eq!(out[1].values(), &[0.0, 2.0]);
    assert_eq!(out[0].model_id(), "embed-model");

    let sent = server.requests();
    assert_eq!(sent.len(), 1);
    assert_eq!(sent[0].path, "/v1/embeddings");
    assert_eq!(sent[0].body, json!({"model": "embed-model", "input": ["treats", "causes"]}));
    assert_eq!(sent[0].authorization, None);
}

#[test]
fn chat_sends_one_user_message_at_zero_temperature() {
    let server = MockServer::start(vec![(200, chat_body(r#"{"mapped_predicate": "treats", "negated": "False"}"#))]);
    let client = ChatClient::from_config(&config(&server.url, "gpt-4o", 0)).unwrap();
    let exchange = client.chat_complete("pick one").unwrap();
    assert_eq!(exchange.attempt_count, 1);
    assert_eq!(exchange.parsed_json.unwrap()["mapped_predicate"], "treats");

    let sent = server.requests();
    assert_eq!(sent[0].path, "/v1/chat/completions");
    assert_eq!(sent[0].body["model"], "gpt-4o");
    assert_eq!(sent[0].body["temperature"], 0.0);
    assert_eq!(sent[0].body["messages"], json!([{"role": "user", "content": "pick one"}]));
}

#[test]
fn api_key_is_read_from_the_named_variable() {
    std::env::set_var("PREDMAP_HTTP_TEST_KEY", "sk-test-42");
    let server = MockServer::start(vec![(200, chat_body("ok"))]);
    let mut cfg = config(&server.url, "m", 0);
    cfg.api_key_env = Some("PREDMAP_HTTP_TEST_KEY".into());
    ChatClient::from_config(&cfg).unwrap().chat_complete("hi").unwrap();
    assert_eq!(server.requests()[0].authorization.as_deref(), Some("Bearer sk-test-42"));
}

#[test]
fn missing_key_variable_fails_without_sending() {
    let server = MockServer::start(vec![(200, chat_body("ok"))]);
    let mut cfg = config(&server.url, "m", 0);
    cfg.api_key_env = Some("PREDMAP_HTTP_TEST_UNSET_KEY".into());
    let err = ChatClient::from_config(&cfg).unwrap().chat_complete("hi").unwrap_err();
    assert!(err.to_string().contains("PREDMAP_HTTP_TEST_UNSET_KEY"), "{err}");
    assert!(server.requests().is_empty());
}

#[test]
fn server_errors_are_retried() {
    let server = MockServer::start(vec![
        (503, "busy".into()),
        (500, "{}".into()),
        (200, chat_body("fine")),
    ]);
    let client = ChatClient::from_config(&config(&server.url, "m", 2)).unwrap();
    let exchange = client.chat_complete("hi").unwrap();
    assert_eq!(exchange.attempt_count, 3);
    assert_eq!(exchange.raw_response, "fine");
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn exhausted_retries_report_the_last_status() {
    let server = MockServer::start(vec![(429, "slow down".into()), (401, "bad key".into())]);
    let client = ChatClient::from_config(&config(&server.url, "m", 1)).unwrap();
    match client.chat_complete("hi") {
        Err(ProviderError::RetriesExhausted { attempts, last }) => {
            assert_eq!(attempts, 2);
            assert!(last.contains("401") && last.contains("bad key"), "{last}");
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn short_embedding_batches_are_contract_violations() {
    let body = json!({"data": [{"index": 0, "embedding": [1.0, 0.0]}]}).to_string();
    let server = MockServer::start(vec![(200, body)]);
    let client = EmbeddingClient::from_config(&config(&server.url, "m", 0), 0).unwrap();
    assert!(matches!(
        client.embed_texts::<f64>(&["a", "b"]),
        Err(ProviderError::ContractViolation(_))
    ));
}

#[test]
fn malformed_bodies_are_transport_failures() {
    let server = MockServer::start(vec![(200, "not json".into())]);
    let client = ChatClient::from_config(&config(&server.url, "m", 0)).unwrap();
    assert!(matches!(client.chat_complete("hi"), Err(ProviderError::RetriesExhausted { .. })));
}

#[test]
fn empty_content_is_an_empty_response() {
    let server = MockServer::start(vec![(200, chat_body("   "))]);
    let client = ChatClient::from_config(&config(&server.url, "m", 0)).unwrap();
    assert!(matches!(client.chat_complete("hi"), Err(ProviderError::EmptyResponse)));
}
