//! HTTP backend against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;

use extagents_core::backend::{BackendConfig, BackendError, CompletionUsage, HttpBackend, ModelClient};
use extagents_core::knowledge::TokenCounter;

/// Serves one scripted (status, body) per connection, in order, and returns
/// the request bodies it saw.
fn scripted(replies: Vec<(u16, &'static str)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line.trim_end().is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            let mut w = stream;
            write!(
                w,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        bodies
    });
    (base, handle)
}

fn client(base: &str, attempts: u32) -> (ModelClient, Arc<HttpBackend>) {
    let mut cfg = BackendConfig::http(base, "test-model", 1000);
    cfg.retry.max_attempts = attempts;
    cfg.retry.initial_backoff_ms = 1;
    let backend = Arc::new(HttpBackend::with_api_key(&cfg, None).unwrap());
    (ModelClient::new(cfg, backend.clone()), backend)
}

const OK: &str = r#"{"choices":[{"message":{"content":"fine"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}}"#;

#[test]
fn retries_server_errors_then_succeeds() {
    let (base, server) = scripted(vec![(503, "{}"), (429, "{}"), (200, OK)]);
    let (c, backend) = client(&base, 3);
    let reply = c.complete("hi", &TokenCounter::default()).unwrap();
    assert_eq!(reply.text, "fine");
    assert_eq!(reply.usage, CompletionUsage::new(3, 1));
    assert_eq!(backend.attempts(), 3);
    let bodies = server.join().unwrap();
    assert_eq!(bodies.len(), 3);
    assert!(bodies.iter().all(|b| b == &bodies[0]));
}

#[test]
fn gives_up_after_max_attempts() {
    let (base, server) = scripted(vec![(500, "{}"), (500, "{}")]);
    let (c, _) = client(&base, 2);
    let err = c.complete("hi", &TokenCounter::default()).unwrap_err();
    assert!(
        matches!(
            err,
            BackendError::Transport {
                attempts: 2,
                status: Some(500),
                ..
            }
        ),
        "{err:?}"
    );
    server.join().unwrap();
}

#[test]
fn client_errors_are_not_retried() {
    let (base, server) = scripted(vec![(400, r#"{"error":"bad"}"#)]);
    let (c, backend) = client(&base, 3);
    assert!(c.complete("hi", &TokenCounter::default()).is_err());
    assert_eq!(backend.attempts(), 1);
    server.join().unwrap();
}

#[test]
fn missing_usage_is_counted_locally() {
    let (base, server) = scripted(vec![(200, r#"{"choices":[{"message":{"content":"abcdefgh"}}]}"#)]);
    let (c, _) = client(&base, 1);
    let reply = c.complete("12345678", &TokenCounter::default()).unwrap();
    assert_eq!(reply.usage, CompletionUsage::new(2, 2));
    server.join().unwrap();
}

#[test]
fn malformed_reply_is_a_protocol_error() {
    let (base, server) = scripted(vec![(200, r#"{"choices":[]}"#)]);
    let (c, _) = client(&base, 1);
    assert!(matches!(
        c.complete("x", &TokenCounter::default()),
        Err(BackendError::Protocol(_))
    ));
    server.join().unwrap();
}
