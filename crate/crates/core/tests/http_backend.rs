use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::Value;
use tot_core::llm::{ChatBackend, ChatRequest, HttpBackend, HttpConfig, LlmError, Usage};

#[derive(Debug, Clone)]
struct Received {
    headers: Vec<String>,
    body: Value,
}

impl Received {
    fn header(&self, name: &str) -> Option<String> {
        let prefix = format!("{}:", name.to_ascii_lowercase());
        self.headers
            .iter()
            .find(|h| h.to_ascii_lowercase().starts_with(&prefix))
            .map(|h| h[prefix.len()..].trim().to_string())
    }
}

/// Serves the canned `(status, body)` replies in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Received>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = Arc::clone(&log);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                headers.push(line);
            }
            let len = headers
                .iter()
                .find_map(|h| h.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                .unwrap_or(0);
            let mut raw = vec![0; len];
            reader.read_exact(&mut raw).unwrap();
            seen.lock().unwrap().push(Received {
                headers,
                body: serde_json::from_slice(&raw).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            stream.flush().unwrap();
        }
    });
    (url, log)
}

fn ok_body(text: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": text}}],
        "usage": {"prompt_tokens": 20, "completion_tokens": 4, "total_tokens": 24}
    })
    .to_string()
}

fn fast(url: &str) -> HttpConfig {
    HttpConfig {
        max_retries: 2,
        initial_backoff_ms: 1,
        timeout_secs: 5,
        ..HttpConfig::new(url)
    }
}

fn request() -> ChatRequest {
    ChatRequest::new("system text", "user text", 64, "gpt-4o-mini").unwrap()
}

#[test]
fn sends_chat_completion_and_reads_usage() {
    let (url, log) = serve(vec![(200, ok_body("hello"))]);
    let backend = HttpBackend::with_api_key(fast(&url), Some("secret".into())).unwrap();
    let r = backend.complete(&request()).unwrap();
    assert_eq!(r.text, "hello");
    assert_eq!(r.usage, Usage::new(20, 4));

    let got = log.lock().unwrap()[0].clone();
    assert_eq!(got.header("authorization").as_deref(), Some("Bearer secret"));
    assert_eq!(got.body["model"], "gpt-4o-mini");
    assert_eq!(got.body["max_tokens"], 64);
    assert_eq!(got.body["messages"][0]["role"], "system");
    assert_eq!(got.body["messages"][0]["content"], "system text");
    assert_eq!(got.body["messages"][1]["content"], "user text");
}

#[test]
fn omits_authorization_without_key() {
    let (url, log) = serve(vec![(200, ok_body("x"))]);
    let backend = HttpBackend::with_api_key(fast(&format!("{url}/v1")), None).unwrap();
    backend.complete(&request()).unwrap();
    assert_eq!(log.lock().unwrap()[0].header("authorization"), None);
}

#[test]
fn retries_server_errors_and_rate_limits() {
    let (url, log) = serve(vec![
        (500, "{}".into()),
        (429, "{}".into()),
        (200, ok_body("third time")),
    ]);
    let backend = HttpBackend::with_api_key(fast(&url), None).unwrap();
    assert_eq!(backend.complete(&request()).unwrap().text, "third time");
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn gives_up_after_max_retries() {
    let (url, log) = serve(vec![(503, "{}".into()), (503, "{}".into()), (503, "{}".into())]);
    let backend = HttpBackend::with_api_key(fast(&url), None).unwrap();
    let err = backend.complete(&request()).unwrap_err();
    assert!(matches!(err, LlmError::Transport { attempts: 3, .. }), "{err:?}");
    assert!(err.is_exhaustion());
    assert_eq!(log.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, log) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
    let backend = HttpBackend::with_api_key(fast(&url), None).unwrap();
    let err = backend.complete(&request()).unwrap_err();
    assert!(matches!(err, LlmError::Http { status: 400, .. }), "{err:?}");
    assert!(!err.is_exhaustion());
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn malformed_bodies_are_reported() {
    let (url, _) = serve(vec![(200, "not json".into())]);
    let backend = HttpBackend::with_api_key(fast(&url), None).unwrap();
    assert!(matches!(
        backend.complete(&request()),
        Err(LlmError::Malformed(_))
    ));
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend =
        HttpBackend::with_api_key(fast(&format!("http://127.0.0.1:{port}")), None).unwrap();
    assert!(matches!(
        backend.complete(&request()),
        Err(LlmError::Transport { attempts: 3, .. })
    ));
}
