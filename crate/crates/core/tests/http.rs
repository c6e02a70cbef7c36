//! Embedding and chat clients against a local single-purpose HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use raterlens::encoder::{Encoder, EncoderError, HttpEmbeddingBackend, ProviderSpec, RetryPolicy};
use raterlens::icl::{icl_predict, ChatSpec, FallbackPolicy, HttpChatBackend, IclError, PromptPair, SYSTEM_PROMPT};
use serde_json::{json, Value};

struct Served {
    url: String,
    requests: Arc<Mutex<Vec<(String, Value)>>>,
    handle: JoinHandle<()>,
}

/// Answers exactly `replies.len()` requests in order. Each reply is a
/// status code plus a function from the request body to a response body.
fn serve(replies: Vec<(u16, Box<dyn Fn(&Value) -> String + Send>)>) -> Served {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&requests);
    let handle = std::thread::spawn(move || {
        for (status, reply) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line["authorization:".len()..].trim().to_string();
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let body: Value = serde_json::from_slice(&body).unwrap();
            let text = reply(&body);
            log.lock().unwrap().push((auth, body));
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            )
            .unwrap();
            stream.flush().unwrap();
        }
    });
    Served { url, requests, handle }
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 3,
        initial_backoff: Duration::from_millis(1),
    }
}

fn embedding_reply(dim: usize) -> Box<dyn Fn(&Value) -> String + Send> {
    Box::new(move |body| {
        let inputs = body["input"].as_array().unwrap();
        // reversed with explicit indices, so the client has to reorder
        let data: Vec<Value> = inputs
            .iter()
            .enumerate()
            .rev()
            .map(|(i, t)| {
                let len = t.as_str().unwrap().len() as f64;
                let mut v = vec![0.0; dim];
                v[0] = len;
                v[1] = 1.0;
                json!({"index": i, "embedding": v})
            })
            .collect();
        json!({ "data": data }).to_string()
    })
}

#[test]
fn embedding_client_posts_model_and_inputs_and_reorders() {
    let server = serve(vec![(200, embedding_reply(4))]);
    let spec = ProviderSpec::http("text-embedding-3-small", 4, &server.url);
    let backend = HttpEmbeddingBackend::new(&spec, Some("k-123".into()), Duration::from_secs(5)).unwrap();
    let encoder = Encoder::new(spec, Box::new(backend)).unwrap().with_retry(fast_retry());
    let out = encoder.embed_batch(&["a", "bbb", "a"]).unwrap();
    server.handle.join().unwrap();

    assert_eq!(out[0].values, out[2].values);
    assert!(out[1].values[0] > out[0].values[0]);
    let requests = server.requests.lock().unwrap();
    assert_eq!(requests.len(), 1);
    let (auth, body) = &requests[0];
    assert_eq!(auth, "Bearer k-123");
    assert_eq!(body["model"], "text-embedding-3-small");
    assert_eq!(body["input"], json!(["a", "bbb"]));
}

#[test]
fn embedding_client_retries_server_errors() {
    let server = serve(vec![(503, Box::new(|_| "{}".to_string())), (200, embedding_reply(3))]);
    let spec = ProviderSpec::http("m", 3, &server.url);
    let backend = HttpEmbeddingBackend::new(&spec, None, Duration::from_secs(5)).unwrap();
    let encoder = Encoder::new(spec, Box::new(backend)).unwrap().with_retry(fast_retry());
    let v = encoder.embed("hello").unwrap();
    server.handle.join().unwrap();
    assert_eq!(v.dimension(), 3);
    assert_eq!(encoder.provider_requests(), 2);
}

#[test]
fn embedding_client_rejects_wrong_width() {
    let server = serve(vec![(200, embedding_reply(5))]);
    let spec = ProviderSpec::http("m", 3, &server.url);
    let backend = HttpEmbeddingBackend::new(&spec, None, Duration::from_secs(5)).unwrap();
    let encoder = Encoder::new(spec, Box::new(backend)).unwrap().with_retry(fast_retry());
    let err = encoder.embed("hello").unwrap_err();
    server.handle.join().unwrap();
    assert!(matches!(err, EncoderError::Integrity(_)), "{err:?}");
}

fn chat_reply(content: &'static str) -> Box<dyn Fn(&Value) -> String + Send> {
    Box::new(move |_| json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
}

fn pair() -> PromptPair {
    PromptPair {
        system: SYSTEM_PROMPT.to_string(),
        user: "Annotate this text: \"hi\"".to_string(),
    }
}

fn chat_spec(url: &str) -> ChatSpec {
    ChatSpec {
        retry_backoff_ms: 1,
        timeout_secs: 5,
        ..ChatSpec::http("gpt-3.5-turbo", url)
    }
}

#[test]
fn chat_client_sends_protocol_and_parses_reply() {
    let server = serve(vec![(200, chat_reply("I would rate this text a 3."))]);
    let chat = chat_spec(&server.url);
    let backend = HttpChatBackend::new(&chat, Some("secret".into())).unwrap();
    let p = icl_predict(&backend, &chat, &pair(), FallbackPolicy::Error).unwrap();
    server.handle.join().unwrap();
    assert_eq!(p.rating.value(), 3);
    assert!(!p.flagged);

    let requests = server.requests.lock().unwrap();
    let (auth, body) = &requests[0];
    assert_eq!(auth, "Bearer secret");
    assert_eq!(
        body,
        &json!({
            "model": "gpt-3.5-turbo",
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": "Annotate this text: \"hi\""},
            ],
            "temperature": 0.0,
        })
    );
}

#[test]
fn chat_client_retries_then_gives_up() {
    let fail = || -> (u16, Box<dyn Fn(&Value) -> String + Send>) { (500, Box::new(|_| "{}".to_string())) };
    let server = serve(vec![fail(), fail(), fail()]);
    let chat = chat_spec(&server.url);
    let backend = HttpChatBackend::new(&chat, None).unwrap();
    let err = icl_predict(&backend, &chat, &pair(), FallbackPolicy::FallbackMid).unwrap_err();
    server.handle.join().unwrap();
    assert!(matches!(err, IclError::Transport { attempts: 3, .. }), "{err:?}");
}

#[test]
fn chat_client_flags_unparseable_reply_under_fallback() {
    let server = serve(vec![(200, chat_reply("I cannot help with that."))]);
    let chat = chat_spec(&server.url);
    let backend = HttpChatBackend::new(&chat, None).unwrap();
    let p = icl_predict(&backend, &chat, &pair(), FallbackPolicy::FallbackMid).unwrap();
    server.handle.join().unwrap();
    assert_eq!(p.rating.value(), 2);
    assert!(p.flagged);
}
