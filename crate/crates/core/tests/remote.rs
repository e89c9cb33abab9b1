use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use dlfuzz::llm::{
    AgentRole, ChatBackend, ChatRequest, ExchangeKey, Message, RemoteBackend, RemoteSettings,
};
use dlfuzz::types::LoopMode;

struct Captured {
    request_line: String,
    headers: Vec<String>,
    body: serde_json::Value,
}

/// Serve one canned (status, body) reply per connection, in order.
fn server(replies: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            let _ = tx.send(Captured {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: serde_json::from_slice(&buf).unwrap_or(serde_json::Value::Null),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

fn request() -> ChatRequest {
    ChatRequest {
        key: ExchangeKey {
            agent: AgentRole::Generation,
            mode: LoopMode::Default,
            iteration: 0,
        },
        messages: vec![Message::system("You write tests."), Message::user("Use toy.add.")],
        temperature: 1.0,
        max_tokens: 64,
    }
}

fn settings(url: &str) -> RemoteSettings {
    let mut s = RemoteSettings::new(url, "toy-model");
    s.backoff_ms = 1;
    s.timeout_s = 5;
    s
}

#[test]
fn posts_an_openai_style_body() {
    let (url, rx) = server(vec![(200, completion("```python\nx = 1\n```"))]);
    let mut backend = RemoteBackend::new(settings(&url)).unwrap();
    assert_eq!(backend.complete(&request()).unwrap(), "```python\nx = 1\n```");
    let seen = rx.recv().unwrap();
    assert_eq!(seen.request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(seen.body["model"], "toy-model");
    assert_eq!(seen.body["temperature"], 1.0);
    assert_eq!(seen.body["max_tokens"], 64);
    assert_eq!(seen.body["messages"][0]["role"], "system");
    assert_eq!(seen.body["messages"][1]["content"], "Use toy.add.");
    assert!(!seen.headers.iter().any(|h| h.to_ascii_lowercase().starts_with("authorization")));
}

#[test]
fn retries_after_server_errors() {
    let (url, rx) = server(vec![
        (503, "{}".into()),
        (200, "not json".into()),
        (200, completion("third time")),
    ]);
    let mut backend = RemoteBackend::new(settings(&url)).unwrap();
    assert_eq!(backend.complete(&request()).unwrap(), "third time");
    assert_eq!(rx.iter().take(3).count(), 3);
}

#[test]
fn gives_up_after_the_last_attempt() {
    let (url, _rx) = server(vec![(500, "boom".into()), (429, "slow down".into())]);
    let mut s = settings(&url);
    s.attempts = 2;
    let err = RemoteBackend::new(s).unwrap().complete(&request()).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("429") && text.contains("slow down"), "{text}");
}

#[test]
fn sends_the_key_as_a_bearer_token() {
    let var = "DLFUZZ_TEST_REMOTE_KEY";
    // SAFETY: no other test reads or writes this variable
    unsafe { std::env::set_var(var, "sk-test-123") };
    let (url, rx) = server(vec![(200, completion("ok"))]);
    let mut s = settings(&format!("{url}/chat/completions"));
    s.api_key_env = Some(var.into());
    RemoteBackend::new(s).unwrap().complete(&request()).unwrap();
    let seen = rx.recv().unwrap();
    assert!(seen.headers.iter().any(|h| h == "authorization: Bearer sk-test-123"), "{:?}", seen.headers);

    let mut missing = settings(&url);
    missing.api_key_env = Some("DLFUZZ_TEST_UNSET_KEY".into());
    assert!(RemoteBackend::new(missing).is_err());
}
