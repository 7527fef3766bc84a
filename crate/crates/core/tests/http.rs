use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use llmprior::gateway::{Gateway, Message, ProviderConfig, ProviderKind, VirtualClock};

struct Captured {
    request_line: String,
    authorization: Option<String>,
    body: serde_json::Value,
}

/// Serves one canned (status, body) per connection, in order, and reports
/// what each request carried.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut length = 0;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap();
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut raw = vec![0; length];
            reader.read_exact(&mut raw).unwrap();
            tx.send(Captured {
                request_line: request_line.trim_end().to_string(),
                authorization,
                body: serde_json::from_slice(&raw).unwrap(),
            })
            .unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn http_config(url: &str, var: &str) -> ProviderConfig {
    ProviderConfig {
        endpoint: Some(url.to_string()),
        credential: Some(var.to_string()),
        requests_per_minute: Some(600),
        max_tokens: Some(64),
        ..ProviderConfig::new(ProviderKind::HttpOpenaiCompatible)
    }
}

const REPLY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"hello back"}}]}"#;

#[test]
fn chat_completion_wire_format_and_retry() {
    std::env::set_var("LLMPRIOR_TEST_KEY_A", "sk-test");
    let (url, rx) = serve(vec![(503, "{}".into()), (200, REPLY.into())]);
    let clock = VirtualClock::new();
    let gateway = Gateway::build(&http_config(&url, "LLMPRIOR_TEST_KEY_A"), None, clock.clone()).unwrap();
    let request = gateway.request(vec![Message::system("be brief"), Message::user("hello")]);
    assert_eq!(gateway.complete(&request).unwrap(), "hello back");

    let stats = gateway.stats();
    assert_eq!((stats.network_calls, stats.retries), (2, 1));
    // the retry waited on the injected clock, not the wall clock
    assert!(clock.sleeps().iter().any(|d| d.as_secs_f64() >= 0.8));

    for _ in 0..2 {
        let seen = rx.recv().unwrap();
        assert_eq!(seen.request_line, "POST /v1/chat/completions HTTP/1.1");
        assert_eq!(seen.authorization.as_deref(), Some("Bearer sk-test"));
        assert_eq!(seen.body["model"], gateway.model_id());
        assert_eq!(seen.body["temperature"], 0.1);
        assert_eq!(seen.body["max_tokens"], 64);
        assert_eq!(seen.body["messages"][0]["role"], "system");
        assert_eq!(seen.body["messages"][1]["content"], "hello");
    }
}

#[test]
fn client_errors_are_not_retried() {
    std::env::set_var("LLMPRIOR_TEST_KEY_B", "sk-test");
    let (url, _rx) = serve(vec![(400, r#"{"error":"bad"}"#.into())]);
    let gateway =
        Gateway::build(&http_config(&url, "LLMPRIOR_TEST_KEY_B"), None, VirtualClock::new()).unwrap();
    let err = gateway.complete(&gateway.request(vec![Message::user("hi")])).unwrap_err();
    assert!(err.to_string().contains("400"), "{err}");
    assert_eq!(gateway.stats().retries, 0);
}

#[test]
fn missing_credential_is_a_configuration_error() {
    let err = Gateway::from_config(&http_config("http://127.0.0.1:9", "LLMPRIOR_TEST_KEY_UNSET")).err().unwrap();
    assert!(err.to_string().contains("LLMPRIOR_TEST_KEY_UNSET"));
}
