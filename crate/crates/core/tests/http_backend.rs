//! HttpBackend against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use assistkit::llm_client::{
    BackendConfig, ChatBackend, ChatMessage, ChatRequest, HttpBackend, LlmError,
};

#[derive(Clone)]
struct Reply {
    status: u16,
    body: String,
    delay_ms: u64,
}

fn ok(content: &str) -> Reply {
    Reply {
        status: 200,
        body:
            serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
                .to_string(),
        delay_ms: 0,
    }
}

fn status(code: u16) -> Reply {
    Reply {
        status: code,
        body: format!("{{\"error\":\"status {code}\"}}"),
        delay_ms: 0,
    }
}

struct Seen {
    requests: Mutex<Vec<(String, String)>>,
    active: AtomicUsize,
    peak: AtomicUsize,
}

/// Serves `replies` in order (the last one repeats), one thread per connection.
fn serve(replies: Vec<Reply>) -> (String, Arc<Seen>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Seen {
        requests: Mutex::new(Vec::new()),
        active: AtomicUsize::new(0),
        peak: AtomicUsize::new(0),
    });
    let counter = Arc::new(AtomicUsize::new(0));
    let shared = seen.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let idx = counter.fetch_add(1, Ordering::SeqCst);
            let reply = replies[idx.min(replies.len() - 1)].clone();
            let seen = shared.clone();
            thread::spawn(move || handle(stream, reply, &seen));
        }
    });
    (url, seen)
}

fn handle(stream: TcpStream, reply: Reply, seen: &Seen) {
    let now = seen.active.fetch_add(1, Ordering::SeqCst) + 1;
    seen.peak.fetch_max(now, Ordering::SeqCst);
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut headers = String::new();
    let mut length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            length = v.trim().parse().unwrap_or(0);
        }
        headers.push_str(&line);
    }
    let mut body = vec![0; length];
    let _ = reader.read_exact(&mut body);
    seen.requests
        .lock()
        .unwrap()
        .push((headers, String::from_utf8_lossy(&body).into_owned()));
    thread::sleep(Duration::from_millis(reply.delay_ms));
    // Leave before answering so the client cannot start its next request first.
    seen.active.fetch_sub(1, Ordering::SeqCst);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    );
    let _ = stream.flush();
}

fn config(url: &str, max_retries: u32) -> BackendConfig {
    BackendConfig {
        base_url: url.into(),
        timeout_s: 5.0,
        max_retries,
        backoff_base_s: 0.01,
        ..Default::default()
    }
}

fn request() -> ChatRequest {
    ChatRequest::new(
        "model-x",
        vec![ChatMessage::system("s"), ChatMessage::user("hello")],
    )
    .seed(Some(4))
}

#[test]
fn server_errors_are_retried_until_success() {
    let (url, seen) = serve(vec![status(503), status(429), ok("fine")]);
    let backend = HttpBackend::new(config(&url, 3)).unwrap();
    assert_eq!(backend.complete(&request()).unwrap(), "fine");
    let requests = seen.requests.lock().unwrap();
    assert_eq!(requests.len(), 3);
    let body: serde_json::Value = serde_json::from_str(&requests[0].1).unwrap();
    assert_eq!(body["model"], "model-x");
    assert_eq!(body["seed"], 4);
    assert_eq!(body["messages"][1]["content"], "hello");
    assert!(requests[0].0.starts_with("POST /v1/chat/completions "));
}

#[test]
fn client_errors_fail_immediately() {
    let (url, seen) = serve(vec![status(400), ok("never")]);
    let backend = HttpBackend::new(config(&url, 3)).unwrap();
    assert!(matches!(
        backend.complete(&request()),
        Err(LlmError::HttpStatus { code: 400, .. })
    ));
    assert_eq!(seen.requests.lock().unwrap().len(), 1);
}

#[test]
fn malformed_bodies_fail_immediately() {
    let (url, seen) = serve(vec![Reply {
        status: 200,
        body: "{\"choices\": []}".into(),
        delay_ms: 0,
    }]);
    let backend = HttpBackend::new(config(&url, 3)).unwrap();
    assert!(matches!(
        backend.complete(&request()),
        Err(LlmError::MalformedResponse(_))
    ));
    assert_eq!(seen.requests.lock().unwrap().len(), 1);
}

#[test]
fn persistent_rate_limits_surface_the_last_status() {
    let (url, seen) = serve(vec![status(429)]);
    let backend = HttpBackend::new(config(&url, 2)).unwrap();
    assert!(matches!(
        backend.complete(&request()),
        Err(LlmError::HttpStatus { code: 429, .. })
    ));
    assert_eq!(seen.requests.lock().unwrap().len(), 3);
}

#[test]
fn unreachable_endpoint_times_out_after_all_attempts() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let backend = HttpBackend::new(config(&format!("http://127.0.0.1:{port}/v1"), 2)).unwrap();
    match backend.complete(&request()) {
        Err(LlmError::Timeout { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected a timeout, got {other:?}"),
    }
}

#[test]
fn api_key_is_sent_as_bearer_token() {
    std::env::set_var("ASSISTKIT_HTTP_TEST_KEY", "sekrit");
    let (url, seen) = serve(vec![ok("x")]);
    let backend = HttpBackend::new(BackendConfig {
        api_key_env: Some("ASSISTKIT_HTTP_TEST_KEY".into()),
        ..config(&url, 0)
    })
    .unwrap();
    backend.complete(&request()).unwrap();
    let headers = seen.requests.lock().unwrap()[0].0.to_ascii_lowercase();
    assert!(headers.contains("authorization: bearer sekrit"));
}

#[test]
fn in_flight_requests_are_capped() {
    let slow = Reply {
        delay_ms: 100,
        ..ok("slow")
    };
    let (url, seen) = serve(vec![slow]);
    let backend = Arc::new(
        HttpBackend::new(BackendConfig {
            max_in_flight: 2,
            ..config(&url, 0)
        })
        .unwrap(),
    );
    let handles: Vec<_> = (0..6)
        .map(|_| {
            let b = backend.clone();
            thread::spawn(move || b.complete(&request()).unwrap())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), "slow");
    }
    assert_eq!(seen.requests.lock().unwrap().len(), 6);
    assert!(seen.peak.load(Ordering::SeqCst) <= 2);
}
