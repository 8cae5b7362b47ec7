//! In-process mock of a chat-completion + text-embedding HTTP endpoint.
//!
//! Test harness for exercising enrichment clients without network access.
//! The server listens on a loopback port, records every request it receives
//! (including ones it answers with an injected failure status), and responds
//! with caller-supplied functions of the request text so tests can predict
//! outputs exactly.
//!
//! Routes:
//! - `POST .../chat/completions` — body `{model, messages:[{role,content}], temperature}`,
//!   answered with the first message content passed through [`Behavior::describe`].
//! - `POST .../embeddings` — body `{model, input}`, answered with
//!   [`Behavior::embed`] of the input string.

use serde_json::{json, Value};
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

type DescribeFn = Box<dyn Fn(&str) -> String + Send + Sync>;
type EmbedFn = Box<dyn Fn(&str) -> Vec<f32> + Send + Sync>;

/// How the mock answers requests.
pub struct Behavior {
    /// Maps the first chat message content to the completion text.
    pub describe: DescribeFn,
    /// Maps embedding input text to a vector.
    pub embed: EmbedFn,
    /// Answer this many requests with `fail_status` before behaving normally.
    pub fail_first: usize,
    pub fail_status: u16,
}

impl Behavior {
    /// Deterministic default: descriptions echo the prompt, embeddings are
    /// text-hash vectors of dimension `dim` (see [`hash_embedding`]).
    pub fn with_dim(dim: usize) -> Self {
        Behavior {
            describe: Box::new(|prompt| format!("{prompt} :: mock description")),
            embed: Box::new(move |text| hash_embedding(text, dim)),
            fail_first: 0,
            fail_status: 500,
        }
    }
}

/// One recorded request.
#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub body: Value,
    /// Header names lowercased.
    pub headers: std::collections::HashMap<String, String>,
    /// True if this request was answered with the injected failure status.
    pub failed: bool,
}

struct State {
    requests: Mutex<Vec<Recorded>>,
    remaining_failures: AtomicUsize,
    shutdown: AtomicBool,
}

/// Handle to a running mock server. Shuts down on drop.
pub struct MockLlmServer {
    addr: String,
    state: Arc<State>,
    handle: Option<JoinHandle<()>>,
}

impl MockLlmServer {
    pub fn start(behavior: Behavior) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind mock server");
        let addr = format!("http://{}", listener.local_addr().unwrap());
        let state = Arc::new(State {
            requests: Mutex::new(Vec::new()),
            remaining_failures: AtomicUsize::new(behavior.fail_first),
            shutdown: AtomicBool::new(false),
        });
        let thread_state = Arc::clone(&state);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if thread_state.shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                handle_connection(stream, &thread_state, &behavior);
            }
        });
        MockLlmServer {
            addr,
            state,
            handle: Some(handle),
        }
    }

    /// Base URL (`http://127.0.0.1:port`) to hand to the client under test.
    pub fn base_url(&self) -> &str {
        &self.addr
    }

    pub fn request_count(&self) -> usize {
        self.state.requests.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.state.requests.lock().unwrap().clone()
    }

    pub fn requests_to(&self, path_suffix: &str) -> Vec<Recorded> {
        self.requests()
            .into_iter()
            .filter(|r| r.path.ends_with(path_suffix))
            .collect()
    }
}

impl Drop for MockLlmServer {
    fn drop(&mut self) {
        self.state.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let plain = self.addr.trim_start_matches("http://");
        let _ = TcpStream::connect(plain);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(mut stream: TcpStream, state: &State, behavior: &Behavior) {
    let Some((path, headers, body)) = read_request(&mut stream) else {
        return;
    };
    if state.shutdown.load(Ordering::SeqCst) {
        return;
    }

    let inject_failure = state
        .remaining_failures
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok();
    let parsed: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    state.requests.lock().unwrap().push(Recorded {
        path: path.clone(),
        body: parsed.clone(),
        headers,
        failed: inject_failure,
    });

    if inject_failure {
        write_response(&mut stream, behavior.fail_status, "{\"error\":\"injected\"}");
        return;
    }

    let response = if path.ends_with("/chat/completions") {
        let content = parsed["messages"][0]["content"].as_str().unwrap_or("");
        let text = (behavior.describe)(content);
        json!({
            "id": "mock-chat",
            "object": "chat.completion",
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": text},
                "finish_reason": "stop"
            }]
        })
    } else if path.ends_with("/embeddings") {
        let input = parsed["input"].as_str().unwrap_or("");
        let vector = (behavior.embed)(input);
        json!({
            "object": "list",
            "data": [{"object": "embedding", "index": 0, "embedding": vector}],
            "model": parsed["model"].as_str().unwrap_or("mock")
        })
    } else {
        write_response(&mut stream, 404, "{\"error\":\"no such route\"}");
        return;
    };
    write_response(&mut stream, 200, &response.to_string());
}

/// Minimal HTTP/1.1 request reader: returns (path, headers, body).
type Headers = std::collections::HashMap<String, String>;

fn read_request(stream: &mut TcpStream) -> Option<(String, Headers, Vec<u8>)> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let header_end = loop {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            return None;
        }
        buf.extend_from_slice(&chunk[..n]);
        if let Some(pos) = find_subsequence(&buf, b"\r\n\r\n") {
            break pos + 4;
        }
        if buf.len() > 1 << 20 {
            return None;
        }
    };

    let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let mut lines = head.lines();
    let request_line = lines.next()?;
    let path = request_line.split_whitespace().nth(1)?.to_string();
    let headers: Headers = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.to_ascii_lowercase(), v.trim().to_string()))
        .collect();
    let content_length: usize = headers
        .get("content-length")
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);

    let mut body = buf[header_end..].to_vec();
    while body.len() < content_length {
        let n = stream.read(&mut chunk).ok()?;
        if n == 0 {
            break;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    body.truncate(content_length);
    Some((path, headers, body))
}

fn find_subsequence(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn write_response(stream: &mut TcpStream, status: u16, body: &str) {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Mock",
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(response.as_bytes());
}

/// Deterministic pseudo-embedding: FNV-1a seeded per (text, component), mapped
/// to [-1, 1]. Distinct texts get distinct vectors with overwhelming odds.
pub fn hash_embedding(text: &str, dim: usize) -> Vec<f32> {
    (0..dim)
        .map(|component| {
            let mut h: u64 = 0xcbf29ce484222325;
            for byte in text.bytes().chain(component.to_le_bytes()) {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            // Top 24 bits -> [-1, 1]
            ((h >> 40) as f32 / (1u32 << 23) as f32) - 1.0
        })
        .collect()
}
