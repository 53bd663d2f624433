//! Minimal HTTP/1.1 stub server: one request per connection, scripted replies,
//! every request recorded.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::Value;

#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub authorization: Option<String>,
    pub body: Value,
}

/// `(call number, path, body) -> (status, response body)`.
pub type Responder = dyn Fn(usize, &str, &Value) -> (u16, String) + Send + Sync;

pub struct Stub {
    pub base: String,
    requests: Arc<Mutex<Vec<Recorded>>>,
}

impl Stub {
    pub fn start(responder: impl Fn(usize, &str, &Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let base = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let calls = Arc::new(AtomicUsize::new(0));
        let responder: Arc<Responder> = Arc::new(responder);
        let log = requests.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let (log, calls, responder) = (log.clone(), calls.clone(), responder.clone());
                std::thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
                    let mut len = 0;
                    let mut auth = None;
                    loop {
                        let mut h = String::new();
                        reader.read_line(&mut h).unwrap();
                        let h = h.trim_end();
                        if h.is_empty() {
                            break;
                        }
                        if let Some((k, v)) = h.split_once(':') {
                            match k.trim().to_ascii_lowercase().as_str() {
                                "content-length" => len = v.trim().parse().unwrap(),
                                "authorization" => auth = Some(v.trim().to_string()),
                                _ => {}
                            }
                        }
                    }
                    let mut raw = vec![0; len];
                    reader.read_exact(&mut raw).unwrap();
                    let body: Value = serde_json::from_slice(&raw).unwrap_or(Value::Null);
                    let call = calls.fetch_add(1, Ordering::SeqCst);
                    log.lock().unwrap().push(Recorded {
                        path: path.clone(),
                        authorization: auth,
                        body: body.clone(),
                    });
                    let (status, reply) = responder(call, &path, &body);
                    let head = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                        reply.len()
                    );
                    let _ = stream.write_all(head.as_bytes());
                    let _ = stream.write_all(reply.as_bytes());
                });
            }
        });
        Self { base, requests }
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }
}

/// Embeddings reply for `body["input"]`, listed in reverse index order so the
/// client has to sort. Each vector encodes the text's length and first byte.
pub fn embeddings_reply(body: &Value) -> String {
    let input = body["input"].as_array().cloned().unwrap_or_default();
    let data: Vec<Value> = input
        .iter()
        .enumerate()
        .rev()
        .map(|(i, t)| {
            let s = t.as_str().unwrap_or("");
            serde_json::json!({
                "index": i,
                "embedding": [s.len() as f64, f64::from(s.bytes().next().unwrap_or(0)), 1.0],
            })
        })
        .collect();
    serde_json::json!({ "data": data }).to_string()
}

pub fn chat_reply(content: &str) -> String {
    serde_json::json!({
        "choices": [{ "index": 0, "message": { "role": "assistant", "content": content } }]
    })
    .to_string()
}
