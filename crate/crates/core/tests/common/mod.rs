#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::Value;

/// Local HTTP server answering every request through `handler`.
pub struct Stub {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

impl Stub {
    pub fn start<F>(handler: F) -> Stub
    where
        F: Fn(usize, &str, Value) -> (u16, Value) + Send + 'static,
    {
        let server = tiny_http::Server::http("127.0.0.1:0").expect("bind stub");
        let url = format!("http://{}", server.server_addr().to_ip().expect("tcp"));
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for mut req in server.incoming_requests() {
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let mut body = String::new();
                req.as_reader()
                    .read_to_string(&mut body)
                    .expect("read body");
                let parsed = serde_json::from_str(&body).unwrap_or(Value::Null);
                let (status, resp) = handler(n, req.url(), parsed);
                let header =
                    tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = req.respond(
                    tiny_http::Response::from_string(resp.to_string())
                        .with_status_code(status)
                        .with_header(header),
                );
            }
        });
        Stub { url, hits }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

pub fn texts(body: &Value) -> Vec<String> {
    body["texts"]
        .as_array()
        .map(|a| {
            a.iter()
                .map(|t| t.as_str().unwrap_or_default().to_string())
                .collect()
        })
        .unwrap_or_default()
}

/// Deterministic 3-d vector derived from the text length.
pub fn vector_for(text: &str) -> Vec<f32> {
    let n = text.len() as f32;
    vec![1.0, n, 0.5 * n + 1.0]
}
