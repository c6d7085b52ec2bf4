//! Fetches embeddings from an `/embed` service.
//!
//! With an endpoint argument the real service is used; otherwise a local stub
//! that returns hashed bag-of-words vectors is started.

use claimgraph::embed_store::{fetch_embeddings, FetchOptions};

fn stub_vector(text: &str) -> Vec<f32> {
    let mut v = vec![0f32; 16];
    for w in text.split_whitespace() {
        let h = w
            .bytes()
            .fold(7u32, |h, b| h.wrapping_mul(31).wrapping_add(b as u32));
        v[(h % 16) as usize] += 1.0;
    }
    v
}

fn start_stub() -> String {
    let server = tiny_http::Server::http("127.0.0.1:0").expect("bind");
    let addr = format!(
        "http://{}",
        server.server_addr().to_ip().expect("tcp address")
    );
    std::thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).expect("body");
            let parsed: serde_json::Value = serde_json::from_str(&body).expect("json");
            let vectors: Vec<Vec<f32>> = parsed["texts"]
                .as_array()
                .expect("texts")
                .iter()
                .map(|t| stub_vector(t.as_str().unwrap_or("")))
                .collect();
            let resp = serde_json::json!({ "vectors": vectors }).to_string();
            let _ = req.respond(tiny_http::Response::from_string(resp));
        }
    });
    addr
}

fn main() -> claimgraph::Result<()> {
    let endpoint = std::env::args().nth(1).unwrap_or_else(start_stub);
    let claims: Vec<(u64, String)> = [
        "the vaccine contains a microchip",
        "a microchip is inside the vaccine",
        "masks cause oxygen deficiency",
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| (i as u64 + 1, t.to_string()))
    .collect();
    let options = FetchOptions {
        batch_size: 2,
        ..FetchOptions::default()
    };
    let (store, report) = fetch_embeddings(&claims, &endpoint, &options)?;
    println!(
        "{} vectors of dimension {} in {} batches",
        store.len(),
        store.dimension(),
        report.batches
    );
    println!("sim(1, 2) = {:.3}", store.similarity(1, 2)?);
    println!("sim(1, 3) = {:.3}", store.similarity(1, 3)?);
    Ok(())
}
