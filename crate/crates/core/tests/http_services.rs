mod common;

use std::time::Duration;

use chrono::NaiveDate;
use claimgraph::embed_store::{
    fetch_embeddings, load_vector_file, read_vectors, write_vector_file, write_vectors,
    FetchOptions,
};
use claimgraph::tokens::{preprocess_tokens, HttpTagger, HttpTranslator, TokenMode, TokenServices};
use claimgraph::{Error, FactCheckRecord};
use common::{texts, vector_for, Stub};
use serde_json::json;

fn claims(n: usize) -> Vec<(u64, String)> {
    (0..n)
        .map(|i| (i as u64 + 10, format!("claim number {}", "x".repeat(i + 1))))
        .collect()
}

fn fast() -> FetchOptions {
    FetchOptions {
        batch_size: 2,
        initial_backoff: Duration::from_millis(5),
        ..FetchOptions::default()
    }
}

fn embed_ok(_: usize, url: &str, body: serde_json::Value) -> (u16, serde_json::Value) {
    assert_eq!(url, "/embed");
    let v: Vec<Vec<f32>> = texts(&body).iter().map(|t| vector_for(t)).collect();
    (200, json!({ "vectors": v }))
}

#[test]
fn two_claims_become_a_normalized_store() {
    let stub = Stub::start(embed_ok);
    let (store, report) = fetch_embeddings(&claims(2), &stub.url, &fast()).unwrap();
    assert_eq!(store.len(), 2);
    assert_eq!(store.ids(), &[10, 11]);
    assert_eq!(report.batches, 1);
    for e in store.iter() {
        let norm: f64 = e
            .vector
            .iter()
            .map(|x| f64::from(*x).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }
}

#[test]
fn order_is_preserved_across_batches() {
    let stub = Stub::start(embed_ok);
    let input = claims(5);
    let (store, report) = fetch_embeddings(&input, &stub.url, &fast()).unwrap();
    assert_eq!(report.batches, 3);
    for (id, text) in &input {
        let mut expect = vector_for(text);
        claimgraph::embed_store::normalize(&mut expect).unwrap();
        assert_eq!(store.vector(*id).unwrap(), expect.as_slice());
    }
}

#[test]
fn transient_failure_is_retried_once() {
    let stub = Stub::start(|n, url, body| {
        if n == 0 {
            (503, json!({"error": "busy"}))
        } else {
            embed_ok(n, url, body)
        }
    });
    let (store, report) = fetch_embeddings(&claims(2), &stub.url, &fast()).unwrap();
    assert_eq!(store.len(), 2);
    assert_eq!(report.retries, 1);
    assert_eq!(stub.hits(), 2);
}

#[test]
fn retries_are_bounded() {
    let stub = Stub::start(|_, _, _| (500, json!({})));
    let err = fetch_embeddings(&claims(2), &stub.url, &fast()).unwrap_err();
    assert!(matches!(err, Error::Http(_)), "{err}");
    assert_eq!(stub.hits(), 4, "first attempt plus three retries");
}

#[test]
fn client_errors_are_not_retried() {
    let stub = Stub::start(|_, _, _| (400, json!({"error": "bad"})));
    assert!(fetch_embeddings(&claims(2), &stub.url, &fast()).is_err());
    assert_eq!(stub.hits(), 1);
}

#[test]
fn wrong_count_is_reported() {
    let stub = Stub::start(|_, _, _| (200, json!({"vectors": [[1.0, 0.0, 0.0]]})));
    let err = fetch_embeddings(&claims(2), &stub.url, &fast()).unwrap_err();
    assert!(err.to_string().contains("count mismatch"), "{err}");
}

#[test]
fn dimension_drift_between_batches_is_an_error() {
    let stub = Stub::start(|n, _, body| {
        let d = if n == 0 { 3 } else { 4 };
        let v: Vec<Vec<f32>> = texts(&body).iter().map(|_| vec![1.0; d]).collect();
        (200, json!({ "vectors": v }))
    });
    let err = fetch_embeddings(&claims(4), &stub.url, &fast()).unwrap_err();
    assert!(
        matches!(
            err,
            Error::DimensionMismatch {
                expected: 3,
                found: 4
            }
        ),
        "{err}"
    );
}

#[test]
fn checkpointed_batches_are_skipped_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let opts = FetchOptions {
        checkpoint_dir: Some(dir.path().join("ckpt")),
        ..fast()
    };
    // Second batch fails hard on the first run.
    let stub = Stub::start(|n, url, body| {
        if n == 1 {
            (400, json!({}))
        } else {
            embed_ok(n, url, body)
        }
    });
    assert!(fetch_embeddings(&claims(4), &stub.url, &opts).is_err());
    let stub2 = Stub::start(embed_ok);
    let (store, report) = fetch_embeddings(&claims(4), &stub2.url, &opts).unwrap();
    assert_eq!(store.len(), 4);
    assert_eq!(report.batches_from_checkpoint, 1);
    assert_eq!(stub2.hits(), 1);
    // Changed text invalidates the checkpoint.
    let mut changed = claims(4);
    changed[0].1.push('!');
    let stub3 = Stub::start(embed_ok);
    let (_, report) = fetch_embeddings(&changed, &stub3.url, &opts).unwrap();
    assert_eq!(report.batches_from_checkpoint, 1);
    assert_eq!(stub3.hits(), 1);
}

#[test]
fn vector_file_layout_is_exact() {
    let stub = Stub::start(embed_ok);
    let (store, _) = fetch_embeddings(&claims(1), &stub.url, &fast()).unwrap();
    let mut bytes = Vec::new();
    write_vectors(&store, &mut bytes).unwrap();
    assert_eq!(&bytes[..4], b"CGV1");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
    assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 1);
    assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 10);
    let first = f32::from_le_bytes(bytes[24..28].try_into().unwrap());
    assert_eq!(first, store.vector(10).unwrap()[0]);
    assert_eq!(bytes.len(), 16 + 8 + 3 * 4);
    let back = read_vectors(&mut bytes.as_slice()).unwrap();
    assert_eq!(back, store);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("v.cgv");
    write_vector_file(&store, &p).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), bytes);
    assert_eq!(load_vector_file(&p).unwrap(), store);
}

fn record(id: u64, text: &str) -> FactCheckRecord {
    FactCheckRecord {
        id,
        claim_text: text.to_string(),
        domain: "example.org".into(),
        url: format!("https://example.org/{id}"),
        author: None,
        review_date: NaiveDate::from_ymd_opt(2020, 5, 1).unwrap(),
        rating_raw: None,
        language: Some("es".into()),
        claim_text_en: None,
        noun_lemmas: None,
    }
}

fn language_stub() -> Stub {
    Stub::start(|_, url, body| match url {
        "/translate" => {
            assert_eq!(body["target"], "en");
            let out: Vec<String> = texts(&body)
                .iter()
                .map(|t| t.replace("vacuna", "vaccine"))
                .collect();
            (200, json!({ "texts": out }))
        }
        "/lemmas" => {
            let out: Vec<Vec<String>> = texts(&body)
                .iter()
                .map(|t| {
                    t.split_whitespace()
                        .filter(|w| w.len() > 4)
                        .map(str::to_string)
                        .collect()
                })
                .collect();
            (200, json!({ "lemmas": out }))
        }
        _ => (404, json!({})),
    })
}

#[test]
fn translate_and_lemma_services_feed_token_docs() {
    let stub = language_stub();
    let translator = HttpTranslator::new(&stub.url);
    let tagger = HttpTagger::new(&stub.url);
    let services = TokenServices {
        mode: TokenMode::Auto,
        translator: Some(&translator),
        tagger: Some(&tagger),
        batch_size: 8,
    };
    let mut pre = record(3, "ignored");
    pre.noun_lemmas = Some(vec!["Mask".into()]);
    let recs = [record(1, "la vacuna mata"), record(2, "a la"), pre];
    let refs: Vec<&FactCheckRecord> = recs.iter().collect();
    let dir = tempfile::tempdir().unwrap();
    let out = preprocess_tokens(&refs, &services, Some(dir.path())).unwrap();
    assert!(!out.degraded);
    assert_eq!(out.n_empty, 1);
    assert_eq!(out.docs.len(), 2);
    assert_eq!(out.docs[0].tokens, vec!["vaccine".to_string()]);
    assert_eq!(out.docs[1].tokens, vec!["mask".to_string()]);
    let calls = stub.hits();
    assert_eq!(calls, 2, "one translate and one lemma call");

    // Cached results need no service.
    let offline = TokenServices {
        mode: TokenMode::Auto,
        translator: None,
        tagger: None,
        batch_size: 8,
    };
    let again = preprocess_tokens(&refs, &offline, Some(dir.path())).unwrap();
    assert_eq!(again.docs, out.docs);
    assert_eq!(again.n_from_cache, 2);
}

#[test]
fn failing_tagger_skips_and_counts_records() {
    let stub = Stub::start(|_, _, _| (400, json!({})));
    let tagger = HttpTagger::new(&stub.url);
    let services = TokenServices {
        mode: TokenMode::Auto,
        translator: None,
        tagger: Some(&tagger),
        batch_size: 1,
    };
    let mut a = record(1, "x");
    a.claim_text_en = Some("vaccine fraud".into());
    let mut b = record(2, "y");
    b.claim_text_en = Some("mask fraud".into());
    let out = preprocess_tokens(&[&a, &b], &services, None).unwrap();
    assert_eq!(out.n_failed, 2);
    assert!(out.docs.is_empty());
}

#[test]
fn missing_services_are_fatal_outside_degraded_mode() {
    let r = record(1, "la vacuna");
    let none = TokenServices {
        mode: TokenMode::Auto,
        translator: None,
        tagger: None,
        batch_size: 8,
    };
    assert!(preprocess_tokens(&[&r], &none, None).is_err());
    let degraded = TokenServices {
        mode: TokenMode::Degraded,
        ..none
    };
    let out = preprocess_tokens(&[&r], &degraded, None).unwrap();
    assert!(out.degraded);
    assert_eq!(
        out.docs[0].tokens,
        vec!["la".to_string(), "vacuna".to_string()]
    );
}
