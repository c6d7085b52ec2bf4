//! Relative noun-token frequencies between cluster conditions.
//!
//! Tokens are English noun lemmas. They come from the record itself
//! (`nounLemmas`, `claimTextEn`) or from external translation and tagging
//! services. Degraded mode swaps in an identity translator and a tagger that
//! keeps every alphabetic run, so the pipeline runs without services.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed_store::{endpoint_url, post_json, with_retries};
use crate::graph::Cluster;
use crate::ingest::{FactCheckRecord, RecordTable};
use crate::{Error, RecordId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    /// Record fields first, then configured services; missing both is fatal.
    #[default]
    Auto,
    /// Identity translation and alphabetic tokens when nothing better exists.
    Degraded,
}

pub trait Translator: Sync {
    /// English renderings, one per input.
    fn translate(&self, texts: &[String]) -> Result<Vec<String>>;
}

pub trait Tagger: Sync {
    /// Noun lemmas, one list per input.
    fn noun_lemmas(&self, texts: &[String]) -> Result<Vec<Vec<String>>>;
}

pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, texts: &[String]) -> Result<Vec<String>> {
        Ok(texts.to_vec())
    }
}

/// Lowercased alphabetic runs; no part-of-speech filter.
pub struct AlphabeticTagger;

impl AlphabeticTagger {
    pub fn tokens(text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphabetic())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    }
}

impl Tagger for AlphabeticTagger {
    fn noun_lemmas(&self, texts: &[String]) -> Result<Vec<Vec<String>>> {
        Ok(texts.iter().map(|t| Self::tokens(t)).collect())
    }
}

struct HttpClient {
    agent: ureq::Agent,
    url: String,
    max_retries: u32,
    backoff: Duration,
}

impl HttpClient {
    fn new(base: &str, route: &str) -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(120))
                .build(),
            url: endpoint_url(base, route),
            max_retries: 3,
            backoff: Duration::from_millis(200),
        }
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(&self, body: &Req) -> Result<Resp> {
        let mut retries = 0;
        with_retries(self.max_retries, self.backoff, &mut retries, || {
            post_json(&self.agent, &self.url, body)
        })
    }
}

/// Client for `POST /translate`.
pub struct HttpTranslator(HttpClient);

impl HttpTranslator {
    pub fn new(endpoint: &str) -> Self {
        Self(HttpClient::new(endpoint, "translate"))
    }
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    texts: &'a [String],
    target: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    texts: Vec<String>,
}

impl Translator for HttpTranslator {
    fn translate(&self, texts: &[String]) -> Result<Vec<String>> {
        let resp: TranslateResponse = self.0.post(&TranslateRequest {
            texts,
            target: "en",
        })?;
        if resp.texts.len() != texts.len() {
            return Err(Error::CountMismatch {
                expected: texts.len(),
                found: resp.texts.len(),
            });
        }
        Ok(resp.texts)
    }
}

/// Client for `POST /lemmas`.
pub struct HttpTagger(HttpClient);

impl HttpTagger {
    pub fn new(endpoint: &str) -> Self {
        Self(HttpClient::new(endpoint, "lemmas"))
    }
}

#[derive(Serialize)]
struct LemmaRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct LemmaResponse {
    lemmas: Vec<Vec<String>>,
}

impl Tagger for HttpTagger {
    fn noun_lemmas(&self, texts: &[String]) -> Result<Vec<Vec<String>>> {
        let resp: LemmaResponse = self.0.post(&LemmaRequest { texts })?;
        if resp.lemmas.len() != texts.len() {
            return Err(Error::CountMismatch {
                expected: texts.len(),
                found: resp.lemmas.len(),
            });
        }
        Ok(resp.lemmas)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenDoc {
    pub record_id: RecordId,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TokenOutcome {
    pub docs: Vec<TokenDoc>,
    /// Records whose token list came out empty.
    pub n_empty: usize,
    /// Records skipped after a service failure.
    pub n_failed: usize,
    pub n_from_cache: usize,
    /// Whether any record went through the identity/alphabetic fallback.
    pub degraded: bool,
}

pub struct TokenServices<'a> {
    pub mode: TokenMode,
    pub translator: Option<&'a dyn Translator>,
    pub tagger: Option<&'a dyn Tagger>,
    pub batch_size: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    digest: String,
    tokens: Vec<String>,
}

const CACHE_FILE: &str = "token_cache.json";

fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn clean(tokens: Vec<String>) -> Vec<String> {
    tokens
        .into_iter()
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Produces one token list per record, in input order.
///
/// Service results are cached under `cache_dir`, keyed by record id and
/// checked against a digest of the claim text.
pub fn preprocess_tokens(
    records: &[&FactCheckRecord],
    services: &TokenServices<'_>,
    cache_dir: Option<&Path>,
) -> Result<TokenOutcome> {
    let degraded_mode = services.mode == TokenMode::Degraded;
    let translator: Option<&dyn Translator> = services
        .translator
        .or(degraded_mode.then_some(&IdentityTranslator as &dyn Translator));
    let tagger: Option<&dyn Tagger> = services
        .tagger
        .or(degraded_mode.then_some(&AlphabeticTagger as &dyn Tagger));

    let cache_path = cache_dir.map(|d| d.join(CACHE_FILE));
    let mut cache: BTreeMap<RecordId, CacheEntry> = match &cache_path {
        Some(p) if p.exists() => serde_json::from_slice(&std::fs::read(p)?)?,
        _ => BTreeMap::new(),
    };

    let mut out = TokenOutcome::default();
    let mut result: HashMap<RecordId, Vec<String>> = HashMap::new();
    let mut pending: Vec<(&FactCheckRecord, String)> = Vec::new();
    for &r in records {
        if let Some(lemmas) = &r.noun_lemmas {
            result.insert(r.id, clean(lemmas.clone()));
            continue;
        }
        let digest = text_digest(&r.claim_text);
        if let Some(entry) = cache.get(&r.id).filter(|e| e.digest == digest) {
            out.n_from_cache += 1;
            result.insert(r.id, entry.tokens.clone());
            continue;
        }
        pending.push((r, digest));
    }

    if !pending.is_empty() {
        let tagger = tagger.ok_or_else(|| {
            Error::InvalidInput(format!(
                "{} records lack nounLemmas and no tagger is configured (set tagger_endpoint or token_mode=degraded)",
                pending.len()
            ))
        })?;
        if translator.is_none() {
            if let Some((r, _)) = pending.iter().find(|(r, _)| r.claim_text_en.is_none()) {
                return Err(Error::InvalidInput(format!(
                    "record {} lacks claimTextEn and no translator is configured (set translate_endpoint or token_mode=degraded)",
                    r.id
                )));
            }
        }
        out.degraded = services.translator.is_none()
            && pending.iter().any(|(r, _)| r.claim_text_en.is_none())
            || services.tagger.is_none();

        for batch in pending.chunks(services.batch_size.max(1)) {
            match tag_batch(batch, translator, tagger) {
                Ok(token_lists) => {
                    for ((r, digest), tokens) in batch.iter().zip(token_lists) {
                        let tokens = clean(tokens);
                        cache.insert(
                            r.id,
                            CacheEntry {
                                digest: digest.clone(),
                                tokens: tokens.clone(),
                            },
                        );
                        result.insert(r.id, tokens);
                    }
                }
                Err(e) => {
                    out.n_failed += batch.len();
                    crate::pipeline::log_event(
                        "tokens",
                        "warn",
                        "token service batch failed",
                        serde_json::json!({"records": batch.len(), "error": e.to_string()}),
                    );
                }
            }
        }
        if let Some(p) = &cache_path {
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, serde_json::to_vec(&cache)?)?;
        }
    }

    for &r in records {
        match result.remove(&r.id) {
            Some(tokens) if !tokens.is_empty() => out.docs.push(TokenDoc {
                record_id: r.id,
                tokens,
            }),
            Some(_) => out.n_empty += 1,
            None => {}
        }
    }
    Ok(out)
}

fn tag_batch(
    batch: &[(&FactCheckRecord, String)],
    translator: Option<&dyn Translator>,
    tagger: &dyn Tagger,
) -> Result<Vec<Vec<String>>> {
    let need: Vec<usize> = (0..batch.len())
        .filter(|&i| batch[i].0.claim_text_en.is_none())
        .collect();
    let mut english: Vec<String> = batch
        .iter()
        .map(|(r, _)| r.claim_text_en.clone().unwrap_or_default())
        .collect();
    if !need.is_empty() {
        let texts: Vec<String> = need
            .iter()
            .map(|&i| batch[i].0.claim_text.clone())
            .collect();
        let translated = translator.expect("checked by caller").translate(&texts)?;
        if translated.len() != texts.len() {
            return Err(Error::CountMismatch {
                expected: texts.len(),
                found: translated.len(),
            });
        }
        for (i, t) in need.into_iter().zip(translated) {
            english[i] = t;
        }
    }
    let lemmas = tagger.noun_lemmas(&english)?;
    if lemmas.len() != english.len() {
        return Err(Error::CountMismatch {
            expected: english.len(),
            found: lemmas.len(),
        });
    }
    Ok(lemmas)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenRatioRow {
    pub token: String,
    pub count_a: usize,
    pub count_b: usize,
    pub rel_freq_a: f64,
    pub rel_freq_b: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenRatioTable {
    pub label_a: String,
    pub label_b: String,
    pub min_token_count: usize,
    /// The minimum count applies to the sum over both conditions.
    pub min_count_scope: &'static str,
    pub rows: Vec<TokenRatioRow>,
}

fn count_tokens<'a>(docs: &[&'a TokenDoc]) -> (HashMap<&'a str, usize>, usize) {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut total = 0;
    for d in docs {
        for t in &d.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
            total += 1;
        }
    }
    (counts, total)
}

/// Tokens present in both conditions with a pooled count of at least
/// `min_token_count`, sorted by `rel_freq_a / rel_freq_b` descending.
pub fn relative_frequency_table(
    docs_a: &[&TokenDoc],
    docs_b: &[&TokenDoc],
    min_token_count: usize,
    labels: (&str, &str),
) -> Result<TokenRatioTable> {
    let (ca, ta) = count_tokens(docs_a);
    let (cb, tb) = count_tokens(docs_b);
    if ta == 0 || tb == 0 {
        return Err(Error::InsufficientData(format!(
            "token condition is empty ({}: {ta} tokens, {}: {tb} tokens)",
            labels.0, labels.1
        )));
    }
    let mut rows: Vec<TokenRatioRow> = ca
        .iter()
        .filter_map(|(&token, &count_a)| {
            let count_b = *cb.get(token)?;
            if count_a + count_b < min_token_count {
                return None;
            }
            let rel_freq_a = count_a as f64 / ta as f64;
            let rel_freq_b = count_b as f64 / tb as f64;
            Some(TokenRatioRow {
                token: token.to_string(),
                count_a,
                count_b,
                rel_freq_a,
                rel_freq_b,
                ratio: rel_freq_a / rel_freq_b,
            })
        })
        .collect();
    rows.sort_by(|x, y| {
        y.ratio
            .total_cmp(&x.ratio)
            .then_with(|| x.token.cmp(&y.token))
    });
    Ok(TokenRatioTable {
        label_a: labels.0.to_string(),
        label_b: labels.1.to_string(),
        min_token_count,
        min_count_scope: "pooled",
        rows,
    })
}

pub fn write_ratio_csv<W: Write>(table: &TokenRatioTable, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in &table.rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConditionSplit {
    pub singleton: BTreeSet<RecordId>,
    pub non_singleton: BTreeSet<RecordId>,
    /// Members of non-singleton clusters with at most one distinct language.
    pub monolingual: BTreeSet<RecordId>,
    pub multilingual: BTreeSet<RecordId>,
}

pub fn condition_split(clusters: &[Cluster], records: &RecordTable) -> ConditionSplit {
    let mut split = ConditionSplit::default();
    for c in clusters {
        if c.is_singleton() {
            split.singleton.extend(&c.member_ids);
            continue;
        }
        split.non_singleton.extend(&c.member_ids);
        let langs: HashSet<&str> = c
            .member_ids
            .iter()
            .filter_map(|&id| records.language(id))
            .collect();
        if langs.len() >= 2 {
            split.multilingual.extend(&c.member_ids);
        } else {
            split.monolingual.extend(&c.member_ids);
        }
    }
    split
}

/// Docs whose record is in `ids`.
pub fn docs_in<'a>(docs: &'a [TokenDoc], ids: &BTreeSet<RecordId>) -> Vec<&'a TokenDoc> {
    docs.iter().filter(|d| ids.contains(&d.record_id)).collect()
}
