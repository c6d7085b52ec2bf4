//! Fact-check ingestion and cleaning.
//!
//! Raw records arrive as JSON lines in ClaimReview vocabulary
//! (`claimReviewed`, `headline`, `description`, `url`, `author`,
//! `datePublished`, `reviewRating`, `language`). Cleaning extracts the claim
//! text, assigns the publishing domain, strips curated boilerplate, restricts
//! the date range and removes exact and editorial duplicates. Every record
//! that does not survive is written to a drop log with its reason.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::ops::RangeInclusive;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DateRange, PipelineConfig};
use crate::embed_store::{dot, EmbeddingStore};
use crate::{Error, RecordId, Result};

/// Bundled boilerplate removal list.
pub const DEFAULT_BOILERPLATE: &str = include_str!("../assets/boilerplate.txt");

const ID_MASK: u64 = (1 << 53) - 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    /// Explicit id from the input, if any.
    pub id: Option<RecordId>,
    pub claim_reviewed: Option<String>,
    pub headline: Option<String>,
    pub description: Option<String>,
    pub url: String,
    pub author: Option<String>,
    pub review_date: NaiveDate,
    pub rating: Option<String>,
    pub language: Option<String>,
    pub claim_text_en: Option<String>,
    pub noun_lemmas: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactCheckRecord {
    pub id: RecordId,
    pub claim_text: String,
    pub domain: String,
    pub url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
    #[serde(rename = "datePublished")]
    pub review_date: NaiveDate,
    #[serde(
        rename = "reviewRating",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub rating_raw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(
        rename = "claimTextEn",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub claim_text_en: Option<String>,
    #[serde(
        rename = "nounLemmas",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub noun_lemmas: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    /// Parsed records with their 1-based line numbers.
    pub records: Vec<(usize, RawRecord)>,
    pub errors: Vec<LineError>,
    /// Digest of each parsed line, used for id derivation.
    line_digests: Vec<[u8; 32]>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TextOrObject {
    Text(String),
    Object(serde_json::Map<String, serde_json::Value>),
}

impl TextOrObject {
    /// Strings pass through; objects yield the first present key.
    fn text(self, keys: &[&str]) -> Option<String> {
        match self {
            TextOrObject::Text(s) => Some(s),
            TextOrObject::Object(m) => keys.iter().find_map(|k| match m.get(*k) {
                Some(serde_json::Value::String(s)) => Some(s.clone()),
                Some(serde_json::Value::Number(n)) => Some(n.to_string()),
                _ => None,
            }),
        }
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct WireRecord {
    id: Option<RecordId>,
    claim_reviewed: Option<String>,
    headline: Option<String>,
    description: Option<String>,
    url: Option<String>,
    author: Option<TextOrObject>,
    date_published: Option<String>,
    review_rating: Option<TextOrObject>,
    language: Option<String>,
    claim_text_en: Option<String>,
    noun_lemmas: Option<Vec<String>>,
}

/// Accepts `YYYY-MM-DD`, optionally followed by a time part.
pub fn parse_review_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let head = s.get(..10)?;
    let rest = &s[10..];
    if !(rest.is_empty() || rest.starts_with('T') || rest.starts_with(' ')) {
        return None;
    }
    NaiveDate::parse_from_str(head, "%Y-%m-%d").ok()
}

fn non_blank(s: Option<String>) -> Option<String> {
    s.filter(|v| !v.trim().is_empty())
}

fn parse_line(line: &str) -> std::result::Result<RawRecord, String> {
    let wire: WireRecord = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let url = non_blank(wire.url).ok_or("missing url")?;
    let date = wire.date_published.ok_or("missing datePublished")?;
    let review_date =
        parse_review_date(&date).ok_or_else(|| format!("invalid datePublished {date:?}"))?;
    Ok(RawRecord {
        id: wire.id,
        claim_reviewed: wire.claim_reviewed,
        headline: wire.headline,
        description: wire.description,
        url,
        author: non_blank(wire.author.and_then(|a| a.text(&["name"]))),
        review_date,
        rating: non_blank(
            wire.review_rating
                .and_then(|r| r.text(&["alternateName", "name", "ratingValue"])),
        ),
        language: non_blank(wire.language).map(|l| l.trim().to_lowercase()),
        claim_text_en: non_blank(wire.claim_text_en),
        noun_lemmas: wire.noun_lemmas,
    })
}

/// Parses line-delimited JSON. Bad lines are collected, never fatal.
pub fn parse_records<R: BufRead>(reader: R) -> Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line) {
            Ok(rec) => {
                out.records.push((i + 1, rec));
                out.line_digests
                    .push(Sha256::digest(line.as_bytes()).into());
            }
            Err(reason) => out.errors.push(LineError {
                line: i + 1,
                reason,
            }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean_chars: f64,
    pub sd_chars: f64,
}

/// Mean and population SD of non-empty `claimReviewed` lengths, in characters.
pub fn compute_length_stats<'a>(
    records: impl IntoIterator<Item = &'a RawRecord>,
) -> Result<LengthStats> {
    let lengths: Vec<f64> = records
        .into_iter()
        .filter_map(|r| r.claim_reviewed.as_deref())
        .filter(|c| !c.trim().is_empty())
        .map(|c| c.chars().count() as f64)
        .collect();
    if lengths.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "length statistics need two non-empty claimReviewed entries, found {}",
            lengths.len()
        )));
    }
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<f64>() / n;
    let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
    Ok(LengthStats {
        mean_chars: mean,
        sd_chars: var.sqrt(),
    })
}

/// Picks the claim text of a record.
///
/// A non-blank `claimReviewed` is returned unaltered. Otherwise the headline,
/// then the description, is accepted if its length is at most
/// `mean + k * sd` (and, when `two_sided`, at least `mean - k * sd`).
pub fn extract_claim(
    record: &RawRecord,
    stats: &LengthStats,
    k: f64,
    two_sided: bool,
) -> Option<String> {
    if let Some(c) = &record.claim_reviewed {
        if !c.trim().is_empty() {
            return Some(c.clone());
        }
    }
    let upper = stats.mean_chars + k * stats.sd_chars;
    let lower = stats.mean_chars - k * stats.sd_chars;
    let fits = |s: &&String| {
        if s.trim().is_empty() {
            return false;
        }
        let len = s.chars().count() as f64;
        len <= upper && (!two_sided || len >= lower)
    };
    record
        .headline
        .as_ref()
        .filter(fits)
        .or_else(|| record.description.as_ref().filter(fits))
        .cloned()
}

/// Resolves a URL to the URL of its final redirect.
pub trait RedirectResolver {
    fn resolve(&self, url: &str) -> Result<String>;
}

/// Follows redirects over HTTP.
pub struct HttpRedirectResolver {
    agent: ureq::Agent,
}

impl HttpRedirectResolver {
    pub fn new(timeout: std::time::Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout(timeout)
                .redirects(10)
                .build(),
        }
    }
}

impl RedirectResolver for HttpRedirectResolver {
    fn resolve(&self, url: &str) -> Result<String> {
        match self.agent.head(url).call() {
            Ok(resp) => Ok(resp.get_url().to_string()),
            Err(ureq::Error::Status(_, resp)) => Ok(resp.get_url().to_string()),
            Err(e) => Err(Error::Http(format!("{url}: {e}"))),
        }
    }
}

impl<F: Fn(&str) -> Result<String>> RedirectResolver for F {
    fn resolve(&self, url: &str) -> Result<String> {
        self(url)
    }
}

fn host_of(url: &str) -> Result<String> {
    let parsed = url::Url::parse(url.trim())
        .map_err(|e| Error::InvalidInput(format!("unparseable URL {url:?}: {e}")))?;
    let host = parsed
        .host_str()
        .filter(|h| !h.is_empty())
        .ok_or_else(|| Error::InvalidInput(format!("URL {url:?} has no host")))?
        .to_lowercase();
    Ok(host
        .strip_prefix("www.")
        .map(str::to_string)
        .unwrap_or(host))
}

/// Lowercased hostname (without `www.`) of the URL or of its final redirect.
pub fn canonical_domain(url: &str, resolver: Option<&dyn RedirectResolver>) -> Result<String> {
    // Reject malformed input before touching the resolver.
    let direct = host_of(url)?;
    match resolver {
        Some(r) => host_of(&r.resolve(url)?),
        None => Ok(direct),
    }
}

/// Splits text into alphanumeric runs and single punctuation characters.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            start.get_or_insert(i);
            continue;
        }
        if let Some(s) = start.take() {
            tokens.push(&text[s..i]);
        }
        if !c.is_whitespace() {
            tokens.push(&text[i..i + c.len_utf8()]);
        }
    }
    if let Some(s) = start {
        tokens.push(&text[s..]);
    }
    tokens
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoilerplateCandidate {
    pub domain: String,
    pub ngram: String,
    /// Fraction of the domain's records containing the n-gram.
    pub share: f64,
    pub count: usize,
}

/// Token n-grams that recur within a domain's records.
///
/// An n-gram is reported when at least two records of the domain contain it
/// and their share of the domain reaches `min_share`.
pub fn detect_boilerplate_ngrams(
    records: &[FactCheckRecord],
    n_range: RangeInclusive<usize>,
    min_share: f64,
) -> Vec<BoilerplateCandidate> {
    let mut by_domain: BTreeMap<&str, Vec<&FactCheckRecord>> = BTreeMap::new();
    for r in records {
        by_domain.entry(&r.domain).or_default().push(r);
    }
    let mut out = Vec::new();
    for (domain, recs) in by_domain {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for r in &recs {
            let toks = tokenize(&r.claim_text);
            let mut seen = HashSet::new();
            for n in n_range.clone() {
                if n == 0 || n > toks.len() {
                    continue;
                }
                for w in toks.windows(n) {
                    let gram = w.join(" ");
                    if seen.insert(gram.clone()) {
                        *counts.entry(gram).or_default() += 1;
                    }
                }
            }
        }
        let total = recs.len() as f64;
        out.extend(counts.into_iter().filter_map(|(ngram, count)| {
            let share = count as f64 / total;
            (count >= 2 && share >= min_share).then(|| BoilerplateCandidate {
                domain: domain.to_string(),
                ngram,
                share,
                count,
            })
        }));
    }
    out.sort_by(|a, b| {
        b.share
            .total_cmp(&a.share)
            .then_with(|| a.domain.cmp(&b.domain))
            .then_with(|| a.ngram.cmp(&b.ngram))
    });
    out
}

/// Parses a removal list: one literal per line, `#` comments and blanks skipped.
pub fn parse_removal_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Removes every listed literal (longest first), collapses whitespace and trims.
pub fn strip_boilerplate(text: &str, removal_list: &[String]) -> String {
    let mut literals: Vec<&String> = removal_list.iter().filter(|l| !l.is_empty()).collect();
    literals.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    let mut out = text.to_string();
    for lit in literals {
        if out.contains(lit.as_str()) {
            out = out.replace(lit.as_str(), " ");
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Keeps alphanumeric characters only, case-folded.
pub fn normalize_for_dedup(text: &str) -> String {
    text.to_uppercase()
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    InvalidLine,
    DuplicateId,
    NoClaim,
    InvalidUrl,
    EmptyAfterBoilerplate,
    OutOfDateRange,
    ExactDuplicate,
    EditorialDuplicate,
    MissingEmbedding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropEntry {
    /// Record id, or `line:N` for lines that never became records.
    pub dropped_id: String,
    pub survivor_id: Option<RecordId>,
    pub reason: DropReason,
}

impl DropEntry {
    fn record(id: RecordId, survivor: Option<RecordId>, reason: DropReason) -> Self {
        Self {
            dropped_id: id.to_string(),
            survivor_id: survivor,
            reason,
        }
    }
}

/// Among records with colliding normalized claims, keeps the earliest
/// (ties: smallest id). Survivors keep their input order.
pub fn dedup_exact(records: Vec<FactCheckRecord>) -> (Vec<FactCheckRecord>, Vec<DropEntry>) {
    let mut best: HashMap<String, (NaiveDate, RecordId)> = HashMap::new();
    let keys: Vec<String> = records
        .iter()
        .map(|r| normalize_for_dedup(&r.claim_text))
        .collect();
    for (r, key) in records.iter().zip(&keys) {
        let cand = (r.review_date, r.id);
        best.entry(key.clone())
            .and_modify(|b| {
                if cand < *b {
                    *b = cand;
                }
            })
            .or_insert(cand);
    }
    let mut kept = Vec::new();
    let mut drops = Vec::new();
    for (r, key) in records.into_iter().zip(keys) {
        let survivor = best[&key].1;
        if survivor == r.id {
            kept.push(r);
        } else {
            drops.push(DropEntry::record(
                r.id,
                Some(survivor),
                DropReason::ExactDuplicate,
            ));
        }
    }
    (kept, drops)
}

/// Drops later records that exceed `threshold` cosine similarity with an
/// earlier record of the same domain or author.
///
/// Records are visited in (date, id) order and compared with every earlier
/// record of the same source, dropped or not; a dropped record is attributed
/// to the earliest survivor of its chain.
pub fn dedup_editorial(
    records: Vec<FactCheckRecord>,
    store: &EmbeddingStore,
    threshold: f64,
) -> Result<(Vec<FactCheckRecord>, Vec<DropEntry>)> {
    let rows: Vec<usize> = records
        .iter()
        .map(|r| store.row_of(r.id).ok_or(Error::UnknownId(r.id)))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| (records[i].review_date, records[i].id));

    let mut by_domain: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut by_author: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut root: Vec<Option<usize>> = vec![None; records.len()];
    let mut dropped = vec![false; records.len()];

    for &i in &order {
        let r = &records[i];
        let earlier_domain = by_domain
            .get(r.domain.as_str())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let earlier_author = r
            .author
            .as_deref()
            .and_then(|a| by_author.get(a))
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let v = store.row(rows[i]);
        // Earliest matching predecessor wins; both lists are in visiting order.
        let mut matched: Option<usize> = None;
        for &j in earlier_domain.iter().chain(earlier_author) {
            if dot(v, store.row(rows[j])) > threshold {
                let better = match matched {
                    None => true,
                    Some(m) => {
                        (records[j].review_date, records[j].id)
                            < (records[m].review_date, records[m].id)
                    }
                };
                if better {
                    matched = Some(j);
                }
            }
        }
        if let Some(j) = matched {
            dropped[i] = true;
            root[i] = Some(root[j].unwrap_or(j));
        }
        by_domain.entry(r.domain.as_str()).or_default().push(i);
        if let Some(a) = r.author.as_deref() {
            by_author.entry(a).or_default().push(i);
        }
    }

    let drops = order
        .iter()
        .filter(|&&i| dropped[i])
        .map(|&i| {
            DropEntry::record(
                records[i].id,
                root[i].map(|s| records[s].id),
                DropReason::EditorialDuplicate,
            )
        })
        .collect();
    let kept = records
        .into_iter()
        .zip(dropped)
        .filter_map(|(r, d)| (!d).then_some(r))
        .collect();
    Ok((kept, drops))
}

/// Keeps records dated inside the closed range.
pub fn filter_date_range(
    records: Vec<FactCheckRecord>,
    range: &DateRange,
) -> (Vec<FactCheckRecord>, Vec<DropEntry>) {
    let (kept, out): (Vec<_>, Vec<_>) = records
        .into_iter()
        .partition(|r| range.contains(r.review_date));
    let drops = out
        .into_iter()
        .map(|r| DropEntry::record(r.id, None, DropReason::OutOfDateRange))
        .collect();
    (kept, drops)
}

fn derive_id(digest: &[u8; 32], taken: &HashSet<RecordId>) -> RecordId {
    let mut seed = *digest;
    loop {
        let id = u64::from_le_bytes(seed[..8].try_into().expect("8 bytes")) & ID_MASK;
        if !taken.contains(&id) {
            return id;
        }
        seed = Sha256::digest(seed).into();
    }
}

/// Result of [`clean_records`].
#[derive(Debug)]
pub struct IngestOutcome {
    pub records: Vec<FactCheckRecord>,
    pub drops: Vec<DropEntry>,
    pub length_stats: Option<LengthStats>,
    /// Claims before boilerplate stripping, for n-gram review.
    pub boilerplate_candidates: Vec<BoilerplateCandidate>,
    pub input_count: usize,
}

/// Runs every cleaning step that does not need embeddings.
pub fn clean_records(
    parsed: ParseOutcome,
    config: &PipelineConfig,
    removal_list: &[String],
    resolver: Option<&dyn RedirectResolver>,
) -> Result<IngestOutcome> {
    let input_count = parsed.records.len() + parsed.errors.len();
    let mut drops: Vec<DropEntry> = parsed
        .errors
        .iter()
        .map(|e| DropEntry {
            dropped_id: format!("line:{}", e.line),
            survivor_id: None,
            reason: DropReason::InvalidLine,
        })
        .collect();
    // Without two reference lengths only claimReviewed is usable.
    let length_stats = match compute_length_stats(parsed.records.iter().map(|(_, r)| r)) {
        Ok(s) => Some(s),
        Err(Error::InsufficientData(reason)) => {
            crate::pipeline::log_event(
                "ingest",
                "warn",
                "headline fallback disabled",
                serde_json::json!({"reason": reason}),
            );
            None
        }
        Err(e) => return Err(e),
    };

    let mut taken: HashSet<RecordId> = parsed.records.iter().filter_map(|(_, r)| r.id).collect();
    let mut explicit_seen: HashSet<RecordId> = HashSet::new();
    let mut extracted = Vec::new();
    for ((line, raw), digest) in parsed.records.into_iter().zip(&parsed.line_digests) {
        let id = match raw.id {
            Some(id) => {
                if !explicit_seen.insert(id) {
                    drops.push(DropEntry {
                        dropped_id: format!("line:{line}"),
                        survivor_id: Some(id),
                        reason: DropReason::DuplicateId,
                    });
                    continue;
                }
                id
            }
            None => {
                let id = derive_id(digest, &taken);
                taken.insert(id);
                id
            }
        };
        let claim = match &length_stats {
            Some(stats) => extract_claim(
                &raw,
                stats,
                config.length_sd_multiplier,
                config.length_window_two_sided,
            ),
            None => raw.claim_reviewed.clone().filter(|c| !c.trim().is_empty()),
        };
        let Some(claim) = claim else {
            drops.push(DropEntry::record(id, None, DropReason::NoClaim));
            continue;
        };
        let domain = match canonical_domain(&raw.url, resolver) {
            Ok(d) => d,
            Err(_) => {
                drops.push(DropEntry::record(id, None, DropReason::InvalidUrl));
                continue;
            }
        };
        extracted.push(FactCheckRecord {
            id,
            claim_text: claim,
            domain,
            url: raw.url,
            author: raw.author,
            review_date: raw.review_date,
            rating_raw: raw.rating,
            language: raw.language,
            claim_text_en: raw.claim_text_en,
            noun_lemmas: raw.noun_lemmas,
        });
    }

    let boilerplate_candidates =
        detect_boilerplate_ngrams(&extracted, 3..=6, config.per_domain_min_share);

    let mut stripped = Vec::with_capacity(extracted.len());
    for mut r in extracted {
        r.claim_text = strip_boilerplate(&r.claim_text, removal_list);
        if r.claim_text.is_empty() {
            drops.push(DropEntry::record(
                r.id,
                None,
                DropReason::EmptyAfterBoilerplate,
            ));
        } else {
            stripped.push(r);
        }
    }

    let (in_range, out_of_range) = filter_date_range(stripped, &config.date_range);
    drops.extend(out_of_range);
    let (records, dup_drops) = dedup_exact(in_range);
    drops.extend(dup_drops);

    Ok(IngestOutcome {
        records,
        drops,
        length_stats,
        boilerplate_candidates,
        input_count,
    })
}

pub fn write_records_jsonl<W: Write>(records: &[FactCheckRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_jsonl<R: BufRead>(r: R) -> Result<Vec<FactCheckRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_drop_log<W: Write>(drops: &[DropEntry], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for d in drops {
        out.serialize(d)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_drop_log<R: std::io::Read>(r: R) -> Result<Vec<DropEntry>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Records keyed by id.
#[derive(Debug, Clone, Default)]
pub struct RecordTable {
    by_id: HashMap<RecordId, FactCheckRecord>,
}

impl RecordTable {
    pub fn new(records: impl IntoIterator<Item = FactCheckRecord>) -> Self {
        Self {
            by_id: records.into_iter().map(|r| (r.id, r)).collect(),
        }
    }

    pub fn get(&self, id: RecordId) -> Option<&FactCheckRecord> {
        self.by_id.get(&id)
    }

    pub fn language(&self, id: RecordId) -> Option<&str> {
        self.get(id).and_then(|r| r.language.as_deref())
    }

    pub fn date(&self, id: RecordId) -> Option<NaiveDate> {
        self.get(id).map(|r| r.review_date)
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn ids(&self) -> BTreeSet<RecordId> {
        self.by_id.keys().copied().collect()
    }
}
