//! Unit-normalized claim embeddings.
//!
//! Vectors are kept as `f32` rows in one contiguous buffer. Dot products are
//! accumulated in `f64` in index order, so `cosine(a, b) == cosine(b, a)`
//! bit-for-bit.
//!
//! Binary vector file (`CGV1`), all integers little-endian:
//!
//! ```text
//! "CGV1" | u32 dimension | u64 count | count x (u64 id | dimension x f32)
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, RecordId, Result};

pub const VECTOR_MAGIC: &[u8; 4] = b"CGV1";

/// Norms this close to one are left untouched so that write/load is bit-exact.
const NORM_SLACK: f64 = 1e-6;

/// Borrowed view of one stored embedding.
#[derive(Debug, Clone, Copy)]
pub struct ClaimEmbedding<'a> {
    pub record_id: RecordId,
    pub vector: &'a [f32],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    ids: Vec<RecordId>,
    data: Vec<f32>,
    rows: HashMap<RecordId, usize>,
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| f64::from(*x) * f64::from(*y))
        .sum()
}

/// Cosine similarity of two unit vectors.
pub fn cosine(a: ClaimEmbedding<'_>, b: ClaimEmbedding<'_>) -> Result<f64> {
    if a.vector.len() != b.vector.len() {
        return Err(Error::DimensionMismatch {
            expected: a.vector.len(),
            found: b.vector.len(),
        });
    }
    Ok(dot(a.vector, b.vector))
}

/// Scales `v` to unit length in place; `None` for the zero vector.
pub fn normalize(v: &mut [f32]) -> Option<()> {
    let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    if (norm - 1.0).abs() > NORM_SLACK {
        for x in v.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    }
    Some(())
}

impl EmbeddingStore {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Format("dimension must be positive".into()));
        }
        Ok(Self {
            dimension,
            ids: Vec::new(),
            data: Vec::new(),
            rows: HashMap::new(),
        })
    }

    /// Builds a store from `(id, vector)` pairs, normalizing each vector.
    pub fn from_vectors<I>(dimension: usize, items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (RecordId, Vec<f32>)>,
    {
        let mut store = Self::new(dimension)?;
        for (id, v) in items {
            store.push(id, v)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, id: RecordId, mut vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
            });
        }
        if self.rows.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        normalize(&mut vector).ok_or(Error::ZeroVector(id))?;
        self.rows.insert(id, self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(&vector);
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[RecordId] {
        &self.ids
    }

    pub fn row_of(&self, id: RecordId) -> Option<usize> {
        self.rows.get(&id).copied()
    }

    pub fn contains(&self, id: RecordId) -> bool {
        self.rows.contains_key(&id)
    }

    pub fn id_at(&self, row: usize) -> RecordId {
        self.ids[row]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dimension..(row + 1) * self.dimension]
    }

    pub fn vector(&self, id: RecordId) -> Result<&[f32]> {
        self.row_of(id)
            .map(|r| self.row(r))
            .ok_or(Error::UnknownId(id))
    }

    pub fn embedding(&self, id: RecordId) -> Result<ClaimEmbedding<'_>> {
        Ok(ClaimEmbedding {
            record_id: id,
            vector: self.vector(id)?,
        })
    }

    /// Exact cosine similarity of two stored records.
    pub fn similarity(&self, a: RecordId, b: RecordId) -> Result<f64> {
        Ok(dot(self.vector(a)?, self.vector(b)?))
    }

    pub fn row_similarity(&self, a: usize, b: usize) -> f64 {
        dot(self.row(a), self.row(b))
    }

    pub fn iter(&self) -> impl Iterator<Item = ClaimEmbedding<'_>> + '_ {
        self.ids
            .iter()
            .enumerate()
            .map(move |(r, &id)| ClaimEmbedding {
                record_id: id,
                vector: self.row(r),
            })
    }

    /// Copy holding only the listed ids, in the order given.
    pub fn subset(&self, ids: &[RecordId]) -> Result<Self> {
        let mut out = Self::new(self.dimension)?;
        for &id in ids {
            let v = self.vector(id)?.to_vec();
            out.rows.insert(id, out.ids.len());
            out.ids.push(id);
            out.data.extend_from_slice(&v);
        }
        Ok(out)
    }
}

pub fn write_vector_file(store: &EmbeddingStore, path: &Path) -> Result<()> {
    if store.is_empty() {
        return Err(Error::InvalidInput(
            "refusing to write an empty vector store".into(),
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_vectors(store, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_vectors<W: Write>(store: &EmbeddingStore, w: &mut W) -> Result<()> {
    w.write_all(VECTOR_MAGIC)?;
    w.write_all(&(store.dimension as u32).to_le_bytes())?;
    w.write_all(&(store.len() as u64).to_le_bytes())?;
    for e in store.iter() {
        w.write_all(&e.record_id.to_le_bytes())?;
        for x in e.vector {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_vector_file(path: &Path) -> Result<EmbeddingStore> {
    let mut r = BufReader::new(File::open(path)?);
    read_vectors(&mut r)
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            Error::Format(format!("truncated payload while reading {what}"))
        }
        _ => Error::Io(e),
    })
}

pub fn read_vectors<R: Read>(r: &mut R) -> Result<EmbeddingStore> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(r, &mut magic, "magic")?;
    if &magic != VECTOR_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:?}, expected \"CGV1\""
        )));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    read_exact_or_truncated(r, &mut b4, "dimension")?;
    let dimension = u32::from_le_bytes(b4) as usize;
    if dimension == 0 {
        return Err(Error::Format("dimension 0".into()));
    }
    read_exact_or_truncated(r, &mut b8, "count")?;
    let count = u64::from_le_bytes(b8) as usize;
    let mut store = EmbeddingStore::new(dimension)?;
    let mut row = vec![0u8; dimension * 4];
    for i in 0..count {
        read_exact_or_truncated(r, &mut b8, &format!("id of row {i}"))?;
        let id = u64::from_le_bytes(b8);
        read_exact_or_truncated(r, &mut row, &format!("vector of row {i}"))?;
        let v = row
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        store.push(id, v)?;
    }
    Ok(store)
}

/// Settings for [`fetch_embeddings`].
#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub batch_size: usize,
    /// Retries after the first attempt, for transport errors and 5xx/429.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    /// Completed batches are stored here and skipped on rerun.
    pub checkpoint_dir: Option<PathBuf>,
    pub timeout: Duration,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_retries: 3,
            initial_backoff: Duration::from_millis(200),
            checkpoint_dir: None,
            timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchReport {
    pub batches: usize,
    pub batches_from_checkpoint: usize,
    pub retries: u32,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct BatchCheckpoint {
    digest: String,
    vectors: Vec<Vec<f32>>,
}

fn batch_digest(texts: &[&str]) -> String {
    let mut h = Sha256::new();
    for t in texts {
        h.update((t.len() as u64).to_le_bytes());
        h.update(t.as_bytes());
    }
    hex::encode(h.finalize())
}

pub(crate) enum Attempt<T> {
    Done(T),
    Retryable(String),
    Fatal(Error),
}

/// Issues one JSON POST, classifying failures for the retry loop.
pub(crate) fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    agent: &ureq::Agent,
    url: &str,
    body: &Req,
) -> Attempt<Resp> {
    match agent.post(url).send_json(body) {
        Ok(resp) => match resp.into_json::<Resp>() {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fatal(Error::Http(format!("malformed response from {url}: {e}"))),
        },
        Err(ureq::Error::Status(code, resp)) => {
            let msg = format!(
                "{url} returned HTTP {code}: {}",
                resp.into_string().unwrap_or_default()
            );
            if code >= 500 || code == 429 {
                Attempt::Retryable(msg)
            } else {
                Attempt::Fatal(Error::Http(msg))
            }
        }
        Err(ureq::Error::Transport(t)) => Attempt::Retryable(format!("{url}: {t}")),
    }
}

/// Runs `op` until it succeeds, fails fatally, or exhausts `max_retries`.
pub(crate) fn with_retries<T>(
    max_retries: u32,
    initial_backoff: Duration,
    retries: &mut u32,
    mut op: impl FnMut() -> Attempt<T>,
) -> Result<T> {
    let mut backoff = initial_backoff;
    let mut attempt = 0;
    loop {
        match op() {
            Attempt::Done(v) => return Ok(v),
            Attempt::Fatal(e) => return Err(e),
            Attempt::Retryable(msg) => {
                if attempt >= max_retries {
                    return Err(Error::Http(format!(
                        "giving up after {} attempts: {msg}",
                        attempt + 1
                    )));
                }
                attempt += 1;
                *retries += 1;
                crate::pipeline::log_event(
                    "embed",
                    "warn",
                    "retrying request",
                    serde_json::json!({"attempt": attempt, "error": msg}),
                );
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
    }
}

pub(crate) fn endpoint_url(base: &str, route: &str) -> String {
    format!(
        "{}/{}",
        base.trim_end_matches('/'),
        route.trim_start_matches('/')
    )
}

/// Embeds claims through an HTTP service speaking `POST /embed`.
///
/// Batches are sent in order. Each response must carry exactly one vector
/// per text and keep the dimension of the first batch.
pub fn fetch_embeddings(
    claims: &[(RecordId, String)],
    endpoint: &str,
    options: &FetchOptions,
) -> Result<(EmbeddingStore, FetchReport)> {
    if options.batch_size == 0 {
        return Err(Error::InvalidInput("batch_size must be positive".into()));
    }
    if claims.is_empty() {
        return Err(Error::InvalidInput("no claims to embed".into()));
    }
    if let Some(dir) = &options.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let agent = ureq::AgentBuilder::new().timeout(options.timeout).build();
    let url = endpoint_url(endpoint, "embed");
    let mut report = FetchReport::default();
    let mut store: Option<EmbeddingStore> = None;

    for (batch_no, batch) in claims.chunks(options.batch_size).enumerate() {
        let texts: Vec<&str> = batch.iter().map(|(_, t)| t.as_str()).collect();
        let digest = batch_digest(&texts);
        let ckpt_path = options
            .checkpoint_dir
            .as_ref()
            .map(|d| d.join(format!("batch_{batch_no:06}.json")));

        let cached = ckpt_path
            .as_ref()
            .filter(|p| p.exists())
            .and_then(|p| std::fs::read(p).ok())
            .and_then(|bytes| serde_json::from_slice::<BatchCheckpoint>(&bytes).ok())
            .filter(|c| c.digest == digest && c.vectors.len() == texts.len());

        let vectors = match cached {
            Some(c) => {
                report.batches_from_checkpoint += 1;
                c.vectors
            }
            None => {
                let resp: EmbedResponse = with_retries(
                    options.max_retries,
                    options.initial_backoff,
                    &mut report.retries,
                    || post_json(&agent, &url, &EmbedRequest { texts: &texts }),
                )?;
                if resp.vectors.len() != texts.len() {
                    return Err(Error::CountMismatch {
                        expected: texts.len(),
                        found: resp.vectors.len(),
                    });
                }
                if let Some(p) = &ckpt_path {
                    let c = BatchCheckpoint {
                        digest,
                        vectors: resp.vectors,
                    };
                    std::fs::write(p, serde_json::to_vec(&c)?)?;
                    c.vectors
                } else {
                    resp.vectors
                }
            }
        };
        report.batches += 1;

        for ((id, _), v) in batch.iter().zip(vectors) {
            let s = match store.as_mut() {
                Some(s) => s,
                None => store.insert(EmbeddingStore::new(v.len())?),
            };
            if v.len() != s.dimension() {
                return Err(Error::DimensionMismatch {
                    expected: s.dimension(),
                    found: v.len(),
                });
            }
            s.push(*id, v)?;
        }
    }
    Ok((store.expect("at least one batch"), report))
}
