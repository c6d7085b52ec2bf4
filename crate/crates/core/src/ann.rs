//! Random-hyperplane LSH with threshold retrieval.
//!
//! The `n_hyperplanes` signed random projections are split evenly into
//! `n_tables` hash tables. A query probes, in every table, all buckets whose
//! signature lies within Hamming distance `n_probe_bits` of its own, scores
//! the union of those buckets with exact cosine similarity and ranks them.
//! When the candidate union is smaller than the requested `k` (or than
//! [`MIN_CANDIDATES`]), the probing radius grows one bit at a time; at the
//! full table width every bucket is visited and retrieval becomes exact.
//!
//! [`HyperplaneIndex::query_threshold`] grows `k` by doubling from an initial
//! value until the lowest retrieved similarity drops below the threshold,
//! then binary-searches the last batch for the cut.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{passes, PipelineConfig};
use crate::embed_store::{dot, EmbeddingStore};
use crate::{Error, RecordId, Result};

pub const INDEX_MAGIC: &[u8; 4] = b"CGI1";

/// Candidate unions smaller than this widen the probe radius.
pub const MIN_CANDIDATES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IndexParams {
    pub n_hyperplanes: usize,
    pub n_tables: usize,
    pub n_probe_bits: usize,
    pub seed: u64,
}

impl IndexParams {
    pub fn from_config(config: &PipelineConfig) -> Self {
        Self {
            n_hyperplanes: config.n_hyperplanes,
            n_tables: config.n_tables,
            n_probe_bits: config.n_probe_bits,
            seed: config.rng_seed,
        }
    }

    pub fn bits_per_table(&self) -> usize {
        self.n_hyperplanes / self.n_tables
    }

    /// Probing radius that visits every bucket.
    pub fn exhaustive(mut self) -> Self {
        self.n_probe_bits = self.bits_per_table();
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_hyperplanes < 1 {
            return Err(Error::config(
                "n_hyperplanes",
                "need at least one hyperplane",
            ));
        }
        if self.n_tables < 1 || !self.n_hyperplanes.is_multiple_of(self.n_tables) {
            return Err(Error::config(
                "n_tables",
                "must evenly divide n_hyperplanes",
            ));
        }
        if self.bits_per_table() > 64 {
            return Err(Error::config(
                "n_tables",
                "at most 64 hyperplanes per table",
            ));
        }
        Ok(())
    }
}

impl Default for IndexParams {
    fn default() -> Self {
        Self::from_config(&PipelineConfig::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NeighborHit {
    pub record_id: RecordId,
    pub similarity: f64,
}

/// Doubling schedule and final cut of one threshold query.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ThresholdTrace {
    pub visited_k: Vec<usize>,
    pub cut: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneIndex {
    params: IndexParams,
    dimension: usize,
    /// `n_hyperplanes x dimension`, unit rows.
    hyperplanes: Vec<f32>,
    /// Per table: signature -> store rows.
    tables: Vec<BTreeMap<u64, Vec<u32>>>,
    n_rows: usize,
}

fn hit_order(a: &NeighborHit, b: &NeighborHit) -> std::cmp::Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then(a.record_id.cmp(&b.record_id))
}

impl HyperplaneIndex {
    /// Draws hyperplanes from the standard normal (seeded) and hashes every stored vector.
    pub fn build(store: &EmbeddingStore, params: IndexParams) -> Result<Self> {
        params.validate()?;
        let d = store.dimension();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut hyperplanes = Vec::with_capacity(params.n_hyperplanes * d);
        for _ in 0..params.n_hyperplanes {
            let mut row: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
            hyperplanes.extend(row.into_iter().map(|x| x as f32));
        }
        Self::from_parts(store, params, hyperplanes)
    }

    /// Uses caller-supplied hyperplanes (row-major, `params.n_hyperplanes` rows).
    pub fn with_hyperplanes(
        store: &EmbeddingStore,
        params: IndexParams,
        hyperplanes: Vec<Vec<f32>>,
    ) -> Result<Self> {
        params.validate()?;
        if hyperplanes.len() != params.n_hyperplanes {
            return Err(Error::InvalidInput(format!(
                "expected {} hyperplanes, got {}",
                params.n_hyperplanes,
                hyperplanes.len()
            )));
        }
        let mut flat = Vec::with_capacity(hyperplanes.len() * store.dimension());
        for h in hyperplanes {
            if h.len() != store.dimension() {
                return Err(Error::DimensionMismatch {
                    expected: store.dimension(),
                    found: h.len(),
                });
            }
            flat.extend(h);
        }
        Self::from_parts(store, params, flat)
    }

    fn from_parts(
        store: &EmbeddingStore,
        params: IndexParams,
        hyperplanes: Vec<f32>,
    ) -> Result<Self> {
        if store.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty store".into()));
        }
        let mut index = Self {
            params,
            dimension: store.dimension(),
            hyperplanes,
            tables: vec![BTreeMap::new(); params.n_tables],
            n_rows: store.len(),
        };
        let signatures: Vec<Vec<u64>> = (0..store.len())
            .into_par_iter()
            .map(|r| index.signatures(store.row(r)))
            .collect();
        for (row, sigs) in signatures.into_iter().enumerate() {
            for (table, sig) in index.tables.iter_mut().zip(sigs) {
                table.entry(sig).or_default().push(row as u32);
            }
        }
        Ok(index)
    }

    pub fn params(&self) -> IndexParams {
        self.params
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn hyperplane(&self, i: usize) -> &[f32] {
        &self.hyperplanes[i * self.dimension..(i + 1) * self.dimension]
    }

    /// One signature per table; bit `i` is set iff `vector . hyperplane_i >= 0`.
    pub fn signatures(&self, vector: &[f32]) -> Vec<u64> {
        let bits = self.params.bits_per_table();
        (0..self.params.n_tables)
            .map(|t| {
                (0..bits).fold(0u64, |sig, i| {
                    if dot(vector, self.hyperplane(t * bits + i)) >= 0.0 {
                        sig | (1 << i)
                    } else {
                        sig
                    }
                })
            })
            .collect()
    }

    pub fn tables(&self) -> &[BTreeMap<u64, Vec<u32>>] {
        &self.tables
    }

    /// Same index with a different default probing radius.
    pub fn with_probe_bits(mut self, n_probe_bits: usize) -> Self {
        self.params.n_probe_bits = n_probe_bits.min(self.params.bits_per_table());
        self
    }

    fn check_store(&self, store: &EmbeddingStore) -> Result<()> {
        if store.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: store.dimension(),
            });
        }
        if store.len() != self.n_rows {
            return Err(Error::InvalidInput(format!(
                "index covers {} vectors, store holds {}",
                self.n_rows,
                store.len()
            )));
        }
        Ok(())
    }

    fn retrieval<'a>(
        &'a self,
        store: &'a EmbeddingStore,
        query_id: RecordId,
    ) -> Result<Retrieval<'a>> {
        self.check_store(store)?;
        let query_row = store.row_of(query_id).ok_or(Error::UnknownId(query_id))?;
        let signatures = self.signatures(store.row(query_row));
        let mut seen = HashSet::new();
        seen.insert(query_row as u32);
        let mut r = Retrieval {
            index: self,
            store,
            query_row,
            signatures,
            radius: 0,
            seen,
            hits: Vec::new(),
        };
        r.probe_ring(0);
        let start = self.params.n_probe_bits.min(self.params.bits_per_table());
        while r.radius < start {
            r.radius += 1;
            r.probe_ring(r.radius);
        }
        r.sort();
        Ok(r)
    }

    /// Up to `k` approximate nearest neighbours, most similar first.
    pub fn query_topk(
        &self,
        store: &EmbeddingStore,
        query_id: RecordId,
        k: usize,
    ) -> Result<Vec<NeighborHit>> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        let mut r = self.retrieval(store, query_id)?;
        r.ensure(k);
        Ok(r.top(k).to_vec())
    }

    /// All retrieved neighbours with similarity at or above `threshold`.
    pub fn query_threshold(
        &self,
        store: &EmbeddingStore,
        query_id: RecordId,
        threshold: f64,
        initial_k: usize,
        strict: bool,
    ) -> Result<Vec<NeighborHit>> {
        self.query_threshold_traced(store, query_id, threshold, initial_k, strict)
            .map(|(hits, _)| hits)
    }

    pub fn query_threshold_traced(
        &self,
        store: &EmbeddingStore,
        query_id: RecordId,
        threshold: f64,
        initial_k: usize,
        strict: bool,
    ) -> Result<(Vec<NeighborHit>, ThresholdTrace)> {
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "threshold {threshold} outside (0, 1]"
            )));
        }
        if initial_k == 0 {
            return Err(Error::InvalidInput("initial_k must be at least 1".into()));
        }
        let mut r = self.retrieval(store, query_id)?;
        let mut trace = ThresholdTrace::default();
        let mut k = initial_k;
        let mut batch_start = 0;
        loop {
            trace.visited_k.push(k);
            r.ensure(k);
            let batch = r.top(k);
            let exhausted = batch.len() < k;
            if exhausted || !passes(batch[k - 1].similarity, threshold, strict) {
                break;
            }
            batch_start = k;
            k *= 2;
        }
        let batch = r.top(k);
        let lo = batch_start.min(batch.len());
        let cut = lo + batch[lo..].partition_point(|h| passes(h.similarity, threshold, strict));
        trace.cut = cut;
        Ok((batch[..cut].to_vec(), trace))
    }

    /// Writes the `CGI1` serialization.
    pub fn write_to<W: Write>(&self, store: &EmbeddingStore, w: &mut W) -> Result<()> {
        self.check_store(store)?;
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&(self.params.n_hyperplanes as u32).to_le_bytes())?;
        w.write_all(&(self.dimension as u32).to_le_bytes())?;
        w.write_all(&self.params.seed.to_le_bytes())?;
        w.write_all(&(self.params.n_tables as u32).to_le_bytes())?;
        w.write_all(&(self.params.n_probe_bits as u32).to_le_bytes())?;
        w.write_all(&(self.n_rows as u64).to_le_bytes())?;
        for x in &self.hyperplanes {
            w.write_all(&x.to_le_bytes())?;
        }
        for table in &self.tables {
            w.write_all(&(table.len() as u64).to_le_bytes())?;
            for (sig, rows) in table {
                w.write_all(&sig.to_le_bytes())?;
                w.write_all(&(rows.len() as u32).to_le_bytes())?;
                for &row in rows {
                    w.write_all(&store.id_at(row as usize).to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn write_file(&self, store: &EmbeddingStore, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(store, &mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads a `CGI1` index; bucket ids are resolved against `store`.
    pub fn read_from<R: Read>(store: &EmbeddingStore, r: &mut R) -> Result<Self> {
        let mut reader = Le(r);
        let magic = reader.bytes::<4>("magic")?;
        if &magic != INDEX_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {magic:?}, expected \"CGI1\""
            )));
        }
        let n_hyperplanes = reader.u32("n_hyperplanes")? as usize;
        let dimension = reader.u32("dimension")? as usize;
        let seed = reader.u64("seed")?;
        let n_tables = reader.u32("n_tables")? as usize;
        let n_probe_bits = reader.u32("n_probe_bits")? as usize;
        let n_rows = reader.u64("row count")? as usize;
        let params = IndexParams {
            n_hyperplanes,
            n_tables,
            n_probe_bits,
            seed,
        };
        params.validate()?;
        if dimension != store.dimension() {
            return Err(Error::DimensionMismatch {
                expected: store.dimension(),
                found: dimension,
            });
        }
        if n_rows != store.len() {
            return Err(Error::Format(format!(
                "index covers {n_rows} vectors, store holds {}",
                store.len()
            )));
        }
        let mut hyperplanes = Vec::with_capacity(n_hyperplanes * dimension);
        for _ in 0..n_hyperplanes * dimension {
            hyperplanes.push(f32::from_le_bytes(reader.bytes::<4>("hyperplanes")?));
        }
        let mut tables = Vec::with_capacity(n_tables);
        for t in 0..n_tables {
            let n_buckets = reader.u64("bucket count")? as usize;
            let mut table = BTreeMap::new();
            let mut covered = vec![false; n_rows];
            for _ in 0..n_buckets {
                let sig = reader.u64("signature")?;
                let len = reader.u32("bucket length")? as usize;
                let mut rows = Vec::with_capacity(len);
                for _ in 0..len {
                    let id = reader.u64("bucket id")?;
                    let row = store.row_of(id).ok_or(Error::UnknownId(id))?;
                    if std::mem::replace(&mut covered[row], true) {
                        return Err(Error::Format(format!("id {id} appears twice in table {t}")));
                    }
                    rows.push(row as u32);
                }
                table.insert(sig, rows);
            }
            if let Some(row) = covered.iter().position(|c| !c) {
                return Err(Error::Format(format!(
                    "id {} missing from table {t}",
                    store.id_at(row)
                )));
            }
            tables.push(table);
        }
        Ok(Self {
            params,
            dimension,
            hyperplanes,
            tables,
            n_rows,
        })
    }

    pub fn read_file(store: &EmbeddingStore, path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(store, &mut r)
    }
}

/// Exact scan of the whole store; ground truth for recall checks.
pub fn brute_force_threshold(
    store: &EmbeddingStore,
    query_id: RecordId,
    threshold: f64,
    strict: bool,
) -> Result<Vec<NeighborHit>> {
    let q = store.row_of(query_id).ok_or(Error::UnknownId(query_id))?;
    let mut hits: Vec<NeighborHit> = (0..store.len())
        .filter(|&r| r != q)
        .map(|r| NeighborHit {
            record_id: store.id_at(r),
            similarity: store.row_similarity(q, r),
        })
        .filter(|h| passes(h.similarity, threshold, strict))
        .collect();
    hits.sort_by(hit_order);
    Ok(hits)
}

struct Le<'a, R: Read>(&'a mut R);

impl<R: Read> Le<'_, R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0.read_exact(&mut b).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => {
                Error::Format(format!("truncated index while reading {what}"))
            }
            _ => Error::Io(e),
        })?;
        Ok(b)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.bytes::<4>(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.bytes::<8>(what).map(u64::from_le_bytes)
    }
}

/// Incrementally widening candidate set for one query.
struct Retrieval<'a> {
    index: &'a HyperplaneIndex,
    store: &'a EmbeddingStore,
    query_row: usize,
    signatures: Vec<u64>,
    radius: usize,
    seen: HashSet<u32>,
    hits: Vec<NeighborHit>,
}

impl Retrieval<'_> {
    fn bits(&self) -> usize {
        self.index.params.bits_per_table()
    }

    fn ensure(&mut self, k: usize) {
        let want = k.max(MIN_CANDIDATES);
        let mut grew = false;
        while self.hits.len() < want && self.radius < self.bits() {
            self.radius += 1;
            self.probe_ring(self.radius);
            grew = true;
        }
        if grew {
            self.sort();
        }
    }

    fn top(&self, k: usize) -> &[NeighborHit] {
        &self.hits[..k.min(self.hits.len())]
    }

    fn sort(&mut self) {
        self.hits.sort_by(hit_order);
    }

    /// Adds every bucket at Hamming distance exactly `radius` in every table.
    fn probe_ring(&mut self, radius: usize) {
        let bits = self.bits();
        for (t, table) in self.index.tables.iter().enumerate() {
            let sig = self.signatures[t];
            let mut rows: Vec<u32> = Vec::new();
            if binomial(bits, radius) <= table.len() as u128 {
                for_each_flip(bits, radius, &mut |mask| {
                    if let Some(b) = table.get(&(sig ^ mask)) {
                        rows.extend_from_slice(b);
                    }
                });
            } else {
                for (other, b) in table {
                    if (other ^ sig).count_ones() as usize == radius {
                        rows.extend_from_slice(b);
                    }
                }
            }
            for row in rows {
                if self.seen.insert(row) {
                    self.hits.push(NeighborHit {
                        record_id: self.store.id_at(row as usize),
                        similarity: self.store.row_similarity(self.query_row, row as usize),
                    });
                }
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn for_each_flip(bits: usize, radius: usize, f: &mut impl FnMut(u64)) {
    fn rec(start: usize, bits: usize, left: usize, mask: u64, f: &mut impl FnMut(u64)) {
        if left == 0 {
            f(mask);
            return;
        }
        for b in start..=bits - left {
            rec(b + 1, bits, left - 1, mask | (1 << b), f);
        }
    }
    if radius <= bits {
        rec(0, bits, radius, 0, f);
    }
}
