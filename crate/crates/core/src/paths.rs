//! Claim evolution inside clusters: most dissimilar members, the shortest
//! path between them, language changes along that path and the regressions
//! of endpoint similarity on path length and language mixing.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed_store::EmbeddingStore;
use crate::graph::{Cluster, SimilarityGraph};
use crate::ingest::RecordTable;
use crate::stats::{ols, DesignMatrix, OlsFit};
use crate::{Error, RecordId, Result};

/// Neighbour lists with edge similarities.
pub type Adjacency = HashMap<RecordId, Vec<(RecordId, f64)>>;

const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathMode {
    /// Fewest edges; ties go to the larger total edge similarity.
    #[default]
    Hops,
    /// Smallest total `1 - cosine`.
    Distance,
}

/// Member pair with the lowest cosine similarity; ties go to the smallest
/// `(id_a, id_b)`.
///
/// Clusters above `max_exhaustive` members are scanned on a seeded sample of
/// that many members.
pub fn most_dissimilar_pair(
    cluster: &Cluster,
    store: &EmbeddingStore,
    max_exhaustive: usize,
    seed: u64,
) -> Result<(RecordId, RecordId, f64)> {
    if cluster.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "cluster {} is a singleton",
            cluster.cluster_id
        )));
    }
    let mut members: Vec<RecordId> = cluster.member_ids.clone();
    if members.len() > max_exhaustive.max(2) {
        crate::pipeline::log_event(
            "paths",
            "warn",
            "sampled most-dissimilar scan",
            serde_json::json!({"cluster_id": cluster.cluster_id, "size": members.len(), "sample": max_exhaustive}),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ cluster.cluster_id);
        let picked = rand::seq::index::sample(&mut rng, members.len(), max_exhaustive.max(2));
        let mut sample: Vec<RecordId> = picked.into_iter().map(|i| members[i]).collect();
        sample.sort_unstable();
        members = sample;
    }
    let rows: Vec<usize> = members
        .iter()
        .map(|&id| store.row_of(id).ok_or(Error::UnknownId(id)))
        .collect::<Result<_>>()?;
    let mut best = (members[0], members[1], f64::INFINITY);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let s = store.row_similarity(rows[i], rows[j]);
            if s < best.2 {
                best = (members[i], members[j], s);
            }
        }
    }
    Ok(best)
}

fn neighbours(adj: &Adjacency, id: RecordId) -> Result<&[(RecordId, f64)]> {
    adj.get(&id).map(Vec::as_slice).ok_or(Error::UnknownId(id))
}

/// Path from `a` to `b` under `mode`, deterministic under ties.
pub fn shortest_path(
    adj: &Adjacency,
    a: RecordId,
    b: RecordId,
    mode: PathMode,
) -> Result<Vec<RecordId>> {
    neighbours(adj, a)?;
    neighbours(adj, b)?;
    if a == b {
        return Ok(vec![a]);
    }
    let path = match mode {
        PathMode::Hops => hop_path(adj, a, b)?,
        PathMode::Distance => distance_path(adj, a, b)?,
    };
    path.ok_or_else(|| Error::InvalidInput(format!("{a} and {b} are not connected")))
}

/// Is `(score, path)` better than the incumbent: higher score, then
/// lexicographically smaller path.
fn better(score: f64, path: &[RecordId], incumbent: Option<&(f64, Vec<RecordId>)>) -> bool {
    match incumbent {
        None => true,
        Some((s, p)) => {
            score > s + TIE_EPS || ((score - s).abs() <= TIE_EPS && path < p.as_slice())
        }
    }
}

fn hop_path(adj: &Adjacency, a: RecordId, b: RecordId) -> Result<Option<Vec<RecordId>>> {
    let mut dist: HashMap<RecordId, usize> = HashMap::from([(a, 0)]);
    let mut layers: Vec<Vec<RecordId>> = vec![vec![a]];
    let mut queue = VecDeque::from([a]);
    while let Some(u) = queue.pop_front() {
        let du = dist[&u];
        if dist.get(&b).is_some_and(|&db| du >= db) {
            break;
        }
        for &(v, _) in neighbours(adj, u)? {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(v) {
                e.insert(du + 1);
                if layers.len() <= du + 1 {
                    layers.push(Vec::new());
                }
                layers[du + 1].push(v);
                queue.push_back(v);
            }
        }
    }
    let Some(&target) = dist.get(&b) else {
        return Ok(None);
    };
    // Best (similarity total, path) per node, one BFS layer at a time.
    let mut best: HashMap<RecordId, (f64, Vec<RecordId>)> = HashMap::from([(a, (0.0, vec![a]))]);
    for layer in layers.iter().take(target + 1).skip(1) {
        for &v in layer {
            let dv = dist[&v];
            let mut choice: Option<(f64, Vec<RecordId>)> = None;
            for &(u, sim) in neighbours(adj, v)? {
                if dist.get(&u) != Some(&(dv - 1)) {
                    continue;
                }
                let (su, pu) = &best[&u];
                let score = su + sim;
                let mut path = pu.clone();
                path.push(v);
                if better(score, &path, choice.as_ref()) {
                    choice = Some((score, path));
                }
            }
            best.insert(v, choice.expect("every non-root BFS node has a parent"));
        }
    }
    Ok(best.remove(&b).map(|(_, p)| p))
}

#[derive(PartialEq)]
struct HeapItem {
    cost: f64,
    node: RecordId,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn distance_path(adj: &Adjacency, a: RecordId, b: RecordId) -> Result<Option<Vec<RecordId>>> {
    let mut best: HashMap<RecordId, (f64, Vec<RecordId>)> = HashMap::from([(a, (0.0, vec![a]))]);
    let mut heap = BinaryHeap::from([HeapItem { cost: 0.0, node: a }]);
    while let Some(HeapItem { cost, node }) = heap.pop() {
        if cost > best[&node].0 + TIE_EPS {
            continue;
        }
        if node == b {
            break;
        }
        let base = best[&node].clone();
        for &(v, sim) in neighbours(adj, node)? {
            let c = base.0 + (1.0 - sim).max(0.0);
            let mut path = base.1.clone();
            path.push(v);
            let improves = match best.get(&v) {
                None => true,
                Some((old, old_path)) => {
                    c < old - TIE_EPS || ((c - old).abs() <= TIE_EPS && path < *old_path)
                }
            };
            if improves && !path[..path.len() - 1].contains(&v) {
                best.insert(v, (c, path));
                heap.push(HeapItem { cost: c, node: v });
            }
        }
    }
    Ok(best.remove(&b).map(|(_, p)| p))
}

/// Distinct languages and language changes between consecutive members.
pub fn path_language_stats(path: &[RecordId], records: &RecordTable) -> Result<(usize, usize)> {
    let langs: Vec<&str> = path
        .iter()
        .map(|&id| {
            records
                .language(id)
                .ok_or_else(|| Error::InvalidInput(format!("record {id} has no language")))
        })
        .collect::<Result<_>>()?;
    let mut distinct = langs.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let switches = langs.windows(2).filter(|w| w[0] != w[1]).count();
    Ok((distinct.len(), switches))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAnalysis {
    pub cluster_id: RecordId,
    pub endpoint_a: RecordId,
    pub endpoint_b: RecordId,
    pub endpoint_similarity: f64,
    pub path: Vec<RecordId>,
    /// Edge count.
    pub length: usize,
    pub n_unique_languages: usize,
    pub n_language_switches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathDataset {
    pub rows: Vec<PathAnalysis>,
    /// Clusters dropped for a path member without a language.
    pub n_missing_language: usize,
}

pub struct PathOptions {
    pub mode: PathMode,
    pub max_exhaustive: usize,
    pub seed: u64,
}

/// One row per non-singleton cluster, ordered by cluster id.
pub fn build_regression_dataset(
    clusters: &[Cluster],
    graph: &SimilarityGraph,
    store: &EmbeddingStore,
    records: &RecordTable,
    opts: &PathOptions,
) -> Result<PathDataset> {
    let adj = graph.adjacency();
    let results: Vec<Option<PathAnalysis>> = clusters
        .par_iter()
        .filter(|c| c.len() >= 2)
        .map(|c| {
            let (a, b, sim) = most_dissimilar_pair(c, store, opts.max_exhaustive, opts.seed)?;
            let path = shortest_path(&adj, a, b, opts.mode)?;
            Ok(path_language_stats(&path, records)
                .ok()
                .map(|(langs, switches)| PathAnalysis {
                    cluster_id: c.cluster_id,
                    endpoint_a: a,
                    endpoint_b: b,
                    endpoint_similarity: sim,
                    length: path.len() - 1,
                    path,
                    n_unique_languages: langs,
                    n_language_switches: switches,
                }))
        })
        .collect::<Result<_>>()?;
    let n_missing_language = results.iter().filter(|r| r.is_none()).count();
    Ok(PathDataset {
        rows: results.into_iter().flatten().collect(),
        n_missing_language,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionTerm {
    pub name: String,
    pub estimate: f64,
    pub standard_error: f64,
    pub p_value: f64,
    pub stars: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub model: String,
    pub coefficients: Vec<RegressionTerm>,
    pub r_squared: f64,
    pub adjusted_r_squared: f64,
    pub n_observations: usize,
}

impl RegressionResult {
    pub fn term(&self, name: &str) -> Option<&RegressionTerm> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

fn to_result(model: &str, fit: OlsFit) -> RegressionResult {
    RegressionResult {
        model: model.to_string(),
        coefficients: fit
            .coefficients
            .into_iter()
            .map(|c| RegressionTerm {
                stars: significance_stars(c.p_value),
                name: c.name,
                estimate: c.estimate,
                standard_error: c.standard_error,
                p_value: c.p_value,
            })
            .collect(),
        r_squared: fit.r_squared,
        adjusted_r_squared: fit.adjusted_r_squared,
        n_observations: fit.n_observations,
    }
}

/// Model A: similarity ~ unique languages + length.
/// Model B: similarity ~ language switches + length.
pub fn run_path_regressions(rows: &[PathAnalysis]) -> Result<(RegressionResult, RegressionResult)> {
    if rows.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "regressions need 10 rows, got {}",
            rows.len()
        )));
    }
    let y: Vec<f64> = rows.iter().map(|r| r.endpoint_similarity).collect();
    let length: Vec<f64> = rows.iter().map(|r| r.length as f64).collect();
    let langs: Vec<f64> = rows.iter().map(|r| r.n_unique_languages as f64).collect();
    let switches: Vec<f64> = rows.iter().map(|r| r.n_language_switches as f64).collect();
    let a = ols(&DesignMatrix::with_intercept(
        &[("n_unique_languages", &langs), ("length", &length)],
        &y,
    )?)?;
    let b = ols(&DesignMatrix::with_intercept(
        &[("n_language_switches", &switches), ("length", &length)],
        &y,
    )?)?;
    Ok((
        to_result("unique_languages", a),
        to_result("language_switches", b),
    ))
}

#[derive(Serialize)]
struct PathRow<'a> {
    cluster_id: RecordId,
    endpoint_a: RecordId,
    endpoint_b: RecordId,
    endpoint_similarity: f64,
    length: usize,
    n_unique_languages: usize,
    n_language_switches: usize,
    path: &'a str,
}

/// Path members are space separated.
pub fn write_paths_csv<W: Write>(rows: &[PathAnalysis], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        let path = r
            .path
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(" ");
        out.serialize(PathRow {
            cluster_id: r.cluster_id,
            endpoint_a: r.endpoint_a,
            endpoint_b: r.endpoint_b,
            endpoint_similarity: r.endpoint_similarity,
            length: r.length,
            n_unique_languages: r.n_unique_languages,
            n_language_switches: r.n_language_switches,
            path: &path,
        })?;
    }
    out.flush()?;
    Ok(())
}
