//! Goodness-of-fit measures for a clustering.
//!
//! Cohesion is the population variance of pairwise cosine distance inside a
//! cluster, separation is the mean cosine distance between cluster centroids,
//! and verdict consistency is the share of a cluster's fact-checks that carry
//! the cluster's modal verdict.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed_store::EmbeddingStore;
use crate::graph::{cluster_stats, connected_components, Cluster, SimilarityGraph};
use crate::ingest::{FactCheckRecord, RecordTable};
use crate::stats::population_variance;
use crate::{Error, RecordId, Result};

/// Bundled normalized-verdict table.
pub const DEFAULT_VERDICT_TABLE: &str = include_str!("../assets/verdicts.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    False,
    MostlyFalse,
    MostlyTrue,
    True,
}

impl Verdict {
    /// Two-label view: mostly-false counts as false, mostly-true as true.
    pub fn collapse(self) -> Verdict {
        match self {
            Verdict::False | Verdict::MostlyFalse => Verdict::False,
            Verdict::MostlyTrue | Verdict::True => Verdict::True,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::False => "false",
            Verdict::MostlyFalse => "mostly-false",
            Verdict::MostlyTrue => "mostly-true",
            Verdict::True => "true",
        }
    }
}

/// Lowercases and drops whitespace and punctuation.
pub fn normalize_verdict(raw: &str) -> String {
    raw.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect()
}

/// Parses a `{"raw verdict": "label"}` table; keys are normalized.
pub fn parse_verdict_table(json: &str) -> Result<BTreeMap<String, Verdict>> {
    let raw: BTreeMap<String, Verdict> = serde_json::from_str(json)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| (normalize_verdict(&k), v))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerdictMap {
    map: HashMap<String, Verdict>,
    pub min_count: usize,
}

impl VerdictMap {
    pub fn lookup(&self, raw: &str) -> Option<Verdict> {
        self.map.get(&normalize_verdict(raw)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerdictFrequency {
    pub verdict: String,
    pub count: usize,
    pub mapped: Option<Verdict>,
}

/// Normalized verdict frequencies, most frequent first.
pub fn verdict_frequencies<'a>(
    records: impl IntoIterator<Item = &'a FactCheckRecord>,
) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in records {
        if let Some(v) = &r.rating_raw {
            let key = normalize_verdict(v);
            if !key.is_empty() {
                *counts.entry(key).or_default() += 1;
            }
        }
    }
    let mut out: Vec<_> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Maps verdicts that are frequent enough and present in the table.
pub fn build_verdict_map<'a>(
    records: impl IntoIterator<Item = &'a FactCheckRecord>,
    min_count: usize,
    table: &BTreeMap<String, Verdict>,
) -> (VerdictMap, Vec<VerdictFrequency>) {
    let freqs = verdict_frequencies(records);
    let mut map = HashMap::new();
    let report = freqs
        .into_iter()
        .map(|(verdict, count)| {
            let mapped = if count >= min_count {
                table.get(&verdict).copied()
            } else {
                None
            };
            if let Some(label) = mapped {
                map.insert(verdict.clone(), label);
            }
            VerdictFrequency {
                verdict,
                count,
                mapped,
            }
        })
        .collect();
    (VerdictMap { map, min_count }, report)
}

pub fn write_verdict_frequencies<W: Write>(rows: &[VerdictFrequency], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["verdict", "count", "mapped_label"])?;
    for r in rows {
        out.write_record([
            r.verdict.as_str(),
            &r.count.to_string(),
            r.mapped.map(Verdict::as_str).unwrap_or(""),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Population variance of `1 - cosine` over all member pairs.
pub fn intra_cluster_variance(cluster: &Cluster, store: &EmbeddingStore) -> Result<f64> {
    if cluster.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "cluster {} is a singleton",
            cluster.cluster_id
        )));
    }
    let rows = member_rows(cluster, store)?;
    let mut distances = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            distances.push(1.0 - store.row_similarity(rows[i], rows[j]));
        }
    }
    Ok(population_variance(&distances).expect("at least one pair"))
}

fn member_rows(cluster: &Cluster, store: &EmbeddingStore) -> Result<Vec<usize>> {
    cluster
        .member_ids
        .iter()
        .map(|&id| store.row_of(id).ok_or(Error::UnknownId(id)))
        .collect()
}

/// Mean member vector, renormalized.
pub fn cluster_centroid(cluster: &Cluster, store: &EmbeddingStore) -> Result<Vec<f64>> {
    if cluster.is_empty() {
        return Err(Error::InvalidInput("empty cluster".into()));
    }
    let mut sum = vec![0f64; store.dimension()];
    for row in member_rows(cluster, store)? {
        for (s, &x) in sum.iter_mut().zip(store.row(row)) {
            *s += x as f64;
        }
    }
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::InvalidInput(format!(
            "centroid of cluster {} is the zero vector",
            cluster.cluster_id
        )));
    }
    Ok(sum.into_iter().map(|x| x / norm).collect())
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean over clusters of the average centroid distance to up to `sample_cap`
/// other centroids, drawn without replacement.
pub fn inter_cluster_distance(
    clusters: &[Cluster],
    store: &EmbeddingStore,
    sample_cap: usize,
    seed: u64,
) -> Result<f64> {
    if clusters.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "inter-cluster distance needs two clusters, got {}",
            clusters.len()
        )));
    }
    if sample_cap == 0 {
        return Err(Error::config(
            "inter_cluster_sample_cap",
            "must be at least 1",
        ));
    }
    let centroids: Vec<Vec<f64>> = clusters
        .par_iter()
        .map(|c| cluster_centroid(c, store))
        .collect::<Result<_>>()?;
    let n = centroids.len();
    let per_cluster: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let others = n - 1;
            let pick = |k: usize| if k < i { k } else { k + 1 };
            let chosen: Vec<usize> = if sample_cap >= others {
                (0..others).map(pick).collect()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                rand::seq::index::sample(&mut rng, others, sample_cap)
                    .into_iter()
                    .map(pick)
                    .collect()
            };
            chosen
                .iter()
                .map(|&j| 1.0 - dot64(&centroids[i], &centroids[j]))
                .sum::<f64>()
                / chosen.len() as f64
        })
        .collect();
    Ok(per_cluster.iter().sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    /// Weighted by the number of mapped members per cluster.
    pub weighted: f64,
    pub unweighted: f64,
    pub n_clusters: usize,
}

/// Modal verdict share over clusters with at least two mapped members.
pub fn modal_consistency(
    clusters: &[Cluster],
    records: &RecordTable,
    verdicts: &VerdictMap,
    n_labels: usize,
) -> Result<Consistency> {
    if n_labels != 2 && n_labels != 4 {
        return Err(Error::InvalidInput(format!(
            "n_labels must be 2 or 4, got {n_labels}"
        )));
    }
    let mut weighted_num = 0.0;
    let mut weight = 0.0;
    let mut fractions = Vec::new();
    for c in clusters.iter().filter(|c| c.len() >= 2) {
        let mut counts: BTreeMap<Verdict, usize> = BTreeMap::new();
        for &id in &c.member_ids {
            let label = records
                .get(id)
                .and_then(|r| r.rating_raw.as_deref())
                .and_then(|raw| verdicts.lookup(raw));
            if let Some(mut v) = label {
                if n_labels == 2 {
                    v = v.collapse();
                }
                *counts.entry(v).or_default() += 1;
            }
        }
        let mapped: usize = counts.values().sum();
        if mapped < 2 {
            continue;
        }
        let modal = *counts.values().max().expect("nonempty") as f64;
        weighted_num += modal;
        weight += mapped as f64;
        fractions.push(modal / mapped as f64);
    }
    if fractions.is_empty() {
        return Err(Error::InsufficientData(
            "no cluster has two mapped verdicts".into(),
        ));
    }
    Ok(Consistency {
        weighted: weighted_num / weight,
        unweighted: fractions.iter().sum::<f64>() / fractions.len() as f64,
        n_clusters: fractions.len(),
    })
}

/// Adjusted Rand index between two partitions of the same node set.
pub fn adjusted_rand_index(a: &[Cluster], b: &[Cluster]) -> Result<f64> {
    let label_a: HashMap<RecordId, usize> = crate::graph::membership(a);
    let label_b: HashMap<RecordId, usize> = crate::graph::membership(b);
    if label_a.len() != label_b.len() || label_a.keys().any(|k| !label_b.contains_key(k)) {
        return Err(Error::InvalidInput(
            "partitions cover different node sets".into(),
        ));
    }
    let n = label_a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    for (id, &ca) in &label_a {
        *table.entry((ca, label_b[id])).or_default() += 1;
    }
    let choose2 = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
    let index: f64 = table.values().map(|&x| choose2(x)).sum();
    let sum_a: f64 = a.iter().map(|c| choose2(c.len() as u64)).sum();
    let sum_b: f64 = b.iter().map(|c| choose2(c.len() as u64)).sum();
    let total = choose2(n as u64);
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if (max - expected).abs() < f64::EPSILON {
        // Both partitions are all-singletons or a single block.
        return Ok(if (index - expected).abs() < f64::EPSILON {
            1.0
        } else {
            0.0
        });
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub n_clusters: usize,
    pub n_nonsingleton: usize,
    pub singleton_fraction: f64,
    pub mean_intra_variance: Option<f64>,
    pub mean_inter_distance: Option<f64>,
    pub modal_consistency_2: Option<f64>,
    pub modal_consistency_4: Option<f64>,
    pub modal_consistency_2_unweighted: Option<f64>,
    pub modal_consistency_4_unweighted: Option<f64>,
    /// Share of fact-checks with a mapped verdict.
    pub coverage: Option<f64>,
}

/// Verdict inputs for consistency scoring.
pub struct VerdictContext<'a> {
    pub records: &'a RecordTable,
    pub verdicts: &'a VerdictMap,
}

/// Clusters `graph` and scores the result.
pub fn evaluate_clustering(
    threshold: f64,
    graph: &SimilarityGraph,
    store: &EmbeddingStore,
    verdicts: Option<&VerdictContext<'_>>,
    sample_cap: usize,
    seed: u64,
) -> Result<(Vec<Cluster>, EvalReport)> {
    let clusters = connected_components(graph);
    let stats = cluster_stats(&clusters)?;
    let repeated: Vec<Cluster> = clusters.iter().filter(|c| c.len() >= 2).cloned().collect();
    let variances: Vec<f64> = repeated
        .par_iter()
        .map(|c| intra_cluster_variance(c, store))
        .collect::<Result<_>>()?;
    let mean_intra_variance =
        (!variances.is_empty()).then(|| variances.iter().sum::<f64>() / variances.len() as f64);
    let mean_inter_distance = if repeated.len() >= 2 {
        Some(inter_cluster_distance(&repeated, store, sample_cap, seed)?)
    } else {
        None
    };
    let (mut c2, mut c4, mut coverage) = (None, None, None);
    if let Some(ctx) = verdicts {
        c2 = modal_consistency(&clusters, ctx.records, ctx.verdicts, 2).ok();
        c4 = modal_consistency(&clusters, ctx.records, ctx.verdicts, 4).ok();
        let mapped = graph
            .nodes()
            .iter()
            .filter(|&&id| {
                ctx.records
                    .get(id)
                    .and_then(|r| r.rating_raw.as_deref())
                    .and_then(|v| ctx.verdicts.lookup(v))
                    .is_some()
            })
            .count();
        coverage = Some(mapped as f64 / graph.nodes().len() as f64);
    }
    let report = EvalReport {
        threshold,
        n_clusters: clusters.len(),
        n_nonsingleton: stats.n_repeated_claims,
        singleton_fraction: stats.singleton_fraction,
        mean_intra_variance,
        mean_inter_distance,
        modal_consistency_2: c2.map(|c| c.weighted),
        modal_consistency_4: c4.map(|c| c.weighted),
        modal_consistency_2_unweighted: c2.map(|c| c.unweighted),
        modal_consistency_4_unweighted: c4.map(|c| c.unweighted),
        coverage,
    };
    Ok((clusters, report))
}

/// One report per threshold.
///
/// `base` must hold every edge at the lowest threshold; higher thresholds
/// filter its edges, so all reports share one candidate set.
pub fn threshold_sweep(
    base: &SimilarityGraph,
    store: &EmbeddingStore,
    thresholds: &[f64],
    strict: bool,
    verdicts: Option<&VerdictContext<'_>>,
    sample_cap: usize,
    seed: u64,
) -> Result<Vec<EvalReport>> {
    if thresholds.is_empty() {
        return Err(Error::InvalidInput("empty threshold list".into()));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput(
            "thresholds must be sorted ascending".into(),
        ));
    }
    thresholds
        .iter()
        .map(|&t| {
            evaluate_clustering(
                t,
                &base.filtered(t, strict),
                store,
                verdicts,
                sample_cap,
                seed,
            )
            .map(|(_, r)| r)
        })
        .collect()
}

pub fn write_reports_csv<W: Write>(reports: &[EvalReport], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in reports {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
