//! Synthetic fact-check corpora with planted structure.
//!
//! Cluster centers are drawn uniformly on the sphere with a cap on their
//! pairwise cosine. Each center moves along a great circle as time passes,
//! and a member dated `t` is `cos(a) * c(t) + sin(a) * u` for a random unit
//! `u` orthogonal to `c(t)`, with `cos(a)^2` equal to the intra-cluster
//! similarity target. Over 365 days the expected member similarity falls by
//! `365 * drift_rate`. Every member after the first is redrawn until it
//! clears the edge threshold with an earlier member, so each planted cluster
//! is connected in the exact threshold graph.

use std::io::Write;

use chrono::{Duration, NaiveDate};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed_store::{dot, normalize, EmbeddingStore};
use crate::graph::Cluster;
use crate::paths::PathAnalysis;
use crate::{Error, RecordId, Result};

/// Redraw budget per cluster center and per member.
pub const RETRY_BUDGET: usize = 10_000;
/// Noise redraws before a member's date is redrawn too.
const NOISE_RETRIES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_clusters: usize,
    /// When set, cluster sizes are drawn until this many records exist and
    /// `n_clusters` is ignored.
    pub n_records: Option<usize>,
    /// Entry `i` is the probability of a cluster of size `i + 1`.
    pub cluster_size_distribution: Vec<f64>,
    pub intra_similarity_target: f64,
    pub inter_similarity_cap: f64,
    pub edge_threshold: f64,
    pub language_distribution: Vec<(String, f64)>,
    /// 1 puts a whole cluster in one language, 0 draws every member globally.
    pub homophily_strength: f64,
    /// Expected similarity lost per day between members of one cluster.
    pub drift_rate: f64,
    pub dimension: usize,
    pub start_date: NaiveDate,
    pub span_days: i64,
    /// Laplace scale of a member's date offset from an earlier member.
    pub date_spread_days: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let langs = [
            ("en", 0.4),
            ("es", 0.2),
            ("pt", 0.15),
            ("hi", 0.1),
            ("fr", 0.05),
            ("de", 0.05),
            ("id", 0.05),
        ];
        Self {
            n_clusters: 500,
            n_records: None,
            cluster_size_distribution: vec![0.75, 0.12, 0.05, 0.03, 0.02, 0.01, 0.01, 0.005, 0.005],
            intra_similarity_target: 0.92,
            inter_similarity_cap: 0.5,
            edge_threshold: 0.875,
            language_distribution: langs.iter().map(|(l, p)| (l.to_string(), *p)).collect(),
            homophily_strength: 0.7,
            drift_rate: 0.0002,
            dimension: 64,
            start_date: NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"),
            span_days: 760,
            date_spread_days: 30.0,
            seed: 42,
        }
    }
}

fn sums_to_one(key: &str, probs: impl Iterator<Item = f64>) -> Result<()> {
    let mut total = 0.0;
    for p in probs {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::config(key, format!("probability {p} is invalid")));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::config(
            key,
            format!("probabilities sum to {total}, not 1"),
        ));
    }
    Ok(())
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let (intra, edge, inter) = (
            self.intra_similarity_target,
            self.edge_threshold,
            self.inter_similarity_cap,
        );
        if !(intra > edge && edge > inter) || intra >= 1.0 {
            return Err(Error::config(
                "intra_similarity_target",
                format!("need 1 > intra ({intra}) > edge_threshold ({edge}) > inter cap ({inter})"),
            ));
        }
        if self.n_clusters == 0 && self.n_records.unwrap_or(0) == 0 {
            return Err(Error::config("n_clusters", "must be positive"));
        }
        sums_to_one(
            "cluster_size_distribution",
            self.cluster_size_distribution.iter().copied(),
        )?;
        if self.language_distribution.is_empty() {
            return Err(Error::config("language_distribution", "is empty"));
        }
        sums_to_one(
            "language_distribution",
            self.language_distribution.iter().map(|(_, p)| *p),
        )?;
        if !(0.0..=1.0).contains(&self.homophily_strength) {
            return Err(Error::config("homophily_strength", "must lie in [0, 1]"));
        }
        if !(self.drift_rate >= 0.0 && self.drift_rate * 365.0 < 2.0 * intra) {
            return Err(Error::config(
                "drift_rate",
                "must be non-negative and below 2 * intra / 365",
            ));
        }
        if self.dimension < 3 {
            return Err(Error::config("dimension", "must be at least 3"));
        }
        if self.span_days < 0 || self.date_spread_days < 0.0 {
            return Err(Error::config("span_days", "spans must be non-negative"));
        }
        Ok(())
    }

    /// Angular speed of cluster centers, radians per day.
    pub fn omega(&self) -> f64 {
        (1.0 - self.drift_rate * 365.0 / self.intra_similarity_target)
            .clamp(-1.0, 1.0)
            .acos()
            / 365.0
    }
}

/// A generated fact-check in ClaimReview vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SynthRecord {
    pub id: RecordId,
    pub claim_reviewed: String,
    pub headline: String,
    pub description: String,
    pub url: String,
    pub date_published: NaiveDate,
    pub review_rating: String,
    pub language: String,
    pub claim_text_en: String,
    pub noun_lemmas: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCluster {
    pub index: usize,
    /// Sorted ascending.
    pub member_ids: Vec<RecordId>,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub omega: f64,
    pub cos_alpha: f64,
    pub clusters: Vec<TruthCluster>,
}

impl GroundTruth {
    pub fn partition(&self) -> Vec<Cluster> {
        let mut out: Vec<Cluster> = self
            .clusters
            .iter()
            .map(|c| Cluster {
                cluster_id: c.member_ids[0],
                member_ids: c.member_ids.clone(),
            })
            .collect();
        out.sort_by_key(|c| c.cluster_id);
        out
    }
}

pub struct SynthCorpus {
    /// Sorted by date, then id.
    pub records: Vec<SynthRecord>,
    pub store: EmbeddingStore,
    pub truth: GroundTruth,
}

impl SynthCorpus {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_truth<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.truth)?;
        Ok(())
    }
}

const TOPICS: &[&str] = &[
    "vaccine",
    "mask",
    "election",
    "ballot",
    "virus",
    "lockdown",
    "hospital",
    "doctor",
    "minister",
    "president",
    "pfizer",
    "moderna",
    "ivermectin",
    "chloroquine",
    "oxygen",
    "school",
    "border",
    "migrant",
    "tax",
    "pension",
    "police",
    "army",
    "protest",
    "video",
    "photo",
    "bank",
    "fuel",
    "water",
    "farmer",
    "climate",
    "flood",
    "fire",
    "earthquake",
    "church",
    "football",
    "celebrity",
    "senator",
    "court",
    "prison",
    "lottery",
    "salary",
    "train",
    "airport",
    "passport",
    "phone",
    "network",
    "antenna",
    "milk",
    "bread",
    "garlic",
];

const VERDICTS: &[&str] = &[
    "False",
    "FALSE",
    "Pants on Fire!",
    "Mostly False",
    "Misleading",
    "Half True",
    "Mostly True",
    "True",
    "Falso",
    "Engañoso",
];

const BOILERPLATE: &[&str] = &[
    "FACT CHECK:",
    "Fact Check:",
    "Verificamos:",
    "WHATSAPP - CHECK:",
];

fn gaussian_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vector orthogonal to the unit vector `c`.
fn orthogonal_unit(rng: &mut ChaCha8Rng, c: &[f64]) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..c.len())
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let proj: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
        for (x, ci) in v.iter_mut().zip(c) {
            *x -= proj * ci;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn laplace(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    let u: f64 = rng.gen_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

struct Center {
    origin: Vec<f64>,
    direction: Vec<f64>,
}

impl Center {
    fn at(&self, omega: f64, day: i64) -> Vec<f64> {
        let (s, c) = (omega * day as f64).sin_cos();
        self.origin
            .iter()
            .zip(&self.direction)
            .map(|(o, w)| c * o + s * w)
            .collect()
    }
}

struct Member {
    day: i64,
    vector: Vec<f32>,
    language: usize,
}

fn cluster_sizes(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let sizes = WeightedIndex::new(&spec.cluster_size_distribution)
        .map_err(|e| Error::config("cluster_size_distribution", e.to_string()))?;
    let mut out = Vec::new();
    match spec.n_records {
        Some(n) => {
            let mut total = 0;
            while total < n {
                let s = (sizes.sample(rng) + 1).min(n - total);
                total += s;
                out.push(s);
            }
        }
        None => out.extend((0..spec.n_clusters).map(|_| sizes.sample(rng) + 1)),
    }
    Ok(out)
}

fn draw_centers(spec: &SynthSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Center>> {
    let mut centers: Vec<Center> = Vec::with_capacity(n);
    for i in 0..n {
        let mut accepted = None;
        for _ in 0..RETRY_BUDGET {
            let v = gaussian_unit(rng, spec.dimension);
            let ok = centers.iter().all(|c| {
                let cos: f64 = c.origin.iter().zip(&v).map(|(a, b)| a * b).sum();
                cos <= spec.inter_similarity_cap
            });
            if ok {
                accepted = Some(v);
                break;
            }
        }
        let origin = accepted.ok_or_else(|| {
            Error::Infeasible(format!(
                "could not place center {i} below cosine {} within {RETRY_BUDGET} draws",
                spec.inter_similarity_cap
            ))
        })?;
        let direction = orthogonal_unit(rng, &origin);
        centers.push(Center { origin, direction });
    }
    Ok(centers)
}

fn member_vector(rng: &mut ChaCha8Rng, center: &[f64], cos_a: f64) -> Vec<f32> {
    let sin_a = (1.0 - cos_a * cos_a).sqrt();
    let u = orthogonal_unit(rng, center);
    let mut v: Vec<f32> = center
        .iter()
        .zip(&u)
        .map(|(c, n)| (cos_a * c + sin_a * n) as f32)
        .collect();
    normalize(&mut v).expect("unit combination is nonzero");
    v
}

fn generate_cluster(
    spec: &SynthSpec,
    center: &Center,
    size: usize,
    langs: &WeightedIndex<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, Vec<Member>)> {
    let omega = spec.omega();
    let cos_a = spec.intra_similarity_target.sqrt();
    let cluster_lang = langs.sample(rng);
    let mut members: Vec<Member> = Vec::with_capacity(size);
    for k in 0..size {
        let language = if rng.gen::<f64>() < spec.homophily_strength {
            cluster_lang
        } else {
            langs.sample(rng)
        };
        let draw_day = |rng: &mut ChaCha8Rng, members: &[Member]| -> i64 {
            if members.is_empty() {
                rng.gen_range(0..=spec.span_days)
            } else {
                let base = members[rng.gen_range(0..members.len())].day as f64;
                (base + laplace(rng, spec.date_spread_days))
                    .round()
                    .clamp(0.0, spec.span_days as f64) as i64
            }
        };
        let mut day = draw_day(rng, &members);
        let mut placed = None;
        for attempt in 0..RETRY_BUDGET {
            if attempt > 0 && attempt % NOISE_RETRIES == 0 {
                day = draw_day(rng, &members);
            }
            let v = member_vector(rng, &center.at(omega, day), cos_a);
            if k == 0
                || members
                    .iter()
                    .any(|m| dot(&m.vector, &v) >= spec.edge_threshold)
            {
                placed = Some(v);
                break;
            }
        }
        let vector = placed.ok_or_else(|| {
            Error::Infeasible(format!(
                "member {k} never reached similarity {} with an earlier member in {RETRY_BUDGET} draws",
                spec.edge_threshold
            ))
        })?;
        members.push(Member {
            day,
            vector,
            language,
        });
    }
    Ok((cluster_lang, members))
}

/// Generates a corpus; identical specs give identical corpora.
pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sizes = cluster_sizes(spec, &mut rng)?;
    let centers = draw_centers(spec, sizes.len(), &mut rng)?;
    let langs = WeightedIndex::new(spec.language_distribution.iter().map(|(_, p)| *p))
        .map_err(|e| Error::config("language_distribution", e.to_string()))?;

    let generated: Vec<(usize, Vec<Member>)> = (0..sizes.len())
        .into_par_iter()
        .map(|i| {
            let mut crng = ChaCha8Rng::seed_from_u64(spec.seed);
            crng.set_stream(i as u64 + 1);
            generate_cluster(spec, &centers[i], sizes[i], &langs, &mut crng)
        })
        .collect::<Result<_>>()?;

    let mut text_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    text_rng.set_stream(0x7e57);
    let mut records = Vec::new();
    let mut store = EmbeddingStore::new(spec.dimension)?;
    let mut truth = Vec::with_capacity(sizes.len());
    let mut next_id: RecordId = 1;
    for (index, (cluster_lang, members)) in generated.into_iter().enumerate() {
        let topic: Vec<&str> = TOPICS.choose_multiple(&mut text_rng, 3).copied().collect();
        let verdict = VERDICTS[text_rng.gen_range(0..VERDICTS.len())];
        let mut member_ids = Vec::with_capacity(members.len());
        for (k, m) in members.into_iter().enumerate() {
            let id = next_id;
            next_id += 1;
            member_ids.push(id);
            let lang = &spec.language_distribution[m.language].0;
            let extra = TOPICS[text_rng.gen_range(0..TOPICS.len())];
            let english = format!(
                "Claim {index}-{k} says the {} and the {} caused the {} ({extra}) ref {id}",
                topic[0], topic[1], topic[2]
            );
            let claim = format!("[{lang}] {english}");
            let roll: f64 = text_rng.gen();
            let (claim_reviewed, headline) = if roll < 0.05 {
                (String::new(), claim.clone())
            } else if roll < 0.15 {
                (
                    format!(
                        "{} {claim}",
                        BOILERPLATE[text_rng.gen_range(0..BOILERPLATE.len())]
                    ),
                    claim.clone(),
                )
            } else {
                (claim.clone(), format!("Fact check of claim {index}-{k}"))
            };
            let rating = if text_rng.gen::<f64>() < 0.85 {
                verdict
            } else {
                VERDICTS[text_rng.gen_range(0..VERDICTS.len())]
            };
            let outlet = text_rng.gen_range(0..4);
            records.push(SynthRecord {
                id,
                claim_reviewed,
                headline,
                description: format!(
                    "{} {}",
                    english,
                    "with a long explanatory description attached to it ".repeat(4)
                ),
                url: format!("https://www.checker{outlet}-{lang}.example/checks/{id}"),
                date_published: spec.start_date + Duration::days(m.day),
                review_rating: rating.to_string(),
                language: lang.clone(),
                claim_text_en: english,
                noun_lemmas: topic
                    .iter()
                    .map(|s| s.to_string())
                    .chain([extra.to_string()])
                    .collect(),
            });
            store.push(id, m.vector)?;
        }
        truth.push(TruthCluster {
            index,
            member_ids,
            language: spec.language_distribution[cluster_lang].0.clone(),
        });
    }
    records.sort_by_key(|r| (r.date_published, r.id));
    Ok(SynthCorpus {
        records,
        store,
        truth: GroundTruth {
            spec: spec.clone(),
            omega: spec.omega(),
            cos_alpha: spec.intra_similarity_target.sqrt(),
            clusters: truth,
        },
    })
}

/// Path rows following `similarity = intercept + b_length * length +
/// b_langs * languages + sigma * N(0, 1)`.
pub fn planted_path_rows(
    n: usize,
    intercept: f64,
    b_length: f64,
    b_langs: f64,
    sigma: f64,
    seed: u64,
) -> Vec<PathAnalysis> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let length = rng.gen_range(1..=8usize);
            let langs = rng.gen_range(1..=(length + 1).min(5));
            let switches = rng.gen_range(langs - 1..=length);
            let noise: f64 = rng.sample(StandardNormal);
            PathAnalysis {
                cluster_id: i as RecordId,
                endpoint_a: 0,
                endpoint_b: 0,
                endpoint_similarity: intercept
                    + b_length * length as f64
                    + b_langs * langs as f64
                    + sigma * noise,
                path: Vec::new(),
                length,
                n_unique_languages: langs,
                n_language_switches: switches,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_exact_graph, connected_components};

    fn small(seed: u64) -> SynthSpec {
        SynthSpec {
            n_clusters: 60,
            seed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate(&small(3)).unwrap();
        let b = generate(&small(3)).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.truth, b.truth);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = pool.install(|| generate(&small(3)).unwrap());
        assert_eq!(a.records, c.records);
        for id in a.store.ids() {
            assert_eq!(a.store.vector(*id).unwrap(), c.store.vector(*id).unwrap());
        }
        assert_ne!(generate(&small(4)).unwrap().records, a.records);
    }

    #[test]
    fn vectors_are_unit_and_truth_matches_thresholding() {
        let corpus = generate(&small(5)).unwrap();
        for e in corpus.store.iter() {
            let n = dot(e.vector, e.vector).sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        let graph = build_exact_graph(&corpus.store, 0.875, false);
        assert_eq!(connected_components(&graph), corpus.truth.partition());
    }

    #[test]
    fn full_homophily_is_monolingual() {
        let spec = SynthSpec {
            homophily_strength: 1.0,
            ..small(6)
        };
        let corpus = generate(&spec).unwrap();
        let lang: std::collections::HashMap<RecordId, &str> = corpus
            .records
            .iter()
            .map(|r| (r.id, r.language.as_str()))
            .collect();
        for c in &corpus.truth.clusters {
            assert!(c.member_ids.iter().all(|id| lang[id] == c.language));
        }
    }

    #[test]
    fn zero_drift_has_zero_omega() {
        let spec = SynthSpec {
            drift_rate: 0.0,
            ..small(7)
        };
        assert_eq!(spec.omega(), 0.0);
        let year = SynthSpec::default();
        let drop = year.intra_similarity_target * (1.0 - (year.omega() * 365.0).cos());
        assert!((drop - 0.0002 * 365.0).abs() < 1e-12);
    }

    #[test]
    fn record_target_is_exact() {
        let spec = SynthSpec {
            n_records: Some(333),
            ..small(8)
        };
        assert_eq!(generate(&spec).unwrap().records.len(), 333);
    }

    #[test]
    fn invalid_specs() {
        let bad = SynthSpec {
            inter_similarity_cap: 0.9,
            ..SynthSpec::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { .. })));
        let bad = SynthSpec {
            cluster_size_distribution: vec![0.5, 0.4],
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthSpec {
            homophily_strength: 1.5,
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
        let crowded = SynthSpec {
            n_clusters: 200,
            dimension: 3,
            inter_similarity_cap: 0.0,
            ..SynthSpec::default()
        };
        assert!(matches!(generate(&crowded), Err(Error::Infeasible(_))));
    }

    #[test]
    fn planted_rows_shape() {
        let rows = planted_path_rows(50, 1.0, -0.06, -0.002, 0.0, 1);
        assert!(rows
            .iter()
            .all(|r| r.n_unique_languages <= r.length + 1 && r.n_language_switches <= r.length));
        assert!(rows
            .iter()
            .all(|r| r.n_language_switches + 1 >= r.n_unique_languages));
    }
}
