//! Language composition of clusters against a language-resampling null model.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::Cluster;
use crate::ingest::RecordTable;
use crate::stats::permutation_p;
use crate::{Error, RecordId, Result};

/// Bundled ISO code to family table.
pub const DEFAULT_FAMILY_TABLE: &str = include_str!("../assets/language_families.json");

pub const UNKNOWN_FAMILY: &str = "unknown";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LingualityProfile {
    pub mono: usize,
    pub bi: usize,
    pub tri: usize,
    pub four_plus: usize,
    pub multilingual_fraction: f64,
}

impl LingualityProfile {
    fn from_counts(counts: [usize; 4]) -> Self {
        let total: usize = counts.iter().sum();
        Self {
            mono: counts[0],
            bi: counts[1],
            tri: counts[2],
            four_plus: counts[3],
            multilingual_fraction: if total == 0 {
                0.0
            } else {
                (total - counts[0]) as f64 / total as f64
            },
        }
    }

    pub fn counts(&self) -> [usize; 4] {
        [self.mono, self.bi, self.tri, self.four_plus]
    }

    pub fn n_clusters(&self) -> usize {
        self.counts().iter().sum()
    }
}

fn arity_bin(distinct: usize) -> usize {
    distinct.clamp(1, 4) - 1
}

/// Clusters restricted to members that have a language.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LanguageClusters {
    /// Language codes per eligible cluster, in member order.
    pub clusters: Vec<Vec<String>>,
    pub cluster_ids: Vec<RecordId>,
    /// Members dropped for lacking a language.
    pub n_missing_language: usize,
}

/// Keeps clusters with at least two members that carry a language.
pub fn language_clusters(clusters: &[Cluster], records: &RecordTable) -> LanguageClusters {
    let mut out = LanguageClusters {
        clusters: Vec::new(),
        cluster_ids: Vec::new(),
        n_missing_language: 0,
    };
    for c in clusters.iter().filter(|c| c.len() >= 2) {
        let langs: Vec<String> = c
            .member_ids
            .iter()
            .filter_map(|&id| records.language(id).map(str::to_string))
            .collect();
        out.n_missing_language += c.len() - langs.len();
        if langs.len() >= 2 {
            out.clusters.push(langs);
            out.cluster_ids.push(c.cluster_id);
        }
    }
    out
}

/// Bins each cluster by its number of distinct languages.
pub fn linguality_profile<S: AsRef<str>>(clusters: &[Vec<S>]) -> Result<LingualityProfile> {
    if clusters.is_empty() {
        return Err(Error::InsufficientData(
            "no cluster with two language-coded members".into(),
        ));
    }
    let mut counts = [0usize; 4];
    for c in clusters {
        let distinct: HashSet<&str> = c.iter().map(AsRef::as_ref).collect();
        counts[arity_bin(distinct.len())] += 1;
    }
    Ok(LingualityProfile::from_counts(counts))
}

/// Empirical language frequencies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageDistribution {
    pub languages: Vec<String>,
    pub counts: Vec<usize>,
}

impl LanguageDistribution {
    pub fn from_codes<'a>(codes: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for c in codes {
            *counts.entry(c).or_default() += 1;
        }
        if counts.is_empty() {
            return Err(Error::InsufficientData("no language codes".into()));
        }
        Ok(Self {
            languages: counts.keys().map(|s| s.to_string()).collect(),
            counts: counts.values().copied().collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedProfile {
    pub mono: f64,
    pub bi: f64,
    pub tri: f64,
    pub four_plus: f64,
    pub multilingual_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullModel {
    pub expected: ExpectedProfile,
    pub replicates: Vec<LingualityProfile>,
    pub seed: u64,
}

/// Redraws every node's language i.i.d. from `distribution`, keeping cluster
/// sizes fixed. Replicate `r` uses seed `seed + r`.
pub fn null_model_profile(
    cluster_sizes: &[usize],
    distribution: &LanguageDistribution,
    replicates: usize,
    seed: u64,
) -> Result<NullModel> {
    if cluster_sizes.is_empty() {
        return Err(Error::InsufficientData(
            "no clusters for the null model".into(),
        ));
    }
    let weights = WeightedIndex::new(&distribution.counts)
        .map_err(|e| Error::InvalidInput(format!("language distribution: {e}")))?;
    let n_langs = distribution.counts.len();
    let profiles: Vec<LingualityProfile> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r));
            let mut seen = vec![u64::MAX; n_langs];
            let mut counts = [0usize; 4];
            for (ci, &size) in cluster_sizes.iter().enumerate() {
                let mut distinct = 0;
                for _ in 0..size {
                    let l = weights.sample(&mut rng);
                    if seen[l] != ci as u64 {
                        seen[l] = ci as u64;
                        distinct += 1;
                    }
                }
                counts[arity_bin(distinct)] += 1;
            }
            LingualityProfile::from_counts(counts)
        })
        .collect();
    let m = replicates.max(1) as f64;
    let mean = |f: &dyn Fn(&LingualityProfile) -> f64| profiles.iter().map(f).sum::<f64>() / m;
    let expected = ExpectedProfile {
        mono: mean(&|p| p.mono as f64),
        bi: mean(&|p| p.bi as f64),
        tri: mean(&|p| p.tri as f64),
        four_plus: mean(&|p| p.four_plus as f64),
        multilingual_fraction: mean(&|p| p.multilingual_fraction),
    };
    Ok(NullModel {
        expected,
        replicates: profiles,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerArityP {
    pub mono: f64,
    pub bi: f64,
    pub tri: f64,
    pub four_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomophilyTest {
    pub observed: LingualityProfile,
    pub expected_mean: ExpectedProfile,
    pub per_arity_p: PerArityP,
    /// Two-sided permutation p for the mono-lingual cluster count.
    pub p_value: f64,
    pub significant: bool,
    pub alpha: f64,
    pub replicates: usize,
    pub seed: u64,
}

pub fn homophily_test(
    observed: &LingualityProfile,
    null: &NullModel,
    alpha: f64,
) -> Result<HomophilyTest> {
    let p_for = |k: usize| {
        let reps: Vec<f64> = null
            .replicates
            .iter()
            .map(|p| p.counts()[k] as f64)
            .collect();
        permutation_p(observed.counts()[k] as f64, &reps)
    };
    let per_arity_p = PerArityP {
        mono: p_for(0)?,
        bi: p_for(1)?,
        tri: p_for(2)?,
        four_plus: p_for(3)?,
    };
    Ok(HomophilyTest {
        observed: *observed,
        expected_mean: null.expected.clone(),
        p_value: per_arity_p.mono,
        significant: per_arity_p.mono < alpha,
        per_arity_p,
        alpha,
        replicates: null.replicates.len(),
        seed: null.seed,
    })
}

/// Observed profile, null model and test in one call.
pub fn run_homophily(
    clusters: &LanguageClusters,
    distribution: &LanguageDistribution,
    replicates: usize,
    seed: u64,
    alpha: f64,
) -> Result<(HomophilyTest, NullModel)> {
    let observed = linguality_profile(&clusters.clusters)?;
    let sizes: Vec<usize> = clusters.clusters.iter().map(Vec::len).collect();
    let null = null_model_profile(&sizes, distribution, replicates, seed)?;
    Ok((homophily_test(&observed, &null, alpha)?, null))
}

pub fn parse_family_table(json: &str) -> Result<HashMap<String, String>> {
    let raw: HashMap<String, String> = serde_json::from_str(json)?;
    Ok(raw
        .into_iter()
        .map(|(k, v)| (k.to_lowercase(), v))
        .collect())
}

pub fn family_of<'a>(table: &'a HashMap<String, String>, code: &str) -> &'a str {
    table
        .get(&code.to_lowercase())
        .map(String::as_str)
        .unwrap_or(UNKNOWN_FAMILY)
}

/// Share of multilingual clusters whose languages all fall in one known family.
pub fn family_share<S: AsRef<str>>(
    multilingual: &[Vec<S>],
    table: &HashMap<String, String>,
) -> Result<f64> {
    if multilingual.is_empty() {
        return Err(Error::InsufficientData("no multilingual clusters".into()));
    }
    let mut same = 0;
    for c in multilingual {
        let distinct: HashSet<&str> = c.iter().map(AsRef::as_ref).collect();
        if distinct.len() < 2 {
            return Err(Error::InvalidInput(
                "family_share expects clusters with two or more languages".into(),
            ));
        }
        let families: HashSet<&str> = distinct.iter().map(|l| family_of(table, l)).collect();
        if families.len() == 1 && !families.contains(UNKNOWN_FAMILY) {
            same += 1;
        }
    }
    Ok(same as f64 / multilingual.len() as f64)
}

/// Clusters with more than one distinct language.
pub fn multilingual_only(clusters: &[Vec<String>]) -> Vec<Vec<String>> {
    clusters
        .iter()
        .filter(|c| c.iter().collect::<HashSet<_>>().len() >= 2)
        .cloned()
        .collect()
}

pub fn write_replicates_csv<W: Write>(null: &NullModel, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "replicate",
        "mono",
        "bi",
        "tri",
        "four_plus",
        "multilingual_fraction",
    ])?;
    for (i, p) in null.replicates.iter().enumerate() {
        out.write_record([
            i.to_string(),
            p.mono.to_string(),
            p.bi.to_string(),
            p.tri.to_string(),
            p.four_plus.to_string(),
            p.multilingual_fraction.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn langs(c: &[&str]) -> Vec<String> {
        c.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn profile_examples() {
        let p = linguality_profile(&[langs(&["en", "en"]), langs(&["en", "hi"])]).unwrap();
        assert_eq!((p.mono, p.bi, p.multilingual_fraction), (1, 1, 0.5));
        let p = linguality_profile(&[langs(&["en", "hi", "pt", "de", "es"])]).unwrap();
        assert_eq!((p.four_plus, p.multilingual_fraction), (1, 1.0));
        let p = linguality_profile(&[langs(&["en", "en"]), langs(&["pt", "pt", "pt"])]).unwrap();
        assert_eq!(p.multilingual_fraction, 0.0);
        assert!(linguality_profile::<String>(&[]).is_err());
    }

    #[test]
    fn language_clusters_exclude_missing() {
        use crate::ingest::FactCheckRecord;
        use chrono::NaiveDate;
        let rec = |id: u64, lang: Option<&str>| FactCheckRecord {
            id,
            claim_text: "c".into(),
            domain: "d".into(),
            url: "https://d/".into(),
            author: None,
            review_date: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            rating_raw: None,
            language: lang.map(String::from),
            claim_text_en: None,
            noun_lemmas: None,
        };
        let table = RecordTable::new(vec![
            rec(1, Some("en")),
            rec(2, None),
            rec(3, Some("en")),
            rec(4, Some("es")),
            rec(5, Some("pt")),
        ]);
        let clusters = vec![
            Cluster {
                cluster_id: 1,
                member_ids: vec![1, 2],
            },
            Cluster {
                cluster_id: 3,
                member_ids: vec![3, 4, 5],
            },
        ];
        let lc = language_clusters(&clusters, &table);
        assert_eq!(lc.clusters, vec![langs(&["en", "es", "pt"])]);
        assert_eq!(lc.n_missing_language, 1);
    }

    #[test]
    fn single_language_null_is_all_mono() {
        let d = LanguageDistribution::from_codes(["en", "en", "en"]).unwrap();
        let null = null_model_profile(&[2, 3, 5], &d, 100, 7).unwrap();
        assert_eq!(null.expected.mono, 3.0);
        assert_eq!(null.expected.multilingual_fraction, 0.0);
    }

    #[test]
    fn fifty_fifty_pairs_are_half_bilingual() {
        let d = LanguageDistribution::from_codes(["en", "es"]).unwrap();
        let sizes = vec![2; 200];
        let null = null_model_profile(&sizes, &d, 1000, 3).unwrap();
        let fracs: Vec<f64> = null
            .replicates
            .iter()
            .map(|p| p.bi as f64 / 200.0)
            .collect();
        let m = fracs.iter().sum::<f64>() / fracs.len() as f64;
        let se = (0.25f64 / 200.0).sqrt() / (1000f64).sqrt();
        assert!((m - 0.5).abs() < 3.0 * se, "mean {m}");
        for p in &null.replicates {
            assert_eq!(p.n_clusters(), 200);
        }
    }

    #[test]
    fn replicates_do_not_depend_on_thread_count() {
        let d = LanguageDistribution::from_codes(["en", "es", "pt", "pt"]).unwrap();
        let a = null_model_profile(&[2, 3, 4], &d, 200, 11).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| null_model_profile(&[2, 3, 4], &d, 200, 11).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn extreme_and_typical_observations() {
        let reps: Vec<LingualityProfile> = (0..999)
            .map(|i| LingualityProfile::from_counts([40 + (i % 5), 60 - (i % 5), 0, 0]))
            .collect();
        let null = NullModel {
            expected: ExpectedProfile {
                mono: 42.0,
                bi: 58.0,
                tri: 0.0,
                four_plus: 0.0,
                multilingual_fraction: 0.58,
            },
            replicates: reps,
            seed: 0,
        };
        let extreme = LingualityProfile::from_counts([90, 10, 0, 0]);
        let t = homophily_test(&extreme, &null, 0.01).unwrap();
        assert_eq!(t.p_value, 1.0 / 1000.0);
        assert!(t.significant);
        let typical = LingualityProfile::from_counts([42, 58, 0, 0]);
        let t = homophily_test(&typical, &null, 0.01).unwrap();
        assert!(t.p_value > 0.99);
    }

    #[test]
    fn family_examples() {
        let table = parse_family_table(DEFAULT_FAMILY_TABLE).unwrap();
        assert_eq!(family_share(&[langs(&["es", "pt"])], &table).unwrap(), 1.0);
        assert_eq!(family_share(&[langs(&["en", "hi"])], &table).unwrap(), 0.0);
        assert_eq!(family_share(&[langs(&["xx", "yy"])], &table).unwrap(), 0.0);
        assert_eq!(
            family_share(&[langs(&["es", "pt"]), langs(&["en", "hi", "en"])], &table).unwrap(),
            0.5
        );
        assert!(family_share::<String>(&[], &table).is_err());
        assert!(family_share(&[langs(&["es", "es"])], &table).is_err());
    }

    #[test]
    fn replicate_csv_has_header() {
        let d = LanguageDistribution::from_codes(["en", "es"]).unwrap();
        let null = null_model_profile(&[2], &d, 3, 0).unwrap();
        let mut buf = Vec::new();
        write_replicates_csv(&null, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
