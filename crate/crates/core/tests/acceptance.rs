//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the test harness, so the lines always print under `cargo test`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{Duration, NaiveDate};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use claimgraph::ann::brute_force_threshold;
use claimgraph::embed_store::{read_vectors, write_vectors, EmbeddingStore};
use claimgraph::eval::{adjusted_rand_index, threshold_sweep};
use claimgraph::graph::{build_exact_graph, build_graph, connected_components, Cluster};
use claimgraph::homophily::{run_homophily, LanguageClusters, LanguageDistribution};
use claimgraph::ingest::{
    clean_records, dedup_editorial, dedup_exact, normalize_for_dedup, parse_records, read_drop_log,
    write_drop_log, DropReason, RecordTable,
};
use claimgraph::paths::run_path_regressions;
use claimgraph::pipeline::{run_all, RunOptions};
use claimgraph::stats::{ols, permutation_p, spearman, welch_t, DesignMatrix};
use claimgraph::synth::{generate, planted_path_rows, SynthCorpus, SynthSpec};
use claimgraph::temporal::{drift_curve, drift_test, pair_time_diffs, PairPopulation};
use claimgraph::{FactCheckRecord, HyperplaneIndex, IndexParams, PipelineConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn records_of(corpus: &SynthCorpus) -> Vec<FactCheckRecord> {
    let mut jsonl = Vec::new();
    corpus.write_jsonl(&mut jsonl).unwrap();
    let parsed = parse_records(jsonl.as_slice()).unwrap();
    clean_records(parsed, &PipelineConfig::default(), &[], None)
        .unwrap()
        .records
}

/// Exact thresholding and a breadth-first partition, sharing no code with the crate.
fn oracle_partition(store: &EmbeddingStore, threshold: f64) -> Vec<Cluster> {
    let n = store.len();
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = store
                .row(i)
                .iter()
                .zip(store.row(j))
                .map(|(a, b)| f64::from(*a) * f64::from(*b))
                .sum();
            if s >= threshold {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut members = vec![store.id_at(start)];
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    members.push(store.id_at(v));
                    q.push_back(v);
                }
            }
        }
        members.sort_unstable();
        out.push(Cluster {
            cluster_id: members[0],
            member_ids: members,
        });
    }
    out.sort_by_key(|c| c.cluster_id);
    out
}

fn ann_fidelity() -> Outcome {
    let corpus = generate(&SynthSpec {
        n_records: Some(10_000),
        seed: 101,
        ..SynthSpec::default()
    })
    .unwrap();
    let store = &corpus.store;
    let cfg = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let queries: Vec<u64> = store
        .ids()
        .choose_multiple(&mut rng, 1000)
        .copied()
        .collect();
    let (elapsed, results) = single_threaded(|| {
        let t = Instant::now();
        let index = HyperplaneIndex::build(store, IndexParams::from_config(&cfg)).unwrap();
        let hits: Vec<_> = queries
            .iter()
            .map(|&q| {
                index
                    .query_threshold(store, q, cfg.edge_threshold, cfg.ann_initial_k, false)
                    .unwrap()
            })
            .collect();
        (t.elapsed().as_secs_f64(), hits)
    });
    let (mut found, mut exact_total, mut false_pos) = (0usize, 0usize, 0usize);
    for (q, hits) in queries.iter().zip(&results) {
        let exact: BTreeSet<u64> = brute_force_threshold(store, *q, cfg.edge_threshold, false)
            .unwrap()
            .iter()
            .map(|h| h.record_id)
            .collect();
        exact_total += exact.len();
        for h in hits {
            if exact.contains(&h.record_id) {
                found += 1;
            } else {
                false_pos += 1;
            }
        }
    }
    let recall = found as f64 / exact_total as f64;
    check(
        recall >= 0.95 && false_pos == 0 && elapsed < 60.0,
        format!(
            "recall {recall:.4} ({found}/{exact_total}) over {} queries, {false_pos} false positives, build+query {elapsed:.2}s single-threaded",
            queries.len()
        ),
    )
}

fn clustering_oracle() -> Outcome {
    let cfg = PipelineConfig::default();
    let mut details = Vec::new();
    let mut ok = true;
    let specs = [
        (500, 0.92, 0.5, 64, 1),
        (1000, 0.89, 0.5, 32, 2),
        (2000, 0.92, 0.5, 64, 3),
        (2000, 0.885, 0.7, 24, 4),
    ];
    for (n, intra, inter, dim, seed) in specs {
        let spec = SynthSpec {
            n_records: Some(n),
            intra_similarity_target: intra,
            inter_similarity_cap: inter,
            dimension: dim,
            seed,
            ..SynthSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        let params = IndexParams::from_config(&cfg).exhaustive();
        let index = HyperplaneIndex::build(&corpus.store, params).unwrap();
        let graph = build_graph(
            &corpus.store,
            &index,
            cfg.edge_threshold,
            cfg.ann_initial_k,
            false,
        )
        .unwrap();
        let ours = connected_components(&graph);
        let oracle = oracle_partition(&corpus.store, cfg.edge_threshold);
        let ari = adjusted_rand_index(&ours, &oracle).unwrap();
        ok &= ari == 1.0 && ours == oracle;
        details.push(format!("n={n}: ARI {ari}"));
    }
    check(ok, details.join(", "))
}

fn planted_recovery() -> Outcome {
    let spec = SynthSpec {
        n_clusters: 500,
        intra_similarity_target: 0.92,
        inter_similarity_cap: 0.5,
        seed: 5,
        ..SynthSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let cfg = PipelineConfig::default();
    let index = HyperplaneIndex::build(&corpus.store, IndexParams::from_config(&cfg)).unwrap();
    let graph = build_graph(
        &corpus.store,
        &index,
        cfg.edge_threshold,
        cfg.ann_initial_k,
        false,
    )
    .unwrap();
    let ari =
        adjusted_rand_index(&connected_components(&graph), &corpus.truth.partition()).unwrap();
    check(
        ari >= 0.95,
        format!(
            "ARI {ari:.4} over {} records in 500 planted clusters",
            corpus.records.len()
        ),
    )
}

fn threshold_monotonicity() -> Outcome {
    let cfg = PipelineConfig::default();
    let mut ok = true;
    let mut details = Vec::new();
    let specs = [
        SynthSpec {
            n_records: Some(1500),
            intra_similarity_target: 0.89,
            dimension: 32,
            seed: 9,
            ..SynthSpec::default()
        },
        SynthSpec {
            n_records: Some(1500),
            intra_similarity_target: 0.96,
            inter_similarity_cap: 0.8,
            dimension: 24,
            date_spread_days: 200.0,
            seed: 10,
            ..SynthSpec::default()
        },
    ];
    for spec in specs {
        let corpus = generate(&spec).unwrap();
        let base = build_exact_graph(&corpus.store, cfg.sweep_thresholds[0], false);
        let reports = threshold_sweep(
            &base,
            &corpus.store,
            &cfg.sweep_thresholds,
            false,
            None,
            10_000,
            1,
        )
        .unwrap();
        // Intra-cluster variance is compared only while repeated clusters exist.
        let var: Vec<f64> = reports
            .iter()
            .filter_map(|r| r.mean_intra_variance)
            .collect();
        let single: Vec<f64> = reports.iter().map(|r| r.singleton_fraction).collect();
        ok &= single.windows(2).all(|w| w[0] <= w[1]);
        ok &= var.windows(2).all(|w| w[1] <= w[0]);
        details.push(format!(
            "singleton {:?} variance {:?}",
            single.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>(),
            var.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>()
        ));
    }
    check(ok, details.join("; "))
}

fn homophily_runs(strength: f64) -> (usize, usize, usize) {
    let cfg = PipelineConfig::default();
    let (mut rejected, mut mono_above, mut runs) = (0, 0, 0);
    for seed in 0..100u64 {
        let spec = SynthSpec {
            n_clusters: 300,
            homophily_strength: strength,
            seed: 1000 + seed,
            ..SynthSpec::default()
        };
        let corpus = generate(&spec).unwrap();
        let lang: HashMap<u64, &str> = corpus
            .records
            .iter()
            .map(|r| (r.id, r.language.as_str()))
            .collect();
        let clusters: Vec<Vec<String>> = corpus
            .truth
            .clusters
            .iter()
            .filter(|c| c.member_ids.len() >= 2)
            .map(|c| c.member_ids.iter().map(|id| lang[id].to_string()).collect())
            .collect();
        let dist =
            LanguageDistribution::from_codes(corpus.records.iter().map(|r| r.language.as_str()))
                .unwrap();
        let lc = LanguageClusters {
            clusters,
            ..Default::default()
        };
        let (test, _) =
            run_homophily(&lc, &dist, cfg.null_model_replicates, seed, cfg.alpha).unwrap();
        runs += 1;
        rejected += usize::from(test.significant);
        mono_above += usize::from(test.observed.mono as f64 > test.expected_mean.mono);
    }
    (rejected, mono_above, runs)
}

fn homophily_calibration() -> Outcome {
    let (null_rej, _, n0) = homophily_runs(0.0);
    let (alt_rej, alt_mono, n1) = homophily_runs(1.0);
    let null_rate = null_rej as f64 / n0 as f64;
    let alt_rate = alt_rej as f64 / n1 as f64;
    check(
        null_rate <= 0.05 && alt_rate >= 0.99 && alt_mono == n1,
        format!(
            "rejections at alpha 0.01: {null_rej}/{n0} with strength 0, {alt_rej}/{n1} with strength 1; mono above null mean in {alt_mono}/{n1}"
        ),
    )
}

fn drift_spec(rate: f64, seed: u64) -> SynthSpec {
    SynthSpec {
        n_clusters: 150,
        cluster_size_distribution: vec![
            0.0,
            0.0,
            0.0,
            0.0,
            0.0,
            1.0 / 7.0,
            1.0 / 7.0,
            1.0 / 7.0,
            1.0 / 7.0,
            1.0 / 7.0,
            1.0 / 7.0,
            1.0 / 7.0,
        ],
        intra_similarity_target: 0.89,
        dimension: 32,
        drift_rate: rate,
        date_spread_days: 120.0,
        seed,
        ..SynthSpec::default()
    }
}

fn unconnected_pairs(
    corpus: &SynthCorpus,
    cfg: &PipelineConfig,
) -> Vec<claimgraph::temporal::TimedPair> {
    let table = RecordTable::new(records_of(corpus));
    let graph = build_exact_graph(&corpus.store, cfg.edge_threshold, false);
    let clusters = connected_components(&graph);
    pair_time_diffs(
        &clusters,
        &graph,
        &corpus.store,
        &table,
        PairPopulation::UnconnectedPairs,
    )
    .unwrap()
    .pairs
}

fn drift_recovery() -> Outcome {
    let cfg = PipelineConfig::default();
    let corpus = generate(&drift_spec(0.0002, 77)).unwrap();
    let pairs = unconnected_pairs(&corpus, &cfg);
    let curve = drift_curve(&pairs, cfg.drift_max_days, cfg.drift_bin_width).unwrap();
    let x: Vec<f64> = curve.iter().map(|r| r.bin_start as f64).collect();
    let y: Vec<f64> = curve.iter().map(|r| r.mean).collect();
    let rho = spearman(&x, &y).unwrap();
    let test = drift_test(&pairs, cfg.drift_early_window, cfg.drift_late_window).unwrap();
    let planted_ok = rho.rho < 0.0 && rho.p_value < 0.01 && test.p_value < 0.01 && test.t > 0.0;

    let runs = 100;
    let mut nonsig = 0;
    for seed in 0..runs {
        let corpus = generate(&drift_spec(0.0, 500 + seed)).unwrap();
        let pairs = unconnected_pairs(&corpus, &cfg);
        match drift_test(&pairs, cfg.drift_early_window, cfg.drift_late_window) {
            Ok(t) => nonsig += usize::from(t.p_value >= 0.01),
            Err(_) => nonsig += 1,
        }
    }
    check(
        planted_ok && nonsig as f64 >= 0.95 * runs as f64,
        format!(
            "rate 0.0002: {} bins, spearman rho {:.3} (p {:.1e}), early-late t {:.2} (p {:.1e}, n {}+{}); rate 0: {nonsig}/{runs} non-significant",
            curve.len(),
            rho.rho,
            rho.p_value,
            test.t,
            test.p_value,
            test.n_a,
            test.n_b
        ),
    )
}

fn regression_recovery() -> Outcome {
    let (b_len, b_langs) = (-0.0625, -0.002);
    let rows = planted_path_rows(400, 0.95, b_len, b_langs, 0.01, 31);
    let (langs, _) = run_path_regressions(&rows).unwrap();
    let len = langs.term("length").unwrap();
    let lng = langs.term("n_unique_languages").unwrap();
    let z_len = (len.estimate - b_len) / len.standard_error;
    let z_lng = (lng.estimate - b_langs) / lng.standard_error;

    let exact = planted_path_rows(200, 0.95, b_len, b_langs, 0.0, 32);
    let (clean, _) = run_path_regressions(&exact).unwrap();
    let e_len = (clean.term("length").unwrap().estimate - b_len).abs();
    let e_lng = (clean.term("n_unique_languages").unwrap().estimate - b_langs).abs();
    let e_int = (clean.term("(Intercept)").unwrap().estimate - 0.95).abs();
    check(
        z_len.abs() <= 3.0 && z_lng.abs() <= 3.0 && e_len.max(e_lng).max(e_int) <= 1e-8 && (clean.r_squared - 1.0).abs() <= 1e-12,
        format!(
            "noisy: length {:.5} (z {z_len:.2}), languages {:.5} (z {z_lng:.2}); noise-free max error {:.1e}, R2 {}",
            len.estimate,
            lng.estimate,
            e_len.max(e_lng).max(e_int),
            clean.r_squared
        ),
    )
}

/// Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max)
}

fn stats_kernel() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(10..300);
        let p = rng.gen_range(1..6);
        let xs: Vec<Vec<f64>> = (0..p)
            .map(|_| {
                (0..n)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0)
                    .collect()
            })
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                xs.iter().map(|x| x[i]).sum::<f64>() * 0.7 - 2.0
                    + rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
        let preds: Vec<(&str, &[f64])> = names
            .iter()
            .map(String::as_str)
            .zip(xs.iter().map(Vec::as_slice))
            .collect();
        let fit = ols(&DesignMatrix::with_intercept(&preds, &y).unwrap()).unwrap();
        let x = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { xs[j - 1][i] });
        let beta =
            (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * DVector::from_vec(y);
        for (c, b) in fit.coefficients.iter().zip(beta.iter()) {
            worst = worst.max((c.estimate - b).abs() / b.abs().max(1e-12));
        }
    }

    let sims = 10_000;
    let welch_p: Vec<f64> = (0..sims)
        .map(|_| {
            let (na, nb) = (rng.gen_range(3..30), rng.gen_range(3..30));
            let sd_b = rng.gen_range(0.5..3.0);
            let a: Vec<f64> = (0..na).map(|_| rng.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..nb)
                .map(|_| sd_b * rng.sample::<f64, _>(StandardNormal))
                .collect();
            welch_t(&a, &b).unwrap().p_value
        })
        .collect();
    let perm_p: Vec<f64> = (0..sims)
        .map(|_| {
            let mut pooled: Vec<f64> = (0..20).map(|_| rng.sample(StandardNormal)).collect();
            let diff =
                |v: &[f64]| v[..10].iter().sum::<f64>() / 10.0 - v[10..].iter().sum::<f64>() / 10.0;
            let observed = diff(&pooled);
            let reps: Vec<f64> = (0..199)
                .map(|_| {
                    pooled.shuffle(&mut rng);
                    diff(&pooled)
                })
                .collect();
            permutation_p(observed, &reps).unwrap()
        })
        .collect();
    let (ks_w, ks_p) = (ks_uniform(welch_p), ks_uniform(perm_p));
    check(
        worst <= 1e-8 && ks_w <= 0.05 && ks_p <= 0.05,
        format!("OLS worst relative error {worst:.1e} over 100 problems; KS distance {ks_w:.4} (Welch), {ks_p:.4} (permutation) over {sims} null simulations"),
    )
}

fn day(n: i64) -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 1).unwrap() + Duration::days(n)
}

fn fixture_record(
    id: u64,
    text: &str,
    domain: &str,
    author: Option<&str>,
    date: i64,
) -> FactCheckRecord {
    FactCheckRecord {
        id,
        claim_text: text.into(),
        domain: domain.into(),
        url: format!("https://{domain}/{id}"),
        author: author.map(str::to_string),
        review_date: day(date),
        rating_raw: None,
        language: None,
        claim_text_en: None,
        noun_lemmas: None,
    }
}

fn dedup_correctness() -> Outcome {
    let mut runner = TestRunner::new(PropConfig {
        cases: 256,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let exact = runner.run(
        &prop::collection::vec(
            (
                "(Garlic|garlic|GARLIC) (cures|CURES) ?(covid|flu)?!?",
                0i64..100,
            ),
            1..40,
        ),
        |items| {
            let records: Vec<FactCheckRecord> = items
                .iter()
                .enumerate()
                .map(|(i, (t, d))| fixture_record(i as u64, t, "a.org", None, *d))
                .collect();
            let (once, drops) = dedup_exact(records.clone());
            let (twice, again) = dedup_exact(once.clone());
            prop_assert_eq!(&twice, &once);
            prop_assert!(again.is_empty());
            prop_assert_eq!(once.len() + drops.len(), records.len());
            for r in &records {
                let key = normalize_for_dedup(&r.claim_text);
                let survivor = once
                    .iter()
                    .find(|s| normalize_for_dedup(&s.claim_text) == key)
                    .unwrap();
                prop_assert!((survivor.review_date, survivor.id) <= (r.review_date, r.id));
            }
            Ok(())
        },
    );

    // Orthogonal base directions; pair partners sit at a chosen cosine to their base.
    let editorial = runner.run(
        &prop::collection::vec(
            (
                0usize..3,
                0usize..3,
                0.90f64..0.99,
                0i64..50,
                0i64..50,
                any::<bool>(),
            ),
            1..12,
        ),
        |pairs| {
            let dim = 2 * pairs.len() + 1;
            let mut vectors = Vec::new();
            let mut records = Vec::new();
            let mut expected: BTreeSet<String> = BTreeSet::new();
            for (k, &(src_a, src_b, cos, da, db, by_author)) in pairs.iter().enumerate() {
                let (ia, ib) = (2 * k as u64, 2 * k as u64 + 1);
                let mut base = vec![0f32; dim];
                base[2 * k] = 1.0;
                let mut partner = vec![0f32; dim];
                partner[2 * k] = cos as f32;
                partner[2 * k + 1] = (1.0 - cos * cos).sqrt() as f32;
                vectors.push((ia, base));
                vectors.push((ib, partner.clone()));
                let dom = |s: usize| format!("s{s}-{k}.org");
                let (a, b) = if by_author {
                    (
                        fixture_record(ia, &format!("a{k}"), &dom(src_a), Some("desk"), da),
                        fixture_record(ib, &format!("b{k}"), &dom(src_b), Some("desk"), db),
                    )
                } else {
                    (
                        fixture_record(ia, &format!("a{k}"), &dom(src_a), None, da),
                        fixture_record(ib, &format!("b{k}"), &dom(src_b), None, db),
                    )
                };
                let sim: f64 = partner
                    .iter()
                    .zip(&vectors[2 * k].1)
                    .map(|(x, y)| f64::from(*x) * f64::from(*y))
                    .sum();
                let same_source = by_author || src_a == src_b;
                if same_source && sim > 0.95 {
                    let later = if (db, ib) > (da, ia) { ib } else { ia };
                    expected.insert(later.to_string());
                }
                records.push(a);
                records.push(b);
            }
            let store = EmbeddingStore::from_vectors(dim, vectors).unwrap();
            let (kept, drops) = dedup_editorial(records.clone(), &store, 0.95).unwrap();
            let dropped: BTreeSet<String> = drops.iter().map(|d| d.dropped_id.clone()).collect();
            prop_assert_eq!(&dropped, &expected);
            prop_assert!(drops
                .iter()
                .all(|d| d.reason == DropReason::EditorialDuplicate));
            prop_assert_eq!(kept.len() + drops.len(), records.len());
            Ok(())
        },
    );
    match (exact, editorial) {
        (Ok(()), Ok(())) => Ok("256 generated cases each: exact dedup idempotent with earliest survivors; editorial dedup drops exactly the later same-source member above 0.95".into()),
        (e, f) => Err(format!("exact: {e:?}; editorial: {f:?}")),
    }
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn collect_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            let rel = p.strip_prefix(root).unwrap().to_path_buf();
            if rel.starts_with(".cache") || rel == Path::new("manifest.json") {
                continue;
            }
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let opts = |w: &Path| RunOptions {
        workdir: w.to_path_buf(),
        input: Some(data("synthetic_1k.jsonl")),
        vectors: Some(data("synthetic_1k.cgv")),
        ..RunOptions::default()
    };
    let cfg = PipelineConfig::default();
    let t = Instant::now();
    run_all(&cfg, &opts(dirs[0].path())).map_err(|e| e.to_string())?;
    let first = t.elapsed().as_secs_f64();
    // Second run on one thread: results must not depend on scheduling.
    single_threaded(|| run_all(&cfg, &opts(dirs[1].path()))).map_err(|e| e.to_string())?;
    let (a, b) = (collect_files(dirs[0].path()), collect_files(dirs[1].path()));
    let differing: Vec<_> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let manifest = claimgraph::pipeline::RunManifest::load(dirs[0].path()).unwrap();
    let all_listed =
        manifest.stages.len() == 10 && manifest.stages.values().all(|s| !s.outputs.is_empty());
    check(
        differing.is_empty() && a.len() == b.len() && first < 60.0 && all_listed,
        format!("{} output files identical across runs ({} differ), manifest lists {} stages, first run {first:.2}s", a.len(), differing.len(), manifest.stages.len()),
    )
}

fn format_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let store = EmbeddingStore::from_vectors(
        48,
        (0..10_000u64).map(|i| {
            (
                i * 7 + 3,
                (0..48)
                    .map(|_| rng.sample::<f32, _>(StandardNormal))
                    .collect(),
            )
        }),
    )
    .unwrap();
    let mut bytes = Vec::new();
    write_vectors(&store, &mut bytes).unwrap();
    let back = read_vectors(&mut bytes.as_slice()).unwrap();
    let max_diff = store
        .iter()
        .zip(back.iter())
        .flat_map(|(a, b)| a.vector.iter().zip(b.vector).map(|(x, y)| (x - y).abs()))
        .fold(0f32, f32::max);
    let mut again = Vec::new();
    write_vectors(&back, &mut again).unwrap();
    let vectors_ok = back == store && max_diff == 0.0 && again == bytes;

    let index =
        HyperplaneIndex::build(&store, IndexParams::from_config(&PipelineConfig::default()))
            .unwrap();
    let mut ib = Vec::new();
    index.write_to(&store, &mut ib).unwrap();
    let loaded = HyperplaneIndex::read_from(&store, &mut ib.as_slice()).unwrap();
    let mut ib2 = Vec::new();
    loaded.write_to(&store, &mut ib2).unwrap();
    let same_hits = store.ids().iter().take(200).all(|&q| {
        index.query_threshold(&store, q, 0.3, 10, false).unwrap()
            == loaded.query_threshold(&store, q, 0.3, 10, false).unwrap()
    });
    let index_ok = ib == ib2 && &ib[..4] == b"CGI1" && same_hits;

    // Bundled corpus plus lines exercising every ingest drop reason.
    let mut text = std::fs::read_to_string(data("synthetic_1k.jsonl")).unwrap();
    let extra = [
        "{not json",
        r#"{"id": 5, "claimReviewed": "duplicate explicit id", "url": "https://x.org/1", "datePublished": "2020-05-01"}"#,
        r#"{"claimReviewed": "", "headline": "", "url": "https://x.org/2", "datePublished": "2020-05-01"}"#,
        r#"{"claimReviewed": "bad url", "url": "::::", "datePublished": "2020-05-01"}"#,
        r#"{"claimReviewed": "FACT CHECK:", "url": "https://x.org/3", "datePublished": "2020-05-01"}"#,
        r#"{"claimReviewed": "too old", "url": "https://x.org/4", "datePublished": "2015-05-01"}"#,
        r#"{"claimReviewed": "Mask mandates end soon", "url": "https://x.org/5", "datePublished": "2020-05-01"}"#,
        r#"{"claimReviewed": "mask MANDATES end soon", "url": "https://x.org/6", "datePublished": "2020-06-01"}"#,
    ];
    for line in extra {
        text.push_str(line);
        text.push('\n');
    }
    let n_lines = text.lines().filter(|l| !l.trim().is_empty()).count();
    let removal = claimgraph::ingest::parse_removal_list(claimgraph::ingest::DEFAULT_BOILERPLATE);
    let outcome = clean_records(
        parse_records(text.as_bytes()).unwrap(),
        &PipelineConfig::default(),
        &removal,
        None,
    )
    .unwrap();
    let mut log = Vec::new();
    write_drop_log(&outcome.drops, &mut log).unwrap();
    let logged = read_drop_log(log.as_slice()).unwrap();
    let reasons: BTreeSet<_> = logged.iter().map(|d| format!("{:?}", d.reason)).collect();
    let ingest_ok = outcome.input_count == n_lines
        && n_lines == outcome.records.len() + logged.len()
        && logged == outcome.drops;

    check(
        vectors_ok && index_ok && ingest_ok,
        format!(
            "10k vectors max abs diff {max_diff}, index bytes stable {}, ingest {n_lines} lines = {} records + {} logged drops ({})",
            ib == ib2,
            outcome.records.len(),
            logged.len(),
            reasons.into_iter().collect::<Vec<_>>().join(", ")
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("ANN fidelity", ann_fidelity),
        ("Clustering oracle", clustering_oracle),
        ("Planted-partition recovery", planted_recovery),
        ("Threshold monotonicity", threshold_monotonicity),
        ("Homophily calibration", homophily_calibration),
        ("Drift recovery", drift_recovery),
        ("Regression recovery", regression_recovery),
        ("Stats kernel", stats_kernel),
        ("Dedup correctness", dedup_correctness),
        ("Determinism", determinism),
        ("Format round-trips", format_round_trips),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                println!("FAIL {name}: {d} [{secs:.1}s]");
                failed.push(name);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed.len(),
        criteria.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
