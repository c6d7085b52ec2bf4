//! Time differences between clustered fact-checks and similarity drift.

use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::DayWindow;
use crate::embed_store::EmbeddingStore;
use crate::graph::{Cluster, SimilarityGraph};
use crate::ingest::RecordTable;
use crate::stats::{mean_sd_se, welch_t, WelchResult};
use crate::{Error, RecordId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairPopulation {
    /// Directly connected pairs.
    Edges,
    /// Same-cluster pairs without an edge.
    UnconnectedPairs,
    AllPairs,
}

impl PairPopulation {
    pub fn as_str(self) -> &'static str {
        match self {
            PairPopulation::Edges => "edges",
            PairPopulation::UnconnectedPairs => "unconnected_pairs",
            PairPopulation::AllPairs => "all_pairs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPair {
    pub a: RecordId,
    pub b: RecordId,
    pub days: i64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub population: PairPopulation,
    pub pairs: Vec<TimedPair>,
    /// Pairs skipped because a member had no record.
    pub n_missing_date: usize,
}

/// Enumerates every unordered intra-cluster pair of the population once.
pub fn pair_time_diffs(
    clusters: &[Cluster],
    graph: &SimilarityGraph,
    store: &EmbeddingStore,
    records: &RecordTable,
    population: PairPopulation,
) -> Result<PairSet> {
    let edges = graph.edge_set();
    let per_cluster: Vec<(Vec<TimedPair>, usize)> = clusters
        .par_iter()
        .filter(|c| c.len() >= 2)
        .map(|c| cluster_pairs(c, &edges, store, records, population))
        .collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    let mut n_missing_date = 0;
    for (p, missing) in per_cluster {
        pairs.extend(p);
        n_missing_date += missing;
    }
    Ok(PairSet {
        population,
        pairs,
        n_missing_date,
    })
}

fn cluster_pairs(
    c: &Cluster,
    edges: &HashSet<(RecordId, RecordId)>,
    store: &EmbeddingStore,
    records: &RecordTable,
    population: PairPopulation,
) -> Result<(Vec<TimedPair>, usize)> {
    let mut out = Vec::new();
    let mut missing = 0;
    for (a, b) in c.pairs() {
        let connected = edges.contains(&(a, b));
        let keep = match population {
            PairPopulation::Edges => connected,
            PairPopulation::UnconnectedPairs => !connected,
            PairPopulation::AllPairs => true,
        };
        if !keep {
            continue;
        }
        let (Some(da), Some(db)) = (records.date(a), records.date(b)) else {
            missing += 1;
            continue;
        };
        out.push(TimedPair {
            a,
            b,
            days: (da - db).num_days().abs(),
            similarity: store.similarity(a, b)?,
        });
    }
    Ok((out, missing))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeDiffCdf {
    pub population: PairPopulation,
    /// Day values 0..=max.
    pub x: Vec<i64>,
    pub cum_fraction: Vec<f64>,
}

impl TimeDiffCdf {
    /// Fraction of pairs with a difference of at most `day`.
    pub fn at(&self, day: i64) -> f64 {
        if day < 0 {
            return 0.0;
        }
        let last = self.cum_fraction.len() - 1;
        self.cum_fraction[(day as usize).min(last)]
    }
}

pub fn time_diff_cdf(pairs: &PairSet) -> Result<TimeDiffCdf> {
    if pairs.pairs.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no {} pairs",
            pairs.population.as_str()
        )));
    }
    let max = pairs.pairs.iter().map(|p| p.days).max().expect("nonempty");
    let mut hist = vec![0usize; max as usize + 1];
    for p in &pairs.pairs {
        hist[p.days as usize] += 1;
    }
    let total = pairs.pairs.len() as f64;
    let mut running = 0;
    let cum_fraction = hist
        .iter()
        .map(|&h| {
            running += h;
            running as f64 / total
        })
        .collect();
    Ok(TimeDiffCdf {
        population: pairs.population,
        x: (0..=max).collect(),
        cum_fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub bin_start: i64,
    pub mean: f64,
    /// Zero for single-pair bins.
    pub se: f64,
    pub n: usize,
}

/// Mean similarity per day bin for pairs up to `max_days` apart.
pub fn drift_curve(pairs: &[TimedPair], max_days: i64, bin_width: i64) -> Result<Vec<DriftRow>> {
    if bin_width < 1 {
        return Err(Error::config("drift_bin_width", "must be at least 1"));
    }
    if pairs.is_empty() {
        return Err(Error::InsufficientData(
            "no pairs for the drift curve".into(),
        ));
    }
    let n_bins = (max_days / bin_width + 1).max(1) as usize;
    let mut bins: Vec<Vec<f64>> = vec![Vec::new(); n_bins];
    for p in pairs.iter().filter(|p| p.days <= max_days) {
        bins[(p.days / bin_width) as usize].push(p.similarity);
    }
    bins.into_iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(i, v)| {
            let d = mean_sd_se(&v)?;
            Ok(DriftRow {
                bin_start: i as i64 * bin_width,
                mean: d.mean,
                se: d.se.unwrap_or(0.0),
                n: d.n,
            })
        })
        .collect()
}

/// Welch test of early-window against late-window similarities.
///
/// A positive `t` means pairs far apart in time are less similar.
pub fn drift_test(pairs: &[TimedPair], early: DayWindow, late: DayWindow) -> Result<WelchResult> {
    let pick = |w: DayWindow| -> Vec<f64> {
        pairs
            .iter()
            .filter(|p| w.contains(p.days))
            .map(|p| p.similarity)
            .collect()
    };
    let (a, b) = (pick(early), pick(late));
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "drift test needs two pairs per window, got {} early and {} late",
            a.len(),
            b.len()
        )));
    }
    welch_t(&a, &b)
}

/// Welch comparison of time differences: connected minus unconnected.
pub fn time_gap_comparison(edges: &[TimedPair], unconnected: &[TimedPair]) -> Result<WelchResult> {
    let days = |v: &[TimedPair]| v.iter().map(|p| p.days as f64).collect::<Vec<_>>();
    welch_t(&days(edges), &days(unconnected))
}

pub fn write_cdf_csv<W: Write>(cdfs: &[TimeDiffCdf], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["population", "day", "cum_fraction"])?;
    for c in cdfs {
        for (x, f) in c.x.iter().zip(&c.cum_fraction) {
            out.write_record([c.population.as_str(), &x.to_string(), &f.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_drift_csv<W: Write>(rows: &[DriftRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;
    use crate::ingest::FactCheckRecord;
    use chrono::NaiveDate;

    fn rec(id: u64, date: &str) -> FactCheckRecord {
        FactCheckRecord {
            id,
            claim_text: "c".into(),
            domain: "d".into(),
            url: "https://d/".into(),
            author: None,
            review_date: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
            rating_raw: None,
            language: None,
            claim_text_en: None,
            noun_lemmas: None,
        }
    }

    fn tp(days: i64, similarity: f64) -> TimedPair {
        TimedPair {
            a: 0,
            b: 1,
            days,
            similarity,
        }
    }

    fn path_fixture() -> (Vec<Cluster>, SimilarityGraph, EmbeddingStore, RecordTable) {
        let ids = [1u64, 2, 3, 4];
        let store =
            EmbeddingStore::from_vectors(2, ids.iter().map(|&i| (i, vec![1.0, i as f32 * 0.01])))
                .unwrap();
        let e = |a, b| Edge {
            a,
            b,
            similarity: 0.9,
        };
        let graph = SimilarityGraph::new(ids, [e(1, 2), e(2, 3), e(3, 4)]).unwrap();
        let records = RecordTable::new(vec![
            rec(1, "2021-01-01"),
            rec(2, "2021-01-08"),
            rec(3, "2021-01-01"),
            rec(4, "2021-02-01"),
        ]);
        (
            vec![Cluster {
                cluster_id: 1,
                member_ids: ids.to_vec(),
            }],
            graph,
            store,
            records,
        )
    }

    #[test]
    fn populations_partition_cluster_pairs() {
        let (c, g, s, r) = path_fixture();
        let un = pair_time_diffs(&c, &g, &s, &r, PairPopulation::UnconnectedPairs).unwrap();
        let set: Vec<(u64, u64)> = un.pairs.iter().map(|p| (p.a, p.b)).collect();
        assert_eq!(set, vec![(1, 3), (1, 4), (2, 4)]);
        let edges = pair_time_diffs(&c, &g, &s, &r, PairPopulation::Edges).unwrap();
        assert_eq!(edges.pairs.len(), 3);
        assert_eq!(edges.pairs[0].days, 7);
        assert_eq!(
            pair_time_diffs(&c, &g, &s, &r, PairPopulation::AllPairs)
                .unwrap()
                .pairs
                .len(),
            6
        );
        assert!(un.pairs.iter().any(|p| (p.a, p.b) == (1, 3) && p.days == 0));
    }

    #[test]
    fn cdf_examples() {
        let set = |days: &[i64]| PairSet {
            population: PairPopulation::Edges,
            pairs: days.iter().map(|&d| tp(d, 0.9)).collect(),
            n_missing_date: 0,
        };
        let c = time_diff_cdf(&set(&[0, 0])).unwrap();
        assert_eq!(c.at(0), 1.0);
        let c = time_diff_cdf(&set(&[3, 10])).unwrap();
        assert_eq!(c.at(7), 0.5);
        assert_eq!(c.at(100), 1.0);
        assert!(c.cum_fraction.windows(2).all(|w| w[0] <= w[1]));
        assert!(time_diff_cdf(&set(&[])).is_err());
    }

    #[test]
    fn flat_drift_curve() {
        let pairs: Vec<TimedPair> = (0..100).map(|d| tp(d % 50, 0.9)).collect();
        let rows = drift_curve(&pairs, 40, 1).unwrap();
        assert_eq!(rows.len(), 41);
        assert!(rows
            .iter()
            .all(|r| (r.mean - 0.9).abs() < 1e-12 && r.se < 1e-12));
        assert_eq!(
            rows.iter().map(|r| r.n).sum::<usize>(),
            pairs.iter().filter(|p| p.days <= 40).count()
        );
        let wide = drift_curve(&pairs, 49, 10).unwrap();
        assert_eq!(
            wide.iter().map(|r| r.bin_start).collect::<Vec<_>>(),
            vec![0, 10, 20, 30, 40]
        );
        assert!(drift_curve(&[], 10, 1).is_err());
        assert!(drift_curve(&pairs, 10, 0).is_err());
    }

    #[test]
    fn planted_linear_decay() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let pairs: Vec<TimedPair> = (0..4000)
            .map(|i| {
                let d = i % 200;
                tp(d, 0.9 - 0.001 * d as f64 + noise.sample(&mut rng))
            })
            .collect();
        let rows = drift_curve(&pairs, 199, 10).unwrap();
        let x: Vec<f64> = rows.iter().map(|r| r.bin_start as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.mean).collect();
        let s = crate::stats::spearman(&x, &y).unwrap();
        assert!(s.rho < 0.0 && s.p_value < 0.01);
        let t = drift_test(&pairs, DayWindow::new(0, 30), DayWindow::new(150, 199)).unwrap();
        assert!(t.t > 0.0 && t.p_value < 0.01);
    }

    #[test]
    fn identical_windows_give_null_test() {
        let pairs: Vec<TimedPair> = (0..10).map(|i| tp(i, 0.8 + 0.01 * i as f64)).collect();
        let t = drift_test(&pairs, DayWindow::new(0, 9), DayWindow::new(0, 9)).unwrap();
        assert_eq!(t.t, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        assert!(drift_test(&pairs, DayWindow::new(0, 9), DayWindow::new(300, 400)).is_err());
    }

    #[test]
    fn csv_writers() {
        let c = TimeDiffCdf {
            population: PairPopulation::Edges,
            x: vec![0, 1],
            cum_fraction: vec![0.5, 1.0],
        };
        let mut buf = Vec::new();
        write_cdf_csv(&[c], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "population,day,cum_fraction\nedges,0,0.5\nedges,1,1\n"
        );
        let mut buf = Vec::new();
        write_drift_csv(
            &[DriftRow {
                bin_start: 0,
                mean: 0.9,
                se: 0.0,
                n: 2,
            }],
            &mut buf,
        )
        .unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("bin_start,mean,se,n\n"));
    }
}
