//! Similarity of unconnected same-cluster pairs as a function of their time gap.

use claimgraph::graph::{build_exact_graph, connected_components};
use claimgraph::ingest::{clean_records, parse_records, RecordTable};
use claimgraph::stats::spearman;
use claimgraph::synth::{generate, SynthSpec};
use claimgraph::temporal::{drift_curve, drift_test, pair_time_diffs, PairPopulation};
use claimgraph::PipelineConfig;

fn main() -> claimgraph::Result<()> {
    let spec = SynthSpec {
        n_clusters: 200,
        intra_similarity_target: 0.89,
        dimension: 32,
        cluster_size_distribution: vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.2, 0.2, 0.2, 0.2],
        date_spread_days: 120.0,
        ..SynthSpec::default()
    };
    let corpus = generate(&spec)?;
    let mut jsonl = Vec::new();
    corpus.write_jsonl(&mut jsonl)?;
    let cfg = PipelineConfig::default();
    let table =
        RecordTable::new(clean_records(parse_records(jsonl.as_slice())?, &cfg, &[], None)?.records);
    let graph = build_exact_graph(&corpus.store, cfg.edge_threshold, false);
    let clusters = connected_components(&graph);
    let set = pair_time_diffs(
        &clusters,
        &graph,
        &corpus.store,
        &table,
        PairPopulation::UnconnectedPairs,
    )?;
    let curve = drift_curve(&set.pairs, 500, 50)?;
    for row in &curve {
        println!(
            "{:>4}+ days  mean sim {:.4} (n = {})",
            row.bin_start, row.mean, row.n
        );
    }
    let days: Vec<f64> = set.pairs.iter().map(|p| p.days as f64).collect();
    let sims: Vec<f64> = set.pairs.iter().map(|p| p.similarity).collect();
    let rho = spearman(&days, &sims)?;
    println!("spearman rho {:.3} (p = {:.2e})", rho.rho, rho.p_value);
    let t = drift_test(&set.pairs, cfg.drift_early_window, cfg.drift_late_window)?;
    println!("early vs late: t = {:.2}, p = {:.2e}", t.t, t.p_value);
    Ok(())
}
