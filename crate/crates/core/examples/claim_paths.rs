//! Shortest paths between the most dissimilar members of each cluster, and
//! the endpoint-similarity regressions on path length and language mixing.

use claimgraph::graph::{build_exact_graph, connected_components};
use claimgraph::ingest::{clean_records, parse_records, RecordTable};
use claimgraph::paths::{build_regression_dataset, run_path_regressions, PathMode, PathOptions};
use claimgraph::synth::{generate, SynthSpec};
use claimgraph::PipelineConfig;

fn main() -> claimgraph::Result<()> {
    let spec = SynthSpec {
        n_clusters: 300,
        intra_similarity_target: 0.89,
        dimension: 32,
        homophily_strength: 0.3,
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
    let opts = PathOptions {
        mode: PathMode::Hops,
        max_exhaustive: 2000,
        seed: 1,
    };
    let data = build_regression_dataset(&clusters, &graph, &corpus.store, &table, &opts)?;
    if let Some(longest) = data.rows.iter().max_by_key(|r| r.length) {
        println!(
            "longest path: {:?} (similarity {:.3})",
            longest.path, longest.endpoint_similarity
        );
    }
    let (langs, switches) = run_path_regressions(&data.rows)?;
    for model in [langs, switches] {
        println!(
            "{} (n = {}, R2 = {:.3})",
            model.model, model.n_observations, model.r_squared
        );
        for c in &model.coefficients {
            println!(
                "  {:<20} {:>9.4} ({:.4}) {}",
                c.name, c.estimate, c.standard_error, c.stars
            );
        }
    }
    Ok(())
}
