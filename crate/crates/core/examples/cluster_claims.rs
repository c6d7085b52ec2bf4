//! Builds the similarity graph, clusters it and scores it against the planted partition.

use claimgraph::eval::adjusted_rand_index;
use claimgraph::graph::{build_graph, cluster_stats, connected_components};
use claimgraph::synth::{generate, SynthSpec};
use claimgraph::{HyperplaneIndex, IndexParams, PipelineConfig};

fn main() -> claimgraph::Result<()> {
    let corpus = generate(&SynthSpec {
        n_records: Some(1500),
        ..SynthSpec::default()
    })?;
    let cfg = PipelineConfig::default();
    let index = HyperplaneIndex::build(&corpus.store, IndexParams::from_config(&cfg))?;
    let graph = build_graph(
        &corpus.store,
        &index,
        cfg.edge_threshold,
        cfg.ann_initial_k,
        cfg.strict_threshold,
    )?;
    let clusters = connected_components(&graph);
    let stats = cluster_stats(&clusters)?;
    println!("{} edges, {} clusters", graph.edges().len(), clusters.len());
    println!("{}", serde_json::to_string_pretty(&stats)?);
    let ari = adjusted_rand_index(&clusters, &corpus.truth.partition())?;
    println!("ARI against planted clusters: {ari:.4}");
    Ok(())
}
