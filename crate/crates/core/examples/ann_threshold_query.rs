//! Threshold queries through the hyperplane index against an exact scan.

use claimgraph::ann::brute_force_threshold;
use claimgraph::synth::{generate, SynthSpec};
use claimgraph::{HyperplaneIndex, IndexParams, PipelineConfig};

fn main() -> claimgraph::Result<()> {
    let corpus = generate(&SynthSpec {
        n_records: Some(2000),
        ..SynthSpec::default()
    })?;
    let cfg = PipelineConfig::default();
    let index = HyperplaneIndex::build(&corpus.store, IndexParams::from_config(&cfg))?;
    let (mut found, mut exact) = (0usize, 0usize);
    for &id in corpus.store.ids().iter().step_by(10) {
        let hits = index.query_threshold(
            &corpus.store,
            id,
            cfg.edge_threshold,
            cfg.ann_initial_k,
            false,
        )?;
        let truth = brute_force_threshold(&corpus.store, id, cfg.edge_threshold, false)?;
        found += hits.len();
        exact += truth.len();
    }
    println!(
        "threshold {}: index found {found} of {exact} exact neighbours",
        cfg.edge_threshold
    );
    let id = corpus
        .truth
        .clusters
        .iter()
        .find(|c| c.member_ids.len() > 2)
        .map(|c| c.member_ids[0])
        .unwrap();
    for h in index.query_topk(&corpus.store, id, 5)? {
        println!("  {id} ~ {} : {:.4}", h.record_id, h.similarity);
    }
    Ok(())
}
