//! Cluster quality and verdict consistency across edge thresholds.

use claimgraph::eval::{
    build_verdict_map, parse_verdict_table, threshold_sweep, VerdictContext, DEFAULT_VERDICT_TABLE,
};
use claimgraph::graph::build_graph;
use claimgraph::ingest::{clean_records, parse_records, RecordTable};
use claimgraph::synth::{generate, SynthSpec};
use claimgraph::{HyperplaneIndex, IndexParams, PipelineConfig};

fn main() -> claimgraph::Result<()> {
    let corpus = generate(&SynthSpec {
        n_records: Some(1000),
        intra_similarity_target: 0.9,
        ..SynthSpec::default()
    })?;
    let mut jsonl = Vec::new();
    corpus.write_jsonl(&mut jsonl)?;
    let cfg = PipelineConfig::default();
    let records = clean_records(parse_records(jsonl.as_slice())?, &cfg, &[], None)?.records;
    let (verdicts, _) = build_verdict_map(
        &records,
        cfg.min_verdict_count,
        &parse_verdict_table(DEFAULT_VERDICT_TABLE)?,
    );
    let table = RecordTable::new(records);

    let index = HyperplaneIndex::build(&corpus.store, IndexParams::from_config(&cfg))?;
    let lowest = cfg
        .sweep_thresholds
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let base = build_graph(&corpus.store, &index, lowest, cfg.ann_initial_k, false)?;
    let ctx = VerdictContext {
        records: &table,
        verdicts: &verdicts,
    };
    let reports = threshold_sweep(
        &base,
        &corpus.store,
        &cfg.sweep_thresholds,
        false,
        Some(&ctx),
        500,
        1,
    )?;
    println!("threshold  clusters  singleton%  intra_var  consistency(2)");
    for r in reports {
        println!(
            "{:>9.3}  {:>8}  {:>10.1}  {:>9.2e}  {:>14.3}",
            r.threshold,
            r.n_clusters,
            100.0 * r.singleton_fraction,
            r.mean_intra_variance.unwrap_or(f64::NAN),
            r.modal_consistency_2.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
