//! Relative noun frequencies in repeated versus singleton claims.

use claimgraph::graph::{build_exact_graph, connected_components};
use claimgraph::ingest::{clean_records, parse_records, RecordTable};
use claimgraph::synth::{generate, SynthSpec};
use claimgraph::tokens::{
    condition_split, docs_in, preprocess_tokens, relative_frequency_table, TokenServices,
};
use claimgraph::PipelineConfig;

fn main() -> claimgraph::Result<()> {
    let corpus = generate(&SynthSpec {
        n_records: Some(1500),
        ..SynthSpec::default()
    })?;
    let mut jsonl = Vec::new();
    corpus.write_jsonl(&mut jsonl)?;
    let cfg = PipelineConfig::default();
    let records = clean_records(parse_records(jsonl.as_slice())?, &cfg, &[], None)?.records;
    // Records carry pre-translated text and lemmas, so no services are needed.
    let services = TokenServices {
        mode: cfg.token_mode,
        translator: None,
        tagger: None,
        batch_size: 64,
    };
    let outcome = preprocess_tokens(&records.iter().collect::<Vec<_>>(), &services, None)?;
    let clusters =
        connected_components(&build_exact_graph(&corpus.store, cfg.edge_threshold, false));
    let split = condition_split(&clusters, &RecordTable::new(records));
    let table = relative_frequency_table(
        &docs_in(&outcome.docs, &split.non_singleton),
        &docs_in(&outcome.docs, &split.singleton),
        20,
        ("repeated", "singleton"),
    )?;
    for row in table.rows.iter().take(10) {
        println!("{:<12} {:.3}", row.token, row.ratio);
    }
    Ok(())
}
