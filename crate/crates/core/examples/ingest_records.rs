//! Cleans the bundled raw corpus and reports attrition per drop reason.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;

use claimgraph::ingest::{clean_records, parse_records, parse_removal_list, DEFAULT_BOILERPLATE};
use claimgraph::PipelineConfig;

fn main() -> claimgraph::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/synthetic_1k.jsonl");
    let parsed = parse_records(BufReader::new(File::open(path)?))?;
    let removal = parse_removal_list(DEFAULT_BOILERPLATE);
    let outcome = clean_records(parsed, &PipelineConfig::default(), &removal, None)?;
    println!(
        "input {} -> kept {}",
        outcome.input_count,
        outcome.records.len()
    );
    let mut by_reason = BTreeMap::new();
    for d in &outcome.drops {
        *by_reason.entry(format!("{:?}", d.reason)).or_insert(0) += 1;
    }
    for (reason, n) in by_reason {
        println!("  dropped {n:>4} {reason}");
    }
    for c in outcome.boilerplate_candidates.iter().take(5) {
        println!(
            "  boilerplate candidate on {}: {:?} ({:.0}%)",
            c.domain,
            c.ngram,
            100.0 * c.share
        );
    }
    if let Some(r) = outcome.records.first() {
        println!(
            "first record: [{}] {} ({})",
            r.domain, r.claim_text, r.review_date
        );
    }
    Ok(())
}
