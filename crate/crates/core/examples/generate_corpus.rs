//! Generates a small synthetic corpus and prints its planted structure.
//!
//! cargo run --example generate_corpus -- [n_records] [out_prefix]

use std::fs::File;
use std::io::BufWriter;

use claimgraph::embed_store::write_vector_file;
use claimgraph::synth::{generate, SynthSpec};

fn main() -> claimgraph::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args
        .next()
        .map(|s| s.parse().expect("n_records"))
        .unwrap_or(300);
    let spec = SynthSpec {
        n_records: Some(n),
        ..SynthSpec::default()
    };
    let corpus = generate(&spec)?;
    let sizes: Vec<usize> = corpus
        .truth
        .clusters
        .iter()
        .map(|c| c.member_ids.len())
        .collect();
    println!("records:  {}", corpus.records.len());
    println!(
        "clusters: {} (largest {})",
        sizes.len(),
        sizes.iter().max().unwrap_or(&0)
    );
    println!("omega:    {:.3e} rad/day", corpus.truth.omega);
    if let Some(prefix) = args.next() {
        corpus.write_jsonl(BufWriter::new(File::create(format!("{prefix}.jsonl"))?))?;
        write_vector_file(&corpus.store, format!("{prefix}.cgv").as_ref())?;
        corpus.write_truth(BufWriter::new(File::create(format!(
            "{prefix}.truth.json"
        ))?))?;
        println!("wrote {prefix}.jsonl, {prefix}.cgv, {prefix}.truth.json");
    }
    Ok(())
}
