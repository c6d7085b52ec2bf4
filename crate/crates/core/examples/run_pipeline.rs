//! Runs every stage on the bundled corpus in a scratch directory.
//!
//! cargo run --release --example run_pipeline -- [workdir]

use std::path::PathBuf;

use claimgraph::pipeline::{run_all, RunOptions, MANIFEST};
use claimgraph::PipelineConfig;

fn main() -> claimgraph::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    let workdir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("claimgraph-example"));
    let opts = RunOptions {
        workdir: workdir.clone(),
        input: Some(data.join("synthetic_1k.jsonl")),
        vectors: Some(data.join("synthetic_1k.cgv")),
        ..RunOptions::default()
    };
    for (stage, status) in run_all(&PipelineConfig::default(), &opts)? {
        println!("{:<10} {:?}", stage.name(), status);
    }
    println!("manifest: {}", workdir.join(MANIFEST).display());
    println!("report:   {}", workdir.join("report/index.md").display());
    Ok(())
}
