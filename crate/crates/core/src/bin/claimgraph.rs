use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use claimgraph::config::load_config;
use claimgraph::embed_store::write_vector_file;
use claimgraph::pipeline::{run_stages, RunOptions, Stage};
use claimgraph::synth::{generate, SynthSpec};
use claimgraph::{PipelineConfig, Result};

/// Cluster fact-checked claims and analyse their spread across languages.
///
/// Every config key is also accepted as a flag (`--edge_threshold 0.9` or
/// `--edge-threshold 0.9`) and overrides the config file.
#[derive(Parser, Debug)]
#[command(name = "claimgraph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Work directory for stage outputs and the manifest.
    #[arg(long, global = true, default_value = "claimgraph-work")]
    workdir: PathBuf,
    /// Raw fact-check JSONL (ingest).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Precomputed vector file (embed).
    #[arg(long, global = true)]
    vectors: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Rerun stages even when up to date.
    #[arg(long, global = true)]
    force: bool,
    /// Resolve URL redirects over HTTP before assigning domains.
    #[arg(long, global = true)]
    resolve_redirects: bool,
    /// Alias for --edge_threshold.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Alias for --n_hyperplanes.
    #[arg(long, global = true)]
    hyperplanes: Option<usize>,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Parse, clean and deduplicate raw fact-check JSONL.
    Ingest,
    /// Attach embeddings (from --vectors or the embedding service) and drop editorial duplicates.
    Embed,
    /// Build the random-hyperplane index.
    Index,
    /// Threshold the similarity graph and extract connected components.
    Cluster,
    /// Threshold sweep and verdict consistency.
    Eval,
    /// Language composition of clusters against a permutation null.
    Homophily,
    /// Time differences within clusters and similarity drift.
    Temporal,
    /// Shortest paths inside clusters and path regressions.
    Paths,
    /// Token relative-frequency ratios.
    Tokens,
    /// Collect stage outputs into one directory with an index.
    Report,
    /// Run every stage in order.
    All,
    /// Write a synthetic corpus with planted structure.
    Synth {
        /// Generator settings as JSON; defaults otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n_records: Option<usize>,
        /// Output prefix: writes <out>.jsonl, <out>.cgv and <out>.truth.json.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Pulls `--<config key> <value>` pairs out of argv before clap sees them.
fn split_config_flags(args: Vec<String>) -> (Vec<String>, BTreeMap<String, String>) {
    let keys: BTreeSet<String> = match serde_json::to_value(PipelineConfig::default()) {
        Ok(serde_json::Value::Object(m)) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    };
    let mut rest = Vec::new();
    let mut overrides = BTreeMap::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match flag.split_once('=') {
            Some((n, v)) => (n.replace('-', "_"), Some(v.to_string())),
            None => (flag.replace('-', "_"), None),
        };
        if !keys.contains(&name) {
            rest.push(arg);
            continue;
        }
        match inline.or_else(|| it.next()) {
            Some(v) => {
                overrides.insert(name, v);
            }
            None => rest.push(arg),
        }
    }
    (rest, overrides)
}

fn synth(
    spec: Option<PathBuf>,
    n_records: Option<usize>,
    seed: Option<u64>,
    out: PathBuf,
) -> Result<()> {
    let mut spec: SynthSpec = match spec {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?)?,
        None => SynthSpec::default(),
    };
    if n_records.is_some() {
        spec.n_records = n_records;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let corpus = generate(&spec)?;
    let with_ext = |ext: &str| {
        let mut p = out.clone().into_os_string();
        p.push(ext);
        PathBuf::from(p)
    };
    corpus.write_jsonl(BufWriter::new(File::create(with_ext(".jsonl"))?))?;
    write_vector_file(&corpus.store, &with_ext(".cgv"))?;
    corpus.write_truth(BufWriter::new(File::create(with_ext(".truth.json"))?))?;
    Ok(())
}

fn run(cli: Cli, mut overrides: BTreeMap<String, String>) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| claimgraph::Error::InvalidInput(e.to_string()))?;
    }
    if let Command::Synth {
        spec,
        n_records,
        out,
    } = cli.command
    {
        return synth(spec, n_records, cli.seed, out);
    }
    if let Some(s) = cli.seed {
        overrides.insert("rng_seed".into(), s.to_string());
    }
    if let Some(t) = cli.threshold {
        overrides.insert("edge_threshold".into(), t.to_string());
    }
    if let Some(h) = cli.hyperplanes {
        overrides.insert("n_hyperplanes".into(), h.to_string());
    }
    let config = load_config(cli.config.as_deref(), &overrides)?;
    let stages: Vec<Stage> = match cli.command {
        Command::All => Stage::ALL.to_vec(),
        Command::Ingest => vec![Stage::Ingest],
        Command::Embed => vec![Stage::Embed],
        Command::Index => vec![Stage::Index],
        Command::Cluster => vec![Stage::Cluster],
        Command::Eval => vec![Stage::Eval],
        Command::Homophily => vec![Stage::Homophily],
        Command::Temporal => vec![Stage::Temporal],
        Command::Paths => vec![Stage::Paths],
        Command::Tokens => vec![Stage::Tokens],
        Command::Report => vec![Stage::Report],
        Command::Synth { .. } => unreachable!("handled above"),
    };
    let opts = RunOptions {
        workdir: cli.workdir,
        input: cli.input,
        vectors: cli.vectors,
        resolve_redirects: cli.resolve_redirects,
        force: cli.force,
    };
    run_stages(&stages, &config, &opts)?;
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = split_config_flags(std::env::args().collect());
    let cli = Cli::parse_from(args);
    match run(cli, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
