//! Stage runner with file-based handoffs.
//!
//! Each stage reads the outputs of earlier stages from the work directory and
//! writes its own outputs under `<workdir>/<stage>/`. Outputs are staged in a
//! scratch directory and moved into place only when the stage succeeds.
//! `manifest.json` records content hashes of every stage's inputs and
//! outputs; a stage whose inputs, config and outputs are unchanged is skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ann::{HyperplaneIndex, IndexParams};
use crate::config::PipelineConfig;
use crate::embed_store::{
    fetch_embeddings, load_vector_file, write_vector_file, EmbeddingStore, FetchOptions,
};
use crate::eval::{
    build_verdict_map, parse_verdict_table, threshold_sweep, write_reports_csv,
    write_verdict_frequencies, VerdictContext, DEFAULT_VERDICT_TABLE,
};
use crate::graph::{
    build_graph, cluster_stats, connected_components, read_clusters_csv, write_clusters_csv,
    Cluster, SimilarityGraph,
};
use crate::homophily::{
    family_share, language_clusters, multilingual_only, parse_family_table, run_homophily,
    write_replicates_csv, LanguageDistribution, DEFAULT_FAMILY_TABLE,
};
use crate::ingest::{
    clean_records, dedup_editorial, parse_records, parse_removal_list, read_records_jsonl,
    write_drop_log, write_records_jsonl, DropEntry, DropReason, FactCheckRecord,
    HttpRedirectResolver, RecordTable, RedirectResolver, DEFAULT_BOILERPLATE,
};
use crate::paths::{build_regression_dataset, run_path_regressions, write_paths_csv, PathOptions};
use crate::temporal::{
    drift_curve, drift_test, pair_time_diffs, time_diff_cdf, time_gap_comparison, write_cdf_csv,
    write_drift_csv, PairPopulation,
};
use crate::tokens::{
    condition_split, docs_in, preprocess_tokens, relative_frequency_table, write_ratio_csv,
    HttpTagger, HttpTranslator, Tagger, TokenServices, Translator,
};
use crate::{Error, Result};

/// Writes one JSON log line to stderr.
pub fn log_event(stage: &str, level: &str, message: &str, fields: serde_json::Value) {
    let line =
        serde_json::json!({"stage": stage, "level": level, "message": message, "fields": fields});
    eprintln!("{line}");
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Embed,
    Index,
    Cluster,
    Eval,
    Homophily,
    Temporal,
    Paths,
    Tokens,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Embed,
        Stage::Index,
        Stage::Cluster,
        Stage::Eval,
        Stage::Homophily,
        Stage::Temporal,
        Stage::Paths,
        Stage::Tokens,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Embed => "embed",
            Stage::Index => "index",
            Stage::Cluster => "cluster",
            Stage::Eval => "eval",
            Stage::Homophily => "homophily",
            Stage::Temporal => "temporal",
            Stage::Paths => "paths",
            Stage::Tokens => "tokens",
            Stage::Report => "report",
        }
    }

    /// Files from earlier stages this stage reads, as (stage, file name).
    fn inputs(self) -> &'static [(Stage, &'static str)] {
        const RECORDS: (Stage, &str) = (Stage::Embed, "records.jsonl");
        const VECTORS: (Stage, &str) = (Stage::Embed, "vectors.cgv");
        const INDEX: (Stage, &str) = (Stage::Index, "index.cgi");
        const CLUSTERS: (Stage, &str) = (Stage::Cluster, "clusters.csv");
        const EDGES: (Stage, &str) = (Stage::Cluster, "edges.csv");
        match self {
            Stage::Ingest => &[],
            Stage::Embed => &[(Stage::Ingest, "records.jsonl")],
            Stage::Index => &[VECTORS],
            Stage::Cluster => &[VECTORS, INDEX],
            Stage::Eval => &[VECTORS, RECORDS, INDEX],
            Stage::Homophily => &[RECORDS, CLUSTERS],
            Stage::Temporal | Stage::Paths => &[VECTORS, RECORDS, CLUSTERS, EDGES],
            Stage::Tokens => &[RECORDS, CLUSTERS],
            Stage::Report => &[
                (Stage::Cluster, "cluster_stats.json"),
                (Stage::Eval, "sweep.csv"),
                (Stage::Homophily, "homophily.json"),
                (Stage::Temporal, "drift_test.json"),
                (Stage::Paths, "regressions.json"),
                (Stage::Tokens, "tokens.json"),
            ],
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown stage {s:?}")))
    }
}

/// Where a run reads and writes.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub workdir: PathBuf,
    /// Raw JSONL corpus for `ingest`.
    pub input: Option<PathBuf>,
    /// Precomputed vector file for `embed`; otherwise `embed_endpoint` is used.
    pub vectors: Option<PathBuf>,
    /// Follow URL redirects over HTTP when assigning domains.
    pub resolve_redirects: bool,
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_digest: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: Option<PipelineConfig>,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load(workdir: &Path) -> Result<Self> {
        let p = workdir.join(MANIFEST);
        if !p.exists() {
            return Ok(Self::default());
        }
        Ok(serde_json::from_slice(&fs::read(p)?)?)
    }

    fn save(&self, workdir: &Path) -> Result<()> {
        let tmp = workdir.join(".manifest.json.partial");
        fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        fs::rename(tmp, workdir.join(MANIFEST))?;
        Ok(())
    }
}

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    let mut f = File::open(path)?;
    std::io::copy(&mut f, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

fn config_digest(config: &PipelineConfig) -> String {
    hex::encode(Sha256::digest(config.to_json_string().as_bytes()))
}

struct Context<'a> {
    config: &'a PipelineConfig,
    opts: &'a RunOptions,
}

impl Context<'_> {
    fn stage_file(&self, stage: Stage, file: &str) -> PathBuf {
        self.opts.workdir.join(stage.name()).join(file)
    }

    /// Path of an input, failing with the name of the stage that makes it.
    fn input(&self, stage: Stage, file: &str) -> Result<PathBuf> {
        let p = self.stage_file(stage, file);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::MissingInput {
                path: p,
                stage: stage.name(),
            })
        }
    }

    fn cache_dir(&self, name: &str) -> PathBuf {
        self.opts.workdir.join(".cache").join(name)
    }

    fn records(&self) -> Result<Vec<FactCheckRecord>> {
        read_records_jsonl(BufReader::new(File::open(
            self.input(Stage::Embed, "records.jsonl")?,
        )?))
    }

    fn store(&self) -> Result<EmbeddingStore> {
        load_vector_file(&self.input(Stage::Embed, "vectors.cgv")?)
    }

    fn clusters(&self) -> Result<Vec<Cluster>> {
        read_clusters_csv(File::open(self.input(Stage::Cluster, "clusters.csv")?)?)
    }

    fn graph(&self, store: &EmbeddingStore) -> Result<SimilarityGraph> {
        let f = File::open(self.input(Stage::Cluster, "edges.csv")?)?;
        SimilarityGraph::read_edges_csv(store.ids().iter().copied(), f)
    }

    /// External files this stage depends on, keyed as written in the manifest.
    fn external_inputs(&self, stage: Stage) -> Vec<PathBuf> {
        let mut out = Vec::new();
        match stage {
            Stage::Ingest => {
                out.extend(self.opts.input.clone());
                out.extend(self.config.boilerplate_file.clone());
            }
            Stage::Embed => out.extend(self.opts.vectors.clone()),
            Stage::Eval => out.extend(self.config.verdict_table_file.clone()),
            Stage::Homophily => out.extend(self.config.family_table_file.clone()),
            _ => {}
        }
        out
    }

    fn input_digests(&self, stage: Stage) -> Result<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        for &(producer, file) in stage.inputs() {
            let p = self.input(producer, file)?;
            out.insert(format!("{}/{}", producer.name(), file), file_digest(&p)?);
        }
        for p in self.external_inputs(stage) {
            if !p.exists() {
                return Err(Error::InvalidInput(format!(
                    "{} does not exist",
                    p.display()
                )));
            }
            out.insert(p.display().to_string(), file_digest(&p)?);
        }
        Ok(out)
    }
}

fn output_digests(dir: &Path, stage: Stage) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries.into_iter().filter(|p| p.is_file()) {
        let name = p
            .file_name()
            .expect("file has a name")
            .to_string_lossy()
            .to_string();
        out.insert(format!("{}/{}", stage.name(), name), file_digest(&p)?);
    }
    Ok(out)
}

fn is_up_to_date(
    rec: &StageRecord,
    workdir: &Path,
    cfg: &str,
    inputs: &BTreeMap<String, String>,
) -> bool {
    rec.config_digest == cfg
        && &rec.inputs == inputs
        && rec.outputs.iter().all(|(rel, digest)| {
            file_digest(&workdir.join(rel))
                .map(|d| &d == digest)
                .unwrap_or(false)
        })
}

/// Runs the stages in order; stops at the first failure.
pub fn run_stages(
    stages: &[Stage],
    config: &PipelineConfig,
    opts: &RunOptions,
) -> Result<Vec<(Stage, StageStatus)>> {
    config.validate()?;
    fs::create_dir_all(&opts.workdir)?;
    let ctx = Context { config, opts };
    let mut manifest = RunManifest::load(&opts.workdir)?;
    manifest.config = Some(config.clone());
    let cfg = config_digest(config);
    let mut statuses = Vec::new();
    for &stage in stages {
        let inputs = ctx.input_digests(stage)?;
        let up_to_date = manifest
            .stages
            .get(stage.name())
            .is_some_and(|rec| is_up_to_date(rec, &opts.workdir, &cfg, &inputs));
        if up_to_date && !opts.force {
            log_event(stage.name(), "info", "up to date", serde_json::json!({}));
            statuses.push((stage, StageStatus::UpToDate));
            continue;
        }
        let scratch = opts.workdir.join(format!(".{}.partial", stage.name()));
        if scratch.exists() {
            fs::remove_dir_all(&scratch)?;
        }
        fs::create_dir_all(&scratch)?;
        let started = Instant::now();
        log_event(stage.name(), "info", "started", serde_json::json!({}));
        if let Err(e) = run_one(stage, &ctx, &scratch) {
            let _ = fs::remove_dir_all(&scratch);
            log_event(
                stage.name(),
                "error",
                "failed",
                serde_json::json!({"error": e.to_string()}),
            );
            return Err(e);
        }
        let final_dir = opts.workdir.join(stage.name());
        if final_dir.exists() {
            fs::remove_dir_all(&final_dir)?;
        }
        fs::rename(&scratch, &final_dir)?;
        let seconds = started.elapsed().as_secs_f64();
        manifest.stages.insert(
            stage.name().to_string(),
            StageRecord {
                config_digest: cfg.clone(),
                inputs,
                outputs: output_digests(&final_dir, stage)?,
                seconds,
            },
        );
        manifest.save(&opts.workdir)?;
        log_event(
            stage.name(),
            "info",
            "finished",
            serde_json::json!({"seconds": seconds}),
        );
        statuses.push((stage, StageStatus::Ran));
    }
    manifest.save(&opts.workdir)?;
    Ok(statuses)
}

/// Runs every stage from ingest to report.
pub fn run_all(config: &PipelineConfig, opts: &RunOptions) -> Result<Vec<(Stage, StageStatus)>> {
    run_stages(&Stage::ALL, config, opts)
}

fn run_one(stage: Stage, ctx: &Context<'_>, out: &Path) -> Result<()> {
    match stage {
        Stage::Ingest => stage_ingest(ctx, out),
        Stage::Embed => stage_embed(ctx, out),
        Stage::Index => stage_index(ctx, out),
        Stage::Cluster => stage_cluster(ctx, out),
        Stage::Eval => stage_eval(ctx, out),
        Stage::Homophily => stage_homophily(ctx, out),
        Stage::Temporal => stage_temporal(ctx, out),
        Stage::Paths => stage_paths(ctx, out),
        Stage::Tokens => stage_tokens(ctx, out),
        Stage::Report => stage_report(ctx, out),
    }
}

fn create(path: PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Turns "not enough data" into a JSON note so small corpora still produce
/// every file; other errors propagate.
fn available<T: Serialize>(r: Result<T>) -> Result<serde_json::Value> {
    match r {
        Ok(v) => Ok(serde_json::to_value(v)?),
        Err(e @ (Error::InsufficientData(_) | Error::RankDeficient)) => {
            Ok(serde_json::json!({"status": "unavailable", "reason": e.to_string()}))
        }
        Err(e) => Err(e),
    }
}

fn drop_counts(drops: &[DropEntry]) -> BTreeMap<DropReason, usize> {
    let mut counts = BTreeMap::new();
    for d in drops {
        *counts.entry(d.reason).or_default() += 1;
    }
    counts
}

fn read_text_or(path: Option<&PathBuf>, bundled: &str) -> Result<String> {
    match path {
        Some(p) => Ok(fs::read_to_string(p)?),
        None => Ok(bundled.to_string()),
    }
}

fn stage_ingest(ctx: &Context<'_>, out: &Path) -> Result<()> {
    let input = ctx.opts.input.as_ref().ok_or_else(|| {
        Error::InvalidInput("ingest needs an input corpus (--input <records.jsonl>)".into())
    })?;
    let parsed = parse_records(BufReader::new(File::open(input)?))?;
    for e in &parsed.errors {
        log_event(
            "ingest",
            "warn",
            "invalid line",
            serde_json::json!({"line": e.line, "reason": e.reason}),
        );
    }
    let removal = parse_removal_list(&read_text_or(
        ctx.config.boilerplate_file.as_ref(),
        DEFAULT_BOILERPLATE,
    )?);
    let http;
    let resolver: Option<&dyn RedirectResolver> = if ctx.opts.resolve_redirects {
        http = HttpRedirectResolver::new(std::time::Duration::from_secs(20));
        Some(&http)
    } else {
        None
    };
    let outcome = clean_records(parsed, ctx.config, &removal, resolver)?;
    write_records_jsonl(&outcome.records, create(out.join("records.jsonl"))?)?;
    write_drop_log(&outcome.drops, create(out.join("drop_log.csv"))?)?;
    let mut w = csv::Writer::from_writer(create(out.join("boilerplate_candidates.csv"))?);
    for c in &outcome.boilerplate_candidates {
        w.serialize(c)?;
    }
    w.flush()?;
    let counts = drop_counts(&outcome.drops);
    log_event(
        "ingest",
        "info",
        "records cleaned",
        serde_json::json!({"input": outcome.input_count, "kept": outcome.records.len(), "dropped": counts}),
    );
    write_json(
        out.join("summary.json"),
        &serde_json::json!({
            "input_count": outcome.input_count,
            "output_count": outcome.records.len(),
            "dropped": counts,
            "length_stats": outcome.length_stats,
            "boilerplate_literals": removal.len(),
        }),
    )
}

fn stage_embed(ctx: &Context<'_>, out: &Path) -> Result<()> {
    let records = read_records_jsonl(BufReader::new(File::open(
        ctx.input(Stage::Ingest, "records.jsonl")?,
    )?))?;
    let mut drops = Vec::new();
    let (store, records) = if let Some(path) = &ctx.opts.vectors {
        let all = load_vector_file(path)?;
        let (have, missing): (Vec<_>, Vec<_>) =
            records.into_iter().partition(|r| all.contains(r.id));
        drops.extend(missing.iter().map(|r| DropEntry {
            dropped_id: r.id.to_string(),
            survivor_id: None,
            reason: DropReason::MissingEmbedding,
        }));
        let ids: Vec<_> = have.iter().map(|r| r.id).collect();
        (all.subset(&ids)?, have)
    } else if let Some(endpoint) = &ctx.config.embed_endpoint {
        let claims: Vec<_> = records
            .iter()
            .map(|r| (r.id, r.claim_text.clone()))
            .collect();
        let options = FetchOptions {
            batch_size: ctx.config.embed_batch_size,
            checkpoint_dir: Some(ctx.cache_dir("embed")),
            ..FetchOptions::default()
        };
        let (store, report) = fetch_embeddings(&claims, endpoint, &options)?;
        log_event(
            "embed",
            "info",
            "embeddings fetched",
            serde_json::json!({"batches": report.batches, "from_checkpoint": report.batches_from_checkpoint, "retries": report.retries}),
        );
        (store, records)
    } else {
        return Err(Error::InvalidInput(
            "embed needs a vector file (--vectors) or an embed_endpoint".into(),
        ));
    };
    let before = records.len();
    let (mut kept, editorial) = dedup_editorial(records, &store, ctx.config.near_dup_threshold)?;
    drops.extend(editorial);
    kept.sort_by_key(|r| r.id);
    let ids: Vec<_> = kept.iter().map(|r| r.id).collect();
    let store = store.subset(&ids)?;
    write_records_jsonl(&kept, create(out.join("records.jsonl"))?)?;
    write_vector_file(&store, &out.join("vectors.cgv"))?;
    write_drop_log(&drops, create(out.join("drop_log.csv"))?)?;
    let counts = drop_counts(&drops);
    log_event(
        "embed",
        "info",
        "editorial dedup",
        serde_json::json!({"kept": kept.len(), "dropped": counts}),
    );
    write_json(
        out.join("summary.json"),
        &serde_json::json!({"input_count": before + counts.get(&DropReason::MissingEmbedding).unwrap_or(&0), "output_count": kept.len(), "dropped": counts, "dimension": store.dimension()}),
    )
}

fn stage_index(ctx: &Context<'_>, out: &Path) -> Result<()> {
    let store = ctx.store()?;
    let index = HyperplaneIndex::build(&store, IndexParams::from_config(ctx.config))?;
    index.write_file(&store, &out.join("index.cgi"))
}

fn load_index(ctx: &Context<'_>, store: &EmbeddingStore) -> Result<HyperplaneIndex> {
    HyperplaneIndex::read_file(store, &ctx.input(Stage::Index, "index.cgi")?)
}

fn stage_cluster(ctx: &Context<'_>, out: &Path) -> Result<()> {
    let store = ctx.store()?;
    let index = load_index(ctx, &store)?;
    let c = ctx.config;
    let graph = build_graph(
        &store,
        &index,
        c.edge_threshold,
        c.ann_initial_k,
        c.strict_threshold,
    )?;
    let clusters = connected_components(&graph);
    graph.write_edges_csv(create(out.join("edges.csv"))?)?;
    write_clusters_csv(&clusters, create(out.join("clusters.csv"))?)?;
    let stats = cluster_stats(&clusters)?;
    log_event(
        "cluster",
        "info",
        "clusters built",
        serde_json::to_value(&stats)?,
    );
    write_json(
        out.join("cluster_stats.json"),
        &serde_json::json!({"threshold": c.edge_threshold, "n_edges": graph.edges().len(), "stats": stats}),
    )
}

fn stage_eval(ctx: &Context<'_>, out: &Path) -> Result<()> {
    let c = ctx.config;
    let store = ctx.store()?;
    let records = ctx.records()?;
    let index = load_index(ctx, &store)?;
    let mut thresholds = c.sweep_thresholds.clone();
    thresholds.sort_by(f64::total_cmp);
    let lowest = thresholds[0];
    let base = build_graph(&store, &index, lowest, c.ann_initial_k, c.strict_threshold)?;
    let table = parse_verdict_table(&read_text_or(
        c.verdict_table_file.as_ref(),
        DEFAULT_VERDICT_TABLE,
    )?)?;
    let (verdicts, freqs) = build_verdict_map(&records, c.min_verdict_count, &table);
    let unmapped = freqs.iter().filter(|f| f.mapped.is_none()).count();
    log_event(
        "eval",
        "info",
        "verdicts mapped",
        serde_json::json!({"mapped": verdicts.len(), "unmapped": unmapped}),
    );
    let table = RecordTable::new(records);
    let vctx = VerdictContext {
        records: &table,
        verdicts: &verdicts,
    };
    let reports = threshold_sweep(
        &base,
        &store,
        &thresholds,
        c.strict_threshold,
        Some(&vctx),
        c.inter_cluster_sample_cap,
        c.rng_seed,
    )?;
    write_reports_csv(&reports, create(out.join("sweep.csv"))?)?;
    write_json(out.join("sweep.json"), &reports)?;
    write_verdict_frequencies(&freqs, create(out.join("verdict_frequencies.csv"))?)
}

fn stage_homophily(ctx: &Context<'_>, out: &Path) -> Result<()> {
    let c = ctx.config;
    let records = ctx.records()?;
    let clusters = ctx.clusters()?;
    let distribution =
        LanguageDistribution::from_codes(records.iter().filter_map(|r| r.language.as_deref()))?;
    let table = RecordTable::new(records);
    let lc = language_clusters(&clusters, &table);
    if lc.n_missing_language > 0 {
        log_event(
            "homophily",
            "warn",
            "members without language excluded",
            serde_json::json!({"count": lc.n_missing_language}),
        );
    }
    let families = parse_family_table(&read_text_or(
        c.family_table_file.as_ref(),
        DEFAULT_FAMILY_TABLE,
    )?)?;
    let multilingual = multilingual_only(&lc.clusters);
    let test = run_homophily(
        &lc,
        &distribution,
        c.null_model_replicates,
        c.rng_seed,
        c.alpha,
    );
    if let Ok((_, null)) = &test {
        write_replicates_csv(null, create(out.join("replicates.csv"))?)?;
    } else {
        write_replicates_csv(
            &crate::homophily::NullModel {
                expected: crate::homophily::ExpectedProfile {
                    mono: 0.0,
                    bi: 0.0,
                    tri: 0.0,
                    four_plus: 0.0,
                    multilingual_fraction: 0.0,
                },
                replicates: Vec::new(),
                seed: c.rng_seed,
            },
            create(out.join("replicates.csv"))?,
        )?;
    }
    let summary = serde_json::json!({
        "test": available(test.map(|(t, _)| t))?,
        "family_share": available(family_share(&multilingual, &families))?,
        "n_multilingual_clusters": multilingual.len(),
        "n_missing_language": lc.n_missing_language,
        "language_distribution": distribution,
    });
    write_json(out.join("homophily.json"), &summary)
}

fn stage_temporal(ctx: &Context<'_>, out: &Path) -> Result<()> {
    let c = ctx.config;
    let store = ctx.store()?;
    let table = RecordTable::new(ctx.records()?);
    let clusters = ctx.clusters()?;
    let graph = ctx.graph(&store)?;
    let sets: Vec<_> = [
        PairPopulation::Edges,
        PairPopulation::UnconnectedPairs,
        PairPopulation::AllPairs,
    ]
    .into_iter()
    .map(|p| pair_time_diffs(&clusters, &graph, &store, &table, p))
    .collect::<Result<_>>()?;
    let cdfs: Vec<_> = sets.iter().filter_map(|s| time_diff_cdf(s).ok()).collect();
    write_cdf_csv(&cdfs, create(out.join("cdf.csv"))?)?;
    let (edges, unconnected) = (&sets[0], &sets[1]);
    let misses = unconnected
        .pairs
        .iter()
        .filter(|p| crate::config::passes(p.similarity, c.edge_threshold, c.strict_threshold))
        .count();
    if misses > 0 {
        log_event(
            "temporal",
            "warn",
            "unconnected pairs above threshold (index misses)",
            serde_json::json!({"count": misses}),
        );
    }
    let drift = drift_curve(&unconnected.pairs, c.drift_max_days, c.drift_bin_width);
    write_drift_csv(
        drift.as_deref().unwrap_or(&[]),
        create(out.join("drift.csv"))?,
    )?;
    let cdf_at = |days: i64| -> BTreeMap<&'static str, f64> {
        cdfs.iter()
            .map(|cdf| (cdf.population.as_str(), cdf.at(days)))
            .collect()
    };
    let summary = serde_json::json!({
        "n_pairs": {"edges": edges.pairs.len(), "unconnected_pairs": unconnected.pairs.len(), "all_pairs": sets[2].pairs.len()},
        "n_missing_date": sets[2].n_missing_date,
        "n_unconnected_above_threshold": misses,
        "cdf_at_7_days": cdf_at(7),
        "cdf_at_21_days": cdf_at(21),
        "drift_test": available(drift_test(&unconnected.pairs, c.drift_early_window, c.drift_late_window))?,
        "days_connected_minus_unconnected": available(time_gap_comparison(&edges.pairs, &unconnected.pairs))?,
        "days_unconnected_minus_connected": available(time_gap_comparison(&unconnected.pairs, &edges.pairs))?,
        "drift_curve": available(drift.map(|rows| rows.len()))?,
    });
    write_json(out.join("drift_test.json"), &summary)
}

fn stage_paths(ctx: &Context<'_>, out: &Path) -> Result<()> {
    let c = ctx.config;
    let store = ctx.store()?;
    let table = RecordTable::new(ctx.records()?);
    let clusters = ctx.clusters()?;
    let graph = ctx.graph(&store)?;
    let opts = PathOptions {
        mode: c.path_mode,
        max_exhaustive: c.max_exhaustive_cluster,
        seed: c.rng_seed,
    };
    let data = build_regression_dataset(&clusters, &graph, &store, &table, &opts)?;
    if data.n_missing_language > 0 {
        log_event(
            "paths",
            "warn",
            "paths with unknown languages dropped",
            serde_json::json!({"count": data.n_missing_language}),
        );
    }
    write_paths_csv(&data.rows, create(out.join("paths.csv"))?)?;
    let models = available(
        run_path_regressions(&data.rows)
            .map(|(a, b)| serde_json::json!({"unique_languages": a, "language_switches": b})),
    )?;
    write_json(
        out.join("regressions.json"),
        &serde_json::json!({"path_mode": c.path_mode, "n_rows": data.rows.len(), "n_missing_language": data.n_missing_language, "models": models}),
    )
}

fn stage_tokens(ctx: &Context<'_>, out: &Path) -> Result<()> {
    let c = ctx.config;
    let records = ctx.records()?;
    let clusters = ctx.clusters()?;
    let translator = c.translate_endpoint.as_deref().map(HttpTranslator::new);
    let tagger = c.tagger_endpoint.as_deref().map(HttpTagger::new);
    let services = TokenServices {
        mode: c.token_mode,
        translator: translator.as_ref().map(|t| t as &dyn Translator),
        tagger: tagger.as_ref().map(|t| t as &dyn Tagger),
        batch_size: c.embed_batch_size,
    };
    let refs: Vec<&FactCheckRecord> = records.iter().collect();
    let outcome = preprocess_tokens(&refs, &services, Some(&ctx.cache_dir("tokens")))?;
    if outcome.degraded {
        log_event(
            "tokens",
            "warn",
            "degraded token mode: identity translation and alphabetic tokens",
            serde_json::json!({}),
        );
    }
    let table = RecordTable::new(records);
    let split = condition_split(&clusters, &table);
    let mut tables = BTreeMap::new();
    let comparisons: [(&str, &BTreeSet<u64>, &BTreeSet<u64>, (&str, &str)); 2] = [
        (
            "repeated_vs_singleton",
            &split.non_singleton,
            &split.singleton,
            ("repeated", "singleton"),
        ),
        (
            "multilingual_vs_monolingual",
            &split.multilingual,
            &split.monolingual,
            ("multilingual", "monolingual"),
        ),
    ];
    for (name, a, b, labels) in comparisons {
        let result = relative_frequency_table(
            &docs_in(&outcome.docs, a),
            &docs_in(&outcome.docs, b),
            c.min_token_count,
            labels,
        );
        let w = create(out.join(format!("{name}.csv")))?;
        match &result {
            Ok(t) => write_ratio_csv(t, w)?,
            Err(_) => drop(w),
        }
        tables.insert(
            name,
            available(result.map(
                |t| serde_json::json!({"rows": t.rows.len(), "labels": [t.label_a, t.label_b]}),
            ))?,
        );
    }
    write_json(
        out.join("tokens.json"),
        &serde_json::json!({
            "n_docs": outcome.docs.len(),
            "n_empty": outcome.n_empty,
            "n_failed": outcome.n_failed,
            "degraded": outcome.degraded,
            "min_token_count": c.min_token_count,
            "min_count_scope": "pooled",
            "condition_sizes": {
                "singleton": split.singleton.len(),
                "repeated": split.non_singleton.len(),
                "monolingual": split.monolingual.len(),
                "multilingual": split.multilingual.len(),
            },
            "tables": tables,
        }),
    )
}

const REPORTED: &[(Stage, &[&str])] = &[
    (
        Stage::Ingest,
        &["summary.json", "drop_log.csv", "boilerplate_candidates.csv"],
    ),
    (Stage::Embed, &["summary.json", "drop_log.csv"]),
    (
        Stage::Cluster,
        &["cluster_stats.json", "clusters.csv", "edges.csv"],
    ),
    (
        Stage::Eval,
        &["sweep.csv", "sweep.json", "verdict_frequencies.csv"],
    ),
    (Stage::Homophily, &["homophily.json", "replicates.csv"]),
    (
        Stage::Temporal,
        &["cdf.csv", "drift.csv", "drift_test.json"],
    ),
    (Stage::Paths, &["paths.csv", "regressions.json"]),
    (
        Stage::Tokens,
        &[
            "tokens.json",
            "repeated_vs_singleton.csv",
            "multilingual_vs_monolingual.csv",
        ],
    ),
];

fn stage_report(ctx: &Context<'_>, out: &Path) -> Result<()> {
    let mut index = String::from("# Analysis report\n\n");
    for (stage, files) in REPORTED {
        index.push_str(&format!("## {}\n\n", stage.name()));
        for file in *files {
            let src = ctx.stage_file(*stage, file);
            if !src.exists() {
                if stage.inputs().is_empty() || matches!(stage, Stage::Ingest | Stage::Embed) {
                    continue;
                }
                return Err(Error::MissingInput {
                    path: src,
                    stage: stage.name(),
                });
            }
            let name = format!("{}_{}", stage.name(), file);
            fs::copy(&src, out.join(&name))?;
            index.push_str(&format!("- [{file}]({name})\n"));
        }
        index.push('\n');
    }
    let stats: serde_json::Value =
        serde_json::from_slice(&fs::read(ctx.input(Stage::Cluster, "cluster_stats.json")?)?)?;
    index.push_str("## Headline numbers\n\n");
    index.push_str(&format!(
        "```json\n{}\n```\n",
        serde_json::to_string_pretty(&stats)?
    ));
    fs::write(out.join("index.md"), index)?;
    Ok(())
}
