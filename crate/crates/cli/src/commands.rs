//! The `synmap` subcommands. Every command loads a strict run config,
//! logs its hash, and maps failures onto a fixed exit-code contract:
//! 0 success, 2 usage/config errors, 3 partial data failures in strict
//! mode, 4 numerical failures (divergence, non-finite values).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use synmap_core::autodiff::AutodiffError;
use synmap_core::cae::{cae_embed, cae_train, CaeError};
use synmap_core::digest::Digest;
use synmap_core::imgproc::{preprocess, PreprocessedMap};
use synmap_core::index::{EmbeddingIndex, ExclusionWindow, IndexError};
use synmap_core::metrics::{MetricKind, SsimConfig};
use synmap_core::synthgen::SynthSpec;
use synmap_core::time::Timestamp;
use synmap_core::vqvae::{vqvae_embed, vqvae_train, VqvaeError};
use thiserror::Error;

use crate::dataio::{self, FilePattern};
use crate::evalharness::{
    anchor_caption, compare_metrics, montage_image, panels_for_hits, seasonal_consistency,
    HarnessError, MetricReport, Panel, QuerySources, ReportRow, SeasonalScore,
};
use crate::formats::{
    self, load_cache_dir, load_index, load_params, save_cache_entry, save_index, save_params,
    CacheEntry, FormatError, ModelParams,
};
use crate::runconfig::RunConfig;
use crate::synth::{write_archive, write_png, SynthError};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CmdError {
    /// Bad flags, configs, inputs, or formats — exit 2.
    #[error("{0}")]
    Usage(String),
    /// Some records failed while others succeeded (strict mode) — exit 3.
    #[error("{0}")]
    Partial(String),
    /// The numerics went wrong: divergence or non-finite values — exit 4.
    #[error("{0}")]
    Numeric(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => EXIT_USAGE,
            CmdError::Partial(_) => EXIT_PARTIAL,
            CmdError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CmdError {
    CmdError::Usage(e.to_string())
}

fn cae_err(e: CaeError) -> CmdError {
    match e {
        CaeError::Diverged { .. } => CmdError::Numeric(e.to_string()),
        CaeError::Autodiff(AutodiffError::NonFinite { .. }) => CmdError::Numeric(e.to_string()),
        other => CmdError::Usage(other.to_string()),
    }
}

fn vq_err(e: VqvaeError) -> CmdError {
    match e {
        VqvaeError::Cae(c) => cae_err(c),
        VqvaeError::NonFiniteLatent { .. } => CmdError::Numeric(e.to_string()),
        other => CmdError::Usage(other.to_string()),
    }
}

fn index_err(e: IndexError) -> CmdError {
    match e {
        IndexError::NonFinite { .. } => CmdError::Numeric(e.to_string()),
        other => CmdError::Usage(other.to_string()),
    }
}

fn harness_err(e: HarnessError) -> CmdError {
    match e {
        HarnessError::Query(q) => index_err(q),
        other => CmdError::Usage(other.to_string()),
    }
}

impl From<FormatError> for CmdError {
    fn from(e: FormatError) -> Self {
        usage(e)
    }
}

impl From<dataio::DataError> for CmdError {
    fn from(e: dataio::DataError) -> Self {
        usage(e)
    }
}

impl From<SynthError> for CmdError {
    fn from(e: SynthError) -> Self {
        usage(e)
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "synmap",
    version,
    about = "Weather-map analog retrieval: preprocess, train, index, query, evaluate"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Cae,
    Vqvae,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Rmse,
    Ssim,
    Cosine,
    Euclidean,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Rmse => MetricKind::Rmse,
            MetricArg::Ssim => MetricKind::Ssim,
            MetricArg::Cosine => MetricKind::Cosine,
            MetricArg::Euclidean => MetricKind::Euclidean,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Scan an archive, preprocess every map, write the raster cache.
    Preprocess {
        #[arg(long)]
        config: PathBuf,
        /// Archive directory (overrides the config's data.dir).
        #[arg(long)]
        in_dir: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Report per-file failures but exit 0 anyway.
        #[arg(long)]
        lenient: bool,
    },
    /// Train a model on a preprocessed cache and save its parameters.
    Train {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch JSON Lines log file (default: standard output).
        #[arg(long)]
        log: Option<PathBuf>,
        /// Overrides the model seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides train.epochs from the config.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Embed every cached raster with saved parameters, write an index.
    Index {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrieve the top-k analogs for one query map under one metric.
    Query {
        #[arg(long)]
        config: PathBuf,
        /// Native index file (latent metrics).
        #[arg(long)]
        index: Option<PathBuf>,
        /// External-embedding JSON Lines file (latent metrics).
        #[arg(long)]
        external: Option<PathBuf>,
        /// Model parameters, required to embed a fresh --query-image.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Preprocessed cache dir (pixel metrics; montages).
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Query by raw archive image (preprocessed on the fly).
        #[arg(long)]
        query_image: Option<PathBuf>,
        /// Query by the id of an already-indexed/cached map.
        #[arg(long)]
        query_id: Option<String>,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        #[arg(long)]
        k: Option<usize>,
        /// Exclusion half-width in days around the query time; 0 disables.
        #[arg(long)]
        exclude_days: Option<f64>,
        /// Contact-sheet PNG output (needs --cache for panel rasters).
        #[arg(long)]
        montage: Option<PathBuf>,
        /// Machine-readable report JSON output.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Compare metrics over a set of queries; write a combined report.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        external: Option<PathBuf>,
        /// Model parameters for embedding the queries (latent metrics).
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        cache: PathBuf,
        /// Manifest (JSON Lines) naming the query records.
        #[arg(long)]
        queries: PathBuf,
        /// Comma-separated metric list.
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MetricArg::Rmse, MetricArg::Ssim, MetricArg::Cosine])]
        metrics: Vec<MetricArg>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        exclude_days: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-query montages (needs cached rasters).
        #[arg(long)]
        montage_dir: Option<PathBuf>,
    },
    /// Generate a synthetic seasonal archive with ground truth.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 2021)]
        start_year: i32,
        #[arg(long, default_value_t = 2)]
        years: usize,
        #[arg(long, default_value_t = 1234)]
        seed: u64,
        /// Comma-separated synoptic hours to render per day.
        #[arg(long, default_value = "0,12")]
        hours: String,
        #[arg(long, default_value = crate::synth::DEFAULT_PATTERN)]
        pattern: String,
    },
}

pub fn run(cli: Cli) -> Result<(), CmdError> {
    match cli.cmd {
        Cmd::Preprocess { config, in_dir, out_dir, lenient } => {
            cmd_preprocess(&config, in_dir.as_deref(), &out_dir, lenient)
        }
        Cmd::Train { model, config, cache, out, log, seed, epochs } => {
            cmd_train(model, &config, &cache, &out, log.as_deref(), seed, epochs)
        }
        Cmd::Index { params, cache, out } => cmd_index(&params, &cache, &out),
        Cmd::Query {
            config,
            index,
            external,
            params,
            cache,
            query_image,
            query_id,
            metric,
            k,
            exclude_days,
            montage,
            report,
        } => cmd_query(QueryArgs {
            config,
            index,
            external,
            params,
            cache,
            query_image,
            query_id,
            metric,
            k,
            exclude_days,
            montage,
            report,
        }),
        Cmd::Eval {
            config,
            index,
            external,
            params,
            cache,
            queries,
            metrics,
            k,
            exclude_days,
            out,
            montage_dir,
        } => cmd_eval(EvalArgs {
            config,
            index,
            external,
            params,
            cache,
            queries,
            metrics,
            k,
            exclude_days,
            out,
            montage_dir,
        }),
        Cmd::Synth { out_dir, start_year, years, seed, hours, pattern } => {
            cmd_synth(&out_dir, start_year, years, seed, &hours, &pattern)
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, CmdError> {
    RunConfig::load(path).map_err(usage)
}

/// Logs the fully resolved config (file + flag overrides) and its hash.
/// Call after every override has been applied.
fn announce_config(cfg: &RunConfig) {
    eprintln!("config {}", cfg.config_hash().to_hex());
    eprintln!("config-json {}", synmap_core::digest::canonical_json(cfg));
}

fn io_usage(path: &Path) -> impl Fn(std::io::Error) -> CmdError + '_ {
    move |e| CmdError::Usage(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// preprocess
// ---------------------------------------------------------------------------

fn cmd_preprocess(
    config: &Path,
    in_dir: Option<&Path>,
    out_dir: &Path,
    lenient: bool,
) -> Result<(), CmdError> {
    let mut cfg = load_config(config)?;
    if let Some(dir) = in_dir {
        cfg.data.dir = dir.to_path_buf();
    }
    announce_config(&cfg);
    let pattern = FilePattern::parse(&cfg.data.pattern)?;
    let scan = dataio::scan_archive(&cfg.data.dir, &pattern)?;
    fs::create_dir_all(out_dir).map_err(io_usage(out_dir))?;

    let mut failures: Vec<String> = scan.rejects.iter().map(|r| r.to_string()).collect();
    let mut kept = Vec::new();
    for record in &scan.manifest.records {
        let outcome = dataio::load_image(&record.path)
            .map_err(|e| e.to_string())
            .and_then(|img| {
                preprocess(&img, &cfg.preprocess, &record.id).map_err(|e| e.to_string())
            })
            .and_then(|map| {
                let entry = CacheEntry { map, timestamp: record.timestamp };
                let path = out_dir.join(formats::cache_file_name(&record.id));
                save_cache_entry(&entry, &path).map_err(|e| e.to_string())
            });
        match outcome {
            Ok(()) => kept.push(record.clone()),
            Err(e) => failures.push(format!("{}: {e}", record.id)),
        }
    }
    for f in &failures {
        eprintln!("failed: {f}");
    }
    let total = scan.manifest.records.len() + scan.rejects.len();
    let manifest = dataio::Manifest { records: kept, ..scan.manifest };
    dataio::save_manifest(&manifest, &out_dir.join("manifest.jsonl"))?;
    println!(
        "preprocessed {}/{} failures {} config {}",
        manifest.records.len(),
        total,
        failures.len(),
        cfg.config_hash().to_hex()
    );
    if manifest.records.is_empty() {
        return Err(CmdError::Usage("no archive image survived preprocessing".into()));
    }
    if !failures.is_empty() && !lenient {
        return Err(CmdError::Partial(format!(
            "{} of {total} files failed (rerun with --lenient to accept partial output)",
            failures.len()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn open_log(path: Option<&Path>) -> Result<Box<dyn std::io::Write>, CmdError> {
    match path {
        Some(p) => Ok(Box::new(fs::File::create(p).map_err(io_usage(p))?)),
        None => Ok(Box::new(std::io::stdout())),
    }
}

fn log_line<T: Serialize>(w: &mut dyn std::io::Write, value: &T) {
    let line = serde_json::to_string(value).expect("log records serialize infallibly");
    let _ = writeln!(w, "{line}");
}

/// Numerical training failures leave a final marker record in the log;
/// the per-epoch lines before it are already streamed.
fn train_failure(err: CmdError, w: &mut dyn std::io::Write) -> CmdError {
    if matches!(err, CmdError::Numeric(_)) {
        #[derive(Serialize)]
        struct DivergenceRecord<'a> {
            diverged: bool,
            detail: &'a str,
        }
        log_line(w, &DivergenceRecord { diverged: true, detail: &err.to_string() });
    }
    err
}

fn cmd_train(
    model: ModelArg,
    config: &Path,
    cache: &Path,
    out: &Path,
    log: Option<&Path>,
    seed: Option<u64>,
    epochs: Option<usize>,
) -> Result<(), CmdError> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.cae.seed = s;
        cfg.vqvae.seed = s;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    announce_config(&cfg);
    let entries = load_cache_dir(cache)?;
    if entries.is_empty() {
        return Err(CmdError::Usage(format!("cache {} is empty", cache.display())));
    }
    let maps: Vec<&PreprocessedMap> = entries.iter().map(|e| &e.map).collect();
    let batch = synmap_core::cae::maps_to_batch(&maps).map_err(cae_err)?;
    let mut log_w = open_log(log)?;

    let params = match model {
        ModelArg::Cae => {
            let run = cae_train(&cfg.cae, &batch, &cfg.train, |l| log_line(log_w.as_mut(), l));
            match run {
                Ok((params, _)) => ModelParams::Cae { config: cfg.cae.clone(), params },
                Err(e) => return Err(train_failure(cae_err(e), log_w.as_mut())),
            }
        }
        ModelArg::Vqvae => {
            let run = vqvae_train(&cfg.vqvae, &batch, &cfg.train, |l| log_line(log_w.as_mut(), l));
            match run {
                Ok((params, _)) => ModelParams::Vq { config: cfg.vqvae.clone(), params },
                Err(e) => return Err(train_failure(vq_err(e), log_w.as_mut())),
            }
        }
    };
    save_params(&params, out)?;
    println!(
        "trained {} on {} rasters model {} config {}",
        params.kind(),
        entries.len(),
        params.model_hash().to_hex(),
        cfg.config_hash().to_hex()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

fn embed_entry(
    mp: &ModelParams,
    hash: Digest,
    entry: &CacheEntry,
) -> Result<synmap_core::index::Embedding, CmdError> {
    match mp {
        ModelParams::Cae { config, params } => {
            cae_embed(config, params, hash, &entry.map, entry.timestamp).map_err(cae_err)
        }
        ModelParams::Vq { config, params } => {
            vqvae_embed(config, params, hash, &entry.map, entry.timestamp).map_err(vq_err)
        }
    }
}

fn cmd_index(params: &Path, cache: &Path, out: &Path) -> Result<(), CmdError> {
    let (mp, hash) = load_params(params)?;
    let entries = load_cache_dir(cache)?;
    if entries.is_empty() {
        return Err(CmdError::Usage(format!("cache {} is empty", cache.display())));
    }
    let mut embeddings = Vec::with_capacity(entries.len());
    for e in &entries {
        embeddings.push(embed_entry(&mp, hash, e)?);
    }
    let index = EmbeddingIndex::build(embeddings).map_err(index_err)?;
    save_index(&index, out)?;
    println!("indexed {} dim {} model {}", index.len(), index.dim(), hash.to_hex());
    Ok(())
}

// ---------------------------------------------------------------------------
// query
// ---------------------------------------------------------------------------

struct QueryArgs {
    config: PathBuf,
    index: Option<PathBuf>,
    external: Option<PathBuf>,
    params: Option<PathBuf>,
    cache: Option<PathBuf>,
    query_image: Option<PathBuf>,
    query_id: Option<String>,
    metric: Option<MetricArg>,
    k: Option<usize>,
    exclude_days: Option<f64>,
    montage: Option<PathBuf>,
    report: Option<PathBuf>,
}

/// Report JSON documents share this envelope.
#[derive(Serialize)]
struct ReportDoc {
    config_hash: String,
    k: usize,
    exclude_days: f64,
    rows: Vec<ReportRow>,
    seasonal: Vec<SeasonalEntry>,
}

#[derive(Serialize)]
struct SeasonalEntry {
    query_id: String,
    metric: MetricKind,
    #[serde(flatten)]
    score: SeasonalScore,
}

fn exclusion(center: Timestamp, days: f64) -> Result<Option<ExclusionWindow>, CmdError> {
    if !days.is_finite() || days < 0.0 {
        return Err(CmdError::Usage(format!("--exclude-days must be >= 0, got {days}")));
    }
    if days == 0.0 {
        return Ok(None);
    }
    Ok(Some(ExclusionWindow { center, half_width_hours: (days * 24.0).round() as i64 }))
}

/// Loads and preprocesses a raw archive image; the observation time
/// comes from its file name via the configured pattern.
fn preprocess_query_image(
    cfg: &RunConfig,
    path: &Path,
) -> Result<(PreprocessedMap, Timestamp), CmdError> {
    let pattern = FilePattern::parse(&cfg.data.pattern)?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CmdError::Usage(format!("{}: not a valid file name", path.display())))?;
    let ts = match pattern.match_name(name) {
        Some(Ok(ts)) => ts,
        Some(Err(e)) => {
            return Err(CmdError::Usage(format!("{name}: bad observation time: {e}")))
        }
        None => {
            return Err(CmdError::Usage(format!(
                "{name} does not match the data pattern {:?}; cannot derive its observation time",
                cfg.data.pattern
            )))
        }
    };
    let img = dataio::load_image(path)?;
    let id = name.rsplit_once('.').map(|(stem, _)| stem).unwrap_or(name);
    let map = preprocess(&img, &cfg.preprocess, id).map_err(usage)?;
    Ok((map, ts))
}

fn load_query_source(args: &QueryArgs) -> Result<Option<EmbeddingIndex>, CmdError> {
    match (&args.index, &args.external) {
        (Some(_), Some(_)) => {
            Err(CmdError::Usage("--index and --external are mutually exclusive".into()))
        }
        (Some(p), None) => Ok(Some(load_index(p)?)),
        (None, Some(p)) => Ok(Some(formats::import_external(p, None)?)),
        (None, None) => Ok(None),
    }
}

fn cmd_query(args: QueryArgs) -> Result<(), CmdError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(m) = args.metric {
        cfg.query.metric = m.into();
    }
    if let Some(k) = args.k {
        cfg.query.k = k;
    }
    if let Some(d) = args.exclude_days {
        cfg.query.exclude_days = d;
    }
    announce_config(&cfg);
    let metric = cfg.query.metric;
    let k = cfg.query.k;
    if k == 0 {
        return Err(CmdError::Usage("--k must be at least 1".into()));
    }
    let exclude_days = cfg.query.exclude_days;
    let latent_metric = matches!(metric, MetricKind::Cosine | MetricKind::Euclidean);

    let index = load_query_source(&args)?;
    // Any supplied params must belong to the index we are querying, even
    // when the query vector itself comes straight from the index.
    let params = match &args.params {
        Some(p) => {
            let (mp, hash) = load_params(p)?;
            if let Some(idx) = &index {
                if idx.model_hash() != hash {
                    return Err(CmdError::Usage(format!(
                        "--params model {} does not match the index model {}",
                        hash.to_hex(),
                        idx.model_hash().to_hex()
                    )));
                }
            }
            Some((mp, hash))
        }
        None => None,
    };
    let cache: Option<Vec<CacheEntry>> = match &args.cache {
        Some(dir) => Some(load_cache_dir(dir)?),
        None => None,
    };

    // Resolve the query's identity, raster, vector, and timestamp.
    let mut query_map: Option<PreprocessedMap> = None;
    let mut query_vec: Option<Vec<f32>> = None;
    let (query_id, query_ts): (String, Timestamp);
    match (&args.query_image, &args.query_id) {
        (Some(_), Some(_)) => {
            return Err(CmdError::Usage(
                "--query-image and --query-id are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(CmdError::Usage("need --query-image or --query-id".into()))
        }
        (Some(img_path), None) => {
            let (map, ts) = preprocess_query_image(&cfg, img_path)?;
            query_id = map.source_id.clone();
            query_ts = ts;
            if latent_metric {
                let (mp, hash) = params.as_ref().ok_or_else(|| {
                    CmdError::Usage(format!(
                        "metric {} embeds the query image and needs --params",
                        metric.name()
                    ))
                })?;
                if index.is_none() {
                    return Err(CmdError::Usage(format!(
                        "metric {} needs --index or --external",
                        metric.name()
                    )));
                }
                let entry = CacheEntry { map: map.clone(), timestamp: ts };
                query_vec = Some(embed_entry(mp, *hash, &entry)?.vector);
            }
            query_map = Some(map);
        }
        (None, Some(id)) => {
            if latent_metric {
                let idx = index.as_ref().ok_or_else(|| {
                    CmdError::Usage(format!(
                        "metric {} needs --index or --external",
                        metric.name()
                    ))
                })?;
                let entry = idx
                    .entries()
                    .iter()
                    .find(|e| e.source_id == *id)
                    .ok_or_else(|| CmdError::Usage(format!("id {id} is not in the index")))?;
                query_id = entry.source_id.clone();
                query_ts = entry.timestamp;
                query_vec = Some(entry.vector.clone());
            } else {
                let entries = cache.as_deref().ok_or_else(|| {
                    CmdError::Usage(format!("metric {} needs --cache", metric.name()))
                })?;
                let entry = entries
                    .iter()
                    .find(|e| e.map.source_id == *id)
                    .ok_or_else(|| CmdError::Usage(format!("id {id} is not in the cache")))?;
                query_id = entry.map.source_id.clone();
                query_ts = entry.timestamp;
                query_map = Some(entry.map.clone());
            }
        }
    }

    if !latent_metric && cache.is_none() {
        return Err(CmdError::Usage(format!("metric {} needs --cache", metric.name())));
    }
    if !latent_metric && query_map.is_none() {
        return Err(CmdError::Usage(format!(
            "metric {} needs a query raster (--query-image or a cached --query-id)",
            metric.name()
        )));
    }

    let exclude = exclusion(query_ts, exclude_days)?;
    let src = QuerySources {
        query_id: &query_id,
        query_timestamp: query_ts,
        latent: match (&query_vec, &index) {
            (Some(v), Some(idx)) => Some((v.as_slice(), idx)),
            _ => None,
        },
        pixel: match (&query_map, &cache) {
            (Some(m), Some(c)) => Some((m, c.as_slice())),
            _ => None,
        },
        k,
        exclude,
        ssim: SsimConfig::default(),
    };
    let report = compare_metrics(&src, &[metric]).map_err(harness_err)?;
    print!("{}", report.render_table());

    if let Some(out) = &args.report {
        write_report(&report, &cfg, exclude_days, out)?;
    }
    if let Some(out) = &args.montage {
        let entries = cache.as_deref().ok_or_else(|| {
            CmdError::Usage("--montage needs --cache for the panel rasters".into())
        })?;
        let anchor_map = match &query_map {
            Some(m) => m.clone(),
            None => entries
                .iter()
                .find(|e| e.map.source_id == query_id)
                .map(|e| e.map.clone())
                .ok_or_else(|| {
                    CmdError::Usage(format!("no cached raster for query id {query_id}"))
                })?,
        };
        let hits = &report.rows[0].result.hits;
        let anchor = Panel {
            caption: anchor_caption(query_ts, !hits.is_empty()),
            map: &anchor_map,
        };
        let panels = panels_for_hits(hits, entries).map_err(harness_err)?;
        let sheet = montage_image(&anchor, &panels).map_err(harness_err)?;
        write_png(&sheet, out)?;
    }
    Ok(())
}

fn write_report(
    report: &MetricReport,
    cfg: &RunConfig,
    exclude_days: f64,
    out: &Path,
) -> Result<(), CmdError> {
    let mut seasonal = Vec::new();
    for row in &report.rows {
        if !row.result.hits.is_empty() {
            let score = seasonal_consistency(report.query_timestamp, &row.result)
                .map_err(harness_err)?;
            seasonal.push(SeasonalEntry {
                query_id: report.query_id.clone(),
                metric: row.metric,
                score,
            });
        }
    }
    let doc = ReportDoc {
        config_hash: cfg.config_hash().to_hex(),
        k: report.k,
        exclude_days,
        rows: report.flat_rows(),
        seasonal,
    };
    write_report_doc(&doc, out)
}

fn write_report_doc(doc: &ReportDoc, out: &Path) -> Result<(), CmdError> {
    let mut bytes = serde_json::to_vec_pretty(doc).expect("reports serialize infallibly");
    bytes.push(b'\n');
    fs::write(out, bytes).map_err(io_usage(out))
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    config: PathBuf,
    index: Option<PathBuf>,
    external: Option<PathBuf>,
    params: Option<PathBuf>,
    cache: PathBuf,
    queries: PathBuf,
    metrics: Vec<MetricArg>,
    k: Option<usize>,
    exclude_days: Option<f64>,
    out: PathBuf,
    montage_dir: Option<PathBuf>,
}

fn cmd_eval(args: EvalArgs) -> Result<(), CmdError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(k) = args.k {
        cfg.query.k = k;
    }
    if let Some(d) = args.exclude_days {
        cfg.query.exclude_days = d;
    }
    announce_config(&cfg);
    let metrics: Vec<MetricKind> = args.metrics.iter().map(|&m| m.into()).collect();
    if metrics.is_empty() {
        return Err(CmdError::Usage("--metrics must name at least one metric".into()));
    }
    let k = cfg.query.k;
    if k == 0 {
        return Err(CmdError::Usage("--k must be at least 1".into()));
    }
    let exclude_days = cfg.query.exclude_days;
    let need_latent =
        metrics.iter().any(|m| matches!(m, MetricKind::Cosine | MetricKind::Euclidean));

    let cache = load_cache_dir(&args.cache)?;
    let queries = dataio::load_manifest(&args.queries)?;
    if queries.records.is_empty() {
        return Err(CmdError::Usage(format!(
            "query manifest {} holds no records",
            args.queries.display()
        )));
    }
    let index = load_query_source(&QueryArgs {
        config: args.config.clone(),
        index: args.index.clone(),
        external: args.external.clone(),
        params: None,
        cache: None,
        query_image: None,
        query_id: None,
        metric: None,
        k: None,
        exclude_days: None,
        montage: None,
        report: None,
    })?;
    let embedder = match (&args.params, need_latent) {
        (_, false) => None,
        (Some(p), true) => {
            let (mp, hash) = load_params(p)?;
            if let Some(idx) = &index {
                if idx.model_hash() != hash {
                    return Err(CmdError::Usage(format!(
                        "--params model {} does not match the index model {}",
                        hash.to_hex(),
                        idx.model_hash().to_hex()
                    )));
                }
            }
            Some((mp, hash))
        }
        (None, true) => {
            return Err(CmdError::Usage(
                "latent metrics in --metrics need --params to embed the queries".into(),
            ))
        }
    };
    if need_latent && index.is_none() {
        return Err(CmdError::Usage("latent metrics need --index or --external".into()));
    }

    if let Some(dir) = &args.montage_dir {
        fs::create_dir_all(dir).map_err(io_usage(dir))?;
    }
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut seasonal: Vec<SeasonalEntry> = Vec::new();
    for record in &queries.records {
        let entry = cache
            .iter()
            .find(|e| e.map.source_id == record.id)
            .ok_or_else(|| {
                CmdError::Usage(format!("query {} has no cached raster", record.id))
            })?;
        let query_vec = match &embedder {
            Some((mp, hash)) => Some(embed_entry(mp, *hash, entry)?.vector),
            None => None,
        };
        let exclude = exclusion(record.timestamp, exclude_days)?;
        let src = QuerySources {
            query_id: &record.id,
            query_timestamp: record.timestamp,
            latent: match (&query_vec, &index) {
                (Some(v), Some(idx)) => Some((v.as_slice(), idx)),
                _ => None,
            },
            pixel: Some((&entry.map, &cache)),
            k,
            exclude,
            ssim: SsimConfig::default(),
        };
        let report = compare_metrics(&src, &metrics).map_err(harness_err)?;
        print!("{}", report.render_table());
        for row in &report.rows {
            if !row.result.hits.is_empty() {
                let score = seasonal_consistency(record.timestamp, &row.result)
                    .map_err(harness_err)?;
                seasonal.push(SeasonalEntry {
                    query_id: record.id.clone(),
                    metric: row.metric,
                    score,
                });
            }
            if let Some(dir) = &args.montage_dir {
                let anchor = Panel {
                    caption: anchor_caption(record.timestamp, !row.result.hits.is_empty()),
                    map: &entry.map,
                };
                let panels = panels_for_hits(&row.result.hits, &cache).map_err(harness_err)?;
                let sheet = montage_image(&anchor, &panels).map_err(harness_err)?;
                write_png(&sheet, &dir.join(format!("{}_{}.png", record.id, row.metric.name())))?;
            }
        }
        rows.extend(report.flat_rows());
    }
    let doc = ReportDoc {
        config_hash: cfg.config_hash().to_hex(),
        k,
        exclude_days,
        rows,
        seasonal,
    };
    write_report_doc(&doc, &args.out)?;
    println!(
        "evaluated {} queries x {} metrics -> {}",
        queries.records.len(),
        metrics.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

fn cmd_synth(
    out_dir: &Path,
    start_year: i32,
    years: usize,
    seed: u64,
    hours: &str,
    pattern: &str,
) -> Result<(), CmdError> {
    let hours: Vec<u32> = hours
        .split(',')
        .map(|h| h.trim().parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|e| CmdError::Usage(format!("bad --hours list: {e}")))?;
    let spec = SynthSpec { start_year, n_years: years, hours, seed, ..SynthSpec::default() };
    let pattern = FilePattern::parse(pattern)?;
    let summary = write_archive(&spec, out_dir, &pattern)?;
    println!("synthesized {} maps in {}", summary.count, out_dir.display());
    Ok(())
}
