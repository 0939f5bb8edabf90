//! Command-line interface: `ingest`, `discover`, `report` and `serve`.

use std::fs;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use slicelens_core::corpus::StoreOptions;
use slicelens_core::projection::{ingested_projection, pca_project, tsne_project, Projection2D, ProjectionMethod, TsneConfig};
use slicelens_core::{AnalysisContext, DatasetStore, DiscoveryConfig, MinErrorRate};

use crate::api;
use crate::cache::DataDir;
use crate::engine::Engine;
use crate::ingest;
use crate::report;

/// Above this many test documents `--projection auto` uses PCA instead of
/// the quadratic-cost t-SNE.
pub const AUTO_TSNE_LIMIT: usize = 5000;

#[derive(Debug, Parser)]
#[command(name = "slicelens", version, about = "Find and inspect error-prone subpopulations of a text classifier's test set")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a JSONL corpus and write a data directory.
    Ingest(IngestArgs),
    /// Run rule discovery and print one line per rule.
    Discover(DiscoverArgs),
    /// Write a text or HTML summary of the discovered rules.
    Report(ReportArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProjectionChoice {
    /// t-SNE up to 5000 test documents, PCA above.
    Auto,
    Tsne,
    Pca,
    None,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Declared class set; inferred from labels and predictions when absent.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Minimum test document frequency for vocabulary n-grams.
    #[arg(long)]
    pub min_df: Option<usize>,
    #[arg(long, value_enum, default_value_t = ProjectionChoice::Auto)]
    pub projection: ProjectionChoice,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub tsne_iterations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long, default_value = ".")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub max_conditions: usize,
    #[arg(long, default_value_t = 0.05)]
    pub min_support: f64,
    /// `auto` (the baseline error rate) or a number in [0, 1]; values below
    /// the baseline act as the baseline.
    #[arg(long, default_value = "auto")]
    pub min_error_rate: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Evaluate every vocabulary n-gram instead of the forest candidates.
    #[arg(long)]
    pub no_forest: bool,
    /// Keep conjunctions that do not beat their sub-rules.
    #[arg(long)]
    pub no_prune: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Html,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, default_value = ".")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of rules to list.
    #[arg(long, default_value_t = 50)]
    pub top: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = ".")]
    pub data: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

pub fn parse_min_error_rate(s: &str) -> anyhow::Result<MinErrorRate> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(MinErrorRate::Baseline);
    }
    let v: f64 = s.parse().with_context(|| format!("--min-error-rate: expected auto or a number, got {s:?}"))?;
    Ok(MinErrorRate::Fixed(v))
}

impl DiscoverArgs {
    pub fn config(&self) -> anyhow::Result<DiscoveryConfig> {
        let config = DiscoveryConfig {
            max_conditions: self.max_conditions,
            min_support_fraction: self.min_support,
            min_error_rate: parse_min_error_rate(&self.min_error_rate)?,
            n_trees: self.n_trees,
            bootstrap_resamples: self.bootstrap,
            alpha: self.alpha,
            seed: self.seed,
            use_forest: !self.no_forest,
            prune_redundant: !self.no_prune,
            ..DiscoveryConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

/// Chooses and runs the projection for an ingested store.
pub fn project(store: &DatasetStore, args: &IngestArgs) -> anyhow::Result<Option<Projection2D>> {
    if args.projection == ProjectionChoice::None {
        return Ok(None);
    }
    if let Some(p) = ingested_projection(store) {
        return Ok(Some(p));
    }
    let embeddings: Option<Vec<Vec<f64>>> = store.test.iter().map(|r| r.embedding.clone()).collect();
    let Some(embeddings) = embeddings else {
        return Ok(None);
    };
    let use_pca = match args.projection {
        ProjectionChoice::Pca => true,
        ProjectionChoice::Auto => embeddings.len() > AUTO_TSNE_LIMIT,
        _ => false,
    };
    if use_pca {
        return Ok(Some(Projection2D {
            method: ProjectionMethod::Pca,
            points: pca_project(&embeddings)?,
            initial_kl: None,
            final_kl: None,
            perplexity: None,
            warnings: Vec::new(),
        }));
    }
    let config = TsneConfig {
        perplexity: args.perplexity,
        iterations: args.tsne_iterations,
        seed: args.seed,
        ..TsneConfig::default()
    };
    Ok(Some(tsne_project(&embeddings, &config)?))
}

pub fn ingest(args: &IngestArgs) -> anyhow::Result<()> {
    let options = StoreOptions {
        classes: args.classes.clone(),
        top_k: None,
    };
    let loaded = ingest::load_dataset_with(&args.input, &options)?;
    // Build the analysis context once so vocabulary and bucketing problems
    // surface at ingest time rather than at first query.
    let ctx = AnalysisContext::build(loaded.store, args.min_df)?;
    let dir = DataDir::new(&args.out);
    let manifest = dir.write_corpus(&ctx.store, &loaded.sha256, &args.input.display().to_string(), args.min_df)?;
    tracing::info!(
        test = manifest.n_test,
        train = manifest.n_train,
        vocabulary = ctx.vocab.len(),
        "corpus written to {}",
        dir.root().display()
    );
    if let Some(p) = project(&ctx.store, args)? {
        for w in &p.warnings {
            tracing::warn!("{w}");
        }
        dir.write_projection(&manifest, &p)?;
    }
    Ok(())
}

pub fn discover(args: &DiscoverArgs) -> anyhow::Result<()> {
    let config = args.config()?;
    let engine = Engine::open(DataDir::new(&args.data))?;
    let rules = engine.run_discovery(config)?;
    print!("{}", report::rules_report(&rules));
    Ok(())
}

pub fn report_cmd(args: &ReportArgs) -> anyhow::Result<()> {
    let engine = Engine::open(DataDir::new(&args.data))?;
    let Some(rules) = engine.ruleset() else {
        bail!("no discovered rules in {}; run discover first", args.data.display());
    };
    let overview = engine.ctx.overview(&rules);
    let text = match args.format {
        ReportFormat::Text => report::text_report(&overview, &rules, args.top),
        ReportFormat::Html => report::html_report(&overview, &rules, args.top),
    };
    match &args.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

pub async fn serve(args: &ServeArgs) -> anyhow::Result<()> {
    let engine = Arc::new(Engine::open(DataDir::new(&args.data))?);
    if engine.ruleset().is_none() {
        engine.start_discovery(DiscoveryConfig::default())?;
        tracing::info!("no cached rules; discovery started in the background");
    }
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .with_context(|| format!("bad address {}:{}", args.host, args.port))?;
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    tracing::info!("listening on http://{}/api/v1", listener.local_addr()?);
    axum::serve(listener, api::router(engine))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest(a) => ingest(&a),
        Command::Discover(a) => discover(&a),
        Command::Report(a) => report_cmd(&a),
        Command::Serve(a) => tokio::runtime::Runtime::new()?.block_on(serve(&a)),
    }
}
