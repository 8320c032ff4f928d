//! `isomatrix` command-line driver.
//!
//! Machine output goes to stdout (or `--out`), progress and diagnostics to
//! stderr. Exit status: 0 success, 1 invalid input, 2 backend or storage
//! failure.

mod config;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use isomatrix_core::classifier::{BackendKind, Classifier, ErrorKind};
use isomatrix_core::ingestion::FieldMapping;
use isomatrix_core::matcher::{parse_needs, ProfileVector};
use isomatrix_core::pipeline::{HeatmapMode, HeatmapRequest, Selection};
use isomatrix_core::{PipelineError, ProjectKind, ReviewRecord, StoreError, Workspace};

use config::RunConfig;

/// Input the user can fix: bad arguments, files or records. Exit status 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

/// Some classifications in a batch failed. Exit status 2.
#[derive(Debug)]
struct BatchFailed(Vec<String>);

impl fmt::Display for BatchFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "classification failed for: {}", self.0.join(", "))
    }
}

impl std::error::Error for BatchFailed {}

#[derive(Parser)]
#[command(name = "isomatrix", version, about = "Classify urban initiatives on the ISO 37101 purposes x issues matrix")]
struct Cli {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long, short, global = true, env = "ISOMATRIX_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides `data_dir` from the configuration.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Show debug output.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a CSV or JSON dataset into the store.
    Ingest(IngestArgs),
    /// Classify stored projects.
    Classify(ClassifyArgs),
    /// Import reviews or export a review template.
    #[command(subcommand)]
    Review(ReviewCommand),
    /// Coverage or agreement statistics as JSON.
    Analyze(AnalyzeArgs),
    /// Per-cell gap between plan and activity coverage.
    Gap(GapArgs),
    /// Rank catalog projects against a needs profile.
    Match(MatchArgs),
    /// Write a report file.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct IngestArgs {
    file: PathBuf,
    /// Mapping name from the configuration. Without one, columns `id`,
    /// `title`, `description` are used and the source is the file stem.
    #[arg(long)]
    mapping: Option<String>,
    /// Kind assigned to rows, overriding the mapping.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Activity,
    Plan,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    source: Option<String>,
    /// Comma-separated project ids; all projects when omitted.
    #[arg(long, value_delimiter = ',')]
    ids: Option<Vec<String>>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Remote,
}

#[derive(Subcommand)]
enum ReviewCommand {
    /// Apply reviews from a JSON file (one record or an array).
    Import { file: PathBuf },
    /// Print an all-unchanged review of a project's current assessment.
    Export {
        project_id: String,
        #[arg(long, default_value = "reviewer")]
        reviewer: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(value_enum)]
    what: AnalyzeKind,
    /// Restrict coverage to one source.
    #[arg(long)]
    source: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalyzeKind {
    Coverage,
    Agreement,
}

#[derive(Args)]
struct GapArgs {
    #[arg(long)]
    plans: String,
    #[arg(long)]
    activities: String,
}

#[derive(Args)]
struct MatchArgs {
    /// A JSON file holding 144 integers, or `issue:purpose:scale=score,...`.
    #[arg(long)]
    needs: String,
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Coverage table, one row per issue plus a total row.
    CoverageCsv {
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Heatmap of coverage, optionally with plan and activity markers.
    HeatmapSvg {
        #[arg(long)]
        source: Option<String>,
        #[arg(long, requires = "activities")]
        plans: Option<String>,
        #[arg(long, requires = "plans")]
        activities: Option<String>,
        /// Color by gap instead of activity coverage.
        #[arg(long)]
        gap: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// JSON-lines catalog of assessed projects.
    Catalog {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if cause.is::<BatchFailed>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<PipelineError>() {
            return match err {
                PipelineError::Store(StoreError::NotFound { .. }) => 1,
                PipelineError::Store(_) => 2,
                PipelineError::Classify(c) if c.kind != ErrorKind::InvalidInput => 2,
                _ => 1,
            };
        }
        if cause.is::<StoreError>() || cause.is::<std::io::Error>() {
            return 2;
        }
    }
    1
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let default = Path::new("isomatrix.toml");
            if default.is_file() {
                RunConfig::load(default)?
            } else {
                RunConfig::default()
            }
        }
    };
    if let Some(dir) = &cli.data_dir {
        config.data_dir = dir.clone();
    }
    Ok(config)
}

fn open_workspace(config: &RunConfig) -> Result<Workspace> {
    let taxonomy = config.taxonomy()?;
    let ws = Workspace::open(&config.data_dir, taxonomy, config.style.clone())?;
    Ok(ws.with_min_description_chars(config.min_description_chars))
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Ingest(args) => ingest(&config, args),
        Command::Classify(args) => classify(&config, args),
        Command::Review(cmd) => review(&config, cmd),
        Command::Analyze(args) => {
            let ws = open_workspace(&config)?;
            match args.what {
                AnalyzeKind::Coverage => print_json(&ws.coverage(args.source.as_deref())?),
                AnalyzeKind::Agreement => print_json(&ws.agreement()?),
            }
        }
        Command::Gap(args) => print_json(&open_workspace(&config)?.gap(&args.plans, &args.activities)?),
        Command::Match(args) => {
            let ws = open_workspace(&config)?;
            let needs = read_needs(&args.needs, &ws)?;
            print_json(&ws.match_needs(&needs, args.top_k)?)
        }
        Command::Report(cmd) => report(&config, cmd),
        Command::Serve(args) => serve(&config, args),
    }
}

fn ingest(config: &RunConfig, args: IngestArgs) -> Result<()> {
    let mut mapping = match &args.mapping {
        Some(name) => config
            .mappings
            .get(name)
            .cloned()
            .ok_or_else(|| Invalid(format!("no mapping named {name:?} in the configuration")))?,
        None => {
            let stem = args.file.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
            FieldMapping::simple(stem)
        }
    };
    if let Some(kind) = args.kind {
        mapping.kind_default = match kind {
            KindArg::Activity => ProjectKind::Activity,
            KindArg::Plan => ProjectKind::Plan,
        };
    }
    let mut ws = open_workspace(config)?;
    let report = ws.ingest_file(&args.file, &mapping)?;
    log::info!(
        "{}: read {}, kept {}, dropped {} short, {} duplicate, {} malformed",
        args.file.display(),
        report.rows_read,
        report.rows_kept,
        report.rows_dropped_short,
        report.rows_dropped_duplicate,
        report.rows_dropped_malformed
    );
    print_json(&report)
}

fn classify(config: &RunConfig, args: ClassifyArgs) -> Result<()> {
    let mut backend = config.backend.clone();
    if let Some(b) = args.backend {
        backend.backend_kind = match b {
            BackendArg::Mock => BackendKind::Mock,
            BackendArg::Remote => BackendKind::Remote,
        };
    }
    let parallelism = args.parallelism.unwrap_or(config.parallelism);
    if parallelism == 0 {
        bail!(Invalid("parallelism must be positive".into()));
    }
    let mut ws = open_workspace(config)?;
    let template = config.template(ws.taxonomy())?;
    let classifier = Classifier::from_config(backend, ws.taxonomy().clone(), template)
        .map_err(|e| Invalid(format!("backend configuration: {e}")))?;
    let selection = Selection {
        source: args.source,
        ids: args.ids,
    };
    let projects = ws.select(&selection)?;
    log::info!("classifying {} project(s) with parallelism {parallelism}", projects.len());
    let total = projects.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let results = classifier.classify_batch_with_progress(&projects, parallelism, |i, r| {
        let n = done.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
        match r {
            Ok(_) => log::debug!("[{n}/{total}] {}", projects[i].id),
            Err(e) => log::warn!("[{n}/{total}] {}: {e}", projects[i].id),
        }
    });
    let summary = ws.record_batch(&projects, results)?;
    print_json(&summary)?;
    if !summary.failed.is_empty() {
        bail!(BatchFailed(summary.failed.iter().map(|f| f.project_id.clone()).collect()));
    }
    Ok(())
}

fn review(config: &RunConfig, cmd: ReviewCommand) -> Result<()> {
    match cmd {
        ReviewCommand::Import { file } => {
            let text = std::fs::read_to_string(&file)
                .map_err(|e| Invalid(format!("cannot read {}: {e}", file.display())))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", file.display())))?;
            let records: Vec<ReviewRecord> = match value {
                serde_json::Value::Array(_) => serde_json::from_value(value),
                _ => serde_json::from_value(value).map(|r| vec![r]),
            }
            .map_err(|e| Invalid(format!("{}: {e}", file.display())))?;
            let mut ws = open_workspace(config)?;
            let mut reviewed = Vec::new();
            for r in &records {
                let a = ws
                    .submit_review(r)
                    .with_context(|| format!("review of project {}", r.project_id))?;
                reviewed.push(a);
            }
            log::info!("applied {} review(s)", reviewed.len());
            print_json(&reviewed)
        }
        ReviewCommand::Export {
            project_id,
            reviewer,
            out,
        } => {
            let ws = open_workspace(config)?;
            let template = ws.review_template(&project_id, &reviewer)?;
            let text = serde_json::to_string_pretty(&template)? + "\n";
            emit(out.as_deref(), &text)
        }
    }
}

fn report(config: &RunConfig, cmd: ReportCommand) -> Result<()> {
    let ws = open_workspace(config)?;
    match cmd {
        ReportCommand::CoverageCsv { source, out } => emit(out.as_deref(), &ws.coverage_csv(source.as_deref())?),
        ReportCommand::HeatmapSvg {
            source,
            plans,
            activities,
            gap,
            out,
        } => {
            let request = HeatmapRequest {
                source,
                plans,
                activities,
                mode: if gap { HeatmapMode::Gap } else { HeatmapMode::Coverage },
            };
            emit(out.as_deref(), &ws.heatmap_svg(&request)?)
        }
        ReportCommand::Catalog { out } => emit(out.as_deref(), &ws.export_catalog()?),
    }
}

fn serve(config: &RunConfig, args: ServeArgs) -> Result<()> {
    let ws = open_workspace(config)?;
    let template = config.template(ws.taxonomy())?;
    config.backend.validate().map_err(|e| Invalid(format!("backend configuration: {e}")))?;
    let state = isomatrix_api::AppState::new(
        ws,
        isomatrix_api::ServiceConfig {
            backend: config.backend.clone(),
            template,
            parallelism: config.parallelism,
        },
    );
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((args.host.as_str(), args.port)).await?;
        isomatrix_api::serve(listener, state).await
    })?;
    Ok(())
}

fn read_needs(arg: &str, ws: &Workspace) -> Result<ProfileVector> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        let components: Vec<i64> =
            serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        return Ok(ProfileVector::from_components(&components).map_err(|e| Invalid(e.to_string()))?);
    }
    Ok(parse_needs(arg, ws.taxonomy()).map_err(|e| Invalid(e.to_string()))?)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    emit(None, &text)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}
