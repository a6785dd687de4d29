mod common;
mod eval_cmd;
mod metrics_cmd;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ptd_core::embed::{build_features, Embedder, MockDims, MockEmbedder};
use ptd_core::generation::{
    flag_rates_by_word, run_generation, FlagSchedule, GenerationBackend, GenerationConfig,
    MockBackend,
};
use ptd_core::prompt::{enumerate_prompts, find_duplicate_texts, DescriptorTable, PromptRecord};
use ptd_core::refine::{run_refinement, KeepFractions, RefineOptions, Stage};
use ptd_core::store::{
    read_jsonl, read_jsonl_or_empty, verify_dataset, write_jsonl, DatasetLayout, FeatureKind,
    FlagLedgerEntry,
};
use ptd_core::tav::{compute_tav, default_labels, read_labels, top_k_associations, top_k_csv};
use ptd_service::{HttpBackend, HttpEmbedder};

use common::{load_manifest, root_of, save_manifest, write_output, Slice};

#[derive(Parser)]
#[command(
    name = "ptd",
    version,
    about = "Synthesize, curate and evaluate prompted texture datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Descriptor-grammar prompt manifests.
    #[command(subcommand)]
    Prompts(PromptsCmd),
    /// Generate images for a prompt manifest.
    Generate(GenerateArgs),
    /// Compute feature files (CLIP, Inception, classifier) for a dataset.
    Embed(EmbedArgs),
    /// Apply refinement stages to a dataset manifest.
    Refine(RefineArgs),
    /// Per-word safety-flag rates.
    Flags(FlagsArgs),
    /// Dataset metrics.
    #[command(subcommand)]
    Metrics(metrics_cmd::MetricsCmd),
    /// Texture-object associations.
    Tav(TavArgs),
    /// Human evaluation.
    #[command(subcommand)]
    Eval(eval_cmd::EvalCmd),
    /// Check manifest, ledger and feature files for consistency.
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum PromptsCmd {
    /// Write every prompt of a descriptor table as JSON lines.
    Emit(EmitArgs),
    /// Print the built-in descriptor table as TOML, a starting point for
    /// custom tables.
    Table,
}

#[derive(Args)]
struct EmitArgs {
    /// TOML descriptor table; the built-in table when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Replace the table's templates (repeatable).
    #[arg(long = "template")]
    templates: Vec<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only print the prompt count.
    #[arg(long)]
    count: bool,
}

/// `mock` or the base URL of a model backend.
#[derive(Args, Clone)]
pub struct BackendArgs {
    #[arg(long, default_value = "mock")]
    pub backend: String,
    /// Request timeout in seconds for HTTP backends.
    #[arg(long, default_value_t = 600)]
    pub timeout: u64,
    /// Mock embedding dimensions: clip,pool,logits,probs.
    #[arg(long, default_value = "512,2048,1008,1000")]
    pub mock_dims: String,
    /// Have the backend write PTDF files into this shared directory instead
    /// of answering inline.
    #[arg(long)]
    pub shared_dir: Option<PathBuf>,
}

impl BackendArgs {
    pub fn is_mock(&self) -> bool {
        self.backend == "mock"
    }

    pub fn mock_dims(&self) -> Result<MockDims> {
        let v: Vec<usize> = self
            .mock_dims
            .split(',')
            .map(|s| s.trim().parse())
            .collect::<Result<_, _>>()
            .context("--mock-dims expects four integers")?;
        let [clip, pool, logits, probs] = v[..] else {
            bail!("--mock-dims expects four integers");
        };
        Ok(MockDims {
            clip,
            pool,
            logits,
            probs,
        })
    }

    pub fn embedder(&self) -> Result<Box<dyn Embedder>> {
        if self.is_mock() {
            return Ok(Box::new(MockEmbedder::new(self.mock_dims()?)));
        }
        let mut e = HttpEmbedder::new(&self.backend, Duration::from_secs(self.timeout))?;
        if let Some(dir) = &self.shared_dir {
            e = e.with_shared_dir(dir.clone());
        }
        Ok(Box::new(e))
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Prompt manifest written by `ptd prompts emit`.
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Unflagged images to keep per prompt.
    #[arg(long, default_value_t = 5)]
    n: usize,
    /// Dataset root to write into.
    #[arg(long)]
    out: PathBuf,
    /// Mock flag schedule: never, odd-seeds, rate:<p>, words:<w1,w2>.
    #[arg(long, default_value = "never")]
    flag_schedule: String,
    #[arg(long, default_value_t = 25)]
    max_attempts: u32,
    #[arg(long, default_value_t = 512)]
    size: u32,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Only generate the first N prompts.
    #[arg(long)]
    limit: Option<usize>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Args)]
struct EmbedArgs {
    /// Image manifest (`<root>/manifest.jsonl`).
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Comma-separated kinds, or `all`.
    #[arg(long, default_value = "all")]
    kinds: String,
    #[arg(long, default_value_t = 32)]
    batch: usize,
}

#[derive(Args)]
struct RefineArgs {
    /// freq, patchvar, clip or all.
    stage: String,
    #[arg(long)]
    manifest: PathBuf,
    /// Feature directory holding clip_image.ptdf and clip_text.ptdf.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Keep fraction for every stage.
    #[arg(long, default_value_t = 0.8)]
    keep: f64,
    #[arg(long)]
    keep_freq: Option<f64>,
    #[arg(long)]
    keep_patchvar: Option<f64>,
    #[arg(long)]
    keep_clip: Option<f64>,
    #[arg(long, default_value_t = 50)]
    patch: usize,
    #[arg(long, default_value_t = 100.0)]
    clip_scale: f64,
    /// Truncate every class to the smallest class after the CLIP stage.
    #[arg(long)]
    balance: bool,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Stage reports as JSON; `<root>/refine_report.json` by default.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct FlagsArgs {
    /// Dataset root.
    #[arg(long)]
    root: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the top N words as a table instead of JSON.
    #[arg(long)]
    top: Option<usize>,
}

#[derive(Args)]
struct TavArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// classifier_probs feature file; `<root>/features/classifier_probs.ptdf` by default.
    #[arg(long)]
    probs: Option<PathBuf>,
    /// One object label per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    top: usize,
    #[arg(long, value_enum, default_value_t = Slice::Live)]
    slice: Slice,
    /// Bar-chart CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    root: PathBuf,
}

fn prompts_emit(args: EmitArgs) -> Result<()> {
    let started = Instant::now();
    let mut table = match &args.table {
        Some(p) => DescriptorTable::from_path(p)?,
        None => DescriptorTable::default(),
    };
    if !args.templates.is_empty() {
        table = table.with_templates(args.templates.clone());
        table.validate()?;
    }
    if args.count {
        println!("{}", table.prompt_count());
        return Ok(());
    }
    let prompts = enumerate_prompts(&table)?;
    for d in find_duplicate_texts(&prompts) {
        log::warn!(
            "prompt text `{}` is shared by ids {:?}",
            d.text,
            d.prompt_ids
        );
    }
    match &args.out {
        Some(path) => {
            write_jsonl(path, &prompts)?;
            eprintln!(
                "wrote {} prompts to {} in {:.2?}",
                prompts.len(),
                path.display(),
                started.elapsed()
            );
        }
        None => {
            let bytes = ptd_core::store::to_jsonl_bytes(&prompts);
            std::io::Write::write_all(&mut std::io::stdout().lock(), &bytes)?;
        }
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let mut prompts: Vec<PromptRecord> = read_jsonl(&args.manifest)?;
    if let Some(n) = args.limit {
        prompts.truncate(n);
    }
    let config = GenerationConfig {
        n_keep: args.n,
        max_attempts: args.max_attempts,
        width: args.size,
        height: args.size,
        ..GenerationConfig::default()
    };
    let backend: Box<dyn GenerationBackend> = if args.backend.is_mock() {
        let schedule: FlagSchedule = args.flag_schedule.parse().map_err(anyhow::Error::msg)?;
        Box::new(MockBackend::new(schedule))
    } else {
        Box::new(HttpBackend::new(
            &args.backend.backend,
            Duration::from_secs(args.backend.timeout),
        )?)
    };
    let layout = DatasetLayout::new(&args.out);
    let summary = run_generation(&prompts, backend.as_ref(), &config, &layout, args.workers)?;
    println!(
        "{} prompts: {} images kept, {} flagged, {} attempts, {} incomplete",
        summary.prompts, summary.kept, summary.flagged, summary.attempts, summary.incomplete
    );
    Ok(())
}

fn parse_kinds(s: &str) -> Result<Vec<FeatureKind>> {
    if s == "all" {
        return Ok(FeatureKind::ALL.to_vec());
    }
    s.split(',')
        .map(|k| k.trim().parse::<FeatureKind>().map_err(anyhow::Error::msg))
        .collect()
}

fn embed(args: EmbedArgs) -> Result<()> {
    let records = load_manifest(&args.manifest)?;
    let layout = DatasetLayout::new(root_of(&args.manifest));
    let kinds = parse_kinds(&args.kinds)?;
    let embedder = args.backend.embedder()?;
    let written = build_features(&records, &layout, &kinds, embedder.as_ref(), args.batch)?;
    for (kind, n) in written {
        println!("{kind}: {n} rows");
    }
    Ok(())
}

fn parse_stages(s: &str) -> Result<Vec<Stage>> {
    if s == "all" {
        return Ok(Stage::ORDER.to_vec());
    }
    Ok(vec![s.parse::<Stage>().map_err(anyhow::Error::msg)?])
}

fn refine(args: RefineArgs) -> Result<()> {
    let stages = parse_stages(&args.stage)?;
    let mut records = load_manifest(&args.manifest)?;
    let root = root_of(&args.manifest);
    let layout = DatasetLayout::new(&root);
    let features = args
        .features
        .clone()
        .unwrap_or_else(|| layout.features_dir());
    let options = RefineOptions {
        fractions: KeepFractions {
            freq: args.keep_freq.unwrap_or(args.keep),
            patchvar: args.keep_patchvar.unwrap_or(args.keep),
            clip: args.keep_clip.unwrap_or(args.keep),
        },
        patch_size: args.patch,
        clip_scale: args.clip_scale,
        balance: args.balance,
        workers: args.workers,
    };
    let reports = run_refinement(&mut records, &layout, &features, &stages, &options)?;
    save_manifest(&args.manifest, &records)?;
    for r in &reports {
        print!("{}", r.to_table());
    }
    let report_path = args
        .report
        .unwrap_or_else(|| root.join("refine_report.json"));
    std::fs::write(&report_path, serde_json::to_string_pretty(&reports)? + "\n")
        .with_context(|| report_path.display().to_string())?;
    Ok(())
}

fn flags(args: FlagsArgs) -> Result<()> {
    let layout = DatasetLayout::new(&args.root);
    let prompts: Vec<PromptRecord> = read_jsonl(&layout.prompts())?;
    let images = read_jsonl_or_empty(&layout.manifest())?;
    let ledger: Vec<FlagLedgerEntry> = read_jsonl_or_empty(&layout.ledger())?;
    let report = flag_rates_by_word(&prompts, &images, &ledger)?;
    match args.top {
        Some(n) => {
            println!(
                "overall image flag ratio {:.4} ({} of {} attempts)",
                report.overall_image_flag_ratio, report.flagged_attempts, report.total_attempts
            );
            println!(
                "{:<10} {:<20} {:>8} {:>8}",
                "category", "word", "prompt", "image"
            );
            for w in report.words.iter().take(n) {
                println!(
                    "{:<10} {:<20} {:>8.4} {:>8.4}",
                    w.category.name(),
                    w.word,
                    w.prompt_flag_ratio,
                    w.image_flag_ratio
                );
            }
        }
        None => write_output(args.out.as_deref(), &report)?,
    }
    Ok(())
}

fn tav(args: TavArgs) -> Result<()> {
    let records = args.slice.select(load_manifest(&args.manifest)?);
    let layout = DatasetLayout::new(root_of(&args.manifest));
    let probs_path = args
        .probs
        .clone()
        .unwrap_or_else(|| layout.feature(FeatureKind::ClassifierProbs));
    let probs = ptd_core::store::load_features(&probs_path)?;
    let labels = match &args.labels {
        Some(p) => read_labels(p)?,
        None => default_labels(probs.dim()),
    };
    let table = compute_tav(&records, &probs, &labels)?;
    let top = top_k_associations(&table, args.top);
    if let Some(path) = &args.csv {
        std::fs::write(path, top_k_csv(&top)?).with_context(|| path.display().to_string())?;
    }
    write_output(
        args.out.as_deref(),
        &serde_json::json!({ "top": top, "table": table }),
    )
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let report = verify_dataset(&DatasetLayout::new(&args.root))?;
    for p in &report.problems {
        println!("{p}");
    }
    println!(
        "{} images, {} feature files, {} problems",
        report.images,
        report.feature_files.len(),
        report.problems.len()
    );
    Ok(if report.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Prompts(PromptsCmd::Emit(a)) => prompts_emit(a)?,
        Command::Prompts(PromptsCmd::Table) => {
            print!("{}", toml::to_string(&DescriptorTable::default())?)
        }
        Command::Generate(a) => generate(a)?,
        Command::Embed(a) => embed(a)?,
        Command::Refine(a) => refine(a)?,
        Command::Flags(a) => flags(a)?,
        Command::Metrics(c) => metrics_cmd::run(c)?,
        Command::Tav(a) => tav(a)?,
        Command::Eval(c) => eval_cmd::run(c)?,
        Command::Verify(a) => return verify(a),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}

/// The error chain joined by `: `, skipping causes that an outer message
/// already quotes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}
