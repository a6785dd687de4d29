use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use ptd_core::eval::{aggregate_by_stage, create_sessions, read_ratings, resolve_latest};
use ptd_service::eval_api::{rating_pool, write_sessions};
use ptd_service::{serve, DescriptorMode, EvalConfig, EvalState};

use crate::common::{load_manifest, write_output};

#[derive(Subcommand)]
pub enum EvalCmd {
    /// Serve the rating API.
    Serve(ServeArgs),
    /// Draw rating sessions from the unflagged images of a manifest.
    Assign(AssignArgs),
    /// Mean ratings per refinement stage.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct Files {
    #[arg(long)]
    manifest: PathBuf,
    /// Append-only rating log.
    #[arg(long)]
    ratings: PathBuf,
    /// Session assignment; `sessions.json` next to the rating log by default.
    #[arg(long)]
    sessions: Option<PathBuf>,
}

impl Files {
    fn config(&self) -> EvalConfig {
        EvalConfig {
            manifest: self.manifest.clone(),
            ratings: self.ratings.clone(),
            sessions: self.sessions.clone(),
            descriptor: DescriptorMode::Prompt,
            admin_token: None,
        }
    }
}

#[derive(Args)]
pub struct ServeArgs {
    #[command(flatten)]
    files: Files,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// What participants see next to each image: `prompt` or `texture`.
    #[arg(long, default_value = "prompt")]
    descriptor: String,
    /// Bearer token required by POST /api/sessions; env PTD_ADMIN_TOKEN.
    #[arg(long, env = "PTD_ADMIN_TOKEN")]
    admin_token: Option<String>,
}

#[derive(Args)]
pub struct AssignArgs {
    #[command(flatten)]
    files: Files,
    /// Participants.
    #[arg(long, default_value_t = 9)]
    n: usize,
    /// Images per participant.
    #[arg(long, default_value_t = 100)]
    per: usize,
    #[arg(long)]
    seed: u64,
    /// Replace the assignment even though ratings exist.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
pub struct ReportArgs {
    #[command(flatten)]
    files: Files,
    /// JSON output of the stage table.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(cmd: EvalCmd) -> Result<()> {
    match cmd {
        EvalCmd::Serve(a) => serve_cmd(a),
        EvalCmd::Assign(a) => assign(a),
        EvalCmd::Report(a) => report(a),
    }
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let mut config = a.files.config();
    config.descriptor = a.descriptor.parse().map_err(anyhow::Error::msg)?;
    config.admin_token = a.admin_token;
    let state = Arc::new(EvalState::load(config)?);
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .context("bad --host/--port")?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(serve(state, addr))?;
    Ok(())
}

fn assign(a: AssignArgs) -> Result<()> {
    let config = a.files.config();
    let existing = read_ratings(&config.ratings)?;
    if !existing.is_empty() && !a.force {
        bail!(
            "{} already holds {} ratings; pass --force to replace the assignment",
            config.ratings.display(),
            existing.len()
        );
    }
    let records = load_manifest(&config.manifest)?;
    let sessions = create_sessions(&rating_pool(&records), a.n, a.per, a.seed)?;
    let path = config.sessions_path();
    write_sessions(&path, &sessions)?;
    println!(
        "wrote {} sessions of {} images to {}",
        sessions.len(),
        a.per,
        path.display()
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let records = load_manifest(&a.files.manifest)?;
    let ratings = resolve_latest(&read_ratings(&a.files.ratings)?);
    let table = aggregate_by_stage(&ratings, &records)?;
    print!("{}", table.to_text());
    if let Some(out) = &a.out {
        write_output(Some(out), &table)?;
    }
    Ok(())
}
