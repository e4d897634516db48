use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use photochat_cli::config::{BackendKind, Settings};
use photochat_cli::server::{router, AppState};
use photochat_cli::wiring::{self, Backend};
use photochat_core::dispatch::compose_reply;
use photochat_core::eval::{
    ablation_grid, default_grid, evaluate_removal, load_dataset, reference_ablation_rows, reference_invocation_rows,
    reference_removal_rows, EvalConfig, EvalReport,
};
use photochat_core::session::TurnError;
use photochat_core::{BinaryMask, RasterImage, Session, SessionStore};

#[derive(Parser)]
#[command(name = "photochat", version, about = "Conversational photo editing")]
struct Cli {
    /// TOML settings file.
    #[arg(long, global = true, env = "PHOTOCHAT_CONFIG")]
    config_file: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP session server.
    Serve(ServeArgs),
    /// Apply one instruction to one image.
    Edit(EditArgs),
    /// Run an evaluation.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Args)]
struct BackendArgs {
    /// Chat backend; defaults to the settings file, then `live`.
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Scripted fixture (implies `--backend scripted`).
    #[arg(long)]
    fixture: Option<PathBuf>,
    /// Function registry manifest.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Record every model exchange to this fixture file.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory for session snapshots.
    #[arg(long)]
    state_dir: Option<PathBuf>,
    /// Static files (e.g. a built web UI) served for unmatched paths.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    instruction: String,
    #[arg(long, short)]
    output: PathBuf,
    /// PNG mask limiting masked edits (skin, lips, eyes).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Id used to look the image up in a stub segmentation manifest.
    #[arg(long)]
    image_id: Option<String>,
    /// Stub segmentation manifest for object removal and retention.
    #[arg(long)]
    removal_stub: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Invocation accuracy and token usage for one configuration.
    Invocation(InvocationArgs),
    /// The seven-configuration prompt-design grid.
    Ablation(AblationArgs),
    /// Removal quality against ground-truth targets.
    Removal(RemovalArgs),
}

#[derive(Args)]
struct EvalCommon {
    /// JSONL dataset.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct InvocationArgs {
    /// Grid label, (a) through (g).
    #[arg(long, default_value = "(f)")]
    config: String,
    #[command(flatten)]
    common: EvalCommon,
}

#[derive(Args)]
struct AblationArgs {
    /// `default`, or a comma-separated list of grid labels.
    #[arg(long, default_value = "default")]
    grid: String,
    #[command(flatten)]
    common: EvalCommon,
}

#[derive(Args)]
struct RemovalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = photochat_core::removal::DEFAULT_DILATION_RADIUS)]
    radius: u32,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn settings(path: Option<&Path>, args: &BackendArgs) -> Result<Settings> {
    let mut s = Settings::load_or_default(path)?;
    if let Some(fixture) = &args.fixture {
        s.llm.fixture = Some(fixture.clone());
        s.llm.backend = BackendKind::Scripted;
    }
    if let Some(kind) = args.backend {
        s.llm.backend = kind;
    }
    if let Some(registry) = &args.registry {
        s.registry = Some(registry.clone());
    }
    Ok(s)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = cli.config_file.as_deref();
    match cli.command {
        Command::Serve(args) => serve(config, args),
        Command::Edit(args) => edit(config, args),
        Command::Eval(EvalCommand::Invocation(args)) => {
            let grid = default_grid();
            let Some(cfg) = grid.iter().find(|c| c.label == args.config) else {
                bail!("unknown config {:?}; expected one of (a) to (g)", args.config);
            };
            run_eval(config, &args.common, std::slice::from_ref(cfg), reference_invocation_rows())
        }
        Command::Eval(EvalCommand::Ablation(args)) => {
            let grid = select_grid(&args.grid)?;
            run_eval(config, &args.common, &grid, reference_ablation_rows())
        }
        Command::Eval(EvalCommand::Removal(args)) => {
            let mut report = evaluate_removal(&args.manifest, args.radius)?;
            if report.reference.is_empty() {
                report.reference = reference_removal_rows();
            }
            print!("{}", report.to_table());
            if let Some(path) = args.json {
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(())
        }
    }
}

fn select_grid(spec: &str) -> Result<Vec<EvalConfig>> {
    let grid = default_grid();
    if spec == "default" {
        return Ok(grid);
    }
    spec.split(',')
        .map(|label| {
            let label = label.trim();
            grid.iter()
                .find(|c| c.label == label)
                .cloned()
                .with_context(|| format!("unknown config {label:?}"))
        })
        .collect()
}

fn run_eval(
    config: Option<&Path>,
    args: &EvalCommon,
    grid: &[EvalConfig],
    reference: Vec<photochat_core::eval::ReferenceRow>,
) -> Result<()> {
    let settings = settings(config, &args.backend)?;
    let backend = Backend::from_settings(&settings, args.backend.record.clone())?;
    let registry = wiring::registry(&settings)?;
    let dataset = load_dataset(&args.dataset)?;
    // A recorded transcript replays in order, so record one case at a time.
    let workers = if backend.is_recording() { 1 } else { args.workers };
    let mut report: EvalReport = ablation_grid(&dataset, grid, &registry, backend.handle.as_ref(), workers)?;
    report.reference = reference;
    backend.save_recording()?;
    print!("{}", report.to_table());
    if let Some(path) = &args.json {
        std::fs::write(path, report.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    if !report.complete {
        bail!("some cases hit backend errors");
    }
    Ok(())
}

fn edit(config: Option<&Path>, args: EditArgs) -> Result<()> {
    let mut settings = settings(config, &args.backend)?;
    if let Some(stub) = &args.removal_stub {
        settings.removal.stub_manifest = Some(stub.clone());
        settings.removal.endpoint = None;
    }
    let backend = Backend::from_settings(&settings, args.backend.record.clone())?;
    let assistant = wiring::assistant(&settings, &backend)?;

    let mut session = Session::new();
    session.set_image(RasterImage::load(&args.image).with_context(|| format!("reading {}", args.image.display()))?);
    if let Some(mask) = &args.mask {
        session.set_region(Some(BinaryMask::load(mask)?))?;
    }
    session.set_image_id(args.image_id.clone());

    let result = assistant.turn(&mut session, &args.instruction);
    backend.save_recording()?;
    match result {
        Ok(outcome) => {
            outcome.image.save_png(&args.output)?;
            println!("{}", outcome.reply);
            println!("functions: {}", outcome.plan.leaf_names().join(", "));
            println!("tokens: {}", outcome.plan.token_usage);
            Ok(())
        }
        Err(TurnError::Execution { reply, error }) => {
            error.partial.save_png(&args.output)?;
            println!("{reply}");
            println!("planned: {}", compose_reply(&error.plan));
            bail!("step {} ({}) failed: {}", error.step_index + 1, error.function, error.cause)
        }
        Err(e) => {
            println!("{}", e.reply());
            Err(e.into())
        }
    }
}

fn serve(config: Option<&Path>, args: ServeArgs) -> Result<()> {
    let mut settings = settings(config, &args.backend)?;
    if let Some(dir) = &args.state_dir {
        settings.session.state_dir = Some(dir.clone());
    }
    let backend = Backend::from_settings(&settings, args.backend.record.clone())?;
    let assistant = Arc::new(wiring::assistant(&settings, &backend)?);
    let ttl = Duration::from_secs(settings.session.idle_ttl_secs);
    let mut store = match &settings.session.state_dir {
        Some(dir) => SessionStore::persistent(ttl, dir)?,
        None => SessionStore::new(ttl),
    };
    store.limits.max_bytes = settings.session.max_upload_bytes;
    store.limits.max_pixels = settings.session.max_pixels;
    let store = Arc::new(store);
    let app = router(
        AppState {
            store: store.clone(),
            assistant,
        },
        args.static_dir.clone(),
    );

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let sweeper = store.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(60));
            loop {
                tick.tick().await;
                let n = sweeper.evict_idle_now();
                if n > 0 {
                    log::info!("evicted {n} idle sessions");
                }
            }
        });
        let addr = format!("{}:{}", args.host, args.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    backend.save_recording()
}
