use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use asyncmld::dst_store::DstStore;
use asyncmld::llm_backend::HttpBackendConfig;
use asyncmld::orchestrator::PipelineMode;
use asyncmld::rtdb::{bundled_catalog, load_catalog};
use asyncmld::sim_harness::{compare_modes, run_simulation, PersonaScript};
use asyncmld_gateway::backends::{BackendKind, BackendSources};
use asyncmld_gateway::{repl, router, AppState, Engine, ServerOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "asyncmld", version, about = "Asynchronous two-path dialogue engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EngineArgs {
    /// Spot catalog (JSONL). Defaults to the bundled Kyoto catalog.
    #[arg(long)]
    spots: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendKind,
    /// Reply script for `--backend scripted`.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Chat-completions base URL for `--backend http`.
    #[arg(long)]
    llm_url: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long, value_enum, default_value = "async")]
    mode: ModeArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Async,
    Sync,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimMode {
    Async,
    Sync,
    Compare,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP/WebSocket API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Wall seconds per second of simulated speech; 0 sends events at once.
        #[arg(long, default_value_t = 1.0)]
        speech_pace: f64,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Talk to the engine in the terminal.
    Repl {
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Run a persona script on the virtual clock.
    Sim {
        #[arg(long)]
        script: PathBuf,
        #[arg(long, value_enum, default_value = "compare")]
        mode: SimMode,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn build_engine(args: EngineArgs) -> Result<Engine, Box<dyn std::error::Error>> {
    let catalog = match &args.spots {
        Some(path) => load_catalog(path)?,
        None => bundled_catalog(),
    };
    let mut engine = Engine::new(catalog);
    engine.backend = args.backend;
    engine.mode = match args.mode {
        ModeArg::Async => PipelineMode::Async,
        ModeArg::Sync => PipelineMode::Sync,
    };
    engine.sources = BackendSources {
        script: args.script,
        http: match (args.llm_url, args.llm_model) {
            (Some(base_url), Some(model)) => Some(HttpBackendConfig {
                base_url,
                model,
                timeout_seconds: 30.0,
            }),
            _ => None,
        },
    };
    // fail at startup rather than on the first session
    let mut probe = engine.clone();
    probe.store = Arc::new(DstStore::new());
    probe.create_session("startup-check", &Default::default())?;
    Ok(engine)
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Serve {
            port,
            speech_pace,
            engine,
        } => {
            let engine = build_engine(engine)?;
            let app = router(AppState::new(engine, ServerOptions { speech_pace }));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
                tracing::info!(port, "listening");
                axum::serve(listener, app).await
            })?;
        }
        Command::Repl { engine } => {
            let engine = build_engine(engine)?;
            let stdin = std::io::stdin();
            repl::run_repl(&engine, stdin.lock(), std::io::stdout())?;
        }
        Command::Sim { script, mode, report } => {
            let script = PersonaScript::load(&script)?;
            let json = match mode {
                SimMode::Async => run_simulation(&script, PipelineMode::Async)?.to_json(),
                SimMode::Sync => run_simulation(&script, PipelineMode::Sync)?.to_json(),
                SimMode::Compare => compare_modes(&script)?.to_json(),
            };
            match report {
                Some(path) => std::fs::write(path, json)?,
                None => print!("{json}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
