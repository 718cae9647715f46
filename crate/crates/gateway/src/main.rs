//! `carebridge` operator CLI.
//!
//! Exit codes: 0 ok, 1 domain failure (tampered log, failed demo check,
//! runtime error), 2 usage or configuration error. Errors go to stderr as
//! `{"error": {"code", "message"}}`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use carebridge_core::clock::{Clock, SystemClock};
use carebridge_core::privacy::{generate_key, verify_log_bytes, ChainHead, VerifyOutcome};
use carebridge_gateway::config::{Config, MASTER_KEY_ENV};
use carebridge_gateway::demo::{run_demo, DemoOptions};
use carebridge_gateway::logging::install_capture;
use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "carebridge", version, about = "Multilingual triage gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP gateway until interrupted.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print a fresh master key and its id.
    GenKey,
    /// Verify an audit log file offline.
    VerifyAudit {
        file: PathBuf,
        /// Head file written by the server; also detects truncation.
        #[arg(long)]
        head: Option<PathBuf>,
    },
    /// Run the scripted trilingual scenario against an in-process server.
    Demo {
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Directory for the demo's audit log and record store.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Failure {
    exit: u8,
    code: &'static str,
    message: String,
}

impl Failure {
    fn runtime(code: &'static str, message: impl ToString) -> Self {
        Failure {
            exit: 1,
            code,
            message: message.to_string(),
        }
    }

    fn usage(code: &'static str, message: impl ToString) -> Self {
        Failure {
            exit: 2,
            code,
            message: message.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve { config } => serve(config),
        Command::GenKey => gen_key(),
        Command::VerifyAudit { file, head } => verify_audit(file, head),
        Command::Demo { fixtures, out } => demo(fixtures, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!(
                "{}",
                json!({"error": {"code": f.code, "message": f.message}})
            );
            ExitCode::from(f.exit)
        }
    }
}

fn serve(config_path: Option<PathBuf>) -> Result<ExitCode, Failure> {
    install_capture(true);
    let config = Config::load(config_path.as_deref()).map_err(|e| Failure::usage("config", e))?;
    let master = std::env::var(MASTER_KEY_ENV)
        .map_err(|_| Failure::usage("config", format!("{MASTER_KEY_ENV} is not set")))?;
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let state = carebridge_gateway::build_state(&config, &master, clock)
        .map_err(|e| Failure::usage("startup", e))?;
    let audit = state.compliance.audit_log().clone();
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::runtime("runtime", e))?;
    runtime
        .block_on(async {
            let listener = tokio::net::TcpListener::bind(config.listen).await?;
            tracing::info!(addr = %config.listen, "listening");
            carebridge_gateway::serve(state, listener, async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
        })
        .map_err(|e| Failure::runtime("io", e))?;
    let head_path = head_path_for(&config.audit_path);
    carebridge_gateway::app::write_head_file(&audit, &head_path)
        .map_err(|e| Failure::runtime("io", e))?;
    Ok(ExitCode::SUCCESS)
}

fn head_path_for(audit: &std::path::Path) -> PathBuf {
    let mut name = audit.as_os_str().to_owned();
    name.push(".head");
    PathBuf::from(name)
}

fn gen_key() -> Result<ExitCode, Failure> {
    let (id, key) = generate_key().map_err(|e| Failure::runtime("entropy", e))?;
    println!(
        "{}",
        json!({"key_id": id.as_str(), "key": hex::encode(key.expose())})
    );
    Ok(ExitCode::SUCCESS)
}

fn verify_audit(file: PathBuf, head: Option<PathBuf>) -> Result<ExitCode, Failure> {
    let bytes = std::fs::read(&file).map_err(|e| Failure::runtime("io", e))?;
    let head: Option<ChainHead> = match head {
        Some(path) => {
            let raw = std::fs::read(&path).map_err(|e| Failure::runtime("io", e))?;
            Some(serde_json::from_slice(&raw).map_err(|e| Failure::usage("head", e))?)
        }
        None => None,
    };
    let outcome = verify_log_bytes(&bytes, head.as_ref());
    println!(
        "{}",
        serde_json::to_string(&outcome).expect("outcome serializes")
    );
    Ok(match outcome {
        VerifyOutcome::Ok => ExitCode::SUCCESS,
        VerifyOutcome::Tampered { .. } => ExitCode::from(1),
    })
}

fn demo(fixtures: Option<PathBuf>, out: Option<PathBuf>) -> Result<ExitCode, Failure> {
    let log = install_capture(false);
    let workdir = out.unwrap_or_else(|| std::env::temp_dir().join("carebridge-demo"));
    let report = run_demo(&DemoOptions {
        fixtures,
        workdir,
        log,
    })
    .map_err(|e| Failure::runtime("demo", e))?;
    println!("# transcript");
    for line in &report.transcript {
        println!("{line}");
    }
    println!("# audit summary ({} entries)", report.audit_entries);
    for (action, n) in &report.audit_summary {
        println!("{action:<24} {n}");
    }
    println!("# checks");
    for check in &report.checks {
        println!(
            "[{}] {}",
            if check.passed { "pass" } else { "FAIL" },
            check.name
        );
    }
    println!("# files");
    println!("audit log:    {}", report.audit_path.display());
    println!("audit head:   {}", report.head_path.display());
    println!("record store: {}", report.store_path.display());
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
