//! Command-line interface: `serve`, `ingest` and `export`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use expertagent_core::corpus::{extract_topics, ingest_document, segment};
use expertagent_core::persistence::{encode_student, load_course, DataDir, DATA_DIR_ENV, DEFAULT_DATA_DIR};

use crate::service::Service;

#[derive(Debug, Parser)]
#[command(name = "expertagent", version, about = "Retrieval-grounded adaptive tutor")]
pub struct Cli {
    /// Directory holding course, student, trajectory and feedback files.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = DEFAULT_DATA_DIR)]
    pub data_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Course file; defaults to `<data-dir>/course.json`.
        #[arg(long)]
        course: Option<PathBuf>,
    },
    /// Add `.txt` or `.md` files to the corpus store.
    Ingest {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Print a student's stored model as JSON.
    Export {
        #[arg(long)]
        student: String,
    },
}

pub fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Serve { port, host, course } => serve(cli.data_dir, &host, port, course),
        Command::Ingest { paths } => ingest(&cli.data_dir, &paths),
        Command::Export { student } => {
            let model = DataDir::new(&cli.data_dir).load_student(&student).map_err(|e| e.to_string())?;
            print!("{}", encode_student(&model));
            Ok(())
        }
    }
}

fn ingest(data_dir: &std::path::Path, paths: &[PathBuf]) -> Result<(), String> {
    let store = DataDir::new(data_dir);
    for path in paths {
        let raw = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let doc = ingest_document(&raw, name).map_err(|e| format!("{}: {e}", path.display()))?;
        store.save_document(&doc).map_err(|e| e.to_string())?;
        let topics: Vec<String> = extract_topics(&doc).unwrap_or_default().into_iter().map(|t| t.topic_id).collect();
        println!("{}\t{}\t{} chunks\t{}", doc.doc_id, path.display(), segment(&doc).len(), topics.join(","));
    }
    Ok(())
}

fn serve(data_dir: PathBuf, host: &str, port: u16, course: Option<PathBuf>) -> Result<(), String> {
    let store = DataDir::new(&data_dir);
    let course_path = course.unwrap_or_else(|| store.course_path());
    let config = load_course(&course_path).map_err(|e| format!("{}: {e}", course_path.display()))?;
    let client = crate::client_from_env()?;
    let service = Service::new(store, config, client).map_err(|e| e.to_string())?;
    for report in service.ingest_course_documents(&course_path).map_err(|e| e.to_string())? {
        tracing::info!(doc_id = %report.document.doc_id, chunks = report.document.chunk_count, "course document indexed");
    }
    let addr: SocketAddr = format!("{host}:{port}").parse().map_err(|e| format!("bad listen address: {e}"))?;
    let mode = service.llm_mode();
    let app = crate::api::router(Arc::new(service));

    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| format!("bind {addr}: {e}"))?;
        tracing::info!(%addr, ?mode, data_dir = %data_dir.display(), "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| e.to_string())
    })
}
