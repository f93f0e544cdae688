use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mediaprof_core::ingest::AppConfig;
use mediaprof_service::{router, AppState, ServiceConfig};

fn usage() -> ExitCode {
    eprintln!("usage: mediaprof-serve [--config FILE] [--listen ADDR]");
    ExitCode::from(2)
}

fn fail(code: &str, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": { "code": code, "message": message.to_string() } }));
    ExitCode::FAILURE
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut config: Option<PathBuf> = None;
    let mut listen: Option<String> = None;
    let mut args = std::env::args().skip(1);
    while let Some(a) = args.next() {
        match (a.as_str(), args.next()) {
            ("--config", Some(v)) => config = Some(v.into()),
            ("--listen", Some(v)) => listen = Some(v),
            _ => return usage(),
        }
    }
    let (app, base) = match &config {
        Some(p) => match AppConfig::load(p) {
            Ok(c) => (c, p.parent().map(Path::to_path_buf).unwrap_or_default()),
            Err(e) => return fail(e.code(), e),
        },
        None => (AppConfig::default(), PathBuf::from(".")),
    };
    let base = match std::path::absolute(&base) {
        Ok(b) => b,
        Err(e) => return fail("io_error", e),
    };
    let addr = listen.unwrap_or_else(|| app.service.listen.clone());
    let state = AppState::new(ServiceConfig { app, base });
    let listener = match tokio::net::TcpListener::bind(&addr).await {
        Ok(l) => l,
        Err(e) => return fail("io_error", format!("{addr}: {e}")),
    };
    log::info!("listening on {addr}");
    match axum::serve(listener, router(state)).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail("io_error", e),
    }
}
