use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use clap::Parser;
use igram_debug::{router, Loaded, Registry};

/// Interactive parsing service for grammar debugging.
#[derive(Parser)]
#[command(name = "igram-debug", version)]
struct Args {
    /// `NAME=DIR`, where DIR holds grammar.json and lexicon.json. Repeatable.
    #[arg(long = "grammar", required = true)]
    grammars: Vec<String>,
    #[arg(long, default_value = "127.0.0.1:7878")]
    addr: String,
    /// Idle minutes before a session is dropped.
    #[arg(long, default_value_t = 30)]
    ttl_minutes: u64,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut grammars = BTreeMap::new();
    for spec in &args.grammars {
        let Some((name, dir)) = spec.split_once('=') else {
            bail!("--grammar expects NAME=DIR, got `{spec}`");
        };
        let loaded = Loaded::from_dir(&PathBuf::from(dir)).with_context(|| format!("loading grammar `{name}`"))?;
        grammars.insert(name.to_string(), loaded);
    }
    let ttl = Duration::from_secs(args.ttl_minutes * 60);
    let registry = Arc::new(Registry::new(grammars, ttl));

    let reaper = registry.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            reaper.reap(Instant::now());
        }
    });

    let listener = tokio::net::TcpListener::bind(&args.addr)
        .await
        .with_context(|| format!("binding {}", args.addr))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(registry))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
