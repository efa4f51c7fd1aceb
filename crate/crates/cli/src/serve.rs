use anyhow::Context;
use telecg_server::{AppState, ServerConfig};
use tracing::info;

use crate::args::{ServeArgs, ServerOpts};
use crate::{emit, shutdown_signal, Outcome};

/// Open the data directory and bind the listener.
pub async fn start(opts: &ServerOpts) -> anyhow::Result<(AppState, tokio::net::TcpListener)> {
    let mut cfg = ServerConfig::new(&opts.data);
    cfg.subscriber_queue = opts.queue;
    cfg.ui_dir = opts.ui_dir.clone();
    let state = AppState::open(cfg)
        .with_context(|| format!("opening data directory {}", opts.data.display()))?;
    let listener = tokio::net::TcpListener::bind(&opts.listen)
        .await
        .with_context(|| format!("binding {}", opts.listen))?;
    Ok((state, listener))
}

pub async fn run(args: ServeArgs) -> anyhow::Result<Outcome> {
    let (state, listener) = start(&args.server).await?;
    let addr = listener.local_addr()?;
    info!(%addr, data = %args.server.data.display(), "listening");
    emit(&serde_json::json!({
        "listening": addr.to_string(),
        "data_dir": args.server.data,
    }))?;
    telecg_server::serve(listener, state, shutdown_signal()).await?;
    info!("server stopped");
    Ok(Outcome::Success)
}
