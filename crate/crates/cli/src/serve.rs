use std::io::Write;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use pseudotex::service::{Connection, ServiceConfig};

use crate::config::{CliError, ServeRun};

pub fn run(run: ServeRun) -> Result<(), CliError> {
    let config = ServiceConfig {
        base_seed: run.seed,
        data_dir: Some(run.data_dir.clone()),
        ..ServiceConfig::default()
    };
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Data(format!("cannot start runtime: {e}")))?;
    rt.block_on(async move {
        let addr = format!("{}:{}", run.host, run.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Data(format!("cannot listen on {addr}: {e}")))?;
        let local = listener.local_addr().map_err(|e| CliError::Data(e.to_string()))?;
        println!("listening on ws://{local}/ws (logs in {})", run.data_dir.display());
        let _ = std::io::stdout().flush();
        let app = Router::new()
            .route("/ws", get(upgrade))
            .route("/health", get(|| async { "ok" }))
            .with_state(Arc::new(config));
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Data(format!("server error: {e}")))
    })
}

async fn upgrade(ws: WebSocketUpgrade, State(config): State<Arc<ServiceConfig>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session(socket, (*config).clone()))
}

/// One connection, one session. Frames are handled strictly in arrival order.
async fn session(mut socket: WebSocket, config: ServiceConfig) {
    let mut conn = Connection::new(config);
    while let Some(Ok(msg)) = socket.recv().await {
        let frame = match msg {
            Message::Text(t) => t.to_string(),
            Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
            Message::Close(_) => break,
            _ => continue,
        };
        for reply in conn.handle_frame(&frame) {
            if socket.send(Message::Text(reply.into())).await.is_err() {
                break;
            }
        }
    }
    // Keep partial sessions; finished ones were exported on their last trial.
    if let Some(s) = conn.session() {
        if !s.records().is_empty() && !s.is_finished() {
            if let Err(e) = conn.export_logs() {
                eprintln!("export failed for {}: {e}", conn.session_id().unwrap_or("?"));
            }
        }
    }
}
