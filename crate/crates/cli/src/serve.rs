//! Live sessions over a websocket at `/ws`; everything else is served from
//! the static UI directory.
//!
//! Each connection owns one [`SessionState`] and runs its own tick loop, so
//! sessions share nothing. Incoming frames are applied between ticks in
//! arrival order.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;
use tokio::time::{interval, MissedTickBehavior};
use tower_http::services::ServeDir;

use crossing_core::session::{session_tick, ServerMessage, SessionOptions, SessionState};
use crossing_core::sim::write_trace;
use crossing_core::{Config, ControllerKind};

use crate::{CliError, ServeArgs};

#[derive(Debug, Clone)]
pub struct ServerSettings {
    pub config: Config,
    pub tick_rate: f64,
    pub default_controller: ControllerKind,
    pub static_dir: PathBuf,
    pub trace_dir: Option<PathBuf>,
}

struct AppState {
    settings: ServerSettings,
    next_id: AtomicU64,
}

pub fn serve(args: ServeArgs) -> Result<(), CliError> {
    let config = args.config.load()?;
    if !(args.tick_rate > 0.0 && args.tick_rate.is_finite()) {
        return Err(CliError::Validation("--tick-rate: must be > 0".into()));
    }
    let addr: SocketAddr =
        args.bind.parse().map_err(|e| CliError::Validation(format!("--bind `{}`: {e}", args.bind)))?;
    let settings = ServerSettings {
        config,
        tick_rate: args.tick_rate,
        default_controller: args.controller,
        static_dir: args.static_dir,
        trace_dir: args.trace_dir,
    };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::io("cannot start runtime", e))?;
    rt.block_on(async move {
        let listener = TcpListener::bind(addr).await.map_err(|e| CliError::io(format!("cannot bind {addr}"), e))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(|e| CliError::io("local_addr", e))?);
        axum::serve(listener, router(settings))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::io("server failed", e))
    })
}

pub fn router(settings: ServerSettings) -> Router {
    let static_dir = settings.static_dir.clone();
    let state = Arc::new(AppState { settings, next_id: AtomicU64::new(1) });
    Router::new().route("/ws", get(ws_handler)).with_state(state).fallback_service(ServeDir::new(static_dir))
}

async fn ws_handler(ws: WebSocketUpgrade, State(app): State<Arc<AppState>>) -> impl IntoResponse {
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    ws.on_upgrade(move |socket| run_session(socket, app, id))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    let text = serde_json::to_string(msg).expect("server messages serialize");
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn run_session(mut socket: WebSocket, app: Arc<AppState>, id: u64) {
    let s = &app.settings;
    let period = Duration::from_secs_f64(1.0 / s.tick_rate);
    let options = SessionOptions {
        solve_budget: Some(period),
        default_controller: s.default_controller,
        ..SessionOptions::default()
    };
    let mut session = SessionState::new(id, s.config.clone(), options);
    let mut clock = interval(period);
    clock.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let mut episode = 0u32;
    loop {
        tokio::select! {
            frame = socket.recv() => {
                let text = match frame {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Binary(_))) => {
                        let err = ServerMessage::Error { code: "bad_message".into(), message: "expected a text frame".into() };
                        if !send(&mut socket, &err).await { break; }
                        continue;
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                if let Some(reply) = session.handle_text(text.as_str()) {
                    if !send(&mut socket, &reply).await { break; }
                }
            }
            _ = clock.tick() => {
                for msg in session_tick(&mut session) {
                    if let ServerMessage::EpisodeEnd { .. } = msg {
                        episode += 1;
                        save_trace(s, &session, id, episode);
                    }
                    if !send(&mut socket, &msg).await { return; }
                }
            }
        }
    }
}

fn save_trace(s: &ServerSettings, session: &SessionState, id: u64, episode: u32) {
    let (Some(dir), Some(trace)) = (&s.trace_dir, session.last_trace()) else {
        return;
    };
    if let Err(e) = std::fs::create_dir_all(dir) {
        eprintln!("warning: cannot create {}: {e}", dir.display());
        return;
    }
    let path = dir.join(format!("session{id}__{}__ep{episode}.jsonl", trace.controller));
    if let Err(e) = write_trace(&path, trace, &s.config.hash()) {
        eprintln!("warning: {e}");
    }
}
