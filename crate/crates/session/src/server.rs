//! Websocket endpoint `/session/{id}`. Each id names one live simulation,
//! created on first connection and shared by every client using that id.

use std::collections::HashMap;
use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, Mutex};

use crate::core::{load_scenario, valid_id, SessionCore, SessionError};
use crate::owner::{Command, Pace, SessionHandle, SNAPSHOT_HZ};
use crate::protocol::{parse_request, ErrorCode, Rejection, ServerMessage, PROTOCOL_VERSION};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Directory holding `<id>.toml` scenario files.
    pub scenario_dir: PathBuf,
    /// Scenario id new sessions start with.
    pub scenario: String,
    pub pace: Pace,
    pub snapshot_hz: f64,
    /// Where traces are written on reset and shutdown.
    pub trace_dir: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(scenario_dir: impl Into<PathBuf>, scenario: impl Into<String>) -> Self {
        ServerConfig {
            scenario_dir: scenario_dir.into(),
            scenario: scenario.into(),
            pace: Pace::Real,
            snapshot_hz: SNAPSHOT_HZ,
            trace_dir: None,
        }
    }

    /// Splits a scenario file path into its directory and id.
    pub fn from_scenario_path(path: &std::path::Path) -> Result<Self, SessionError> {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| SessionError::BadScenarioId(path.display().to_string()))?;
        let dir = path.parent().map(PathBuf::from).unwrap_or_default();
        let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
        Ok(ServerConfig::new(dir, id))
    }
}

pub struct AppState {
    config: ServerConfig,
    sessions: Mutex<HashMap<String, SessionHandle>>,
}

impl AppState {
    /// Checks that the default scenario loads.
    pub fn new(config: ServerConfig) -> Result<Arc<Self>, SessionError> {
        load_scenario(&config.scenario_dir, &config.scenario)?;
        Ok(Arc::new(AppState {
            config,
            sessions: Mutex::new(HashMap::new()),
        }))
    }

    /// Stops every session, saving traces.
    pub async fn shutdown(&self) {
        let sessions: Vec<_> = self.sessions.lock().await.drain().map(|(_, h)| h).collect();
        if sessions.is_empty() {
            return;
        }
        let _ = tokio::task::spawn_blocking(move || sessions.into_iter().for_each(SessionHandle::shutdown)).await;
    }

    async fn attach(&self, id: &str) -> Result<Attachment, SessionError> {
        let mut sessions = self.sessions.lock().await;
        if !sessions.contains_key(id) {
            let c = &self.config;
            let core = SessionCore::new(id, &c.scenario_dir, &c.scenario, c.trace_dir.clone())?;
            log::info!("session {id}: started with scenario {}", c.scenario);
            sessions.insert(id.to_string(), SessionHandle::spawn(core, c.pace, c.snapshot_hz));
        }
        let h = &sessions[id];
        Ok(Attachment {
            commands: h.commands.clone(),
            snapshots: h.snapshots.subscribe(),
            demo: h.demo.clone(),
        })
    }
}

struct Attachment {
    commands: std::sync::mpsc::Sender<Command>,
    snapshots: broadcast::Receiver<Arc<crate::protocol::Snapshot>>,
    demo: tokio::sync::watch::Receiver<Arc<crate::protocol::DemoPolyline>>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new().route("/session/{id}", get(upgrade)).with_state(state)
}

async fn upgrade(ws: WebSocketUpgrade, Path(id): Path<String>, State(state): State<Arc<AppState>>) -> Response {
    if !valid_id(&id) {
        return (StatusCode::BAD_REQUEST, "session id must match [A-Za-z0-9_-]{1,64}").into_response();
    }
    match state.attach(&id).await {
        Ok(att) => ws.on_upgrade(move |socket| client(socket, att)),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn client(socket: WebSocket, att: Attachment) {
    let Attachment {
        commands,
        mut snapshots,
        mut demo,
    } = att;
    let (mut sink, mut stream) = socket.split();
    let (reply_tx, mut reply_rx) = tokio::sync::mpsc::unbounded_channel::<String>();
    if commands.send(Command::Join { reply: reply_tx.clone() }).is_err() {
        return;
    }
    let mut sent_version = demo.borrow_and_update().version;

    let writer = async move {
        loop {
            let text = tokio::select! {
                biased;
                reply = reply_rx.recv() => match reply {
                    Some(t) => t,
                    None => break,
                },
                snap = snapshots.recv() => match snap {
                    Ok(s) => {
                        let mut s = (*s).clone();
                        if s.transform_version != sent_version {
                            let d = demo.borrow_and_update().clone();
                            if d.version == s.transform_version {
                                sent_version = d.version;
                                s.demo = Some((*d).clone());
                            }
                        }
                        ServerMessage::Snapshot { v: PROTOCOL_VERSION, snapshot: Box::new(s) }.to_json()
                    }
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            };
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    };

    let reader = async move {
        while let Some(Ok(msg)) = stream.next().await {
            let request = match msg {
                Message::Text(t) => parse_request(t.as_str()),
                Message::Binary(_) => Err(Rejection {
                    req: None,
                    code: ErrorCode::Malformed,
                    message: "expected a text frame".into(),
                }),
                Message::Close(_) => break,
                _ => continue,
            };
            let cmd = Command::Request {
                request,
                reply: reply_tx.clone(),
            };
            if commands.send(cmd).is_err() {
                break;
            }
        }
    };

    // either side finishing ends the connection
    tokio::select! {
        _ = writer => {},
        _ = reader => {},
    }
}

/// Serves until `shutdown` resolves, then stops every session.
pub async fn serve(
    listener: TcpListener,
    config: ServerConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let state = AppState::new(config)?;
    let app = router(state.clone());
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    state.shutdown().await;
    Ok(())
}
