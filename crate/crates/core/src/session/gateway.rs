//! HTTP and websocket front end for interactive sessions.
//!
//! Routes:
//! - `GET  /api/session` current status
//! - `POST /api/session/config` replace the session config (idle only)
//! - `POST /api/session/start` start a session, optional `{"driver": "human"|"trainee"}`
//! - `POST /api/session/stop` stop it; the stream ends with an `end` event
//! - `POST /api/control` `{stick_x, stick_y, throttle}`, at most 20 per second
//! - `GET  /api/stream` websocket of `snapshot`, `tick` and `end` events
//!
//! Anything else is served from the static directory when one is set.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::broadcast;
use tower_http::services::ServeDir;

use super::batch::{build_pipeline, scenario_for};
use super::engine::{connect_device, SessionEngine};
use super::log::{LogHeader, ScenarioMeta, LOG_SCHEMA};
use super::{SessionConfig, SessionError, SessionRecord, VoiceEvent};
use crate::ems::EmsCommand;
use crate::flight_sim::{ControlSample, ScenarioSim};
use crate::flight_state::{ControlInput, FlightState};
use crate::guidance::{PhaseEntry, Status, ValidatorVerdict};
use crate::task_standards::DeviationReport;

/// Minimum spacing of accepted control posts (20 Hz).
pub const CONTROL_MIN_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    /// Stick input comes from `/api/control`.
    #[default]
    Human,
    /// The synthetic trainee flies; useful for demos.
    Trainee,
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub bind: String,
    pub static_dir: Option<PathBuf>,
    /// Each session's log is written here as `session-<n>.jsonl`.
    pub log_dir: Option<PathBuf>,
    pub tick_period: Duration,
    pub session: SessionConfig,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            bind: "127.0.0.1:8080".into(),
            static_dir: None,
            log_dir: None,
            tick_period: Duration::from_secs(1),
            session: SessionConfig::default(),
        }
    }
}

/// Stream payload for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickPayload {
    pub tick: u64,
    pub state: FlightState,
    pub report: DeviationReport,
    pub phase_entry: Option<PhaseEntry>,
    pub task_complete: bool,
    pub status: Option<Status>,
    pub guidance: Option<String>,
    /// Controls flown during the tick.
    pub control: Option<ControlSample>,
    pub commands: Vec<EmsCommand>,
    pub voice: Vec<VoiceEvent>,
    pub verdict: ValidatorVerdict,
    pub late: bool,
}

impl TickPayload {
    pub fn of(rec: &SessionRecord) -> Self {
        TickPayload {
            tick: rec.tick,
            state: rec.state,
            report: rec.report.clone(),
            phase_entry: rec.phase_entry.clone(),
            task_complete: rec.task_complete,
            status: rec.chain.status_check.as_ref().map(|s| s.status),
            guidance: rec.chain.guidance.as_ref().map(|g| g.guidance.clone()),
            control: rec.control,
            commands: rec.commands.clone(),
            voice: rec.voice.clone(),
            verdict: rec.verdict.clone(),
            late: rec.late,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub running: bool,
    /// Sessions started since the gateway came up.
    pub session_id: u64,
    pub tick: u64,
    pub driver: Driver,
    pub config: SessionConfig,
    pub log_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamEvent {
    Snapshot { session: Box<SessionStatus>, last: Option<Box<TickPayload>> },
    Tick(Box<TickPayload>),
    End { session_id: u64, reason: String, ticks: u64, error: Option<String> },
}

#[derive(Debug, Default, Deserialize)]
struct StartBody {
    #[serde(default)]
    driver: Option<Driver>,
}

struct Running {
    stop: mpsc::Sender<()>,
    thread: std::thread::JoinHandle<()>,
}

struct Inner {
    status: SessionStatus,
    last: Option<Box<TickPayload>>,
    control: Option<ControlInput>,
    last_control_at: Option<Instant>,
    running: Option<Running>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Mutex<Inner>>,
    events: broadcast::Sender<StreamEvent>,
    log_dir: Option<PathBuf>,
    tick_period: Duration,
}

impl AppState {
    pub fn new(config: &GatewayConfig) -> Self {
        let (events, _) = broadcast::channel(256);
        AppState {
            inner: Arc::new(Mutex::new(Inner {
                status: SessionStatus {
                    running: false,
                    session_id: 0,
                    tick: 0,
                    driver: Driver::Human,
                    config: config.session.clone(),
                    log_path: None,
                },
                last: None,
                control: None,
                last_control_at: None,
                running: None,
            })),
            events,
            log_dir: config.log_dir.clone(),
            tick_period: config.tick_period,
        }
    }

    pub fn status(&self) -> SessionStatus {
        self.inner.lock().expect("state lock").status.clone()
    }
}

fn error(code: StatusCode, msg: impl Into<String>) -> Response {
    (code, Json(json!({ "error": msg.into() }))).into_response()
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session", get(get_session))
        .route("/api/session/config", post(post_config))
        .route("/api/session/start", post(post_start))
        .route("/api/session/stop", post(post_stop))
        .route("/api/control", post(post_control))
        .route("/api/stream", get(stream))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// A bound gateway, ready to serve.
pub struct Gateway {
    listener: TcpListener,
    app: Router,
    state: AppState,
}

impl Gateway {
    pub async fn bind(config: GatewayConfig) -> Result<Gateway, SessionError> {
        config.session.validate()?;
        let listener = TcpListener::bind(&config.bind).await.map_err(|e| match e.kind() {
            std::io::ErrorKind::AddrInUse => SessionError::PortInUse(config.bind.clone()),
            _ => SessionError::Io(e),
        })?;
        let state = AppState::new(&config);
        let app = router(state.clone(), config.static_dir.clone());
        Ok(Gateway { listener, app, state })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn state(&self) -> AppState {
        self.state.clone()
    }

    /// Serves until `shutdown` resolves, then stops any running session.
    pub async fn serve(self, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        let state = self.state.clone();
        let r = axum::serve(self.listener, self.app).with_graceful_shutdown(shutdown).await;
        let running = state.inner.lock().expect("state lock").running.take();
        if let Some(run) = running {
            let _ = run.stop.send(());
            let _ = tokio::task::spawn_blocking(move || run.thread.join()).await;
        }
        r
    }
}

async fn get_session(State(state): State<AppState>) -> Json<SessionStatus> {
    Json(state.status())
}

async fn post_config(State(state): State<AppState>, Json(config): Json<SessionConfig>) -> Response {
    if let Err(e) = config.validate() {
        return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string());
    }
    let mut inner = state.inner.lock().expect("state lock");
    if inner.status.running {
        return error(StatusCode::CONFLICT, "session running");
    }
    inner.status.config = config;
    Json(inner.status.clone()).into_response()
}

async fn post_start(State(state): State<AppState>, body: Option<Json<StartBody>>) -> Response {
    let driver = body.and_then(|b| b.0.driver).unwrap_or_default();
    let mut inner = state.inner.lock().expect("state lock");
    if inner.status.running {
        return error(StatusCode::CONFLICT, "session already running");
    }
    if let Some(old) = inner.running.take() {
        let _ = old.thread.join();
    }
    let config = inner.status.config.clone();
    let session_id = inner.status.session_id + 1;
    let log_path = state.log_dir.as_ref().map(|d| d.join(format!("session-{session_id}.jsonl")));
    // setup errors are reported here rather than on the stream
    let setup = prepare(&config, log_path.clone());
    let prepared = match setup {
        Ok(p) => p,
        Err(e) => {
            let code = match e {
                SessionError::DeviceUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
                SessionError::ConfigInvalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            };
            return error(code, e.to_string());
        }
    };
    let (stop_tx, stop_rx) = mpsc::channel();
    inner.status = SessionStatus { running: true, session_id, tick: 0, driver, config, log_path };
    inner.last = None;
    inner.control = None;
    let st = state.clone();
    let thread = std::thread::spawn(move || session_loop(st, prepared, driver, session_id, stop_rx));
    inner.running = Some(Running { stop: stop_tx, thread });
    Json(inner.status.clone()).into_response()
}

async fn post_stop(State(state): State<AppState>) -> Response {
    let running = state.inner.lock().expect("state lock").running.take();
    match running {
        Some(run) => {
            let _ = run.stop.send(());
            let _ = tokio::task::spawn_blocking(move || run.thread.join()).await;
            Json(state.status()).into_response()
        }
        None => error(StatusCode::CONFLICT, "no session running"),
    }
}

async fn post_control(State(state): State<AppState>, Json(input): Json<ControlInput>) -> Response {
    if ![input.stick_x, input.stick_y, input.throttle].iter().all(|v| v.is_finite()) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, "non-finite control value");
    }
    let mut inner = state.inner.lock().expect("state lock");
    if !inner.status.running {
        return error(StatusCode::CONFLICT, "no session running");
    }
    let now = Instant::now();
    if inner.last_control_at.is_some_and(|t| now.duration_since(t) < CONTROL_MIN_INTERVAL) {
        return error(StatusCode::TOO_MANY_REQUESTS, "control input limited to 20 Hz");
    }
    inner.last_control_at = Some(now);
    inner.control = Some(input.clamped());
    StatusCode::ACCEPTED.into_response()
}

async fn stream(State(state): State<AppState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| forward(socket, state))
}

async fn forward(socket: WebSocket, state: AppState) {
    let (mut tx, mut rx) = socket.split();
    // subscribe before the snapshot so no tick falls in between
    let mut events = state.events.subscribe();
    let snapshot = {
        let inner = state.inner.lock().expect("state lock");
        StreamEvent::Snapshot { session: Box::new(inner.status.clone()), last: inner.last.clone() }
    };
    if send(&mut tx, &snapshot).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            ev = events.recv() => match ev {
                Ok(ev) => {
                    let end = matches!(ev, StreamEvent::End { .. });
                    if send(&mut tx, &ev).await.is_err() {
                        return;
                    }
                    if end {
                        let _ = tx.send(Message::Close(None)).await;
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => tracing::warn!("stream client lagged {n} events"),
                Err(broadcast::error::RecvError::Closed) => return,
            },
            msg = rx.next() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

async fn send(tx: &mut futures::stream::SplitSink<WebSocket, Message>, ev: &StreamEvent) -> Result<(), axum::Error> {
    let text = serde_json::to_string(ev).expect("events serialize");
    tx.send(Message::Text(text)).await
}

struct Prepared {
    sim: ScenarioSim,
    engine: SessionEngine,
    log: Option<BufWriter<File>>,
}

fn prepare(config: &SessionConfig, log_path: Option<PathBuf>) -> Result<Prepared, SessionError> {
    config.validate()?;
    let profile = config.load_profile()?;
    let pipeline = build_pipeline(config)?;
    let backend_id = pipeline.backend_id();
    let device = if config.assist { Some(connect_device(config)?) } else { None };
    let scenario = scenario_for(config)?;
    let sim = ScenarioSim::new(&scenario, config.skill, config.seed)?;
    let spec = config.task_spec(sim.spec().clone())?;
    let log = match log_path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            let header = LogHeader {
                schema: LOG_SCHEMA.into(),
                config: config.clone(),
                task_spec: spec.clone(),
                scenario: Some(ScenarioMeta {
                    name: scenario.name.clone(),
                    condition: scenario.condition,
                    duration_s: scenario.duration_s,
                }),
                profile: profile.clone(),
                backend_id,
            };
            writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
            Some(w)
        }
        None => None,
    };
    let engine = SessionEngine::new(spec, pipeline, profile, device, config.assist);
    Ok(Prepared { sim, engine, log })
}

fn session_loop(state: AppState, mut p: Prepared, driver: Driver, session_id: u64, stop: mpsc::Receiver<()>) {
    if driver == Driver::Human {
        let trim = p.sim.current_input();
        p.sim.set_manual_input(Some(trim));
    }
    let mut reason = "complete";
    let mut failure = None;
    loop {
        match stop.recv_timeout(state.tick_period) {
            Err(RecvTimeoutError::Timeout) => {}
            _ => {
                reason = "stopped";
                break;
            }
        }
        if driver == Driver::Human {
            let pending = state.inner.lock().expect("state lock").control.take();
            if pending.is_some() {
                p.sim.set_manual_input(pending);
            }
        }
        match tick_once(&mut p) {
            Ok(Some(rec)) => {
                let payload = Box::new(TickPayload::of(&rec));
                {
                    let mut inner = state.inner.lock().expect("state lock");
                    inner.status.tick = rec.tick;
                    inner.last = Some(payload.clone());
                }
                let _ = state.events.send(StreamEvent::Tick(payload));
                if p.sim.is_finished() {
                    break;
                }
            }
            Ok(None) => break,
            Err(e) => {
                tracing::error!("session {session_id}: {e}");
                reason = "error";
                failure = Some(e.to_string());
                break;
            }
        }
    }
    if let Some(w) = p.log.as_mut() {
        if let Err(e) = w.flush() {
            failure.get_or_insert(e.to_string());
        }
    }
    let ticks = {
        let mut inner = state.inner.lock().expect("state lock");
        inner.status.running = false;
        inner.status.tick
    };
    let _ = state.events.send(StreamEvent::End { session_id, reason: reason.into(), ticks, error: failure });
}

fn tick_once(p: &mut Prepared) -> Result<Option<SessionRecord>, SessionError> {
    let Some(out) = p.sim.step_tick()? else {
        return Ok(None);
    };
    let mut rec = p.engine.run_tick(&out.record)?;
    rec.control = Some(out.control);
    p.sim.push_commands(rec.commands.iter().cloned());
    if let Some(w) = p.log.as_mut() {
        writeln!(w, "{}", serde_json::to_string(&rec).expect("records serialize"))?;
    }
    Ok(Some(rec))
}
