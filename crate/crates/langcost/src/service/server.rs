use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use langcost_core::controller::{ControllerConfig, Session, Status};
use langcost_core::dataset::{corpus_environment, generate_tasks, CorpusConfig};
use langcost_core::grounding::{Grounder, Lexicon};
use langcost_core::world::collision;
use langcost_core::{Task, Vec2};
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tokio::time::{Instant, MissedTickBehavior};

use super::{
    active_mask, decode, downsample_cost, downsample_mask, encode, Scene, ServiceConfig, WireMessage, PROTOCOL_VERSION,
};

type Outbox = mpsc::UnboundedSender<WireMessage>;

enum Command {
    Submit(String),
    Reset,
    Attach(Outbox),
    Detach,
}

/// Shared server state: configuration plus the session registry.
#[derive(Clone)]
pub struct ServerState {
    pub service: ServiceConfig,
    pub corpus: CorpusConfig,
    pub controller: ControllerConfig,
    pub lexicon: Lexicon,
    sessions: Arc<Mutex<HashMap<String, mpsc::UnboundedSender<Command>>>>,
    next_id: Arc<AtomicU64>,
}

impl ServerState {
    pub fn new(service: ServiceConfig, corpus: CorpusConfig, controller: ControllerConfig, lexicon: Lexicon) -> Self {
        ServerState {
            service,
            corpus,
            controller,
            lexicon,
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
        }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    fn command(&self, id: &str, cmd: Command) -> bool {
        self.sessions.lock().unwrap().get(id).is_some_and(|tx| tx.send(cmd).is_ok())
    }
}

pub fn router(state: ServerState) -> Router {
    Router::new().route("/ws", get(upgrade)).with_state(state)
}

pub async fn serve(listener: TcpListener, state: ServerState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<ServerState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, state))
}

async fn connection(socket: WebSocket, state: ServerState) {
    let (mut sink, mut stream) = socket.split();
    let (out, mut outbox) = mpsc::unbounded_channel::<WireMessage>();
    let writer = tokio::spawn(async move {
        while let Some(msg) = outbox.recv().await {
            if sink.send(Message::Text(encode(&msg).into())).await.is_err() {
                break;
            }
        }
    });
    let _ = out.send(WireMessage::Hello { protocol: PROTOCOL_VERSION, resume: None });

    let mut attached: Option<String> = None;
    while let Some(Ok(frame)) = stream.next().await {
        let text = match frame {
            Message::Text(t) => t.to_string(),
            Message::Binary(b) => String::from_utf8_lossy(&b).into_owned(),
            Message::Close(_) => break,
            _ => continue,
        };
        let msg = match decode(&text) {
            Ok(m) => m,
            Err(e) => {
                let _ = out.send(error(attached.clone(), format!("malformed message: {e}"), None));
                continue;
            }
        };
        match msg {
            WireMessage::Hello { resume: Some(id), .. } => {
                if state.command(&id, Command::Attach(out.clone())) {
                    if let Some(old) = attached.replace(id.clone()) {
                        if old != id {
                            state.command(&old, Command::Detach);
                        }
                    }
                } else {
                    let _ = out.send(error(Some(id), "unknown or expired session".into(), None));
                }
            }
            WireMessage::Hello { .. } => {}
            WireMessage::CreateSession { env_id, corpus_seed, start, goal, seed, max_steps } => {
                match create(&state, env_id, corpus_seed, start, goal, seed, max_steps) {
                    Ok(session) => {
                        if let Some(old) = attached.take() {
                            state.command(&old, Command::Detach);
                        }
                        let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
                        let (tx, rx) = mpsc::unbounded_channel();
                        state.sessions.lock().unwrap().insert(id.clone(), tx);
                        tokio::spawn(run(state.clone(), id.clone(), session, env_id, rx, out.clone()));
                        attached = Some(id);
                    }
                    Err(message) => {
                        let _ = out.send(error(None, message, None));
                    }
                }
            }
            WireMessage::SubmitCorrection { session_id, text } => {
                if !state.command(&session_id, Command::Submit(text.clone())) {
                    let _ = out.send(error(Some(session_id), "unknown session".into(), Some(text)));
                }
            }
            WireMessage::Reset { session_id } => {
                if !state.command(&session_id, Command::Reset) {
                    let _ = out.send(error(Some(session_id), "unknown session".into(), None));
                }
            }
            other => {
                let _ = out.send(error(attached.clone(), format!("unexpected client message {}", kind_name(&other)), None));
            }
        }
    }
    if let Some(id) = attached {
        state.command(&id, Command::Detach);
    }
    drop(out);
    let _ = writer.await;
}

fn kind_name(msg: &WireMessage) -> &'static str {
    match msg {
        WireMessage::Hello { .. } => "Hello",
        WireMessage::CreateSession { .. } => "CreateSession",
        WireMessage::SessionState { .. } => "SessionState",
        WireMessage::SubmitCorrection { .. } => "SubmitCorrection",
        WireMessage::CorrectionAck { .. } => "CorrectionAck",
        WireMessage::CorrectionError { .. } => "CorrectionError",
        WireMessage::CostMapFrame { .. } => "CostMapFrame",
        WireMessage::EpisodeEnd { .. } => "EpisodeEnd",
        WireMessage::Reset { .. } => "Reset",
    }
}

fn error(session_id: Option<String>, message: String, text: Option<String>) -> WireMessage {
    WireMessage::CorrectionError { session_id, message, text }
}

fn create(
    state: &ServerState,
    env_id: u32,
    corpus_seed: Option<u64>,
    start: Option<Vec2>,
    goal: Option<Vec2>,
    seed: u64,
    max_steps: Option<u32>,
) -> Result<Session, String> {
    let cfg = CorpusConfig { seed: corpus_seed.unwrap_or(state.corpus.seed), ..state.corpus };
    let env = corpus_environment(env_id, &cfg).map_err(|e| e.to_string())?;
    let mut task = match (start, goal) {
        (Some(s), Some(g)) => Task::new(s, g),
        (None, None) => {
            let grounder = Grounder::new(state.lexicon.clone(), state.controller.grounding);
            let tasks = generate_tasks(&env, &grounder, &cfg, &state.controller).map_err(|e| e.to_string())?;
            tasks.first().map(|t| t.1).ok_or("environment has no tasks")?
        }
        _ => return Err("start and goal must be given together".into()),
    };
    for (name, p) in [("start", task.start), ("goal", task.goal)] {
        if !p.is_finite() || !env.spec.bounds().contains(p) || collision(p, &env) {
            return Err(format!("{name} {:?} is outside the world or in collision", (p.x, p.y)));
        }
    }
    if let Some(m) = max_steps {
        task.max_steps = m;
    }
    Ok(Session::new(env, task, state.lexicon.clone(), state.controller, seed))
}

fn scene(session: &Session, env_id: u32, rate_hz: f64) -> Scene {
    let env = session.env();
    Scene {
        env_id,
        world_width: env.spec.world_width,
        world_height: env.spec.world_height,
        robot_radius: env.spec.robot_radius,
        objects: env.objects.clone(),
        start: session.task().start,
        goal: session.task().goal,
        rate_hz,
    }
}

fn state_msg(id: &str, session: &Session, trail: usize, scene: Option<Scene>) -> WireMessage {
    let traj = session.trajectory();
    let from = traj.len().saturating_sub(trail.max(1));
    WireMessage::SessionState {
        session_id: id.into(),
        tick: session.tick_count(),
        q: session.state().q,
        qd: session.state().qd,
        status: session.status(),
        trail: traj[from..].iter().map(|s| s.q).collect(),
        scene,
    }
}

fn frame_msg(id: &str, session: &Session, size: usize) -> WireMessage {
    let spec = &session.env().spec;
    let (w, h) = (spec.cols(), spec.rows());
    let stack = session.stack();
    WireMessage::CostMapFrame {
        session_id: id.into(),
        tick: session.tick_count(),
        stack_version: session.stack_version(),
        width: size,
        height: size,
        cost: downsample_cost(&stack.composed_language_cost(w, h), size),
        mask: downsample_mask(&active_mask(stack, w, h), size),
        constraints: stack.constraints().iter().map(|c| c.source_text.clone()).collect(),
        language_goal: stack.language_goal().and_then(|g| g.goal_point),
    }
}

fn end_msg(id: &str, session: &Session) -> WireMessage {
    WireMessage::EpisodeEnd {
        session_id: id.into(),
        tick: session.tick_count(),
        status: session.status(),
        distance: session.target().map(|g| session.state().q.distance(g)),
    }
}

/// Drives one session: a tick per clock period while a client is attached,
/// paused otherwise, dropped after the resume window passes unattached.
async fn run(
    state: ServerState,
    id: String,
    mut session: Session,
    env_id: u32,
    mut commands: mpsc::UnboundedReceiver<Command>,
    out: Outbox,
) {
    let cfg = state.service;
    let initial = session.clone();
    let mut out = Some(out);
    let mut paused_at: Option<Instant> = None;
    let send = |out: &Option<Outbox>, msg: WireMessage| {
        if let Some(o) = out {
            let _ = o.send(msg);
        }
    };
    let greet = |out: &Option<Outbox>, session: &Session| {
        send(out, state_msg(&id, session, cfg.trail, Some(scene(session, env_id, cfg.rate_hz))));
        send(out, frame_msg(&id, session, cfg.frame_size));
        if session.status() != Status::Running {
            send(out, end_msg(&id, session));
        }
    };
    greet(&out, &session);

    let mut clock = tokio::time::interval(Duration::from_secs_f64(1.0 / cfg.rate_hz.max(1e-3)));
    clock.set_missed_tick_behavior(MissedTickBehavior::Delay);
    clock.tick().await;
    let resume_window = Duration::from_secs_f64(cfg.resume_secs.max(0.0));

    loop {
        tokio::select! {
            cmd = commands.recv() => match cmd {
                None => break,
                Some(Command::Submit(text)) => {
                    let reply = match session.submit_correction(&text) {
                        Ok(ack) => WireMessage::CorrectionAck {
                            session_id: id.clone(),
                            tick: ack.tick,
                            correction: ack.kind,
                            text,
                        },
                        Err(e) => error(Some(id.clone()), e.to_string(), Some(text)),
                    };
                    send(&out, reply);
                }
                Some(Command::Reset) => {
                    session = initial.clone();
                    greet(&out, &session);
                }
                Some(Command::Attach(o)) => {
                    out = Some(o);
                    paused_at = None;
                    greet(&out, &session);
                }
                Some(Command::Detach) => {
                    out = None;
                    paused_at = Some(Instant::now());
                }
            },
            _ = clock.tick() => {
                if let Some(since) = paused_at {
                    if since.elapsed() >= resume_window {
                        break;
                    }
                    continue;
                }
                if session.status() != Status::Running {
                    continue;
                }
                let version = session.stack_version();
                session.tick();
                send(&out, state_msg(&id, &session, cfg.trail, None));
                if session.stack_version() != version {
                    send(&out, frame_msg(&id, &session, cfg.frame_size));
                }
                if session.status() != Status::Running {
                    send(&out, end_msg(&id, &session));
                }
            }
        }
    }
    state.sessions.lock().unwrap().remove(&id);
}
