//! Live session server: one websocket connection drives one trial at a
//! time against the wall clock, with the cursor fed by the client.
//!
//! Client to server:
//!
//! ```text
//! {"type":"cursor","x":0.31,"y":0.12}
//! {"type":"start","method":"M4"}
//! {"type":"reset","method":"M2"}
//! ```
//!
//! Server to client: a `frame` every tick, a `summary` when a trial ends and
//! a `warning` for input that was ignored.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use crate::error::{Error, Result};

use super::scenario::{HumanTrack, Method, Scenario};
use super::trial::{TickLog, Trial, TrialRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Cursor { x: f64, y: f64 },
    Start { method: Option<String> },
    Reset { method: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalState {
    pub reached: usize,
    pub total: usize,
    pub current: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Frame {
        k: usize,
        t: f64,
        theta: [f64; 2],
        cursor: [f64; 2],
        d: f64,
        phi: f64,
        phi_alpha: f64,
        mode: String,
        u: [f64; 2],
        goals: GoalState,
    },
    Summary {
        method: String,
        ticks: usize,
        #[serde(rename = "GOAL")]
        goal: usize,
        #[serde(rename = "VIOL")]
        viol: usize,
        #[serde(rename = "DIST")]
        dist: Option<f64>,
        #[serde(rename = "AVG_DIST")]
        avg_dist: Option<f64>,
        clipped_ticks: usize,
        infeasible_ticks: usize,
        aborted: Option<String>,
        /// Persisted record and replay scenario.
        record: Option<String>,
        replay: Option<String>,
    },
    Warning { message: String },
}

fn arr(v: &Vector2<f64>) -> [f64; 2] {
    [v.x, v.y]
}

fn finite_or_zero(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

impl ServerMessage {
    pub fn frame(entry: &TickLog, trial: &Trial) -> Self {
        let goals = trial.goals();
        let idx = trial.goal_index();
        ServerMessage::Frame {
            k: entry.k,
            t: entry.t,
            theta: arr(&entry.theta),
            cursor: arr(&entry.cursor),
            d: finite_or_zero(entry.d.unwrap_or(0.0)),
            phi: finite_or_zero(entry.phi.unwrap_or(0.0)),
            phi_alpha: finite_or_zero(entry.phi_alpha),
            mode: entry.mode.as_str().to_string(),
            u: arr(&entry.u),
            goals: GoalState { reached: idx, total: goals.len(), current: goals.get(idx).map(arr) },
        }
    }

    pub fn summary(record: &TrialRecord, paths: Option<&(PathBuf, PathBuf)>) -> Self {
        let m = &record.metrics;
        ServerMessage::Summary {
            method: record.method.to_string(),
            ticks: record.ticks.len(),
            goal: m.goals_reached,
            viol: m.violations,
            dist: m.min_distance,
            avg_dist: m.avg_distance,
            clipped_ticks: m.clipped_ticks,
            infeasible_ticks: m.infeasible_ticks,
            aborted: record.aborted.clone(),
            record: paths.map(|p| p.0.display().to_string()),
            replay: paths.map(|p| p.1.display().to_string()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Pace ticks at `dt_s` of wall-clock time.
    pub realtime: bool,
    /// Where finished trials are written.
    pub record_dir: PathBuf,
    /// Stop accepting after this many connections.
    pub max_sessions: Option<usize>,
    pub default_method: Method,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { realtime: true, record_dir: PathBuf::from("sessions"), max_sessions: None, default_method: Method::M4 }
    }
}

/// Template turned into a live session: the cursor spawns where the
/// template's track starts.
pub fn live_scenario(template: &Scenario) -> Scenario {
    let mut s = template.clone();
    s.human_track = HumanTrack::Live { spawn_m: arr(&template.human_track.spawn()) };
    s
}

/// Write the record and a replay scenario driven by its cursor stream.
pub fn persist(record: &TrialRecord, live: &Scenario, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let rec_path = dir.join(format!("{stem}.record.json"));
    let replay_path = dir.join(format!("{stem}.scenario.json"));
    std::fs::write(&rec_path, serde_json::to_string(record)?)?;
    let mut replay = live.with_recorded_track(&record.cursor_track());
    replay.name = format!("{}-replay", live.name);
    std::fs::write(&replay_path, replay.to_json()?)?;
    Ok((rec_path, replay_path))
}

pub fn serve(template: &Scenario, port: u16, opts: &ServeOptions) -> Result<()> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    log::info!("listening on ws://{}", listener.local_addr()?);
    serve_listener(listener, template, opts)
}

pub fn serve_listener(listener: TcpListener, template: &Scenario, opts: &ServeOptions) -> Result<()> {
    template.validate()?;
    for (count, stream) in listener.incoming().enumerate() {
        match stream {
            Ok(s) => {
                if let Err(e) = run_connection(s, template, opts, count) {
                    log::warn!("session {count}: {e}");
                }
            }
            Err(e) => log::warn!("accept failed: {e}"),
        }
        if opts.max_sessions.is_some_and(|n| count + 1 >= n) {
            break;
        }
    }
    Ok(())
}

struct Session {
    ws: WebSocket<TcpStream>,
    live: Scenario,
    opts: ServeOptions,
    id: usize,
    trials: usize,
    trial: Option<Trial>,
    cursor: Vector2<f64>,
    method: Method,
}

fn ws_err(e: tungstenite::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

impl Session {
    fn send(&mut self, msg: &ServerMessage) -> Result<()> {
        let text = serde_json::to_string(msg)?;
        match self.ws.send(Message::Text(text)) {
            Ok(()) => Ok(()),
            Err(tungstenite::Error::Io(e)) if e.kind() == ErrorKind::WouldBlock => Ok(()),
            // latest wins: drop the frame rather than stall the loop
            Err(tungstenite::Error::WriteBufferFull(_)) => Ok(()),
            Err(e) => Err(ws_err(e)),
        }
    }

    fn warn(&mut self, message: String) -> Result<()> {
        log::warn!("session {}: {message}", self.id);
        self.send(&ServerMessage::Warning { message })
    }

    fn start(&mut self, method: Option<String>) -> Result<()> {
        let method = match method.as_deref().map(str::parse::<Method>).transpose() {
            Ok(m) => m.unwrap_or(self.method),
            Err(e) => return self.warn(e.to_string()),
        };
        if !method.has_obstacle() {
            return self.warn("live sessions need an obstacle method (M0 to M4)".into());
        }
        self.method = method;
        let mut scenario = self.live.clone();
        scenario.human_track = HumanTrack::Live { spawn_m: arr(&self.cursor) };
        let mut trial = Trial::new(&scenario, method)?;
        trial.set_cursor(self.cursor);
        self.trial = Some(trial);
        Ok(())
    }

    /// Ends the running trial, persists it and sends the summary.
    fn finish(&mut self, notify: bool) -> Result<()> {
        let Some(trial) = self.trial.take() else { return Ok(()) };
        let record = trial.record();
        let stem = format!("{}-{}-s{}-{}", self.live.name, record.method, self.id, self.trials);
        self.trials += 1;
        let paths = match persist(&record, &self.live, &self.opts.record_dir, &stem) {
            Ok(p) => Some(p),
            Err(e) => {
                log::warn!("could not persist {stem}: {e}");
                None
            }
        };
        if notify {
            self.send(&ServerMessage::summary(&record, paths.as_ref()))?;
        }
        Ok(())
    }

    fn handle(&mut self, text: &str) -> Result<()> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(ClientMessage::Cursor { x, y }) if x.is_finite() && y.is_finite() => {
                self.cursor = Vector2::new(x, y);
                if let Some(t) = self.trial.as_mut() {
                    t.set_cursor(self.cursor);
                }
                Ok(())
            }
            Ok(ClientMessage::Cursor { .. }) => self.warn("cursor coordinates must be finite".into()),
            Ok(ClientMessage::Start { method }) => {
                if self.trial.is_some() {
                    self.warn("a trial is already running; send reset to restart".into())
                } else {
                    self.start(method)
                }
            }
            Ok(ClientMessage::Reset { method }) => {
                self.finish(true)?;
                self.start(method)
            }
            Err(e) => self.warn(format!("ignored message: {e}")),
        }
    }

    /// Drains queued input. Returns false once the client is gone.
    fn drain(&mut self) -> Result<bool> {
        loop {
            match self.ws.read() {
                Ok(Message::Text(t)) => self.handle(&t)?,
                Ok(Message::Close(_)) => return Ok(false),
                Ok(Message::Binary(_)) => self.warn("binary messages are not supported".into())?,
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if e.kind() == ErrorKind::WouldBlock => return Ok(true),
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(false),
                Err(tungstenite::Error::Protocol(_)) => return Ok(false),
                Err(e) => return Err(ws_err(e)),
            }
        }
    }

    fn run(&mut self) -> Result<()> {
        let dt = Duration::from_secs_f64(self.live.dt_s);
        let mut deadline = Instant::now();
        loop {
            if !self.drain()? {
                return self.finish(false);
            }
            let frame = match self.trial.as_mut() {
                Some(t) => t.step().cloned().map(|e| ServerMessage::frame(&e, t)),
                None => None,
            };
            match frame {
                Some(msg) => self.send(&msg)?,
                None if self.trial.is_some() => self.finish(true)?,
                None => thread::sleep(Duration::from_millis(1)),
            }
            if let Err(e) = self.ws.flush() {
                match e {
                    tungstenite::Error::Io(ref io) if io.kind() == ErrorKind::WouldBlock => {}
                    tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed => return self.finish(false),
                    e => return Err(ws_err(e)),
                }
            }
            if self.opts.realtime && self.trial.is_some() {
                deadline += dt;
                let now = Instant::now();
                if deadline > now {
                    thread::sleep(deadline - now);
                } else {
                    deadline = now;
                }
            } else {
                deadline = Instant::now();
            }
        }
    }
}

fn run_connection(stream: TcpStream, template: &Scenario, opts: &ServeOptions, id: usize) -> Result<()> {
    let ws = tungstenite::accept(stream).map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    ws.get_ref().set_nonblocking(true)?;
    let live = live_scenario(template);
    let cursor = live.human_track.spawn();
    let mut session = Session { ws, live, opts: opts.clone(), id, trials: 0, trial: None, cursor, method: opts.default_method };
    let res = session.run();
    // a dropped socket still leaves a record behind
    let saved = session.finish(false);
    res.and(saved)
}
