//! Live sessions in which a person plays the pedestrian.
//!
//! The session is transport-agnostic: a driver feeds it decoded
//! [`ClientMessage`]s and calls [`session_tick`] at the plant rate, sending
//! whatever [`ServerMessage`]s come back. In tests the tick clock is purely
//! logical.
//!
//! Wire format: JSON objects tagged by `"type"`.
//!
//! Client to server:
//!
//! | type                | fields                                                  |
//! |---------------------|---------------------------------------------------------|
//! | `join_session`      | `controller` (optional): `"iampdm"` \| `"rbdm"` \| `"nia"` |
//! | `ped_input`         | `target_speed` (m/s, clamped to [-0.5, 2]), `intention` (clamped to [0, 1]) |
//! | `reset`             |                                                         |
//! | `select_controller` | `controller`; takes effect at the next reset            |
//!
//! Server to client:
//!
//! | type          | fields |
//! |---------------|--------|
//! | `welcome`     | `schema_version`, `session_id`, `controller`, `dt_sim` |
//! | `tick`        | `seq`, `t`, `state`, `zone`, `u`, `target_speed`, `intention_raw`, `intention_eff`, `ttc`, `dst`, `input_clamped`, `held_command` |
//! | `episode_end` | `t_end`, `ttc_avg`, `dst_avg`, `outcome` |
//! | `error`       | `code`, `message` |

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::decision::ControllerKind;
use crate::error::SimError;
use crate::metrics::{dst_metric_with, episode_averages, ttc_metric_with};
use crate::scenario::{JointState, ZoneLabel};
use crate::sim::{EpisodeStepper, EpisodeTrace, Outcome, SimConfig};

pub const SESSION_SCHEMA_VERSION: u32 = 1;
pub const TARGET_SPEED_RANGE: (f64, f64) = (-0.5, 2.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    JoinSession {
        /// Falls back to the server's default controller.
        #[serde(default)]
        controller: Option<ControllerKind>,
    },
    PedInput { target_speed: f64, intention: f64 },
    Reset {},
    SelectController { controller: ControllerKind },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome { schema_version: u32, session_id: u64, controller: ControllerKind, dt_sim: f64 },
    Tick {
        seq: u64,
        t: f64,
        state: JointState,
        zone: ZoneLabel,
        u: f64,
        target_speed: f64,
        intention_raw: f64,
        intention_eff: f64,
        ttc: f64,
        dst: f64,
        /// The last input was outside its range and has been clamped.
        input_clamped: bool,
        /// The controller overran its time slot; the previous command is held.
        held_command: bool,
    },
    EpisodeEnd { t_end: f64, ttc_avg: f64, dst_avg: f64, outcome: Outcome },
    Error { code: String, message: String },
}

impl ServerMessage {
    fn error(code: &str, message: impl Into<String>) -> Self {
        ServerMessage::Error { code: code.to_owned(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedInput {
    pub target_speed: f64,
    pub intention: f64,
}

/// Session-specific overrides of the plant settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOptions {
    /// The pedestrian starts standing in the approach area.
    pub y_ped0: f64,
    /// Wall-clock budget per controller call; `None` in test mode.
    pub solve_budget: Option<Duration>,
    pub default_controller: ControllerKind,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self { y_ped0: -8.0, solve_budget: None, default_controller: ControllerKind::Iampdm }
    }
}

pub struct SessionState {
    pub id: u64,
    config: Config,
    options: SessionOptions,
    controller: ControllerKind,
    pending_controller: Option<ControllerKind>,
    stepper: Option<EpisodeStepper>,
    last_trace: Option<EpisodeTrace>,
    input: PedInput,
    input_clamped: bool,
    seq: u64,
}

impl SessionState {
    pub fn new(id: u64, config: Config, options: SessionOptions) -> Self {
        Self {
            id,
            controller: options.default_controller,
            config,
            options,
            pending_controller: None,
            stepper: None,
            last_trace: None,
            input: PedInput { target_speed: 0.0, intention: 0.0 },
            input_clamped: false,
            seq: 0,
        }
    }

    pub fn joined(&self) -> bool {
        self.stepper.is_some() || self.last_trace.is_some()
    }

    pub fn controller(&self) -> ControllerKind {
        self.controller
    }

    fn sim_config(&self) -> SimConfig {
        SimConfig { y_ped0: self.options.y_ped0, v_ped0: 0.0, ..self.config.sim.clone() }
    }

    fn start_episode(&mut self) -> Result<(), SimError> {
        if let Some(k) = self.pending_controller.take() {
            self.controller = k;
        }
        let mut stepper = EpisodeStepper::new(self.controller, self.config.controller_setup(), self.sim_config())?;
        stepper.set_solve_budget(self.options.solve_budget);
        self.stepper = Some(stepper);
        self.last_trace = None;
        self.input = PedInput { target_speed: 0.0, intention: 0.0 };
        self.input_clamped = false;
        Ok(())
    }

    /// Applies one client message. Returns any immediate reply.
    pub fn handle(&mut self, msg: ClientMessage) -> Option<ServerMessage> {
        match msg {
            ClientMessage::JoinSession { controller } => {
                self.pending_controller = Some(controller.unwrap_or(self.controller));
                if let Err(e) = self.start_episode() {
                    return Some(ServerMessage::error("config", e.to_string()));
                }
                Some(ServerMessage::Welcome {
                    schema_version: SESSION_SCHEMA_VERSION,
                    session_id: self.id,
                    controller: self.controller,
                    dt_sim: self.config.sim.dt_sim,
                })
            }
            ClientMessage::PedInput { target_speed, intention } => {
                if !self.joined() {
                    return Some(ServerMessage::error("not_joined", "send join_session first"));
                }
                let ts = if target_speed.is_finite() { target_speed } else { 0.0 };
                let it = if intention.is_finite() { intention } else { 0.0 };
                let clamped = PedInput {
                    target_speed: ts.clamp(TARGET_SPEED_RANGE.0, TARGET_SPEED_RANGE.1),
                    intention: it.clamp(0.0, 1.0),
                };
                self.input_clamped = clamped.target_speed != target_speed || clamped.intention != intention;
                self.input = clamped;
                None
            }
            ClientMessage::Reset {} => {
                if !self.joined() {
                    return Some(ServerMessage::error("not_joined", "send join_session first"));
                }
                self.start_episode().err().map(|e| ServerMessage::error("config", e.to_string()))
            }
            ClientMessage::SelectController { controller } => {
                // never mid-episode
                self.pending_controller = Some(controller);
                None
            }
        }
    }

    /// Parses and applies a raw text frame.
    pub fn handle_text(&mut self, text: &str) -> Option<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => Some(ServerMessage::error("bad_message", e.to_string())),
        }
    }

    pub fn last_trace(&self) -> Option<&EpisodeTrace> {
        self.last_trace.as_ref()
    }
}

/// Advances the session by one plant step. Returns the tick message and, if
/// the episode just finished, its summary. Idle (not joined or finished)
/// sessions return nothing.
pub fn session_tick(session: &mut SessionState) -> Vec<ServerMessage> {
    let Some(stepper) = session.stepper.as_mut() else {
        return Vec::new();
    };
    let input = session.input;
    let record = match stepper.step(input.target_speed, input.intention, None) {
        Ok(r) => r.clone(),
        Err(e) => {
            session.stepper = None;
            return vec![ServerMessage::error("simulation", e.to_string())];
        }
    };
    let metrics = &session.config.metrics;
    let geometry = &session.config.geometry;
    session.seq += 1;
    let mut out = vec![ServerMessage::Tick {
        seq: session.seq,
        t: record.t,
        state: record.state,
        zone: record.zone,
        u: record.u,
        target_speed: record.target_speed,
        intention_raw: record.intention_raw,
        intention_eff: record.intention_eff,
        ttc: ttc_metric_with(&record.state, geometry, metrics),
        dst: dst_metric_with(&record.state, geometry, metrics),
        input_clamped: session.input_clamped,
        held_command: stepper.overrun(),
    }];
    if stepper.outcome().is_some() {
        let stepper = session.stepper.take().expect("checked above");
        let trace = stepper.into_trace("session", session.id);
        let (ttc_avg, dst_avg) = match episode_averages(&trace, geometry, metrics) {
            Ok(a) => (a.ttc_avg, a.dst_avg),
            Err(_) => (f64::NAN, f64::NAN),
        };
        out.push(ServerMessage::EpisodeEnd { t_end: trace.t_end, ttc_avg, dst_avg, outcome: trace.outcome });
        session.last_trace = Some(trace);
    }
    out
}

/// One scripted input: applied before the first tick at or after `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedInput {
    pub t: f64,
    pub target_speed: f64,
    pub intention: f64,
}

/// Drives a session with a fixed input script through the JSON wire format
/// and a logical clock. Returns the episode trace and every server message.
pub fn replay_client(
    script: &[TimedInput],
    controller: ControllerKind,
    config: &Config,
) -> Result<(EpisodeTrace, Vec<ServerMessage>), String> {
    let mut session = SessionState::new(0, config.clone(), SessionOptions::default());
    let mut received: Vec<ServerMessage> = Vec::new();
    let deliver = |msgs: Vec<ServerMessage>, received: &mut Vec<ServerMessage>| -> Result<(), String> {
        for m in msgs {
            let wire = serde_json::to_string(&m).map_err(|e| e.to_string())?;
            received.push(serde_json::from_str(&wire).map_err(|e| e.to_string())?);
        }
        Ok(())
    };
    let send = |session: &mut SessionState, msg: &ClientMessage| -> Vec<ServerMessage> {
        let wire = serde_json::to_string(msg).expect("client messages serialize");
        session.handle_text(&wire).into_iter().collect()
    };

    let reply = send(&mut session, &ClientMessage::JoinSession { controller: Some(controller) });
    deliver(reply, &mut received)?;
    let mut pending: Vec<TimedInput> = script.to_vec();
    pending.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut next = 0;
    let dt = config.sim.dt_sim;
    let mut tick: u64 = 0;
    loop {
        let now = tick as f64 * dt;
        while next < pending.len() && pending[next].t <= now + 1e-9 {
            let p = pending[next];
            let reply =
                send(&mut session, &ClientMessage::PedInput { target_speed: p.target_speed, intention: p.intention });
            deliver(reply, &mut received)?;
            next += 1;
        }
        let msgs = session_tick(&mut session);
        if msgs.is_empty() {
            return Err("session produced no tick".into());
        }
        let ended = msgs.iter().any(|m| matches!(m, ServerMessage::EpisodeEnd { .. }));
        if let Some(ServerMessage::Error { message, .. }) = msgs.iter().find(|m| matches!(m, ServerMessage::Error { .. })) {
            return Err(message.clone());
        }
        deliver(msgs, &mut received)?;
        if ended {
            break;
        }
        tick += 1;
    }
    let trace = session.last_trace.take().ok_or("episode ended without a trace")?;
    Ok((trace, received))
}
