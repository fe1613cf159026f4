//! Fixed-step closed loop: controller, pedestrian policy and plant.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::decision::{Controller, ControllerDiag, ControllerKind, ControllerSetup, Decision};
use crate::error::{ConfigError, SimError};
use crate::scenario::{
    classify_zone, interaction_active, is_ped_passed, is_veh_passed, JointState, ScenarioGeometry, ZoneLabel,
};

use super::policy::{PedPhase, PedestrianPolicy, ScenarioScript, ScriptedPedestrian};

/// Plant and episode settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt_sim: f64,
    pub t_max: f64,
    /// Time constant of the pedestrian's speed lag (s).
    pub ped_tau: f64,
    pub x_veh0: f64,
    /// Initial vehicle speed; the reference speed when absent.
    pub v_veh0: Option<f64>,
    pub y_ped0: f64,
    pub v_ped0: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt_sim: 0.05, t_max: 120.0, ped_tau: 0.3, x_veh0: -45.0, v_veh0: None, y_ped0: -6.5, v_ped0: 1.2 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt_sim > 0.0 && self.dt_sim.is_finite()) {
            return Err(ConfigError::invalid("sim.dt_sim", "must be > 0"));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(ConfigError::invalid("sim.t_max", "must be > 0"));
        }
        if !(self.ped_tau > 0.0 && self.ped_tau.is_finite()) {
            return Err(ConfigError::invalid("sim.ped_tau", "must be > 0"));
        }
        if let Some(v) = self.v_veh0 {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid("sim.v_veh0", "must be >= 0"));
            }
        }
        if !(self.x_veh0.is_finite() && self.y_ped0.is_finite() && self.v_ped0.is_finite()) {
            return Err(ConfigError::invalid("sim", "initial state must be finite"));
        }
        Ok(())
    }

    /// Plant ticks per controller tick.
    pub fn cadence(&self, ctrl_dt: f64) -> Result<u64, SimError> {
        let ratio = ctrl_dt / self.dt_sim;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-6 * ratio.max(1.0) {
            return Err(SimError::Cadence { ctrl_dt, dt_sim: self.dt_sim });
        }
        Ok(k as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    PedFirst,
    VehFirst,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    pub state: JointState,
    /// Commanded acceleration held over this tick.
    pub u: f64,
    pub target_speed: f64,
    pub intention_raw: f64,
    pub intention_eff: f64,
    pub zone: ZoneLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PedPhase>,
    /// Present on controller ticks only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag: Option<ControllerDiag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub scenario: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub dt_sim: f64,
    pub records: Vec<TickRecord>,
    /// Interaction onset, if it happened.
    pub t0: Option<f64>,
    pub t_end: f64,
    pub outcome: Outcome,
    /// Minimum agent separation in the conflict-point frame.
    pub min_separation: f64,
    pub collision: bool,
}

/// Exact double-integrator step with the speed held in `[0, v_max]`.
pub fn integrate_vehicle(x: f64, v: f64, u: f64, dt: f64, v_max: f64) -> (f64, f64) {
    let v_end = v + u * dt;
    if u < 0.0 && v_end < 0.0 {
        let ts = v / -u;
        (x + v * ts + 0.5 * u * ts * ts, 0.0)
    } else if u > 0.0 && v_end > v_max {
        let ts = ((v_max - v) / u).max(0.0);
        (x + v * ts + 0.5 * u * ts * ts + v_max * (dt - ts), v_max)
    } else {
        (x + v * dt + 0.5 * u * dt * dt, v_end)
    }
}

/// Exact first-order lag towards `target` over `dt`.
pub fn integrate_pedestrian(y: f64, v: f64, target: f64, dt: f64, tau: f64) -> (f64, f64) {
    let decay = (-dt / tau).exp();
    let dv = v - target;
    (y + target * dt + dv * tau * (1.0 - decay), target + dv * decay)
}

/// Tick-by-tick episode driver, shared by batch runs and live sessions.
#[derive(Debug, Clone)]
pub struct EpisodeStepper {
    controller: Controller,
    sim: SimConfig,
    every: u64,
    state: JointState,
    tick: u64,
    decision: Option<Decision>,
    onset: Option<f64>,
    records: Vec<TickRecord>,
    finished: Option<Outcome>,
    min_sep_sq: f64,
    collision: bool,
    solve_budget: Option<Duration>,
    overrun: bool,
}

impl EpisodeStepper {
    pub fn new(kind: ControllerKind, setup: ControllerSetup, sim: SimConfig) -> Result<Self, SimError> {
        sim.validate()?;
        setup.params.validate()?;
        setup.geometry.validate()?;
        let every = sim.cadence(setup.params.dt)?;
        let state = JointState::new(
            0.0,
            sim.x_veh0,
            sim.v_veh0.unwrap_or(setup.params.v_veh_ref),
            sim.y_ped0,
            sim.v_ped0,
        );
        Ok(Self {
            controller: Controller::new(kind, setup),
            sim,
            every,
            state,
            tick: 0,
            decision: None,
            onset: None,
            records: Vec::new(),
            finished: None,
            min_sep_sq: f64::INFINITY,
            collision: false,
            solve_budget: None,
            overrun: false,
        })
    }

    /// Wall-clock budget per controller call. A decision that takes longer is
    /// discarded and the previous command held; see [`Self::overrun`].
    pub fn set_solve_budget(&mut self, budget: Option<Duration>) {
        self.solve_budget = budget;
    }

    /// Whether the last controller call overran its budget.
    pub fn overrun(&self) -> bool {
        self.overrun
    }

    pub fn state(&self) -> &JointState {
        &self.state
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.finished
    }

    pub fn records(&self) -> &[TickRecord] {
        &self.records
    }

    pub fn geometry(&self) -> &ScenarioGeometry {
        &self.controller.setup().geometry
    }

    pub fn controller_kind(&self) -> ControllerKind {
        self.controller.kind()
    }

    /// Records the current tick (deciding on controller ticks), checks
    /// termination and, unless finished, advances the plant by `dt_sim`.
    pub fn step(&mut self, target_speed: f64, intention_raw: f64, phase: Option<PedPhase>) -> Result<&TickRecord, SimError> {
        assert!(self.finished.is_none(), "episode already finished");
        let s = self.state;
        let geometry = self.controller.setup().geometry.clone();
        let sensing = self.controller.setup().mpc.sensing_range;
        if self.tick % self.every == 0 || self.decision.is_none() {
            let started = Instant::now();
            let d = self.controller.decide(&s, intention_raw);
            if !d.u.is_finite() {
                return Err(SimError::NonFinite { t: s.t });
            }
            self.overrun = self.solve_budget.is_some_and(|b| started.elapsed() > b) && self.decision.is_some();
            if !self.overrun {
                self.decision = Some(d);
            }
        }
        let on_ctrl_tick = self.tick % self.every == 0;
        let decision = self.decision.as_ref().expect("decided above");
        if self.onset.is_none() && interaction_active(&s, &geometry, sensing) {
            self.onset = Some(s.t);
        }
        self.min_sep_sq = self.min_sep_sq.min(geometry.separation_sq(s.x_veh, s.y_ped));
        if (s.x_veh - geometry.conflict_x).abs() < 0.5 && (s.y_ped - geometry.conflict_y).abs() < 0.5 {
            self.collision = true;
        }
        self.records.push(TickRecord {
            tick: self.tick,
            t: s.t,
            state: s,
            u: decision.u,
            target_speed,
            intention_raw,
            intention_eff: decision.intention_eff,
            zone: classify_zone(s.y_ped, &geometry),
            phase,
            diag: on_ctrl_tick.then(|| decision.diag.clone()),
        });

        let ped_passed = is_ped_passed(&s, &geometry);
        let veh_passed = is_veh_passed(&s, &geometry);
        if self.onset.is_some() && (ped_passed || veh_passed) {
            self.finished = Some(if ped_passed { Outcome::PedFirst } else { Outcome::VehFirst });
        } else if s.t >= self.sim.t_max - 1e-9 {
            self.finished = Some(Outcome::Timeout);
        } else {
            let dt = self.sim.dt_sim;
            let (x, v) = integrate_vehicle(s.x_veh, s.v_veh, decision.u, dt, self.controller.setup().params.v_veh_max);
            let (y, vp) = integrate_pedestrian(s.y_ped, s.v_ped, target_speed, dt, self.sim.ped_tau);
            self.tick += 1;
            self.state = JointState::new(self.tick as f64 * dt, x, v, y, vp);
            if !self.state.is_finite() {
                return Err(SimError::NonFinite { t: self.state.t });
            }
        }
        Ok(self.records.last().expect("just pushed"))
    }

    /// Consumes the stepper. Unfinished episodes are reported as timeouts at
    /// the last recorded tick.
    pub fn into_trace(self, scenario: impl Into<String>, seed: u64) -> EpisodeTrace {
        let t_end = self.records.last().map_or(0.0, |r| r.t);
        EpisodeTrace {
            scenario: scenario.into(),
            controller: self.controller.kind(),
            seed,
            dt_sim: self.sim.dt_sim,
            records: self.records,
            t0: self.onset,
            t_end,
            outcome: self.finished.unwrap_or(Outcome::Timeout),
            min_separation: self.min_sep_sq.sqrt(),
            collision: self.collision,
        }
    }
}

/// Runs one episode against an arbitrary pedestrian policy.
pub fn run_episode_with(
    policy: &mut dyn PedestrianPolicy,
    scenario: &str,
    seed: u64,
    kind: ControllerKind,
    setup: &ControllerSetup,
    sim: &SimConfig,
) -> Result<EpisodeTrace, SimError> {
    let mut stepper = EpisodeStepper::new(kind, setup.clone(), sim.clone())?;
    while stepper.outcome().is_none() {
        let s = *stepper.state();
        let (target, intention) = policy.command(&s, sim.dt_sim);
        stepper.step(target, intention, policy.phase())?;
    }
    Ok(stepper.into_trace(scenario, seed))
}

/// Runs one scripted episode. The script's seed becomes the trace seed.
pub fn run_episode(
    script: &ScenarioScript,
    kind: ControllerKind,
    setup: &ControllerSetup,
    sim: &SimConfig,
) -> Result<EpisodeTrace, SimError> {
    script.params.validate(&setup.geometry)?;
    let mut ped = ScriptedPedestrian::new(script.clone(), setup.geometry.clone(), sim.ped_tau, setup.metrics.kappa);
    run_episode_with(&mut ped, script.kind.as_str(), script.rng_seed, kind, setup, sim)
}
