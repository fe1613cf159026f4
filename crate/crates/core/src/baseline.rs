//! Velocity tracking and the two comparison decision makers: a conservative
//! stop-and-wait policy (NIA) and a rule-based intention-aware policy (RBDM).

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::scenario::{is_ped_passed, is_veh_passed, ControllerParams, JointState, ScenarioGeometry, ZoneLabel};

/// Below this speed (m/s) an agent counts as standing.
pub const STANDSTILL_SPEED: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    /// Proportional gain of the velocity tracker (1/s).
    pub k_p: f64,
    /// Reference speed while creeping past a waiting pedestrian.
    pub slow_speed: f64,
    /// Deceleration used for stops when the distance allows it.
    pub comfort_decel: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { k_p: 1.0, slow_speed: 3.0, comfort_decel: 2.5 }
    }
}

impl BaselineParams {
    pub fn validate(&self, params: &ControllerParams) -> Result<(), ConfigError> {
        if !(self.k_p > 0.0 && self.k_p.is_finite()) {
            return Err(ConfigError::invalid("baseline.k_p", "must be > 0"));
        }
        if !(self.slow_speed > 0.0 && self.slow_speed < params.v_veh_ref) {
            return Err(ConfigError::invalid("baseline.slow_speed", "must lie in (0, v_veh_ref)"));
        }
        if !(self.comfort_decel > 0.0 && self.comfort_decel <= -params.a_min) {
            return Err(ConfigError::invalid("baseline.comfort_decel", "must lie in (0, -a_min]"));
        }
        Ok(())
    }
}

fn track_speed(v: f64, target: f64, k_p: f64, params: &ControllerParams) -> f64 {
    (k_p * (target - v)).clamp(params.a_min, params.a_max)
}

/// Proportional law towards `v_veh_ref`, saturated at the acceleration limits.
pub fn velocity_tracking(state: &JointState, params: &ControllerParams, k_p: f64) -> f64 {
    track_speed(state.v_veh, params.v_veh_ref, k_p, params)
}

/// Acceleration that brings the vehicle to rest `standoff` before the
/// conflict point. With `comfort` set the vehicle brakes at least that hard
/// (and stops early); without it the deceleration is just what the distance
/// requires. Returns `None` once the vehicle can no longer stop before the
/// conflict point at all.
pub fn stop_command(
    state: &JointState,
    geometry: &ScenarioGeometry,
    params: &ControllerParams,
    standoff: f64,
    comfort: Option<f64>,
) -> Option<f64> {
    let v = state.v_veh;
    if v < STANDSTILL_SPEED {
        return Some((-v / params.dt).max(params.a_min));
    }
    let gap = geometry.conflict_x - state.x_veh;
    if gap <= 0.0 || v * v / (2.0 * gap) > -params.a_min {
        return None;
    }
    let dist = gap - standoff;
    if dist <= 0.05 {
        return Some(params.a_min);
    }
    let required = v * v / (2.0 * dist);
    let decel = match comfort {
        Some(c) => required.max(c),
        None => required,
    };
    Some((-decel).max(params.a_min))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NiaMode {
    Cruise,
    Stopped,
    Resuming,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NiaState {
    pub mode: NiaMode,
    /// Seconds spent at standstill in the current stop.
    pub stop_clock: f64,
}

impl Default for NiaState {
    fn default() -> Self {
        Self { mode: NiaMode::Cruise, stop_clock: 0.0 }
    }
}

/// One NIA tick. The intention signal is deliberately not an input.
#[allow(clippy::too_many_arguments)]
pub fn nia_decide(
    state: &JointState,
    zone: ZoneLabel,
    ttc: f64,
    nia: &mut NiaState,
    dt: f64,
    geometry: &ScenarioGeometry,
    params: &ControllerParams,
    baseline: &BaselineParams,
) -> f64 {
    let passed = is_ped_passed(state, geometry) || is_veh_passed(state, geometry);
    let cruise = velocity_tracking(state, params, baseline.k_p);
    if passed {
        *nia = NiaState::default();
        return cruise;
    }
    let stop = || stop_command(state, geometry, params, params.d_min, Some(baseline.comfort_decel));
    match nia.mode {
        NiaMode::Cruise => {
            if matches!(zone, ZoneLabel::Near | ZoneLabel::Crossing) && ttc < params.ttc_threshold {
                if let Some(u) = stop() {
                    *nia = NiaState { mode: NiaMode::Stopped, stop_clock: 0.0 };
                    return u;
                }
            }
            cruise
        }
        NiaMode::Stopped => {
            if state.v_veh < STANDSTILL_SPEED {
                nia.stop_clock += dt;
            }
            if nia.stop_clock >= params.t_nia && zone != ZoneLabel::Crossing {
                nia.mode = NiaMode::Resuming;
                return track_speed(state.v_veh, baseline.slow_speed, baseline.k_p, params);
            }
            match stop() {
                Some(u) => u,
                None => {
                    *nia = NiaState::default();
                    cruise
                }
            }
        }
        NiaMode::Resuming => {
            if zone == ZoneLabel::Crossing {
                if let Some(u) = stop() {
                    *nia = NiaState { mode: NiaMode::Stopped, stop_clock: 0.0 };
                    return u;
                }
            }
            track_speed(state.v_veh, baseline.slow_speed, baseline.k_p, params)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbdmRuleSet {
    pub ttc_threshold: f64,
    pub intention_threshold: f64,
    pub slow_speed: f64,
}

impl RbdmRuleSet {
    pub fn from_params(params: &ControllerParams, baseline: &BaselineParams) -> Self {
        Self {
            ttc_threshold: params.ttc_threshold,
            intention_threshold: params.intention_threshold,
            slow_speed: baseline.slow_speed,
        }
    }
}

/// Which RBDM rule produced the command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbdmRule {
    /// (a) pedestrian on the road: stop.
    Stop,
    /// (b) pedestrian signals and the gap is short: decelerate to a stop.
    Decelerate,
    /// (c) pedestrian signals from the curb with a comfortable gap: slow down.
    Slow,
    /// (d) no interaction: track the reference speed.
    Track,
    /// Waited `t_nia` for a standing pedestrian: creep past.
    Resume,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RbdmState {
    /// Rule (b) stays latched while the pedestrian keeps signalling from the
    /// curb.
    pub yielding: bool,
    pub stand_clock: f64,
    pub resumed: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn rbdm_decide(
    state: &JointState,
    intention: f64,
    zone: ZoneLabel,
    ttc: f64,
    rules: &RbdmRuleSet,
    rbdm: &mut RbdmState,
    dt: f64,
    geometry: &ScenarioGeometry,
    params: &ControllerParams,
    baseline: &BaselineParams,
) -> (f64, RbdmRule) {
    let cruise = velocity_tracking(state, params, baseline.k_p);
    if is_ped_passed(state, geometry) || is_veh_passed(state, geometry) {
        *rbdm = RbdmState::default();
        return (cruise, RbdmRule::Track);
    }
    if zone == ZoneLabel::Crossing {
        rbdm.yielding = false;
        rbdm.resumed = false;
        rbdm.stand_clock = 0.0;
        let u = stop_command(state, geometry, params, params.d_min, Some(baseline.comfort_decel));
        return (u.unwrap_or(cruise), RbdmRule::Stop);
    }

    let at_curb = matches!(zone, ZoneLabel::Safe | ZoneLabel::Near);
    let signalling = intention > rules.intention_threshold;
    if !(at_curb && signalling) {
        rbdm.yielding = false;
    }
    let rule_b = at_curb && signalling && (ttc < rules.ttc_threshold || rbdm.yielding);
    let rule_c = !rule_b && zone == ZoneLabel::Near && signalling;

    if rule_b || rule_c {
        let both_standing = state.v_veh < STANDSTILL_SPEED && state.v_ped.abs() < STANDSTILL_SPEED;
        if both_standing {
            rbdm.stand_clock += dt;
        } else if state.v_ped.abs() >= STANDSTILL_SPEED {
            rbdm.stand_clock = 0.0;
        }
        if rbdm.stand_clock >= params.t_nia {
            rbdm.resumed = true;
        }
    } else {
        rbdm.stand_clock = 0.0;
        rbdm.resumed = false;
    }

    if rbdm.resumed {
        return (track_speed(state.v_veh, rules.slow_speed, baseline.k_p, params), RbdmRule::Resume);
    }
    if rule_b {
        rbdm.yielding = true;
        return match stop_command(state, geometry, params, params.d_min, None) {
            Some(u) => (u, RbdmRule::Decelerate),
            None => (cruise, RbdmRule::Decelerate),
        };
    }
    if rule_c {
        return (track_speed(state.v_veh, rules.slow_speed, baseline.k_p, params), RbdmRule::Slow);
    }
    (cruise, RbdmRule::Track)
}
