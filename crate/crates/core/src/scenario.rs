//! Shared domain types and the crossing geometry.
//!
//! Coordinates follow one convention throughout the crate: the conflict point
//! sits at the origin, the vehicle drives along `+x` (negative `x_veh` before
//! the conflict) and the pedestrian walks along `+y` (negative `y_ped` before
//! the conflict). All lengths are meters, all times seconds.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Joint vehicle/pedestrian state `[x_veh, v_veh, y_ped, v_ped]` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub t: f64,
    pub x_veh: f64,
    pub v_veh: f64,
    pub y_ped: f64,
    pub v_ped: f64,
}

impl JointState {
    pub fn new(t: f64, x_veh: f64, v_veh: f64, y_ped: f64, v_ped: f64) -> Self {
        Self { t, x_veh, v_veh, y_ped, v_ped }
    }

    /// The four dynamic components, in model order.
    pub fn vector(&self) -> [f64; 4] {
        [self.x_veh, self.v_veh, self.y_ped, self.v_ped]
    }

    pub fn from_vector(t: f64, v: [f64; 4]) -> Self {
        Self::new(t, v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.vector().iter().all(|c| c.is_finite())
    }
}

/// Half-open interval `[lo, hi)` on the pedestrian axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v < self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

impl From<[f64; 2]> for Interval {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Which band of the crossing path the pedestrian is in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneLabel {
    Approach,
    Safe,
    Near,
    Crossing,
    Passed,
}

/// Fixed crossing layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioGeometry {
    pub conflict_x: f64,
    pub conflict_y: f64,
    /// Road-axis coordinate of the pedestrian's crossing line.
    pub x_ped_path: f64,
    /// Crossing-axis coordinate of the vehicle lane center.
    pub y_veh_lane: f64,
    pub safe_zone: Interval,
    pub near_zone: Interval,
    pub crossing_zone: Interval,
    pub road_half_width: f64,
    /// Distance past `conflict_x` after which the vehicle counts as through.
    pub veh_clearance: f64,
}

impl Default for ScenarioGeometry {
    fn default() -> Self {
        Self {
            conflict_x: 0.0,
            conflict_y: 0.0,
            x_ped_path: 0.0,
            y_veh_lane: 0.0,
            safe_zone: Interval::new(-7.0, -4.0),
            near_zone: Interval::new(-4.0, -2.0),
            crossing_zone: Interval::new(-2.0, 2.0),
            road_half_width: 2.0,
            veh_clearance: 2.0,
        }
    }
}

impl ScenarioGeometry {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let zones = [
            ("geometry.safe_zone", self.safe_zone),
            ("geometry.near_zone", self.near_zone),
            ("geometry.crossing_zone", self.crossing_zone),
        ];
        for (name, z) in zones {
            if !(z.lo.is_finite() && z.hi.is_finite() && z.lo < z.hi) {
                return Err(ConfigError::invalid(name, "interval needs finite lo < hi"));
            }
        }
        if self.safe_zone.hi > self.near_zone.lo {
            return Err(ConfigError::invalid(
                "geometry.near_zone",
                "must start at or after the end of safe_zone",
            ));
        }
        if self.near_zone.hi > self.crossing_zone.lo {
            return Err(ConfigError::invalid(
                "geometry.crossing_zone",
                "must start at or after the end of near_zone",
            ));
        }
        if !self.crossing_zone.contains(self.conflict_y) {
            return Err(ConfigError::invalid(
                "geometry.conflict_y",
                "conflict point must lie inside crossing_zone",
            ));
        }
        for (name, v) in [
            ("geometry.conflict_x", self.conflict_x),
            ("geometry.x_ped_path", self.x_ped_path),
            ("geometry.y_veh_lane", self.y_veh_lane),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::invalid(name, "must be finite"));
            }
        }
        if !(self.road_half_width > 0.0) {
            return Err(ConfigError::invalid("geometry.road_half_width", "must be > 0"));
        }
        if !(self.veh_clearance >= 0.0) {
            return Err(ConfigError::invalid("geometry.veh_clearance", "must be >= 0"));
        }
        Ok(())
    }

    /// Remaining distance of the vehicle to the conflict point, clamped at 0.
    pub fn veh_gap(&self, x_veh: f64) -> f64 {
        (self.conflict_x - x_veh).max(0.0)
    }

    /// Remaining distance of the pedestrian to the conflict point, clamped at 0.
    pub fn ped_gap(&self, y_ped: f64) -> f64 {
        (self.conflict_y - y_ped).max(0.0)
    }

    /// Squared separation of the two agents in the conflict-point frame.
    pub fn separation_sq(&self, x_veh: f64, y_ped: f64) -> f64 {
        let dx = x_veh - self.conflict_x;
        let dy = y_ped - self.conflict_y;
        dx * dx + dy * dy
    }
}

pub fn classify_zone(y_ped: f64, geometry: &ScenarioGeometry) -> ZoneLabel {
    if y_ped < geometry.safe_zone.lo {
        ZoneLabel::Approach
    } else if y_ped < geometry.near_zone.lo {
        ZoneLabel::Safe
    } else if y_ped < geometry.crossing_zone.lo {
        ZoneLabel::Near
    } else if y_ped < geometry.crossing_zone.hi {
        ZoneLabel::Crossing
    } else {
        ZoneLabel::Passed
    }
}

pub fn is_ped_passed(state: &JointState, geometry: &ScenarioGeometry) -> bool {
    state.y_ped >= geometry.crossing_zone.hi
}

pub fn is_veh_passed(state: &JointState, geometry: &ScenarioGeometry) -> bool {
    state.x_veh > geometry.conflict_x + geometry.veh_clearance
}

/// Interaction onset test: the pedestrian has reached the safe zone while the
/// vehicle, not yet past, is within `sensing_range` of the conflict point.
pub fn interaction_active(state: &JointState, geometry: &ScenarioGeometry, sensing_range: f64) -> bool {
    classify_zone(state.y_ped, geometry) >= ZoneLabel::Safe
        && geometry.conflict_x - state.x_veh <= sensing_range
        && !is_veh_passed(state, geometry)
}

/// Tunable parameters shared by the decision makers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    pub w_safe: f64,
    pub w_com: f64,
    pub w_ref_ped: f64,
    pub w_ref_veh: f64,
    pub d_min: f64,
    /// Discount rate of the standing pedestrian's intention (1/s).
    pub k_d: f64,
    pub v_veh_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    /// Sigmoid offset of the pedestrian speed model (s).
    pub c: f64,
    pub v_ped_ref: f64,
    /// Prediction horizon in steps.
    pub horizon: usize,
    /// Controller step (s).
    pub dt: f64,
    pub v_veh_ref: f64,
    pub t_nia: f64,
    pub ttc_threshold: f64,
    pub intention_threshold: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            w_safe: 5000.0,
            w_com: 1.0,
            w_ref_ped: 2.0,
            w_ref_veh: 1.0,
            d_min: 4.0,
            k_d: 1.0,
            v_veh_max: 13.9,
            a_min: -4.0,
            a_max: 2.0,
            c: 2.0,
            v_ped_ref: 1.4,
            horizon: 20,
            dt: 0.2,
            v_veh_ref: 8.33,
            t_nia: 6.0,
            ttc_threshold: 4.0,
            intention_threshold: 0.5,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let nonneg = [
            ("controller.w_safe", self.w_safe),
            ("controller.w_com", self.w_com),
            ("controller.w_ref_ped", self.w_ref_ped),
            ("controller.w_ref_veh", self.w_ref_veh),
            ("controller.k_d", self.k_d),
            ("controller.t_nia", self.t_nia),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::invalid(name, "must be finite and >= 0"));
            }
        }
        let positive = [
            ("controller.d_min", self.d_min),
            ("controller.dt", self.dt),
            ("controller.v_ped_ref", self.v_ped_ref),
            ("controller.v_veh_max", self.v_veh_max),
            ("controller.ttc_threshold", self.ttc_threshold),
            ("controller.intention_threshold", self.intention_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(name, "must be finite and > 0"));
            }
        }
        if !(self.a_min.is_finite() && self.a_min < 0.0) {
            return Err(ConfigError::invalid("controller.a_min", "must be < 0"));
        }
        if !(self.a_max.is_finite() && self.a_max > 0.0) {
            return Err(ConfigError::invalid("controller.a_max", "must be > 0"));
        }
        if self.horizon < 1 {
            return Err(ConfigError::invalid("controller.horizon", "must be >= 1"));
        }
        if !self.c.is_finite() {
            return Err(ConfigError::invalid("controller.c", "must be finite"));
        }
        if !(self.v_veh_ref.is_finite() && self.v_veh_ref >= 0.0 && self.v_veh_ref <= self.v_veh_max)
        {
            return Err(ConfigError::invalid(
                "controller.v_veh_ref",
                "must lie in [0, v_veh_max]",
            ));
        }
        if self.intention_threshold > 1.0 {
            return Err(ConfigError::invalid(
                "controller.intention_threshold",
                "must lie in (0, 1]",
            ));
        }
        Ok(())
    }
}
