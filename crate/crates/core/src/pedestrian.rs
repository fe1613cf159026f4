//! Gap-acceptance style pedestrian speed model and intention discounting.

use serde::{Deserialize, Serialize};

use crate::scenario::{JointState, ScenarioGeometry};

/// Explicit crossing-intention signal and the time it was latched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentionSignal {
    pub value: f64,
    pub t0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedModelParams {
    pub c: f64,
    pub v_ped_ref: f64,
    pub k_d: f64,
    /// Floor on the vehicle speed used as a TTC divisor.
    pub v_eps: f64,
}

impl PedModelParams {
    pub const DEFAULT_V_EPS: f64 = 0.05;
}

/// Crossing likelihood `1 / (1 + exp(-ttc + c))`.
///
/// Written in the numerically stable two-branch form so that extreme
/// arguments saturate instead of producing `NaN`.
pub fn crossing_gain(ttc: f64, c: f64) -> f64 {
    let z = ttc - c;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Time-gap between the vehicle reaching the crossing line and the pedestrian
/// reaching the lane center, as the pedestrian model perceives it.
pub fn ttc_mpc(state: &JointState, geometry: &ScenarioGeometry, params: &PedModelParams) -> f64 {
    let veh_time = (geometry.x_ped_path - state.x_veh) / state.v_veh.max(params.v_eps);
    let ped_time = (geometry.y_veh_lane - state.y_ped) / params.v_ped_ref;
    veh_time - ped_time
}

/// Pedestrian speed at the next step.
pub fn ped_next_velocity(state: &JointState, geometry: &ScenarioGeometry, params: &PedModelParams) -> f64 {
    crossing_gain(ttc_mpc(state, geometry, params), params.c) * params.v_ped_ref
}

/// `I(t0) * 0.9^(K_d (t - t0))`.
///
/// Panics in debug builds when `t < t0`; release builds clamp the elapsed time
/// at zero.
pub fn discount_intention(signal: IntentionSignal, k_d: f64, t: f64) -> f64 {
    debug_assert!(t >= signal.t0, "discount evaluated before its onset");
    let elapsed = (t - signal.t0).max(0.0);
    signal.value * 0.9f64.powf(k_d * elapsed)
}
