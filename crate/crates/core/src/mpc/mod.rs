//! Interaction-aware model predictive decision making.
//!
//! [`cost`] evaluates the three-part objective over a predicted trajectory,
//! [`solver`] minimises it under the input, speed and separation constraints,
//! and [`controller`] wraps both in the receding-horizon decision loop with
//! intention modulation and discounting.

pub mod controller;
pub mod cost;
pub mod solver;

use serde::{Deserialize, Serialize};

use crate::dynamics::DisturbanceSequence;
use crate::scenario::{classify_zone, ControllerParams, JointState, ScenarioGeometry, ZoneLabel};

pub use controller::{IampdmController, IntentionTracker, MpcDiagnostics};
pub use cost::{eval_cost, CostBreakdown, CostModel};
pub use solver::{solve, MpcSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Re-evaluate the pedestrian model along every candidate trajectory.
    #[default]
    Rollout,
    /// Hold the pedestrian speeds from the previous solve and use the linear
    /// batch predictor.
    FrozenZ,
}

/// How the reference-tracking term treats speeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefCostForm {
    /// `w (v - v_ref)^2`
    #[default]
    Deviation,
    /// `w v^2`, the bare quadratic form over the state.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    #[default]
    Analytic,
    /// Central differences with step `fd_step`.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSettings {
    pub prediction_mode: PredictionMode,
    pub ref_form: RefCostForm,
    pub gradient: GradientMode,
    /// Floor on the summed squared separation inside the safety term (m^2).
    pub eps_safe: f64,
    pub fd_step: f64,
    /// Iteration cap per solver phase and start.
    pub max_iters: usize,
    pub tol: f64,
    /// Velocity floor in the pedestrian model's TTC.
    pub v_eps: f64,
    /// Vehicle distance within which an approaching pedestrian starts an
    /// interaction.
    pub sensing_range: f64,
    /// Pedestrian speed below which the pedestrian counts as standing.
    pub standstill_speed: f64,
}

impl Default for MpcSettings {
    fn default() -> Self {
        Self {
            prediction_mode: PredictionMode::Rollout,
            ref_form: RefCostForm::Deviation,
            gradient: GradientMode::Analytic,
            eps_safe: 1e-6,
            fd_step: 1e-4,
            max_iters: 60,
            tol: 1e-7,
            v_eps: 0.05,
            sensing_range: 50.0,
            standstill_speed: 0.05,
        }
    }
}

/// One optimisation instance.
#[derive(Debug, Clone)]
pub struct MpcProblem<'a> {
    pub x0: JointState,
    pub params: &'a ControllerParams,
    pub geometry: &'a ScenarioGeometry,
    pub intention_effective: f64,
    pub settings: &'a MpcSettings,
    /// Pedestrian speeds held fixed in [`PredictionMode::FrozenZ`].
    pub frozen_z: Option<DisturbanceSequence>,
}

impl<'a> MpcProblem<'a> {
    pub fn new(
        x0: JointState,
        params: &'a ControllerParams,
        geometry: &'a ScenarioGeometry,
        intention_effective: f64,
        settings: &'a MpcSettings,
    ) -> Self {
        Self { x0, params, geometry, intention_effective, settings, frozen_z: None }
    }

    pub fn zone(&self) -> ZoneLabel {
        classify_zone(self.x0.y_ped, self.geometry)
    }

    /// `(w_safe, d_min)` after intention modulation.
    pub fn effective_safety(&self) -> (f64, f64) {
        apply_intention(self.params, self.intention_effective, self.zone())
    }
}

/// Scales the safety weight and minimum distance by the intention unless the
/// pedestrian is already on the road.
pub fn apply_intention(params: &ControllerParams, intention: f64, zone: ZoneLabel) -> (f64, f64) {
    debug_assert!((0.0..=1.0).contains(&intention));
    if zone == ZoneLabel::Crossing {
        (params.w_safe, params.d_min)
    } else {
        (params.w_safe * intention, params.d_min * intention)
    }
}
