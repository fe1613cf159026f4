//! Receding-horizon IAMPDM decision loop.

use serde::{Deserialize, Serialize};

use crate::baseline::velocity_tracking;
use crate::dynamics::DisturbanceSequence;
use crate::error::SolveError;
use crate::pedestrian::{discount_intention, IntentionSignal};
use crate::scenario::{
    classify_zone, interaction_active, is_ped_passed, is_veh_passed, ControllerParams, JointState, ScenarioGeometry, ZoneLabel,
};

use super::solver::solve;
use super::{MpcProblem, MpcSettings, PredictionMode};

/// Latches the intention signal at interaction onset and discounts it while
/// the pedestrian stands at the curb.
///
/// Onset is the first tick at which the pedestrian has reached the safe zone
/// while the vehicle is within sensing range. A change of the raw signal
/// after onset re-latches `(I(t0), t0)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntentionTracker {
    onset: Option<f64>,
    latched: Option<IntentionSignal>,
}

impl IntentionTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn onset(&self) -> Option<f64> {
        self.onset
    }

    pub fn latched(&self) -> Option<IntentionSignal> {
        self.latched
    }

    /// Effective intention at `state.t`.
    pub fn update(
        &mut self,
        state: &JointState,
        raw: f64,
        geometry: &ScenarioGeometry,
        k_d: f64,
        settings: &MpcSettings,
    ) -> f64 {
        let raw = raw.clamp(0.0, 1.0);
        let zone = classify_zone(state.y_ped, geometry);
        if self.onset.is_none() {
            if interaction_active(state, geometry, settings.sensing_range) {
                self.onset = Some(state.t);
            } else {
                return raw;
            }
        }
        match self.latched {
            Some(sig) if sig.value == raw => {}
            _ => self.latched = Some(IntentionSignal { value: raw, t0: state.t }),
        }
        let standing = state.v_ped.abs() < settings.standstill_speed;
        match (self.latched, zone) {
            (Some(sig), ZoneLabel::Safe | ZoneLabel::Near) if standing => discount_intention(sig, k_d, state.t),
            _ => raw,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MpcStatus {
    Solved,
    /// No feasible sequence: full braking.
    Infeasible,
    /// One agent has cleared the conflict; plain speed tracking.
    Tracking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcDiagnostics {
    pub status: MpcStatus,
    pub intention_eff: f64,
    pub w_safe_eff: f64,
    pub d_min_eff: f64,
    pub cost_total: f64,
    pub cost_com: f64,
    pub cost_ref: f64,
    pub cost_safe: f64,
    pub solver_iters: usize,
    pub constraint_violation: f64,
    pub hit_max_iters: bool,
}

impl MpcDiagnostics {
    fn idle(status: MpcStatus, intention_eff: f64) -> Self {
        Self {
            status,
            intention_eff,
            w_safe_eff: 0.0,
            d_min_eff: 0.0,
            cost_total: 0.0,
            cost_com: 0.0,
            cost_ref: 0.0,
            cost_safe: 0.0,
            solver_iters: 0,
            constraint_violation: 0.0,
            hit_max_iters: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IampdmController {
    pub params: ControllerParams,
    pub geometry: ScenarioGeometry,
    pub settings: MpcSettings,
    k_p: f64,
    tracker: IntentionTracker,
    warm: Option<Vec<f64>>,
    frozen_z: Option<DisturbanceSequence>,
}

fn shifted(v: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().skip(1).copied().collect();
    out.push(*v.last().unwrap_or(&0.0));
    out
}

impl IampdmController {
    pub fn new(params: ControllerParams, geometry: ScenarioGeometry, settings: MpcSettings, k_p: f64) -> Self {
        Self {
            params,
            geometry,
            settings,
            k_p,
            tracker: IntentionTracker::new(),
            warm: None,
            frozen_z: None,
        }
    }

    pub fn tracker(&self) -> &IntentionTracker {
        &self.tracker
    }

    pub fn reset(&mut self) {
        self.tracker = IntentionTracker::new();
        self.warm = None;
        self.frozen_z = None;
    }

    /// Acceleration command for the current state and raw intention signal.
    pub fn decide(&mut self, state: &JointState, intention_raw: f64) -> (f64, MpcDiagnostics) {
        let intention = self.tracker.update(state, intention_raw, &self.geometry, self.params.k_d, &self.settings);
        if is_ped_passed(state, &self.geometry) || is_veh_passed(state, &self.geometry) {
            self.warm = None;
            self.frozen_z = None;
            let u = velocity_tracking(state, &self.params, self.k_p);
            return (u, MpcDiagnostics::idle(MpcStatus::Tracking, intention));
        }

        let mut problem = MpcProblem::new(*state, &self.params, &self.geometry, intention, &self.settings);
        if self.settings.prediction_mode == PredictionMode::FrozenZ {
            problem.frozen_z = self.frozen_z.take();
        }
        match solve(&problem, self.warm.as_deref()) {
            Ok(sol) => {
                let u = sol.u_s_star[0];
                self.warm = Some(shifted(&sol.u_s_star));
                if self.settings.prediction_mode == PredictionMode::FrozenZ {
                    let speeds: Vec<f64> = sol.predicted_traj.iter().map(|s| s.v_ped).collect();
                    self.frozen_z = Some(DisturbanceSequence::from_ped_speeds(shifted(&speeds)));
                }
                let diag = MpcDiagnostics {
                    status: MpcStatus::Solved,
                    intention_eff: intention,
                    w_safe_eff: sol.w_safe_eff,
                    d_min_eff: sol.d_min_eff,
                    cost_total: sol.cost_total,
                    cost_com: sol.cost_com,
                    cost_ref: sol.cost_ref,
                    cost_safe: sol.cost_safe,
                    solver_iters: sol.solver_iters,
                    constraint_violation: sol.constraint_violation,
                    hit_max_iters: sol.hit_max_iters,
                };
                (u, diag)
            }
            Err(SolveError::Infeasible { residual }) => {
                self.warm = None;
                self.frozen_z = None;
                let (w, d) = problem.effective_safety();
                let mut diag = MpcDiagnostics::idle(MpcStatus::Infeasible, intention);
                diag.w_safe_eff = w;
                diag.d_min_eff = d;
                diag.constraint_violation = residual;
                (self.params.a_min, diag)
            }
            Err(SolveError::LengthMismatch { .. }) => {
                // stale warm start after a horizon change; retry cold
                self.warm = None;
                self.frozen_z = None;
                self.decide(state, intention_raw)
            }
        }
    }
}
