//! The MPC objective `J = J_com + J_ref + J_safe` and its gradient.

use serde::{Deserialize, Serialize};

use crate::dynamics::{build_batch, predict, DisturbanceSequence};
use crate::pedestrian::{crossing_gain, PedModelParams};
use crate::scenario::{JointState, ScenarioGeometry};

use super::{MpcProblem, PredictionMode, RefCostForm};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub com: f64,
    pub reference: f64,
    pub safe: f64,
}

/// Precomputed linear part of the frozen-disturbance prediction:
/// `x_s = offset + B_cal u_s`.
#[derive(Debug, Clone)]
struct FrozenPrediction {
    offset: Vec<[f64; 4]>,
    /// `A^m B` for `m = 0..n`.
    ab: Vec<[f64; 4]>,
}

/// Reusable buffers for trajectory evaluation.
#[derive(Debug, Clone, Default)]
pub struct Scratch {
    /// `s_0 ..= s_n`
    states: Vec<[f64; 4]>,
    /// `d v_ped(k+1) / d (x, v, y)` at `s_k`, zero in frozen mode.
    sens: Vec<[f64; 3]>,
}

/// Objective and constraints of one [`MpcProblem`], ready for repeated
/// evaluation.
#[derive(Debug, Clone)]
pub struct CostModel {
    pub x0: JointState,
    pub n: usize,
    pub dt: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub v_max: f64,
    pub w_safe_eff: f64,
    pub d_min_eff: f64,
    geometry: ScenarioGeometry,
    ped: PedModelParams,
    w_com: f64,
    w_ref_veh: f64,
    w_ref_ped: f64,
    v_veh_ref: f64,
    eps_safe: f64,
    ref_form: RefCostForm,
    frozen: Option<FrozenPrediction>,
}

impl CostModel {
    pub fn new(problem: &MpcProblem<'_>) -> Self {
        let p = problem.params;
        let (w_safe_eff, d_min_eff) = problem.effective_safety();
        let ped = PedModelParams {
            c: p.c,
            v_ped_ref: p.v_ped_ref,
            k_d: p.k_d,
            v_eps: problem.settings.v_eps,
        };
        let mut model = Self {
            x0: problem.x0,
            n: p.horizon,
            dt: p.dt,
            a_min: p.a_min,
            a_max: p.a_max,
            v_max: p.v_veh_max,
            w_safe_eff,
            d_min_eff,
            geometry: problem.geometry.clone(),
            ped,
            w_com: p.w_com,
            w_ref_veh: p.w_ref_veh,
            w_ref_ped: p.w_ref_ped,
            v_veh_ref: p.v_veh_ref,
            eps_safe: problem.settings.eps_safe,
            ref_form: problem.settings.ref_form,
            frozen: None,
        };
        if problem.settings.prediction_mode == PredictionMode::FrozenZ {
            let z = match &problem.frozen_z {
                Some(z) if z.len() == model.n => z.clone(),
                _ => {
                    // no usable history: freeze the speeds of a zero-input rollout
                    let u0 = vec![0.0; model.n];
                    crate::dynamics::rollout_with_ped_model(&model.x0, &u0, &model.geometry, &model.ped, model.dt).1
                }
            };
            model.frozen = Some(model.freeze(&z));
        }
        model
    }

    fn freeze(&self, z: &DisturbanceSequence) -> FrozenPrediction {
        let ops = build_batch(self.n, self.dt);
        let zero_u = vec![0.0; self.n];
        let offset = predict(&self.x0, &zero_u, z, &ops)
            .expect("lengths checked")
            .into_iter()
            .map(|s| s.vector())
            .collect();
        let ab = (0..self.n)
            .map(|m| {
                let col = ops.b_cal.fixed_view::<4, 1>(4 * m, 0);
                [col[0], col[1], col[2], col[3]]
            })
            .collect();
        FrozenPrediction { offset, ab }
    }

    pub fn ped_params(&self) -> &PedModelParams {
        &self.ped
    }

    pub fn geometry(&self) -> &ScenarioGeometry {
        &self.geometry
    }

    fn simulate(&self, u: &[f64], scratch: &mut Scratch) {
        debug_assert_eq!(u.len(), self.n);
        scratch.states.clear();
        scratch.sens.clear();
        scratch.states.push(self.x0.vector());
        match &self.frozen {
            Some(f) => {
                for i in 0..self.n {
                    let mut s = f.offset[i];
                    for (j, uj) in u.iter().enumerate().take(i + 1) {
                        let b = f.ab[i - j];
                        for c in 0..4 {
                            s[c] += b[c] * uj;
                        }
                    }
                    scratch.states.push(s);
                    scratch.sens.push([0.0; 3]);
                }
            }
            None => {
                let g = &self.geometry;
                let vref = self.ped.v_ped_ref;
                let dt = self.dt;
                let mut s = scratch.states[0];
                for &uk in u {
                    let [x, v, y, vp] = s;
                    let v_div = v.max(self.ped.v_eps);
                    let gap_veh = g.x_ped_path - x;
                    let ttc = gap_veh / v_div - (g.y_veh_lane - y) / vref;
                    let sigma = crossing_gain(ttc, self.ped.c);
                    let dsig = sigma * (1.0 - sigma);
                    let dttc_dv = if v > self.ped.v_eps { -gap_veh / (v * v) } else { 0.0 };
                    scratch.sens.push([
                        vref * dsig * (-1.0 / v_div),
                        vref * dsig * dttc_dv,
                        dsig,
                    ]);
                    s = [x + dt * v + 0.5 * dt * dt * uk, v + dt * uk, y + dt * vp, vref * sigma];
                    scratch.states.push(s);
                }
            }
        }
    }

    /// Predicted states `s_1 ..= s_n`.
    pub fn trajectory(&self, u: &[f64]) -> Vec<JointState> {
        let mut scratch = Scratch::default();
        self.simulate(u, &mut scratch);
        scratch.states[1..]
            .iter()
            .enumerate()
            .map(|(k, s)| JointState::from_vector(self.x0.t + (k + 1) as f64 * self.dt, *s))
            .collect()
    }

    fn summed_separation(&self, states: &[[f64; 4]]) -> f64 {
        states[1..].iter().map(|s| self.geometry.separation_sq(s[0], s[2])).sum()
    }

    fn breakdown_from(&self, u: &[f64], states: &[[f64; 4]]) -> CostBreakdown {
        let com = self.w_com * u.iter().map(|v| v * v).sum::<f64>();
        let reference = states[1..]
            .iter()
            .map(|s| match self.ref_form {
                RefCostForm::Deviation => {
                    self.w_ref_veh * (s[1] - self.v_veh_ref).powi(2)
                        + self.w_ref_ped * (s[3] - self.ped.v_ped_ref).powi(2)
                }
                RefCostForm::Literal => self.w_ref_veh * s[1] * s[1] + self.w_ref_ped * s[3] * s[3],
            })
            .sum();
        let safe = if self.w_safe_eff == 0.0 {
            0.0
        } else {
            self.w_safe_eff / self.summed_separation(states).max(self.eps_safe)
        };
        CostBreakdown { total: com + reference + safe, com, reference, safe }
    }

    pub fn breakdown(&self, u: &[f64]) -> CostBreakdown {
        let mut scratch = Scratch::default();
        self.simulate(u, &mut scratch);
        self.breakdown_from(u, &scratch.states)
    }

    /// Largest violation of `sep^2 >= d_min_eff^2` along the prediction, in m^2.
    fn distance_violation_of(&self, states: &[[f64; 4]]) -> f64 {
        let d2 = self.d_min_eff * self.d_min_eff;
        states[1..]
            .iter()
            .map(|s| (d2 - self.geometry.separation_sq(s[0], s[2])).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn distance_violation(&self, u: &[f64], scratch: &mut Scratch) -> f64 {
        self.simulate(u, scratch);
        self.distance_violation_of(&scratch.states)
    }

    /// Largest violation over all constraints: input box, speed bounds and
    /// separation.
    pub fn constraint_violation(&self, u: &[f64]) -> f64 {
        let mut scratch = Scratch::default();
        self.simulate(u, &mut scratch);
        let mut worst = self.distance_violation_of(&scratch.states);
        for &uk in u {
            worst = worst.max(self.a_min - uk).max(uk - self.a_max);
        }
        for s in &scratch.states[1..] {
            worst = worst.max(-s[1]).max(s[1] - self.v_max);
        }
        worst.max(0.0)
    }

    /// Penalised objective `J + mu * sum(max(0, d^2 - sep^2)^2)`; fills `grad`
    /// when given.
    pub fn value(&self, u: &[f64], mu: f64, scratch: &mut Scratch, grad: Option<&mut [f64]>) -> f64 {
        self.simulate(u, scratch);
        let states = &scratch.states;
        let breakdown = self.breakdown_from(u, states);
        let d2 = self.d_min_eff * self.d_min_eff;
        let mut penalty = 0.0;
        if mu > 0.0 {
            for s in &states[1..] {
                let viol = d2 - self.geometry.separation_sq(s[0], s[2]);
                if viol > 0.0 {
                    penalty += viol * viol;
                }
            }
        }
        let value = breakdown.total + mu * penalty;

        if let Some(grad) = grad {
            let sum_sep = self.summed_separation(states);
            let dsafe_dsum = if self.w_safe_eff != 0.0 && sum_sep > self.eps_safe {
                -self.w_safe_eff / (sum_sep * sum_sep)
            } else {
                0.0
            };
            let (cx, cy) = (self.geometry.conflict_x, self.geometry.conflict_y);
            let dt = self.dt;
            let mut lam = [0.0f64; 4];
            for k in (1..=self.n).rev() {
                let [x, v, y, vp] = states[k];
                let (rx, ry) = (x - cx, y - cy);
                let mut lx = dsafe_dsum * 2.0 * rx;
                let mut ly = dsafe_dsum * 2.0 * ry;
                let (lv, lvp) = match self.ref_form {
                    RefCostForm::Deviation => (
                        2.0 * self.w_ref_veh * (v - self.v_veh_ref),
                        2.0 * self.w_ref_ped * (vp - self.ped.v_ped_ref),
                    ),
                    RefCostForm::Literal => (2.0 * self.w_ref_veh * v, 2.0 * self.w_ref_ped * vp),
                };
                if mu > 0.0 {
                    let viol = d2 - (rx * rx + ry * ry);
                    if viol > 0.0 {
                        lx += mu * 2.0 * viol * (-2.0 * rx);
                        ly += mu * 2.0 * viol * (-2.0 * ry);
                    }
                }
                lam = if k < self.n {
                    let [gx, gv, gy] = scratch.sens[k];
                    let next = lam;
                    [
                        lx + next[0] + gx * next[3],
                        lv + dt * next[0] + next[1] + gv * next[3],
                        ly + next[2] + gy * next[3],
                        lvp + dt * next[2],
                    ]
                } else {
                    [lx, lv, ly, lvp]
                };
                grad[k - 1] = 2.0 * self.w_com * u[k - 1] + 0.5 * dt * dt * lam[0] + dt * lam[1];
            }
        }
        value
    }

    /// Central-difference gradient of [`CostModel::value`].
    pub fn fd_gradient(&self, u: &[f64], mu: f64, h: f64, scratch: &mut Scratch, grad: &mut [f64]) {
        let mut probe = u.to_vec();
        for i in 0..u.len() {
            probe[i] = u[i] + h;
            let up = self.value(&probe, mu, scratch, None);
            probe[i] = u[i] - h;
            let down = self.value(&probe, mu, scratch, None);
            probe[i] = u[i];
            grad[i] = (up - down) / (2.0 * h);
        }
    }

    /// Sequential clamp onto the input box and the speed bounds: each input
    /// is limited so the resulting speed stays inside `[0, v_max]`.
    pub fn project(&self, u: &mut [f64]) {
        let mut v = self.x0.v_veh;
        for uk in u.iter_mut() {
            let lo = self.a_min.max(-v / self.dt);
            let hi = self.a_max.min((self.v_max - v) / self.dt).max(lo);
            *uk = uk.max(lo).min(hi);
            v += self.dt * *uk;
        }
    }
}

/// Objective value and components for the input sequence `u_s`.
pub fn eval_cost(u_s: &[f64], problem: &MpcProblem<'_>) -> (f64, CostBreakdown) {
    let model = CostModel::new(problem);
    let b = model.breakdown(u_s);
    (b.total, b)
}
