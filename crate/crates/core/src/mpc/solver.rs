//! Constrained minimisation of the MPC objective.
//!
//! The decision vector is the horizon of accelerations. Input bounds and the
//! speed bounds `0 <= v <= v_max` are linear in the inputs and are kept exact
//! by a sequential clamp ([`CostModel::project`]) applied to every iterate.
//! The non-convex separation constraint goes through three phases per start:
//!
//! 1. spectral projected gradient on the quadratic-penalty objective with an
//!    increasing penalty weight,
//! 2. restoration by bisection towards the best known feasible sequence if a
//!    residual violation remains,
//! 3. a feasible-descent polish on the unpenalised objective that only
//!    accepts strictly feasible, cost-decreasing steps.
//!
//! Several deterministic starts are tried and the cheapest feasible result
//! wins, so the returned sequence always satisfies every constraint exactly.

use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::scenario::JointState;

use super::cost::{CostModel, Scratch};
use super::{GradientMode, MpcProblem, MpcSettings};

const PENALTY_SCHEDULE: [f64; 3] = [1e2, 1e4, 1e6];
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    pub u_s_star: Vec<f64>,
    pub predicted_traj: Vec<JointState>,
    pub cost_total: f64,
    pub cost_com: f64,
    pub cost_ref: f64,
    pub cost_safe: f64,
    pub solver_iters: usize,
    pub constraint_violation: f64,
    /// Set when a phase stopped on its iteration cap rather than converging.
    pub hit_max_iters: bool,
    /// Objective after each accepted polish step of the winning start.
    pub cost_history: Vec<f64>,
    pub w_safe_eff: f64,
    pub d_min_eff: f64,
}

struct Candidate {
    u: Vec<f64>,
    cost: f64,
    history: Vec<f64>,
}

struct Search<'a> {
    model: &'a CostModel,
    settings: &'a MpcSettings,
    scratch: Scratch,
    iters: usize,
    hit_cap: bool,
}

impl<'a> Search<'a> {
    fn value_grad(&mut self, u: &[f64], mu: f64, grad: &mut [f64]) -> f64 {
        match self.settings.gradient {
            GradientMode::Analytic => self.model.value(u, mu, &mut self.scratch, Some(grad)),
            GradientMode::FiniteDifference => {
                self.model.fd_gradient(u, mu, self.settings.fd_step, &mut self.scratch, grad);
                self.model.value(u, mu, &mut self.scratch, None)
            }
        }
    }

    fn is_feasible(&mut self, u: &[f64]) -> bool {
        self.model.distance_violation(u, &mut self.scratch) == 0.0
    }

    /// Spectral projected gradient with monotone Armijo backtracking.
    fn spg(&mut self, u: &mut Vec<f64>, mu: f64, feasible_only: bool, mut history: Option<&mut Vec<f64>>) {
        let n = u.len();
        let mut g = vec![0.0; n];
        let mut g_new = vec![0.0; n];
        let mut trial = vec![0.0; n];
        let mut cand = vec![0.0; n];
        let mut f = self.value_grad(u, mu, &mut g);
        if let Some(h) = history.as_deref_mut() {
            h.push(f);
        }
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut alpha = if gmax > 0.0 { 1.0 / gmax } else { 1.0 };
        let mut converged = false;
        for _ in 0..self.settings.max_iters {
            self.iters += 1;
            for i in 0..n {
                trial[i] = u[i] - alpha * g[i];
            }
            self.model.project(&mut trial);
            let mut dmax = 0.0f64;
            let mut gd = 0.0;
            for i in 0..n {
                let d = trial[i] - u[i];
                dmax = dmax.max(d.abs());
                gd += g[i] * d;
            }
            if dmax < self.settings.tol || gd >= 0.0 {
                converged = true;
                break;
            }
            let mut lambda = 1.0;
            let accepted = loop {
                for i in 0..n {
                    cand[i] = u[i] + lambda * (trial[i] - u[i]);
                }
                let fc = self.model.value(&cand, mu, &mut self.scratch, None);
                if fc <= f + ARMIJO * lambda * gd && (!feasible_only || self.is_feasible(&cand)) {
                    break true;
                }
                lambda *= 0.5;
                if lambda < 1e-10 {
                    break false;
                }
            };
            if !accepted {
                converged = true;
                break;
            }
            let f_new = self.value_grad(&cand, mu, &mut g_new);
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..n {
                let s = cand[i] - u[i];
                ss += s * s;
                sy += s * (g_new[i] - g[i]);
            }
            alpha = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { alpha * 4.0 };
            std::mem::swap(u, &mut cand);
            std::mem::swap(&mut g, &mut g_new);
            f = f_new;
            if let Some(h) = history.as_deref_mut() {
                h.push(f);
            }
        }
        if !converged {
            self.hit_cap = true;
        }
    }

    /// Moves `u` towards `anchor` until the separation constraint holds.
    fn restore(&mut self, u: &[f64], anchor: &[f64]) -> Vec<f64> {
        let blend = |lambda: f64| -> Vec<f64> {
            u.iter().zip(anchor).map(|(a, b)| a + lambda * (b - a)).collect()
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.is_feasible(&blend(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        blend(hi)
    }

    fn run_start(&mut self, start: &[f64], anchors: &[Vec<f64>]) -> Option<Candidate> {
        let mut u = start.to_vec();
        self.model.project(&mut u);
        for mu in PENALTY_SCHEDULE {
            self.spg(&mut u, mu, false, None);
            if self.is_feasible(&u) {
                break;
            }
        }
        if !self.is_feasible(&u) {
            let anchor = anchors.first()?;
            u = self.restore(&u, anchor);
            if !self.is_feasible(&u) {
                return None;
            }
        }
        let mut history = Vec::new();
        self.spg(&mut u, 0.0, true, Some(&mut history));
        let cost = self.model.value(&u, 0.0, &mut self.scratch, None);
        Some(Candidate { u, cost, history })
    }
}

/// Minimises the MPC objective for `problem`, optionally warm-started from a
/// previous input sequence.
pub fn solve(problem: &MpcProblem<'_>, warm_start: Option<&[f64]>) -> Result<MpcSolution, SolveError> {
    let model = CostModel::new(problem);
    solve_model(&model, problem.settings, warm_start)
}

pub(crate) fn solve_model(
    model: &CostModel,
    settings: &MpcSettings,
    warm_start: Option<&[f64]>,
) -> Result<MpcSolution, SolveError> {
    let n = model.n;
    if let Some(w) = warm_start {
        if w.len() != n {
            return Err(SolveError::LengthMismatch { expected: n, got: w.len() });
        }
    }
    let mut search = Search { model, settings, scratch: Scratch::default(), iters: 0, hit_cap: false };

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(4);
    if let Some(w) = warm_start {
        starts.push(w.to_vec());
    }
    starts.push(vec![0.0; n]);
    starts.push(vec![model.a_min; n]);
    starts.push(vec![model.a_max; n]);
    for s in starts.iter_mut() {
        model.project(s);
    }

    // feasible starts double as restoration anchors, cheapest first
    let mut anchors: Vec<(f64, Vec<f64>)> = Vec::new();
    for s in &starts {
        if search.is_feasible(s) {
            anchors.push((model.value(s, 0.0, &mut search.scratch, None), s.clone()));
        }
    }
    anchors.sort_by(|a, b| a.0.total_cmp(&b.0));
    let anchors: Vec<Vec<f64>> = anchors.into_iter().map(|(_, s)| s).collect();

    let mut best: Option<Candidate> = None;
    let mut seen: Vec<Vec<f64>> = Vec::new();
    for start in &starts {
        if seen.iter().any(|s| s.iter().zip(start).all(|(a, b)| (a - b).abs() < 1e-12)) {
            continue;
        }
        seen.push(start.clone());
        if let Some(c) = search.run_start(start, &anchors) {
            if best.as_ref().is_none_or(|b| c.cost < b.cost) {
                best = Some(c);
            }
        }
    }

    let Some(best) = best else {
        let residual = starts
            .iter()
            .map(|s| model.distance_violation(s, &mut search.scratch))
            .fold(f64::INFINITY, f64::min);
        return Err(SolveError::Infeasible { residual });
    };

    let breakdown = model.breakdown(&best.u);
    Ok(MpcSolution {
        predicted_traj: model.trajectory(&best.u),
        constraint_violation: model.constraint_violation(&best.u),
        cost_total: breakdown.total,
        cost_com: breakdown.com,
        cost_ref: breakdown.reference,
        cost_safe: breakdown.safe,
        solver_iters: search.iters,
        hit_max_iters: search.hit_cap,
        cost_history: best.history,
        w_safe_eff: model.w_safe_eff,
        d_min_eff: model.d_min_eff,
        u_s_star: best.u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ControllerParams, ScenarioGeometry};

    fn solve_at(x0: JointState, intention: f64, params: &ControllerParams) -> Result<MpcSolution, SolveError> {
        let g = ScenarioGeometry::default();
        let s = MpcSettings::default();
        solve(&MpcProblem::new(x0, params, &g, intention, &s), None)
    }

    #[test]
    fn passed_pedestrian_gives_reference_fixed_point() {
        let p = ControllerParams::default();
        let x0 = JointState::new(0.0, -30.0, p.v_veh_ref, 5.0, p.v_ped_ref);
        let sol = solve_at(x0, 0.0, &p).unwrap();
        let umax = sol.u_s_star.iter().fold(0.0f64, |m, u| m.max(u.abs()));
        assert!(umax <= 1e-3, "max |u| = {umax}");
    }

    #[test]
    fn standing_pedestrian_in_lane_forces_braking() {
        let p = ControllerParams::default();
        let x0 = JointState::new(0.0, -25.0, p.v_veh_ref, 0.0, 0.0);
        let sol = solve_at(x0, 0.3, &p).unwrap();
        assert!(sol.u_s_star[0] < 0.0);
        assert!(sol.constraint_violation <= 1e-6);
    }

    #[test]
    fn solution_respects_bounds_and_separation() {
        let p = ControllerParams::default();
        let x0 = JointState::new(0.0, -15.0, 8.0, -2.5, 0.0);
        let sol = solve_at(x0, 1.0, &p).unwrap();
        assert!(sol.u_s_star.iter().all(|u| (p.a_min..=p.a_max).contains(u)));
        for s in &sol.predicted_traj {
            assert!(s.v_veh >= -1e-6 && s.v_veh <= p.v_veh_max + 1e-6);
            assert!(s.x_veh * s.x_veh + s.y_ped * s.y_ped >= sol.d_min_eff.powi(2) - 1e-6);
        }
    }

    #[test]
    fn polish_history_is_nonincreasing() {
        let p = ControllerParams::default();
        let x0 = JointState::new(0.0, -20.0, 8.0, -3.0, 0.5);
        let sol = solve_at(x0, 0.8, &p).unwrap();
        assert!(!sol.cost_history.is_empty());
        for w in sol.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn unavoidable_violation_is_infeasible() {
        let p = ControllerParams::default();
        // vehicle essentially at the conflict point with the pedestrian on it
        let x0 = JointState::new(0.0, -0.5, 8.0, 0.0, 0.0);
        let err = solve_at(x0, 1.0, &p).unwrap_err();
        assert!(matches!(err, SolveError::Infeasible { .. }));
    }

    #[test]
    fn solve_is_deterministic() {
        let p = ControllerParams::default();
        let x0 = JointState::new(0.0, -18.0, 7.5, -3.2, 0.2);
        let warm: Vec<f64> = (0..p.horizon).map(|k| -0.1 * k as f64).collect();
        let a = solve_at(x0, 0.7, &p).unwrap();
        let b = solve_at(x0, 0.7, &p).unwrap();
        assert_eq!(a, b);
        let g = ScenarioGeometry::default();
        let s = MpcSettings::default();
        let prob = MpcProblem::new(x0, &p, &g, 0.7, &s);
        assert_eq!(solve(&prob, Some(&warm)).unwrap(), solve(&prob, Some(&warm)).unwrap());
    }

    #[test]
    fn finite_difference_mode_agrees() {
        let p = ControllerParams { horizon: 8, ..Default::default() };
        let g = ScenarioGeometry::default();
        let x0 = JointState::new(0.0, -20.0, 8.0, -3.0, 0.5);
        let sa = MpcSettings::default();
        let sf = MpcSettings { gradient: GradientMode::FiniteDifference, ..Default::default() };
        let a = solve(&MpcProblem::new(x0, &p, &g, 0.8, &sa), None).unwrap();
        let f = solve(&MpcProblem::new(x0, &p, &g, 0.8, &sf), None).unwrap();
        assert!((a.cost_total - f.cost_total).abs() <= 1e-3 * (1.0 + a.cost_total.abs()));
    }

    #[test]
    fn wrong_warm_start_length_is_rejected() {
        let p = ControllerParams::default();
        let g = ScenarioGeometry::default();
        let s = MpcSettings::default();
        let x0 = JointState::new(0.0, -20.0, 8.0, -3.0, 0.5);
        let err = solve(&MpcProblem::new(x0, &p, &g, 0.8, &s), Some(&[0.0; 3])).unwrap_err();
        assert_eq!(err, SolveError::LengthMismatch { expected: p.horizon, got: 3 });
    }
}
