//! Episode-level cost and derivative-free parameter search.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::decision::{ControllerKind, ControllerSetup};
use crate::error::ConfigError;
use crate::metrics::KAPPA;
use crate::pedestrian::{ttc_mpc, PedModelParams};
use crate::scenario::{ControllerParams, ScenarioGeometry};
use crate::sim::{run_jobs, EpisodeJob, EpisodeTrace, ScenarioKind};

/// Components of the parameter vector that may be tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaParam {
    WSafe,
    WCom,
    WRefPed,
    WRefVeh,
    DMin,
    KD,
    VVehMax,
    AMin,
    AMax,
}

impl ThetaParam {
    pub fn get(self, p: &ControllerParams) -> f64 {
        match self {
            ThetaParam::WSafe => p.w_safe,
            ThetaParam::WCom => p.w_com,
            ThetaParam::WRefPed => p.w_ref_ped,
            ThetaParam::WRefVeh => p.w_ref_veh,
            ThetaParam::DMin => p.d_min,
            ThetaParam::KD => p.k_d,
            ThetaParam::VVehMax => p.v_veh_max,
            ThetaParam::AMin => p.a_min,
            ThetaParam::AMax => p.a_max,
        }
    }

    pub fn set(self, p: &mut ControllerParams, v: f64) {
        match self {
            ThetaParam::WSafe => p.w_safe = v,
            ThetaParam::WCom => p.w_com = v,
            ThetaParam::WRefPed => p.w_ref_ped = v,
            ThetaParam::WRefVeh => p.w_ref_veh = v,
            ThetaParam::DMin => p.d_min = v,
            ThetaParam::KD => p.k_d = v,
            ThetaParam::VVehMax => p.v_veh_max = v,
            ThetaParam::AMin => p.a_min = v,
            ThetaParam::AMax => p.a_max = v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaBound {
    pub param: ThetaParam,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    /// Weight on elapsed time.
    pub k1: f64,
    /// Weight on squared commanded acceleration.
    pub k2: f64,
    /// Reward on the realized minimum separation.
    pub k3: f64,
    /// Weight on the inverse model TTC.
    pub k4: f64,
    pub theta_bounds: Vec<ThetaBound>,
    /// Objective evaluations, including the starting point.
    pub budget: usize,
    pub seeds: Vec<u64>,
    pub scenarios: Vec<ScenarioKind>,
    /// Random points evaluated before the simplex phase.
    pub population: usize,
    pub rng_seed: u64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k2: 0.1,
            k3: 0.5,
            k4: 1.0,
            theta_bounds: vec![
                ThetaBound { param: ThetaParam::WSafe, lo: 500.0, hi: 20000.0 },
                ThetaBound { param: ThetaParam::WCom, lo: 0.1, hi: 10.0 },
                ThetaBound { param: ThetaParam::DMin, lo: 2.5, hi: 6.0 },
                ThetaBound { param: ThetaParam::KD, lo: 0.5, hi: 3.0 },
            ],
            budget: 40,
            seeds: vec![0, 1, 2],
            scenarios: ScenarioKind::ALL.to_vec(),
            population: 8,
            rng_seed: 0,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, k) in [("tuning.k1", self.k1), ("tuning.k2", self.k2), ("tuning.k3", self.k3), ("tuning.k4", self.k4)] {
            if !k.is_finite() {
                return Err(ConfigError::invalid(name, "must be finite"));
            }
        }
        for (i, b) in self.theta_bounds.iter().enumerate() {
            if !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi) {
                return Err(ConfigError::invalid(format!("tuning.theta_bounds[{i}]"), "needs finite lo < hi"));
            }
        }
        if self.budget < 1 {
            return Err(ConfigError::invalid("tuning.budget", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::invalid("tuning.seeds", "must not be empty"));
        }
        if self.scenarios.is_empty() {
            return Err(ConfigError::invalid("tuning.scenarios", "must not be empty"));
        }
        Ok(())
    }

    pub fn theta_of(&self, p: &ControllerParams) -> Vec<f64> {
        self.theta_bounds.iter().map(|b| b.param.get(p)).collect()
    }

    pub fn apply(&self, p: &ControllerParams, theta: &[f64]) -> ControllerParams {
        let mut out = p.clone();
        for (b, v) in self.theta_bounds.iter().zip(theta) {
            b.param.set(&mut out, *v);
        }
        out
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.theta_bounds.iter().map(|b| (b.lo, b.hi)).collect()
    }
}

/// Inverse model TTC, zero once the crossing order is settled and capped at
/// `1 / kappa`.
pub fn inverse_ttc(ttc: f64, kappa: f64) -> f64 {
    if ttc <= 0.0 {
        0.0
    } else {
        (1.0 / ttc).min(1.0 / kappa)
    }
}

/// The episode cost restricted to `[t_a, t_b]`, without the separation
/// reward.
pub fn j_glob_window(
    trace: &EpisodeTrace,
    cfg: &TuningConfig,
    geometry: &ScenarioGeometry,
    ped: &PedModelParams,
    t_a: f64,
    t_b: f64,
) -> f64 {
    let eps = 1e-9;
    let pts: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter(|r| r.t >= t_a - eps && r.t <= t_b + eps)
        .map(|r| {
            let inv = inverse_ttc(ttc_mpc(&r.state, geometry, ped), KAPPA);
            (r.t, cfg.k1 * r.t + cfg.k2 * r.u * r.u + cfg.k4 * inv)
        })
        .collect();
    pts.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum()
}

/// Global episode cost over the interaction window: time, comfort and
/// inverse-TTC terms integrated, minus `k3` times the window's minimum
/// separation.
pub fn j_glob(trace: &EpisodeTrace, cfg: &TuningConfig, geometry: &ScenarioGeometry, ped: &PedModelParams) -> f64 {
    let t0 = trace.t0.unwrap_or_else(|| trace.records.first().map_or(0.0, |r| r.t));
    let integral = j_glob_window(trace, cfg, geometry, ped, t0, trace.t_end);
    if cfg.k3 == 0.0 {
        return integral;
    }
    let min_sep = trace
        .records
        .iter()
        .filter(|r| r.t >= t0 - 1e-9 && r.t <= trace.t_end + 1e-9)
        .map(|r| geometry.separation_sq(r.state.x_veh, r.state.y_ped).sqrt())
        .fold(f64::INFINITY, f64::min);
    let min_sep = if min_sep.is_finite() { min_sep } else { 0.0 };
    integral - cfg.k3 * min_sep
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub index: usize,
    pub theta: Vec<f64>,
    pub value: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub theta_star: Vec<f64>,
    pub value: f64,
    pub theta0: Vec<f64>,
    pub value0: f64,
    pub log: Vec<Evaluation>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneOptions {
    pub budget: usize,
    pub population: usize,
    pub seed: u64,
}

struct Search<'a, F> {
    objective: &'a F,
    lo: Vec<f64>,
    span: Vec<f64>,
    budget: usize,
    log: Vec<Evaluation>,
    best: (Vec<f64>, f64),
}

impl<F: Fn(&[f64]) -> f64 + Sync> Search<'_, F> {
    fn to_theta(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, v)| (self.lo[i] + v.clamp(0.0, 1.0) * self.span[i]).clamp(self.lo[i], self.lo[i] + self.span[i]))
            .collect()
    }

    fn left(&self) -> usize {
        self.budget - self.log.len()
    }

    fn record(&mut self, z: &[f64], value: f64) -> f64 {
        let value = if value.is_nan() { f64::INFINITY } else { value };
        let theta = self.to_theta(z);
        if value < self.best.1 {
            self.best = (theta.clone(), value);
        }
        self.log.push(Evaluation { index: self.log.len(), theta, value, best_so_far: self.best.1 });
        value
    }

    /// Evaluates several points concurrently; logged in input order.
    fn eval_many(&mut self, zs: &[Vec<f64>]) -> Vec<f64> {
        let n = zs.len().min(self.left());
        let thetas: Vec<Vec<f64>> = zs[..n].iter().map(|z| self.to_theta(z)).collect();
        let f = self.objective;
        let values: Vec<f64> = thetas.par_iter().map(|t| f(t)).collect();
        zs[..n].iter().zip(values).map(|(z, v)| self.record(z, v)).collect()
    }

    fn eval(&mut self, z: &[f64]) -> Option<f64> {
        if self.left() == 0 {
            return None;
        }
        let v = (self.objective)(&self.to_theta(z));
        Some(self.record(z, v))
    }

    /// Bounded Nelder–Mead in the unit cube. Returns when the budget is
    /// spent or the simplex collapses.
    fn nelder_mead(&mut self, start: &[f64], f_start: f64, step: f64) -> Option<(Vec<f64>, f64)> {
        let d = start.len();
        let clamp = |z: Vec<f64>| -> Vec<f64> { z.into_iter().map(|v| v.clamp(0.0, 1.0)).collect() };
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.to_vec(), f_start)];
        let mut vertices = Vec::with_capacity(d);
        for i in 0..d {
            let mut z = start.to_vec();
            z[i] = if z[i] + step <= 1.0 { z[i] + step } else { z[i] - step };
            vertices.push(clamp(z));
        }
        for (z, f) in vertices.clone().into_iter().zip(self.eval_many(&vertices)) {
            simplex.push((z, f));
        }
        if simplex.len() < d + 1 {
            return None;
        }
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let size = simplex[1..]
                .iter()
                .map(|(z, _)| z.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if size < 1e-9 {
                return Some(simplex.swap_remove(0));
            }
            let centroid: Vec<f64> = (0..d).map(|i| simplex[..d].iter().map(|(z, _)| z[i]).sum::<f64>() / d as f64).collect();
            let worst = simplex[d].clone();
            let towards = |t: f64| -> Vec<f64> {
                clamp(centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (w - c)).collect())
            };
            let zr = towards(-1.0);
            let fr = self.eval(&zr)?;
            if fr < simplex[0].1 {
                let ze = towards(-2.0);
                let fe = self.eval(&ze)?;
                simplex[d] = if fe < fr { (ze, fe) } else { (zr, fr) };
            } else if fr < simplex[d - 1].1 {
                simplex[d] = (zr, fr);
            } else {
                let (zc, fc) = if fr < worst.1 {
                    let z = towards(-0.5);
                    let f = self.eval(&z)?;
                    (z, f)
                } else {
                    let z = towards(0.5);
                    let f = self.eval(&z)?;
                    (z, f)
                };
                if fc < worst.1.min(fr) {
                    simplex[d] = (zc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    let shrunk: Vec<Vec<f64>> = simplex[1..]
                        .iter()
                        .map(|(z, _)| clamp(best.iter().zip(z).map(|(b, v)| b + 0.5 * (v - b)).collect()))
                        .collect();
                    let values = self.eval_many(&shrunk);
                    if values.len() < shrunk.len() {
                        return None;
                    }
                    for (k, (z, f)) in shrunk.into_iter().zip(values).enumerate() {
                        simplex[k + 1] = (z, f);
                    }
                }
            }
        }
    }
}

/// Bound-constrained derivative-free minimisation of `objective`.
///
/// `theta0` is evaluated first; a seeded random population follows, then
/// Nelder–Mead with restarts from the incumbent. The returned point is never
/// worse than `theta0` and every evaluated point respects `bounds`.
pub fn tune<F>(objective: &F, theta0: &[f64], bounds: &[(f64, f64)], opts: TuneOptions) -> TuneResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert_eq!(theta0.len(), bounds.len(), "theta0 and bounds differ in length");
    assert!(opts.budget >= 1, "budget must be >= 1");
    let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let span: Vec<f64> = bounds.iter().map(|b| b.1 - b.0).collect();
    let z0: Vec<f64> = theta0.iter().enumerate().map(|(i, v)| ((v - lo[i]) / span[i]).clamp(0.0, 1.0)).collect();
    let mut s = Search { objective, lo, span, budget: opts.budget, log: Vec::new(), best: (Vec::new(), f64::INFINITY) };

    let f0 = s.eval(&z0).expect("budget >= 1");
    s.best = (s.to_theta(&z0), f0);
    let value0 = f0;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let d = z0.len();
    let pop: Vec<Vec<f64>> = (0..opts.population).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let pop_values = s.eval_many(&pop);
    let mut incumbent = (z0.clone(), f0);
    for (z, f) in pop.iter().zip(pop_values) {
        if f < incumbent.1 {
            incumbent = (z.clone(), f);
        }
    }

    let mut step = 0.25;
    while s.left() > d {
        match s.nelder_mead(&incumbent.0, incumbent.1, step) {
            Some((z, f)) => {
                if f < incumbent.1 {
                    incumbent = (z, f);
                }
                step = (step * 0.5).max(1e-4);
            }
            None => break,
        }
    }

    let (theta_star, value) = if s.best.1 < value0 { s.best.clone() } else { (s.to_theta(&z0), value0) };
    TuneResult { theta_star, value, theta0: s.to_theta(&z0), value0, log: s.log }
}

/// Mean `j_glob` of IAMPDM episodes over the configured seeds and scenarios
/// with `theta` applied.
pub fn tuning_objective(config: &Config, theta: &[f64]) -> f64 {
    let t = &config.tuning;
    let params = t.apply(&config.controller, theta);
    if params.validate().is_err() {
        return f64::INFINITY;
    }
    let setup = ControllerSetup { params: params.clone(), ..config.controller_setup() };
    let mut jobs = Vec::new();
    for &scenario in &t.scenarios {
        for &seed in &t.seeds {
            jobs.push(EpisodeJob { scenario, controller: ControllerKind::Iampdm, seed });
        }
    }
    let entries = run_jobs(&jobs, &setup, &config.script, &config.sim);
    let ped = PedModelParams { c: params.c, v_ped_ref: params.v_ped_ref, k_d: params.k_d, v_eps: config.mpc.v_eps };
    let mut total = 0.0;
    for e in &entries {
        match &e.result {
            Ok(trace) => total += j_glob(trace, t, &config.geometry, &ped),
            Err(_) => return f64::INFINITY,
        }
    }
    total / entries.len() as f64
}

/// One tuning session for `config`, starting from its controller parameters.
pub fn run_tuning(config: &Config) -> TuneResult {
    let t = &config.tuning;
    let theta0 = t.theta_of(&config.controller);
    let objective = |theta: &[f64]| tuning_objective(config, theta);
    tune(&objective, &theta0, &t.bounds(), TuneOptions { budget: t.budget, population: t.population, seed: t.rng_seed })
}

/// Expert step of the design loop: swap in new weights, re-tune and report
/// both sessions side by side.
pub fn expert_loop_step(k: [f64; 4], previous: &Config, previous_result: &TuneResult) -> (Config, TuneResult, String) {
    let mut next = previous.clone();
    next.tuning.k1 = k[0];
    next.tuning.k2 = k[1];
    next.tuning.k3 = k[2];
    next.tuning.k4 = k[3];
    let result = run_tuning(&next);
    let report = comparison_report(previous, previous_result, &next, &result);
    (next, result, report)
}

pub fn comparison_report(a: &Config, ra: &TuneResult, b: &Config, rb: &TuneResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14} {:>14} {:>14}", "", "previous", "new");
    for (name, x, y) in [
        ("k1", a.tuning.k1, b.tuning.k1),
        ("k2", a.tuning.k2, b.tuning.k2),
        ("k3", a.tuning.k3, b.tuning.k3),
        ("k4", a.tuning.k4, b.tuning.k4),
    ] {
        let _ = writeln!(out, "{name:<14} {x:>14.4} {y:>14.4}");
    }
    for (i, bound) in b.tuning.theta_bounds.iter().enumerate() {
        let name = serde_json::to_value(bound.param).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        let x = ra.theta_star.get(i).copied().unwrap_or(f64::NAN);
        let y = rb.theta_star.get(i).copied().unwrap_or(f64::NAN);
        let _ = writeln!(out, "{name:<14} {x:>14.4} {y:>14.4}");
    }
    let _ = writeln!(out, "{:<14} {:>14.4} {:>14.4}", "J_glob*", ra.value, rb.value);
    let _ = writeln!(out, "{:<14} {:>14} {:>14}", "evaluations", ra.log.len(), rb.log.len());
    out
}
