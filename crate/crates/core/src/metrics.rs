//! Surrogate safety metrics: time-to-collision and deceleration to safety
//! time, per tick and averaged over the interaction window.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, MetricsError};
use crate::scenario::{JointState, ScenarioGeometry};
use crate::sim::EpisodeTrace;

/// Speed floor used as a divisor when the vehicle stands.
pub const KAPPA: f64 = 0.05;
pub const T_SAFE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsParams {
    pub kappa: f64,
    pub t_safe: f64,
    /// Use signed distances to the conflict point instead of gaps clamped at
    /// zero after passing. For sensitivity checks only.
    pub signed_gaps: bool,
}

impl Default for MetricsParams {
    fn default() -> Self {
        Self { kappa: KAPPA, t_safe: T_SAFE, signed_gaps: false }
    }
}

impl MetricsParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(ConfigError::invalid("metrics.kappa", "must be > 0"));
        }
        if !(self.t_safe >= 0.0 && self.t_safe.is_finite()) {
            return Err(ConfigError::invalid("metrics.t_safe", "must be >= 0"));
        }
        Ok(())
    }
}

fn gaps(state: &JointState, geometry: &ScenarioGeometry, signed: bool) -> (f64, f64) {
    if signed {
        (geometry.conflict_x - state.x_veh, geometry.conflict_y - state.y_ped)
    } else {
        (geometry.veh_gap(state.x_veh), geometry.ped_gap(state.y_ped))
    }
}

/// `(gap_veh + gap_ped) / max(v_veh, kappa)` with gaps clamped at zero.
pub fn ttc_metric(state: &JointState, geometry: &ScenarioGeometry, kappa: f64) -> f64 {
    ttc_metric_with(state, geometry, &MetricsParams { kappa, ..MetricsParams::default() })
}

pub fn ttc_metric_with(state: &JointState, geometry: &ScenarioGeometry, m: &MetricsParams) -> f64 {
    let (gv, gp) = gaps(state, geometry, m.signed_gaps);
    (gv + gp) / state.v_veh.max(m.kappa)
}

/// `0.5 (v_ped^2 + v_veh^2) / (gap_veh + gap_ped + v_veh t_safe)`, the
/// denominator floored at kappa.
pub fn dst_metric(state: &JointState, geometry: &ScenarioGeometry, t_safe: f64) -> f64 {
    dst_metric_with(state, geometry, &MetricsParams { t_safe, ..MetricsParams::default() })
}

pub fn dst_metric_with(state: &JointState, geometry: &ScenarioGeometry, m: &MetricsParams) -> f64 {
    let (gv, gp) = gaps(state, geometry, m.signed_gaps);
    let num = 0.5 * (state.v_ped * state.v_ped + state.v_veh * state.v_veh);
    num / (gv + gp + state.v_veh * m.t_safe).max(m.kappa)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeAverages {
    pub ttc_avg: f64,
    pub dst_avg: f64,
    pub t_end: f64,
    /// Start of the averaging window.
    pub t0: f64,
    pub timeout: bool,
}

/// Trapezoidal time average of `f` over the samples `(t, value)` whose time
/// lies in `[t0, t1]`.
pub fn time_average(samples: &[(f64, f64)], t0: f64, t1: f64) -> Result<f64, MetricsError> {
    if t1 <= t0 {
        return Err(MetricsError::EmptyWindow { t0, t_end: t1 });
    }
    let eps = 1e-9;
    let window: Vec<&(f64, f64)> = samples.iter().filter(|(t, _)| *t >= t0 - eps && *t <= t1 + eps).collect();
    if window.len() < 2 {
        return Err(MetricsError::EmptyWindow { t0, t_end: t1 });
    }
    let mut area = 0.0;
    for w in window.windows(2) {
        let ((ta, fa), (tb, fb)) = (*w[0], *w[1]);
        area += 0.5 * (fa + fb) * (tb - ta);
    }
    let span = window[window.len() - 1].0 - window[0].0;
    Ok(area / span)
}

/// TTC and DST averaged over `[t0, T_end]`, where `t0` is interaction onset
/// (episode start if the interaction never began).
pub fn episode_averages(
    trace: &EpisodeTrace,
    geometry: &ScenarioGeometry,
    m: &MetricsParams,
) -> Result<EpisodeAverages, MetricsError> {
    if trace.records.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let t0 = trace.t0.unwrap_or(trace.records[0].t);
    let t_end = trace.t_end;
    let ttc: Vec<(f64, f64)> = trace.records.iter().map(|r| (r.t, ttc_metric_with(&r.state, geometry, m))).collect();
    let dst: Vec<(f64, f64)> = trace.records.iter().map(|r| (r.t, dst_metric_with(&r.state, geometry, m))).collect();
    Ok(EpisodeAverages {
        ttc_avg: time_average(&ttc, t0, t_end)?,
        dst_avg: time_average(&dst, t0, t_end)?,
        t_end,
        t0,
        timeout: trace.outcome == crate::sim::Outcome::Timeout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g() -> ScenarioGeometry {
        ScenarioGeometry::default()
    }

    #[test]
    fn ttc_examples() {
        let s = JointState::new(0.0, -10.0, 5.0, -3.0, 0.0);
        assert!((ttc_metric(&s, &g(), KAPPA) - 2.6).abs() < 1e-12);
        let s = JointState::new(0.0, -10.0, 0.0, -3.0, 0.0);
        assert!((ttc_metric(&s, &g(), KAPPA) - 13.0 / 0.05).abs() < 1e-9);
        let s = JointState::new(0.0, 5.0, 0.0, 3.0, 0.0);
        assert_eq!(ttc_metric(&s, &g(), KAPPA), 0.0);
    }

    #[test]
    fn signed_gaps_go_negative() {
        let m = MetricsParams { signed_gaps: true, ..MetricsParams::default() };
        let s = JointState::new(0.0, 5.0, 5.0, 3.0, 0.0);
        assert!((ttc_metric_with(&s, &g(), &m) - (-8.0 / 5.0)).abs() < 1e-12);
    }

    #[test]
    fn dst_examples() {
        let s = JointState::new(0.0, -10.0, 0.0, -3.0, 0.0);
        assert_eq!(dst_metric(&s, &g(), T_SAFE), 0.0);
        let s = JointState::new(0.0, -20.0, 10.0, -3.0, 1.4);
        let expected = 0.5 * (100.0 + 1.96) / 33.0;
        assert!((dst_metric(&s, &g(), T_SAFE) - expected).abs() < 1e-12);
        assert!((expected - 1.545).abs() < 1e-3);
        // both gaps and speed zero: denominator floored at kappa
        let s = JointState::new(0.0, 3.0, 0.0, 3.0, 1.0);
        assert!((dst_metric(&s, &g(), T_SAFE) - 0.5 / KAPPA).abs() < 1e-12);
    }

    #[test]
    fn averages_of_constant_and_linear() {
        let dt = 0.05;
        let c: Vec<(f64, f64)> = (0..=200).map(|k| (k as f64 * dt, 3.0)).collect();
        assert!((time_average(&c, 0.0, 10.0).unwrap() - 3.0).abs() < 1e-12);
        let l: Vec<(f64, f64)> = (0..=200).map(|k| (k as f64 * dt, k as f64 * dt)).collect();
        assert!((time_average(&l, 0.0, 10.0).unwrap() - 5.0).abs() < 0.05);
        assert!(matches!(time_average(&l, 2.0, 2.0), Err(MetricsError::EmptyWindow { .. })));
    }

    proptest! {
        #[test]
        fn metrics_nonnegative(x in -60.0..10.0f64, v in 0.0..14.0f64, y in -10.0..5.0f64, vp in -0.5..2.0f64) {
            let s = JointState::new(0.0, x, v, y, vp);
            prop_assert!(ttc_metric(&s, &g(), KAPPA) >= 0.0);
            prop_assert!(dst_metric(&s, &g(), T_SAFE) >= 0.0);
        }

        #[test]
        fn dst_decreases_with_larger_gaps(x in -40.0..-1.0f64, v in 0.1..14.0f64, y in -8.0..-0.5f64, vp in 0.1..2.0f64) {
            let near = JointState::new(0.0, x, v, y, vp);
            let far = JointState::new(0.0, 2.0 * x, v, 2.0 * y, vp);
            prop_assert!(dst_metric(&far, &g(), T_SAFE) < dst_metric(&near, &g(), T_SAFE));
        }
    }
}
