//! Scripted pedestrians for the four evaluation scenarios.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::scenario::{is_ped_passed, is_veh_passed, JointState, ScenarioGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Crossing,
    Remaining,
    DelayedCrossing,
    DelayedRemaining,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Crossing,
        ScenarioKind::Remaining,
        ScenarioKind::DelayedCrossing,
        ScenarioKind::DelayedRemaining,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Crossing => "crossing",
            ScenarioKind::Remaining => "remaining",
            ScenarioKind::DelayedCrossing => "delayed_crossing",
            ScenarioKind::DelayedRemaining => "delayed_remaining",
        }
    }

    pub fn is_delayed(self) -> bool {
        matches!(self, ScenarioKind::DelayedCrossing | ScenarioKind::DelayedRemaining)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match norm.as_str() {
            "crossing" => Ok(ScenarioKind::Crossing),
            "remaining" => Ok(ScenarioKind::Remaining),
            "delayedcrossing" => Ok(ScenarioKind::DelayedCrossing),
            "delayedremaining" => Ok(ScenarioKind::DelayedRemaining),
            _ => Err(format!(
                "unknown scenario `{s}` (expected crossing, remaining, delayed_crossing or delayed_remaining)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PedPhase {
    Approach,
    Hesitate,
    Commit,
    Yield,
    Done,
}

/// Intention signal per script phase; `Done` keeps the previous phase's value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentionProfile {
    pub approach: f64,
    pub hesitate: f64,
    pub commit: f64,
    #[serde(rename = "yield")]
    pub yield_: f64,
}

impl IntentionProfile {
    pub fn for_kind(kind: ScenarioKind) -> Self {
        let (approach, hesitate, commit, yield_) = match kind {
            ScenarioKind::Crossing => (1.0, 1.0, 1.0, 1.0),
            ScenarioKind::Remaining => (0.0, 0.0, 0.0, 0.0),
            ScenarioKind::DelayedCrossing => (0.0, 0.0, 1.0, 0.0),
            ScenarioKind::DelayedRemaining => (1.0, 1.0, 1.0, 0.0),
        };
        Self { approach, hesitate, commit, yield_ }
    }
}

/// Shared tunables of the scripted pedestrians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptParams {
    /// Where the delayed scenarios pause (pedestrian axis, m).
    pub hesitation_point: f64,
    pub hesitation_duration: f64,
    /// Standard deviations of the seeded jitter on the two values above.
    pub point_sigma: f64,
    pub duration_sigma: f64,
    /// Curb waiting position.
    pub stop_point: f64,
    pub walk_speed: f64,
    /// Smallest vehicle time gap (s) the pedestrian accepts to step onto the
    /// road.
    pub accept_gap: f64,
    /// Vehicle distance within which the pedestrian signals at all.
    pub signal_range: f64,
}

impl Default for ScriptParams {
    fn default() -> Self {
        Self {
            hesitation_point: -2.6,
            hesitation_duration: 2.0,
            point_sigma: 0.3,
            duration_sigma: 0.5,
            stop_point: -2.4,
            walk_speed: 1.4,
            accept_gap: 4.0,
            signal_range: 50.0,
        }
    }
}

impl ScriptParams {
    pub fn validate(&self, geometry: &ScenarioGeometry) -> Result<(), ConfigError> {
        let curb = geometry.safe_zone.lo..geometry.near_zone.hi;
        if !curb.contains(&self.hesitation_point) {
            return Err(ConfigError::invalid("script.hesitation_point", "must lie in the safe or near zone"));
        }
        if !curb.contains(&self.stop_point) {
            return Err(ConfigError::invalid("script.stop_point", "must lie in the safe or near zone"));
        }
        for (name, v) in [
            ("script.hesitation_duration", self.hesitation_duration),
            ("script.point_sigma", self.point_sigma),
            ("script.duration_sigma", self.duration_sigma),
            ("script.accept_gap", self.accept_gap),
            ("script.signal_range", self.signal_range),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(name, "must be finite and >= 0"));
            }
        }
        if !(self.walk_speed > 0.0 && self.walk_speed <= 2.0) {
            return Err(ConfigError::invalid("script.walk_speed", "must lie in (0, 2]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub kind: ScenarioKind,
    pub params: ScriptParams,
    pub intention_profile: IntentionProfile,
    pub rng_seed: u64,
}

impl ScenarioScript {
    pub fn new(kind: ScenarioKind, params: ScriptParams, rng_seed: u64) -> Self {
        Self { kind, params, intention_profile: IntentionProfile::for_kind(kind), rng_seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PedPolicyState {
    pub phase: PedPhase,
    pub phase_clock: f64,
}

/// Source of the pedestrian's target speed and intention signal each tick.
pub trait PedestrianPolicy {
    /// `(target_speed, intention)` for the current tick.
    fn command(&mut self, state: &JointState, dt: f64) -> (f64, f64);

    fn phase(&self) -> Option<PedPhase> {
        None
    }
}

/// A scripted pedestrian with its jittered hesitation drawn once from the
/// seed.
#[derive(Debug, Clone)]
pub struct ScriptedPedestrian {
    pub script: ScenarioScript,
    geometry: ScenarioGeometry,
    /// Seconds of lag to anticipate when aiming to stop at a point.
    lead_time: f64,
    kappa: f64,
    pub hesitation_point: f64,
    pub hesitation_duration: f64,
    pub state: PedPolicyState,
    last_intention: f64,
}

impl ScriptedPedestrian {
    pub fn new(script: ScenarioScript, geometry: ScenarioGeometry, lead_time: f64, kappa: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(script.rng_seed);
        let p = &script.params;
        let hp = Normal::new(p.hesitation_point, p.point_sigma).expect("sigma validated").sample(&mut rng);
        let hd = Normal::new(p.hesitation_duration, p.duration_sigma).expect("sigma validated").sample(&mut rng);
        let hp = hp.clamp(geometry.safe_zone.lo, geometry.near_zone.hi - 0.1);
        let hd = hd.max(0.0);
        let last_intention = script.intention_profile.approach;
        Self {
            script,
            geometry,
            lead_time,
            kappa,
            hesitation_point: hp,
            hesitation_duration: hd,
            state: PedPolicyState { phase: PedPhase::Approach, phase_clock: 0.0 },
            last_intention,
        }
    }

    fn enter(&mut self, phase: PedPhase) {
        self.state = PedPolicyState { phase, phase_clock: 0.0 };
    }

    /// The vehicle is past, or far enough away in time, to step onto the road.
    fn gap_accepted(&self, s: &JointState) -> bool {
        is_veh_passed(s, &self.geometry)
            || self.geometry.veh_gap(s.x_veh) / s.v_veh.max(self.kappa) >= self.script.params.accept_gap
    }

    fn reached(&self, s: &JointState, point: f64) -> bool {
        s.y_ped >= point - s.v_ped.max(0.0) * self.lead_time
    }

    fn on_road(&self, s: &JointState) -> bool {
        s.y_ped >= self.geometry.crossing_zone.lo
    }
}

/// One step of the scripted policy: phase transitions, then the target speed
/// and intention for the (possibly new) phase.
pub fn scripted_ped_policy(ped: &mut ScriptedPedestrian, state: &JointState, dt: f64) -> (f64, f64) {
    let kind = ped.script.kind;
    let walk = ped.script.params.walk_speed;
    let stop_point = ped.script.params.stop_point;
    ped.state.phase_clock += dt;

    let target = loop {
        match ped.state.phase {
            PedPhase::Approach => {
                let next = match kind {
                    ScenarioKind::DelayedCrossing | ScenarioKind::DelayedRemaining
                        if ped.reached(state, ped.hesitation_point) =>
                    {
                        Some(PedPhase::Hesitate)
                    }
                    ScenarioKind::Crossing if ped.on_road(state) || ped.gap_accepted(state) => {
                        Some(PedPhase::Commit)
                    }
                    ScenarioKind::Remaining if ped.reached(state, stop_point) => Some(PedPhase::Yield),
                    _ => None,
                };
                match next {
                    Some(p) => ped.enter(p),
                    None if kind == ScenarioKind::Crossing && ped.reached(state, stop_point) => break 0.0,
                    None => break walk,
                }
            }
            PedPhase::Hesitate => {
                if ped.state.phase_clock >= ped.hesitation_duration {
                    ped.enter(if kind == ScenarioKind::DelayedCrossing { PedPhase::Commit } else { PedPhase::Yield });
                } else {
                    break 0.0;
                }
            }
            PedPhase::Commit => {
                if is_ped_passed(state, &ped.geometry) {
                    ped.enter(PedPhase::Done);
                } else if ped.on_road(state) || ped.gap_accepted(state) || !ped.reached(state, stop_point) {
                    break walk;
                } else {
                    break 0.0;
                }
            }
            PedPhase::Yield => {
                if is_veh_passed(state, &ped.geometry) {
                    ped.enter(PedPhase::Done);
                } else {
                    break 0.0;
                }
            }
            PedPhase::Done => break if is_ped_passed(state, &ped.geometry) || ped.on_road(state) { walk } else { 0.0 },
        }
    };

    let profile = ped.script.intention_profile;
    let mut intention = match ped.state.phase {
        PedPhase::Approach => profile.approach,
        PedPhase::Hesitate => profile.hesitate,
        PedPhase::Commit => profile.commit,
        PedPhase::Yield => profile.yield_,
        PedPhase::Done => ped.last_intention,
    };
    if ped.geometry.veh_gap(state.x_veh) > ped.script.params.signal_range {
        intention = 0.0;
    }
    ped.last_intention = intention;
    (target, intention)
}

impl PedestrianPolicy for ScriptedPedestrian {
    fn command(&mut self, state: &JointState, dt: f64) -> (f64, f64) {
        scripted_ped_policy(self, state, dt)
    }

    fn phase(&self) -> Option<PedPhase> {
        Some(self.state.phase)
    }
}

/// Holds a fixed target speed and intention. Used for the standing-pedestrian
/// deadlock checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPedestrian {
    pub target_speed: f64,
    pub intention: f64,
}

impl PedestrianPolicy for ConstantPedestrian {
    fn command(&mut self, _state: &JointState, _dt: f64) -> (f64, f64) {
        (self.target_speed, self.intention)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ped(kind: ScenarioKind, seed: u64) -> ScriptedPedestrian {
        ScriptedPedestrian::new(
            ScenarioScript::new(kind, ScriptParams::default(), seed),
            ScenarioGeometry::default(),
            0.3,
            0.05,
        )
    }

    #[test]
    fn names_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.as_str().parse::<ScenarioKind>().unwrap(), k);
        }
        assert_eq!("DelayedRemaining".parse::<ScenarioKind>().unwrap(), ScenarioKind::DelayedRemaining);
        assert!("jaywalk".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn remaining_at_curb_yields_silently() {
        let mut p = ped(ScenarioKind::Remaining, 1);
        let s = JointState::new(0.0, -30.0, 8.0, -2.4, 0.0);
        assert_eq!(scripted_ped_policy(&mut p, &s, 0.05), (0.0, 0.0));
        assert_eq!(p.state.phase, PedPhase::Yield);
    }

    #[test]
    fn delayed_crossing_commits_after_hesitation() {
        let mut p = ped(ScenarioKind::DelayedCrossing, 3);
        let at = JointState::new(0.0, -30.0, 0.0, p.hesitation_point, 0.0);
        let (v, i) = scripted_ped_policy(&mut p, &at, 0.05);
        assert_eq!((v, i), (0.0, 0.0));
        assert_eq!(p.state.phase, PedPhase::Hesitate);
        let mut out = (0.0, 0.0);
        for _ in 0..((p.hesitation_duration / 0.05) as usize + 2) {
            out = scripted_ped_policy(&mut p, &at, 0.05);
        }
        assert_eq!(p.state.phase, PedPhase::Commit);
        // the vehicle stands, so the gap is accepted
        assert_eq!(out, (1.4, 1.0));
    }

    #[test]
    fn delayed_remaining_drops_intention() {
        let mut p = ped(ScenarioKind::DelayedRemaining, 3);
        let far = JointState::new(0.0, -45.0, 8.0, -6.5, 1.2);
        assert_eq!(scripted_ped_policy(&mut p, &far, 0.05).1, 1.0);
        let at = JointState::new(1.0, -30.0, 8.0, p.hesitation_point, 0.0);
        for _ in 0..200 {
            scripted_ped_policy(&mut p, &at, 0.05);
        }
        assert_eq!(p.state.phase, PedPhase::Yield);
        assert_eq!(scripted_ped_policy(&mut p, &at, 0.05), (0.0, 0.0));
    }

    #[test]
    fn crossing_waits_for_gap() {
        let mut p = ped(ScenarioKind::Crossing, 0);
        let close = JointState::new(0.0, -10.0, 8.0, -2.4, 0.0);
        assert_eq!(scripted_ped_policy(&mut p, &close, 0.05).0, 0.0);
        let stopped = JointState { v_veh: 0.0, ..close };
        assert_eq!(scripted_ped_policy(&mut p, &stopped, 0.05).0, 1.4);
        assert_eq!(p.state.phase, PedPhase::Commit);
    }

    #[test]
    fn jitter_is_seeded() {
        let a = ped(ScenarioKind::DelayedCrossing, 42);
        let b = ped(ScenarioKind::DelayedCrossing, 42);
        let c = ped(ScenarioKind::DelayedCrossing, 43);
        assert_eq!((a.hesitation_point, a.hesitation_duration), (b.hesitation_point, b.hesitation_duration));
        assert_ne!(a.hesitation_duration, c.hesitation_duration);
        let g = ScenarioGeometry::default();
        for seed in 0..200 {
            let p = ped(ScenarioKind::DelayedRemaining, seed);
            assert!(p.hesitation_point >= g.safe_zone.lo && p.hesitation_point < g.near_zone.hi);
            assert!(p.hesitation_duration >= 0.0);
        }
    }

    #[test]
    fn phase_transitions_are_legal() {
        let legal = |a: PedPhase, b: PedPhase| {
            a == b
                || matches!(
                    (a, b),
                    (PedPhase::Approach, PedPhase::Hesitate | PedPhase::Commit | PedPhase::Yield)
                        | (PedPhase::Hesitate, PedPhase::Commit | PedPhase::Yield)
                        | (PedPhase::Commit | PedPhase::Yield, PedPhase::Done)
                )
        };
        for kind in ScenarioKind::ALL {
            let mut p = ped(kind, 7);
            let mut s = JointState::new(0.0, -45.0, 6.0, -6.5, 1.2);
            let mut prev = p.state.phase;
            for k in 0..600 {
                let (target, _) = scripted_ped_policy(&mut p, &s, 0.05);
                s.v_ped = target;
                s.y_ped += 0.05 * target;
                s.x_veh += 0.05 * s.v_veh;
                s.t = k as f64 * 0.05;
                assert!(legal(prev, p.state.phase), "{kind}: {prev:?} -> {:?}", p.state.phase);
                if !kind.is_delayed() {
                    assert_ne!(p.state.phase, PedPhase::Hesitate);
                }
                prev = p.state.phase;
            }
        }
    }
}
