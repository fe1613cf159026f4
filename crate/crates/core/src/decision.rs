//! Uniform front over the three decision makers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::{
    nia_decide, rbdm_decide, BaselineParams, NiaMode, NiaState, RbdmRule, RbdmRuleSet, RbdmState,
};
use crate::metrics::{ttc_metric, MetricsParams};
use crate::mpc::controller::{IampdmController, MpcDiagnostics};
use crate::mpc::MpcSettings;
use crate::scenario::{classify_zone, ControllerParams, JointState, ScenarioGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Iampdm,
    Rbdm,
    Nia,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::Iampdm, ControllerKind::Rbdm, ControllerKind::Nia];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Iampdm => "iampdm",
            ControllerKind::Rbdm => "rbdm",
            ControllerKind::Nia => "nia",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "iampdm" => Ok(ControllerKind::Iampdm),
            "rbdm" => Ok(ControllerKind::Rbdm),
            "nia" => Ok(ControllerKind::Nia),
            other => Err(format!("unknown controller `{other}` (expected iampdm, rbdm or nia)")),
        }
    }
}

/// Everything a controller needs besides the live state.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSetup {
    pub params: ControllerParams,
    pub geometry: ScenarioGeometry,
    pub mpc: MpcSettings,
    pub baseline: BaselineParams,
    pub metrics: MetricsParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerDiag {
    Iampdm(MpcDiagnostics),
    Rbdm { rule: RbdmRule },
    Nia { mode: NiaMode, stop_clock: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub u: f64,
    pub intention_eff: f64,
    pub diag: ControllerDiag,
}

#[derive(Debug, Clone)]
enum Inner {
    Iampdm(Box<IampdmController>),
    Rbdm(RbdmState),
    Nia(NiaState),
}

/// A controller instance with its own mutable state. One per episode.
#[derive(Debug, Clone)]
pub struct Controller {
    kind: ControllerKind,
    setup: ControllerSetup,
    inner: Inner,
}

impl Controller {
    pub fn new(kind: ControllerKind, setup: ControllerSetup) -> Self {
        let inner = match kind {
            ControllerKind::Iampdm => Inner::Iampdm(Box::new(IampdmController::new(
                setup.params.clone(),
                setup.geometry.clone(),
                setup.mpc.clone(),
                setup.baseline.k_p,
            ))),
            ControllerKind::Rbdm => Inner::Rbdm(RbdmState::default()),
            ControllerKind::Nia => Inner::Nia(NiaState::default()),
        };
        Self { kind, setup, inner }
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn setup(&self) -> &ControllerSetup {
        &self.setup
    }

    /// Called once per control tick.
    pub fn decide(&mut self, state: &JointState, intention_raw: f64) -> Decision {
        let s = &self.setup;
        let dt = s.params.dt;
        let zone = classify_zone(state.y_ped, &s.geometry);
        let ttc = ttc_metric(state, &s.geometry, s.metrics.kappa);
        match &mut self.inner {
            Inner::Iampdm(c) => {
                let (u, d) = c.decide(state, intention_raw);
                Decision { u, intention_eff: d.intention_eff, diag: ControllerDiag::Iampdm(d) }
            }
            Inner::Rbdm(st) => {
                let rules = RbdmRuleSet::from_params(&s.params, &s.baseline);
                let (u, rule) = rbdm_decide(
                    state,
                    intention_raw,
                    zone,
                    ttc,
                    &rules,
                    st,
                    dt,
                    &s.geometry,
                    &s.params,
                    &s.baseline,
                );
                Decision { u, intention_eff: intention_raw, diag: ControllerDiag::Rbdm { rule } }
            }
            Inner::Nia(st) => {
                let u = nia_decide(state, zone, ttc, st, dt, &s.geometry, &s.params, &s.baseline);
                Decision {
                    u,
                    intention_eff: intention_raw,
                    diag: ControllerDiag::Nia { mode: st.mode, stop_clock: st.stop_clock },
                }
            }
        }
    }
}
