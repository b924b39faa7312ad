//! Scenario files and the synthesize → reachability → `w_max` → simulate
//! pipeline behind the command-line tool.

mod pipeline;
pub mod svg;

pub use pipeline::*;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clf::{ClfError, ClfParams, LinearModel};
use crate::hj::{Grid2, HjError, Horizon, Stencil, TargetSet};
use crate::lmi::{SdpError, SdpStatus};
use crate::mpc::{MpcConfig, RefPoint};
use crate::plants::quadcopter::{flat_state, quadcopter_linearize, QuadcopterParams};
use crate::plants::quadruped::{quadruped_linear_subsystems, reference_point, QuadrupedParams};
use crate::plants::reference::Reference;
use crate::plants::sim::{ControllerMode, DisturbancePolicy, SimConfig, SimError};
use crate::roa::{RoaError, WmaxOptions};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("synthesis failed for block {block}: {source}")]
    Synthesis { block: String, source: ClfError },
    #[error("no safe region of attraction for block {block}: {source}")]
    NoSafeRoa { block: String, source: RoaError },
    #[error("w_max search failed for block {block}: {source}")]
    Roa { block: String, source: RoaError },
    #[error("reachability failed for block {block}: {source}")]
    Hj { block: String, source: HjError },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl HarnessError {
    /// 2: synthesis infeasible, 3: no safe ROA (including an empty
    /// target), 4: configuration error, 1: anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Synthesis { source, .. } if synthesis_infeasible(source) => 2,
            Self::Synthesis {
                source: ClfError::InvalidParams(_) | ClfError::DimensionMismatch(_),
                ..
            } => 4,
            Self::NoSafeRoa { .. } => 3,
            Self::Hj {
                source: HjError::TargetOutsideGrid,
                ..
            } => 3,
            Self::Hj {
                source: HjError::InvalidGrid(_) | HjError::InvalidHorizon(_),
                ..
            } => 4,
            Self::Roa {
                source: RoaError::InvalidOptions(_),
                ..
            } => 4,
            Self::Config(_) => 4,
            Self::Sim(SimError::InvalidConfig(_)) => 4,
            _ => 1,
        }
    }
}

fn synthesis_infeasible(e: &ClfError) -> bool {
    matches!(
        e,
        ClfError::Sdp(SdpError::Infeasible { .. } | SdpError::NotStrictlyFeasible)
            | ClfError::NotOptimal(SdpStatus::Infeasible | SdpStatus::IterationLimit)
            | ClfError::Singular
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    Quadcopter {
        #[serde(default)]
        params: QuadcopterParams,
    },
    Quadruped {
        #[serde(default)]
        params: QuadrupedParams,
        #[serde(default)]
        load: LoadConfig,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadKind {
    #[default]
    None,
    Carry,
    Push,
}

/// Unknown payload; the mass defaults to the plant's `delta_m`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    #[serde(default)]
    pub kind: LoadKind,
    #[serde(default)]
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    /// Figure-eight through quintic time scaling; quadcopter only.
    Figure8 { t_end: f64, amplitude: f64 },
    /// Constant height and forward speed from the plant parameters;
    /// quadruped only.
    Constant,
}

/// Which linear model a CLF block is synthesized for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subsystem {
    Full,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveKind {
    #[default]
    Reach,
    Invariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HjDynamicsConfig {
    /// Error dynamics of a quadruped axis with unknown extra mass.
    MassAxis {
        force_max: f64,
        #[serde(default)]
        delta_m: Option<f64>,
    },
    /// `ẍ = u`, `|u| ≤ u_max`.
    DoubleIntegrator { u_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjConfig {
    pub grid: Grid2,
    pub target: TargetSet,
    #[serde(default = "default_horizon")]
    pub horizon: Horizon,
    #[serde(default)]
    pub solve: SolveKind,
    #[serde(default)]
    pub stencil: Stencil,
    pub dynamics: HjDynamicsConfig,
    #[serde(default)]
    pub wmax: WmaxOptions,
}

fn default_horizon() -> Horizon {
    Horizon::Converge
}

/// One ancillary feedback block: CLF synthesis on a linear (sub)model and
/// either a fixed disturbance bound or a reachability-derived one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AncillaryConfig {
    pub name: String,
    pub subsystem: Subsystem,
    pub states: Vec<usize>,
    pub controls: Vec<usize>,
    pub clf: ClfParams,
    #[serde(default)]
    pub w_max: Option<f64>,
    #[serde(default)]
    pub hj: Option<HjConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: ControllerMode,
    pub plant: PlantConfig,
    pub reference: ReferenceConfig,
    pub mpc: MpcConfig,
    pub sim: SimConfig,
    #[serde(default)]
    pub disturbance: DisturbancePolicy,
    /// Added to the reference state at `t = 0`.
    #[serde(default)]
    pub initial_offset: Option<Vec<f64>>,
    #[serde(default)]
    pub ancillary: Vec<AncillaryConfig>,
}

/// Scenarios shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig3,
    Fig4a,
    Fig4c,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::Fig3, Figure::Fig4a, Figure::Fig4c];

    pub fn id(self) -> &'static str {
        match self {
            Self::Fig3 => "fig3",
            Self::Fig4a => "fig4a",
            Self::Fig4c => "fig4c",
        }
    }

    pub fn config_text(self) -> &'static str {
        match self {
            Self::Fig3 => include_str!("../../../../configs/fig3.toml"),
            Self::Fig4a => include_str!("../../../../configs/fig4a.toml"),
            Self::Fig4c => include_str!("../../../../configs/fig4c.toml"),
        }
    }

    pub fn scenario(self) -> Scenario {
        Scenario::from_toml(self.config_text()).expect("bundled scenario parses")
    }
}

impl std::str::FromStr for Figure {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.id() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown figure {s:?}; expected fig3, fig4a or fig4c")))
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let sc: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        match self.plant {
            PlantConfig::Quadcopter { .. } => (6, 2),
            PlantConfig::Quadruped { .. } => (6, 4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let (n, m) = self.dims();
        match (&self.plant, &self.reference) {
            (PlantConfig::Quadcopter { params }, ReferenceConfig::Figure8 { t_end, .. }) => {
                params.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
                if !(*t_end > 0.0) {
                    return bad(format!("reference t_end = {t_end}"));
                }
            }
            (PlantConfig::Quadruped { params, load }, ReferenceConfig::Constant) => {
                params.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
                if load.mass.is_some_and(|v| !(v >= 0.0)) {
                    return bad("load mass must be nonnegative".into());
                }
            }
            _ => return bad("reference kind does not match the plant".into()),
        }
        self.mpc
            .validate(n, m)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.sim.validate()?;
        if self.initial_offset.as_ref().is_some_and(|o| o.len() != n) {
            return bad(format!("initial_offset must have {n} entries"));
        }
        let mut names = std::collections::HashSet::new();
        for a in &self.ancillary {
            if !names.insert(a.name.as_str()) {
                return bad(format!("duplicate ancillary block {}", a.name));
            }
            let model = self.linear_model(a)?;
            if a.states.len() != model.n() || a.controls.len() != model.m() {
                return bad(format!(
                    "block {}: {} states / {} controls for a model with n = {}, m = {}",
                    a.name,
                    a.states.len(),
                    a.controls.len(),
                    model.n(),
                    model.m()
                ));
            }
            if a.states.iter().any(|&i| i >= n) || a.controls.iter().any(|&j| j >= m) {
                return bad(format!("block {}: index out of range", a.name));
            }
            if a.w_max.is_some() == a.hj.is_some() {
                return bad(format!("block {}: give exactly one of w_max and hj", a.name));
            }
            if a.w_max.is_some_and(|w| !(w > 0.0)) {
                return bad(format!("block {}: w_max must be positive", a.name));
            }
            if let Some(hj) = &a.hj {
                if model.n() != 2 {
                    return bad(format!("block {}: reachability needs a 2-state subsystem", a.name));
                }
                hj.grid.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
                if let HjDynamicsConfig::MassAxis { .. } = hj.dynamics {
                    if !matches!(self.plant, PlantConfig::Quadruped { .. }) || a.subsystem == Subsystem::Full {
                        return bad(format!(
                            "block {}: mass_axis dynamics need a quadruped y/z subsystem",
                            a.name
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn linear_model(&self, a: &AncillaryConfig) -> Result<LinearModel> {
        match (&self.plant, a.subsystem) {
            (PlantConfig::Quadcopter { params }, Subsystem::Full) => Ok(quadcopter_linearize(params)),
            (PlantConfig::Quadruped { params, .. }, Subsystem::Y) => Ok(quadruped_linear_subsystems(params).0),
            (PlantConfig::Quadruped { params, .. }, Subsystem::Z) => Ok(quadruped_linear_subsystems(params).1),
            _ => Err(HarnessError::Config(format!(
                "block {}: subsystem {:?} does not exist for this plant",
                a.name, a.subsystem
            ))),
        }
    }

    /// Reference state and feed-forward input at time `t`.
    pub fn reference_fn(&self) -> Box<dyn Fn(f64) -> RefPoint + Send + Sync> {
        match (&self.plant, &self.reference) {
            (PlantConfig::Quadcopter { params }, ReferenceConfig::Figure8 { t_end, amplitude }) => {
                let (p, r) = (*params, Reference::figure8(*t_end, *amplitude));
                Box::new(move |t| flat_state(&p, &r.eval_clamped(t)))
            }
            (PlantConfig::Quadruped { params, .. }, _) => {
                let p = *params;
                Box::new(move |t| reference_point(&p, p.v_ref * t))
            }
            _ => unreachable!("validated scenario"),
        }
    }

    /// Disturbance policy with the scenario seed applied.
    pub fn disturbance_policy(&self) -> DisturbancePolicy {
        match &self.disturbance {
            DisturbancePolicy::UniformRandom { bound, hold, .. } => DisturbancePolicy::UniformRandom {
                bound: bound.clone(),
                hold: *hold,
                seed: self.seed,
            },
            other => other.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse_and_validate() {
        for f in Figure::ALL {
            let sc = f.scenario();
            assert_eq!(sc.name, f.id());
            assert_eq!(f.id().parse::<Figure>().unwrap(), f);
        }
        assert_eq!("fig9".parse::<Figure>().unwrap_err().exit_code(), 4);
    }

    #[test]
    fn unknown_keys_and_mismatches_are_config_errors() {
        let text = Figure::Fig3.config_text();
        let typo = text.replace("horizon = 2", "horizon = 2\nhorizont = 3");
        assert_eq!(Scenario::from_toml(&typo).unwrap_err().exit_code(), 4);
        let wrong_ref = text.replace(
            "kind = \"figure8\"\nt_end = 5.0\namplitude = 0.5",
            "kind = \"constant\"",
        );
        assert!(matches!(Scenario::from_toml(&wrong_ref), Err(HarnessError::Config(_))));
        let both = text.replace("w_max = 3.5", "w_max = -1.0");
        assert!(matches!(Scenario::from_toml(&both), Err(HarnessError::Config(_))));
    }

    #[test]
    fn seed_reaches_random_policy() {
        let mut sc = Figure::Fig3.scenario().with_seed(42);
        sc.disturbance = DisturbancePolicy::UniformRandom {
            bound: vec![1.0, 1.0],
            hold: 0.1,
            seed: 0,
        };
        match sc.disturbance_policy() {
            DisturbancePolicy::UniformRandom { seed, .. } => assert_eq!(seed, 42),
            other => panic!("unexpected policy {other:?}"),
        }
    }

    #[test]
    fn exit_codes() {
        let infeasible = HarnessError::Synthesis {
            block: "b".into(),
            source: ClfError::NotOptimal(SdpStatus::Infeasible),
        };
        assert_eq!(infeasible.exit_code(), 2);
        let no_roa = HarnessError::NoSafeRoa {
            block: "b".into(),
            source: RoaError::NoSafeRoa,
        };
        assert_eq!(no_roa.exit_code(), 3);
        assert_eq!(HarnessError::Config("x".into()).exit_code(), 4);
        let io = HarnessError::Io {
            path: "p".into(),
            source: std::io::Error::other("x"),
        };
        assert_eq!(io.exit_code(), 1);
    }
}
