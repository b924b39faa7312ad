//! Planar point-mass quadruped in a trot: state `(y, z, φ, ẏ, ż, φ̇)`.
//!
//! One diagonal leg pair is in stance at a time; the pair swaps every
//! `step_time` and the new feet touch down at `±foot_offset` from the
//! center of mass. Inputs are `(F_h,front, F_h,rear, F_v,front, F_v,rear)`:
//! ground reaction forces of the front and rear stance feet.

use serde::{Deserialize, Serialize};

use super::{Plant, PlantError, Result};
use crate::clf::LinearModel;
use crate::hj::MassUncertainAxis;
use crate::matrixkit::DenseMatrix;
use crate::mpc::{NominalModel, RefPoint};

/// Constant horizontal term subtracted from the forward acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizontalBias {
    /// The friction coefficient itself.
    #[default]
    Mu,
    /// Friction coefficient times gravity.
    MuG,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrupedParams {
    pub m: f64,
    pub i_xx: f64,
    pub g: f64,
    pub leg_len: f64,
    pub friction_coeff: f64,
    pub delta_m: f64,
    pub step_time: f64,
    pub z_ref: f64,
    pub v_ref: f64,
    pub foot_offset: f64,
    pub horizontal_bias: HorizontalBias,
}

impl Default for QuadrupedParams {
    fn default() -> Self {
        Self {
            m: 12.454,
            i_xx: 0.0565,
            g: 9.81,
            leg_len: 0.2,
            friction_coeff: 0.6,
            delta_m: 5.0,
            step_time: 0.2,
            z_ref: 0.32,
            v_ref: 0.45,
            foot_offset: 0.15,
            horizontal_bias: HorizontalBias::Mu,
        }
    }
}

impl QuadrupedParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.m, self.i_xx, self.g, self.step_time, self.foot_offset];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite())
            || !(self.delta_m >= 0.0)
            || !(self.friction_coeff >= 0.0)
        {
            return Err(PlantError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }

    pub fn bias(&self) -> f64 {
        match self.horizontal_bias {
            HorizontalBias::Mu => self.friction_coeff,
            HorizontalBias::MuG => self.friction_coeff * self.g,
            HorizontalBias::Zero => 0.0,
        }
    }
}

/// Unknown payload acting on the robot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Load {
    /// Extra mass moving with the torso.
    pub delta_m: f64,
    /// Constant force opposing forward motion.
    pub resist_force: f64,
}

impl Load {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn carry(delta_m: f64) -> Self {
        Self {
            delta_m,
            resist_force: 0.0,
        }
    }

    /// Pushing a box of mass `delta_m` that slides with friction: only the
    /// resistive force acts on the robot.
    pub fn push(delta_m: f64, p: &QuadrupedParams) -> Self {
        Self {
            delta_m: 0.0,
            resist_force: p.friction_coeff * delta_m * p.g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagonalPair {
    /// Front-left with rear-right.
    I,
    /// Front-right with rear-left.
    J,
}

impl DiagonalPair {
    pub fn other(self) -> Self {
        match self {
            Self::I => Self::J,
            Self::J => Self::I,
        }
    }
}

/// Active stance: which pair, where its feet are, and what they push.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StanceState {
    pub pair: DiagonalPair,
    /// Horizontal world positions of the front and rear feet.
    pub foot_front: f64,
    pub foot_rear: f64,
    /// `[horizontal, vertical]` force of the front and rear feet.
    pub f_front: [f64; 2],
    pub f_rear: [f64; 2],
}

impl StanceState {
    pub fn touchdown(pair: DiagonalPair, com_y: f64, offset: f64) -> Self {
        Self {
            pair,
            foot_front: com_y + offset,
            foot_rear: com_y - offset,
            f_front: [0.0, 0.0],
            f_rear: [0.0, 0.0],
        }
    }

    /// Vectors from the front and rear feet to the center of mass.
    pub fn lever_arms(&self, x: &[f64]) -> ([f64; 2], [f64; 2]) {
        ([x[0] - self.foot_front, x[1]], [x[0] - self.foot_rear, x[1]])
    }

    pub fn with_forces(mut self, u: &[f64]) -> Self {
        self.f_front = [u[0], u[2]];
        self.f_rear = [u[1], u[3]];
        self
    }

    pub fn check_contact(&self, friction: f64) -> Result<()> {
        for (leg, f) in [("front", self.f_front), ("rear", self.f_rear)] {
            let slack = 1e-9 * (1.0 + f[1].abs());
            if f[1] < -slack {
                return Err(PlantError::ContactViolation {
                    leg,
                    detail: format!("vertical force {:.4} N < 0", f[1]),
                });
            }
            if f[0].abs() > friction * f[1] + slack {
                return Err(PlantError::ContactViolation {
                    leg,
                    detail: format!("|F_h| = {:.4} N exceeds {friction} × {:.4} N", f[0].abs(), f[1]),
                });
            }
        }
        Ok(())
    }
}

/// Planar cross product `r × F` for `r = (r_y, r_z)`, `F = (F_y, F_z)`.
pub fn cross(r: [f64; 2], f: [f64; 2]) -> f64 {
    r[0] * f[1] - r[1] * f[0]
}

/// Right-hand side with true mass `m + Δm`. Rejects forces outside the
/// friction cone.
pub fn quadruped_f(x: &[f64], stance: &StanceState, load: &Load, p: &QuadrupedParams) -> Result<Vec<f64>> {
    stance.check_contact(p.friction_coeff)?;
    let m_bar = p.m + load.delta_m;
    let (rf, rr) = stance.lever_arms(x);
    let (ff, fr) = (stance.f_front, stance.f_rear);
    Ok(vec![
        x[3],
        x[4],
        x[5],
        (ff[0] + fr[0] - load.resist_force) / m_bar - p.bias(),
        (ff[1] + fr[1]) / m_bar - p.g,
        (cross(rf, ff) + cross(rr, fr)) / p.i_xx,
    ])
}

/// Per-axis double-integrator models `x₁ = (y, ẏ)`, `x₂ = (z, ż)` with the
/// nominal mass.
pub fn quadruped_linear_subsystems(p: &QuadrupedParams) -> (LinearModel, LinearModel) {
    let build = |g: f64| {
        let a = DenseMatrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let b = DenseMatrix::from_rows(&[&[0.0, 0.0], &[1.0 / p.m, 1.0 / p.m]]);
        let b_w = DenseMatrix::from_rows(&[&[0.0], &[1.0]]);
        let g = DenseMatrix::from_rows(&[&[0.0], &[g]]);
        LinearModel { a, b, b_w, g }
    };
    (build(p.bias()), build(-p.g))
}

/// Error dynamics of one axis under mass uncertainty, for reachability.
pub fn axis_uncertainty(p: &QuadrupedParams, vertical: bool, pushing: bool, force_max: f64) -> MassUncertainAxis {
    MassUncertainAxis {
        mass: p.m,
        bias: if vertical { p.g } else { p.bias() },
        gravity: p.g,
        delta_m_max: p.delta_m,
        resist_coeff: if pushing && !vertical { p.friction_coeff } else { 0.0 },
        carried: !pushing,
        force_max,
    }
}

/// Feed-forward forces that hold a constant-velocity gait with the nominal
/// mass and symmetric feet.
pub fn trim_forces(p: &QuadrupedParams, z: f64) -> Vec<f64> {
    let fh = p.m * p.bias();
    let fv = p.m * p.g;
    // -offset·F_v,f + offset·F_v,r - z·ΣF_h = 0
    let diff = z * fh / p.foot_offset;
    vec![0.5 * fh, 0.5 * fh, 0.5 * (fv - diff), 0.5 * (fv + diff)]
}

pub fn reference_point(p: &QuadrupedParams, y: f64) -> RefPoint {
    RefPoint {
        x: vec![y, p.z_ref, 0.0, p.v_ref, 0.0, 0.0],
        u: trim_forces(p, p.z_ref),
    }
}

/// Nominal prediction model: nominal mass, symmetric feet, no contact
/// checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrupedNominal {
    pub params: QuadrupedParams,
}

impl NominalModel for QuadrupedNominal {
    fn state_dim(&self) -> usize {
        6
    }
    fn control_dim(&self) -> usize {
        4
    }
    fn f(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let rf = [-p.foot_offset, x[1]];
        let rr = [p.foot_offset, x[1]];
        vec![
            x[3],
            x[4],
            x[5],
            (u[0] + u[1]) / p.m - p.bias(),
            (u[2] + u[3]) / p.m - p.g,
            (cross(rf, [u[0], u[2]]) + cross(rr, [u[1], u[3]])) / p.i_xx,
        ]
    }
}

/// Simulated robot: trot scheduler, stance allocation and true load.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrupedPlant {
    pub params: QuadrupedParams,
    pub load: Load,
    pub stance: StanceState,
    next_touchdown: f64,
    /// Pitch stabilization `τ = I_xx (-kp φ - kd φ̇)` used by the allocator.
    pub pitch_gains: [f64; 2],
}

impl QuadrupedPlant {
    pub fn new(params: QuadrupedParams, load: Load, y0: f64) -> Self {
        Self {
            params,
            load,
            stance: StanceState::touchdown(DiagonalPair::I, y0, params.foot_offset),
            next_touchdown: params.step_time,
            pitch_gains: [900.0, 60.0],
        }
    }

    /// Keeps the commanded totals `ΣF_h`, `ΣF_v` and redistributes them
    /// over the stance feet: the vertical split sets the pitch torque to the
    /// stabilizing value, the horizontal split follows the vertical one,
    /// and both are clipped to the friction cone.
    pub fn allocate(&self, x: &[f64], u: &[f64]) -> [f64; 4] {
        let p = &self.params;
        let fh = u[0] + u[1];
        let fv = (u[2] + u[3]).max(0.0);
        let tau = p.i_xx * (-self.pitch_gains[0] * x[2] - self.pitch_gains[1] * x[5]);
        let (rf, rr) = self.stance.lever_arms(x);
        // rf_y·F_v,f + rr_y·F_v,r - z·ΣF_h = τ
        let mut fvf = (tau + x[1] * fh - rr[0] * fv) / (rf[0] - rr[0]);
        fvf = fvf.clamp(0.0, fv);
        let fvr = fv - fvf;
        let share = |v: f64| if fv > 0.0 { fh * v / fv } else { 0.0 };
        let cone = |h: f64, v: f64| h.clamp(-p.friction_coeff * v, p.friction_coeff * v);
        [cone(share(fvf), fvf), cone(share(fvr), fvr), fvf, fvr]
    }
}

impl Plant for QuadrupedPlant {
    fn state_dim(&self) -> usize {
        6
    }
    fn control_dim(&self) -> usize {
        4
    }
    fn disturbance_dim(&self) -> usize {
        0
    }
    fn dynamics(&self, x: &[f64], u: &[f64], _w: &[f64]) -> Result<Vec<f64>> {
        if x.len() != 6 || u.len() != 4 {
            return Err(PlantError::DimensionMismatch(format!("x {}, u {}", x.len(), u.len())));
        }
        quadruped_f(x, &self.stance.with_forces(u), &self.load, &self.params)
    }

    fn advance(&mut self, t: f64, x: &[f64]) {
        while t + 1e-12 >= self.next_touchdown {
            self.stance = StanceState::touchdown(self.stance.pair.other(), x[0], self.params.foot_offset);
            self.next_touchdown += self.params.step_time;
        }
    }

    fn admissible(&self, x: &[f64], u: Vec<f64>) -> Vec<f64> {
        self.allocate(x, &u).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stand(p: &QuadrupedParams, m_total: f64) -> (Vec<f64>, StanceState) {
        let x = vec![0.0, p.z_ref, 0.0, 0.0, 0.0, 0.0];
        let fv = 0.5 * m_total * p.g;
        let s = StanceState::touchdown(DiagonalPair::I, 0.0, p.foot_offset).with_forces(&[0.0, 0.0, fv, fv]);
        (x, s)
    }

    #[test]
    fn static_stand_balances() {
        let p = QuadrupedParams {
            horizontal_bias: HorizontalBias::Zero,
            ..Default::default()
        };
        let load = Load::carry(2.0);
        let (x, s) = stand(&p, p.m + 2.0);
        let f = quadruped_f(&x, &s, &load, &p).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-12), "{f:?}");
    }

    #[test]
    fn extra_mass_sags() {
        let p = QuadrupedParams::default();
        let load = Load::carry(5.0);
        let (x, s) = stand(&p, p.m);
        let f = quadruped_f(&x, &s, &load, &p).unwrap();
        let expect = p.m * p.g / (p.m + 5.0) - p.g;
        assert!((f[4] - expect).abs() < 1e-12);
        assert!(f[4] < 0.0);
    }

    #[test]
    fn torque_matches_cross_product() {
        let p = QuadrupedParams::default();
        let x = [0.03, 0.31, 0.0, 0.0, 0.0, 0.0];
        let s = StanceState {
            pair: DiagonalPair::J,
            foot_front: 0.2,
            foot_rear: -0.11,
            f_front: [5.0, 70.0],
            f_rear: [-3.0, 55.0],
        };
        let f = quadruped_f(&x, &s, &Load::none(), &p).unwrap();
        // independent 3-D cross product with x-axis out of plane
        let cross3 = |r: [f64; 3], f: [f64; 3]| {
            [
                r[1] * f[2] - r[2] * f[1],
                r[2] * f[0] - r[0] * f[2],
                r[0] * f[1] - r[1] * f[0],
            ]
        };
        let tf = cross3([0.0, 0.03 - 0.2, 0.31], [0.0, 5.0, 70.0]);
        let tr = cross3([0.0, 0.03 + 0.11, 0.31], [0.0, -3.0, 55.0]);
        assert!((f[5] - (tf[0] + tr[0]) / p.i_xx).abs() < 1e-8);
    }

    #[test]
    fn contact_violations_rejected() {
        let p = QuadrupedParams::default();
        let x = [0.0, 0.32, 0.0, 0.0, 0.0, 0.0];
        let base = StanceState::touchdown(DiagonalPair::I, 0.0, 0.15);
        let pull = base.with_forces(&[0.0, 0.0, -1.0, 50.0]);
        assert!(matches!(
            quadruped_f(&x, &pull, &Load::none(), &p),
            Err(PlantError::ContactViolation { leg: "front", .. })
        ));
        let slip = base.with_forces(&[0.0, 40.0, 50.0, 50.0]);
        assert!(matches!(
            quadruped_f(&x, &slip, &Load::none(), &p),
            Err(PlantError::ContactViolation { leg: "rear", .. })
        ));
    }

    #[test]
    fn linear_subsystems_entries() {
        let p = QuadrupedParams::default();
        let (ly, lz) = quadruped_linear_subsystems(&p);
        for l in [&ly, &lz] {
            assert_eq!(l.a.data(), &[0.0, 1.0, 0.0, 0.0]);
            assert!((l.b[(1, 0)] - 0.08030).abs() < 1e-5);
            assert_eq!(l.b[(1, 0)], l.b[(1, 1)]);
            assert_eq!(l.b_w[(1, 0)], 1.0);
        }
        assert_eq!(lz.g[(1, 0)], -9.81);
        assert_eq!(ly.g[(1, 0)], 0.6);
        let pg = QuadrupedParams {
            horizontal_bias: HorizontalBias::MuG,
            ..p
        };
        assert!((quadruped_linear_subsystems(&pg).0.g[(1, 0)] - 0.6 * 9.81).abs() < 1e-12);
    }

    #[test]
    fn trim_forces_hold_the_nominal_gait() {
        let p = QuadrupedParams::default();
        let model = QuadrupedNominal { params: p };
        let r = reference_point(&p, 0.0);
        let f = model.f(&r.x, &r.u);
        assert!(f[3].abs() < 1e-12 && f[4].abs() < 1e-12 && f[5].abs() < 1e-9, "{f:?}");
        assert_eq!(f[0], p.v_ref);
    }

    #[test]
    fn allocation_respects_cone_and_totals() {
        let p = QuadrupedParams::default();
        let plant = QuadrupedPlant::new(p, Load::none(), 0.0);
        let x = [0.02, 0.32, 0.01, 0.4, 0.0, -0.2];
        let u = plant.allocate(&x, &[10.0, 2.0, 60.0, 70.0]);
        assert!((u[2] + u[3] - 130.0).abs() < 1e-9);
        assert!((u[0] + u[1] - 12.0).abs() < 1e-9);
        let s = plant.stance.with_forces(&u);
        assert!(s.check_contact(p.friction_coeff).is_ok());
        // the net pitch torque is the stabilizing one
        let (rf, rr) = plant.stance.lever_arms(&x);
        let tau = cross(rf, s.f_front) + cross(rr, s.f_rear);
        assert!((tau - p.i_xx * (-900.0 * 0.01 + 60.0 * 0.2)).abs() < 1e-9);
        // negative totals are clipped, never commanded
        let u = plant.allocate(&x, &[0.0, 0.0, -10.0, -5.0]);
        assert_eq!(u, [0.0; 4]);
        let u = plant.allocate(&x, &[500.0, 0.0, 50.0, 50.0]);
        assert!(plant.stance.with_forces(&u).check_contact(p.friction_coeff).is_ok());
    }

    #[test]
    fn trot_scheduler_swaps_pairs() {
        let p = QuadrupedParams::default();
        let mut plant = QuadrupedPlant::new(p, Load::none(), 0.0);
        assert_eq!(plant.stance.pair, DiagonalPair::I);
        plant.advance(0.1, &[0.05, 0.32, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(plant.stance.pair, DiagonalPair::I);
        plant.advance(0.2, &[0.09, 0.32, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(plant.stance.pair, DiagonalPair::J);
        assert!((plant.stance.foot_front - 0.24).abs() < 1e-12);
        assert!((plant.stance.foot_rear + 0.06).abs() < 1e-12);
    }
}
