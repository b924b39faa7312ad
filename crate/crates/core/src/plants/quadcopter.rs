//! Planar quadcopter: state `(y, z, φ, ẏ, ż, φ̇)`, inputs `(u_s, u_d)` (sum
//! and difference of the two rotor thrusts), additive acceleration
//! disturbance `(w₁, w₂)`.

use serde::{Deserialize, Serialize};

use super::reference::FlatOutput;
use super::{Plant, PlantError, Result};
use crate::clf::LinearModel;
use crate::matrixkit::DenseMatrix;
use crate::mpc::{NominalModel, RefPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadcopterParams {
    pub m: f64,
    pub l: f64,
    pub i_xx: f64,
    pub g: f64,
}

impl Default for QuadcopterParams {
    fn default() -> Self {
        Self {
            m: 1.0,
            l: 0.2,
            i_xx: 0.1,
            g: 9.81,
        }
    }
}

impl QuadcopterParams {
    pub fn validate(&self) -> Result<()> {
        if [self.m, self.l, self.i_xx, self.g]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            Ok(())
        } else {
            Err(PlantError::InvalidParams(format!("{self:?}")))
        }
    }

    pub fn hover_thrust(&self) -> f64 {
        self.m * self.g
    }
}

pub fn quadcopter_f(x: &[f64], u: &[f64], w: &[f64], p: &QuadcopterParams) -> Vec<f64> {
    let (phi, us, ud) = (x[2], u[0], u[1]);
    vec![
        x[3],
        x[4],
        x[5],
        -us * phi.sin() / p.m + w[0],
        us * phi.cos() / p.m - p.g + w[1],
        0.5 * p.l * ud / p.i_xx,
    ]
}

/// Small-angle model about hover. `B u + G` vanishes at `u = (mg, 0)`, so
/// the input is read as absolute thrust; the synthesis only uses `A`, `B`
/// and `B_w`.
pub fn quadcopter_linearize(p: &QuadcopterParams) -> LinearModel {
    let mut a = DenseMatrix::zeros(6, 6);
    a[(0, 3)] = 1.0;
    a[(1, 4)] = 1.0;
    a[(2, 5)] = 1.0;
    a[(3, 2)] = -p.g;
    let mut b = DenseMatrix::zeros(6, 2);
    b[(4, 0)] = 1.0 / p.m;
    b[(5, 1)] = 0.5 * p.l / p.i_xx;
    let mut b_w = DenseMatrix::zeros(6, 2);
    b_w[(3, 0)] = 1.0;
    b_w[(4, 1)] = 1.0;
    let mut g = DenseMatrix::zeros(6, 1);
    g[(4, 0)] = -p.g;
    LinearModel { a, b, b_w, g }
}

/// State and input that reproduce a flat output exactly. Needs the output
/// up to its fourth derivative.
pub fn flat_state(p: &QuadcopterParams, r: &FlatOutput) -> RefPoint {
    // u_s sin φ = -m ÿ, u_s cos φ = m (z̈ + g)
    let (a, da, dda) = (-r.y[2], -r.y[3], -r.y[4]);
    let (b, db, ddb) = (r.z[2] + p.g, r.z[3], r.z[4]);
    let d = a * a + b * b;
    let phi = a.atan2(b);
    let num = da * b - a * db;
    let dphi = num / d;
    let dnum = dda * b - a * ddb;
    let dd = 2.0 * (a * da + b * db);
    let ddphi = (dnum * d - num * dd) / (d * d);
    RefPoint {
        x: vec![r.y[0], r.z[0], phi, r.y[1], r.z[1], dphi],
        u: vec![p.m * d.sqrt(), 2.0 * p.i_xx * ddphi / p.l],
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Quadcopter {
    pub params: QuadcopterParams,
}

impl Plant for Quadcopter {
    fn state_dim(&self) -> usize {
        6
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn disturbance_dim(&self) -> usize {
        2
    }
    fn dynamics(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        if x.len() != 6 || u.len() != 2 || w.len() != 2 {
            return Err(PlantError::DimensionMismatch(format!(
                "x {}, u {}, w {}",
                x.len(),
                u.len(),
                w.len()
            )));
        }
        Ok(quadcopter_f(x, u, w, &self.params))
    }
}

impl NominalModel for Quadcopter {
    fn state_dim(&self) -> usize {
        6
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn f(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        quadcopter_f(x, u, &[0.0, 0.0], &self.params)
    }
}
