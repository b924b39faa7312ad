//! Reference trajectories.

use serde::{Deserialize, Serialize};

use super::{PlantError, Result};

/// Time-scaling polynomial `τ(t) = Σ cₖ tᵏ` with zero velocity and
/// acceleration at both ends and `τ(T) = T`.
pub fn quintic_coefficients(t_end: f64) -> [f64; 6] {
    let t = t_end;
    [
        0.0,
        0.0,
        0.0,
        10.0 / (t * t),
        -15.0 / (t * t * t),
        6.0 / (t * t * t * t),
    ]
}

/// `τ` and its first four time derivatives.
pub fn eval_poly(coeffs: &[f64; 6], t: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (d, slot) in out.iter_mut().enumerate() {
        *slot = (d..6)
            .map(|k| {
                let falling: f64 = (0..d).map(|j| (k - j) as f64).product();
                coeffs[k] * falling * t.powi((k - d) as i32)
            })
            .sum();
    }
    out
}

/// Derivatives of `F(τ(t))` from those of `F` (w.r.t. `τ`) and of `τ`.
fn compose(f: [f64; 5], tau: [f64; 5]) -> [f64; 5] {
    let (t1, t2, t3, t4) = (tau[1], tau[2], tau[3], tau[4]);
    [
        f[0],
        f[1] * t1,
        f[2] * t1 * t1 + f[1] * t2,
        f[3] * t1.powi(3) + 3.0 * f[2] * t1 * t2 + f[1] * t3,
        f[4] * t1.powi(4) + 6.0 * f[3] * t1 * t1 * t2 + f[2] * (3.0 * t2 * t2 + 4.0 * t1 * t3) + f[1] * t4,
    ]
}

/// Derivatives of `a·sin(ωτ + phase)` w.r.t. `τ`.
fn harmonic(a: f64, w: f64, phase: f64, tau: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = a * w.powi(k as i32) * (w * tau + phase + k as f64 * std::f64::consts::FRAC_PI_2).sin();
    }
    out
}

/// Planar position and its first four time derivatives, per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatOutput {
    /// `y[k]` is the k-th derivative of the horizontal position.
    pub y: [f64; 5],
    pub z: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceKind {
    /// `y = a sin 2τ`, `z = a cos τ`.
    Figure8 { amplitude: f64 },
    /// Constant height and forward speed starting from `y0`.
    ConstantHeightVel { z_ref: f64, v_ref: f64, y0: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub kind: ReferenceKind,
    pub t_end: f64,
    pub tau_coeffs: [f64; 6],
}

impl Reference {
    pub fn figure8(t_end: f64, amplitude: f64) -> Self {
        Self {
            kind: ReferenceKind::Figure8 { amplitude },
            t_end,
            tau_coeffs: quintic_coefficients(t_end),
        }
    }

    pub fn constant(z_ref: f64, v_ref: f64, t_end: f64) -> Self {
        Self {
            kind: ReferenceKind::ConstantHeightVel { z_ref, v_ref, y0: 0.0 },
            t_end,
            tau_coeffs: quintic_coefficients(t_end),
        }
    }

    pub fn tau(&self, t: f64) -> [f64; 5] {
        eval_poly(&self.tau_coeffs, t)
    }

    /// Position and derivatives at `t ∈ [0, T]`.
    pub fn eval(&self, t: f64) -> Result<FlatOutput> {
        if !(0.0..=self.t_end).contains(&t) {
            return Err(PlantError::OutOfRange { t, t_end: self.t_end });
        }
        Ok(match self.kind {
            ReferenceKind::Figure8 { amplitude } => {
                let tau = self.tau(t);
                FlatOutput {
                    y: compose(harmonic(amplitude, 2.0, 0.0, tau[0]), tau),
                    z: compose(harmonic(amplitude, 1.0, std::f64::consts::FRAC_PI_2, tau[0]), tau),
                }
            }
            ReferenceKind::ConstantHeightVel { z_ref, v_ref, y0 } => FlatOutput {
                y: [y0 + v_ref * t, v_ref, 0.0, 0.0, 0.0],
                z: [z_ref, 0.0, 0.0, 0.0, 0.0],
            },
        })
    }

    /// Like [`Reference::eval`] but holds the end point past `T`.
    pub fn eval_clamped(&self, t: f64) -> FlatOutput {
        match self.kind {
            ReferenceKind::ConstantHeightVel { .. } if t > self.t_end => {
                // keeps moving at the commanded speed
                let mut r = self.eval(self.t_end).expect("end point in range");
                r.y[0] += r.y[1] * (t - self.t_end);
                r
            }
            _ => self.eval(t.clamp(0.0, self.t_end)).expect("clamped time in range"),
        }
    }
}

/// Flat output of `r` at `t`.
pub fn figure8_ref(t: f64, r: &Reference) -> Result<FlatOutput> {
    r.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::{solve, DenseMatrix};

    #[test]
    fn quintic_solves_boundary_system() {
        let t = 5.0f64;
        // rows: τ(0), τ'(0), τ''(0), τ(T), τ'(T), τ''(T)
        let mut a = DenseMatrix::zeros(6, 6);
        for k in 0..6 {
            let kf = k as f64;
            a[(0, k)] = if k == 0 { 1.0 } else { 0.0 };
            a[(1, k)] = if k == 1 { 1.0 } else { 0.0 };
            a[(2, k)] = if k == 2 { 2.0 } else { 0.0 };
            a[(3, k)] = t.powi(k as i32);
            a[(4, k)] = if k >= 1 { kf * t.powi(k as i32 - 1) } else { 0.0 };
            a[(5, k)] = if k >= 2 {
                kf * (kf - 1.0) * t.powi(k as i32 - 2)
            } else {
                0.0
            };
        }
        let b = DenseMatrix::column_vector(&[0.0, 0.0, 0.0, t, 0.0, 0.0]);
        let c = solve(&a, &b).unwrap();
        let ours = quintic_coefficients(t);
        for k in 0..6 {
            assert!((c[(k, 0)] - ours[k]).abs() < 1e-12, "coefficient {k}");
        }
    }

    #[test]
    fn figure8_endpoints() {
        let r = Reference::figure8(5.0, 0.5);
        let s = figure8_ref(0.0, &r).unwrap();
        assert!(s.y[0].abs() < 1e-15 && (s.z[0] - 0.5).abs() < 1e-15);
        assert!(s.y[1].abs() < 1e-15 && s.z[1].abs() < 1e-15);
        let e = figure8_ref(5.0, &r).unwrap();
        assert!((e.y[0] - 0.5 * 10f64.sin()).abs() < 1e-12);
        assert!((e.y[0] + 0.2720).abs() < 1e-4);
        assert!((e.z[0] - 0.1418).abs() < 1e-4);
        assert!(matches!(figure8_ref(5.1, &r), Err(PlantError::OutOfRange { .. })));
        assert!(figure8_ref(-0.1, &r).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let r = Reference::figure8(5.0, 0.5);
        let h = 1e-4;
        for &t in &[0.7, 1.9, 2.5, 3.3, 4.6] {
            let a = r.eval(t - h).unwrap();
            let b = r.eval(t + h).unwrap();
            let c = r.eval(t).unwrap();
            for d in 0..4 {
                let fd_y = (b.y[d] - a.y[d]) / (2.0 * h);
                let fd_z = (b.z[d] - a.z[d]) / (2.0 * h);
                assert!(
                    (fd_y - c.y[d + 1]).abs() < 1e-5 * (1.0 + c.y[d + 1].abs()),
                    "y{d} at {t}"
                );
                assert!(
                    (fd_z - c.z[d + 1]).abs() < 1e-5 * (1.0 + c.z[d + 1].abs()),
                    "z{d} at {t}"
                );
            }
        }
    }

    #[test]
    fn constant_reference_moves_forward() {
        let r = Reference::constant(0.32, 0.45, 10.0);
        let s = r.eval(2.0).unwrap();
        assert_eq!(s.z[0], 0.32);
        assert!((s.y[0] - 0.9).abs() < 1e-12);
        assert!((r.eval_clamped(12.0).y[0] - 5.4).abs() < 1e-12);
    }
}
