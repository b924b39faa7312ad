//! Short-horizon MPC on an Euler-discretized model, linearized about the
//! reference and solved as an unconstrained condensed QP.
//!
//! With `δx = x - x_ref` and `δu = u - u_ref`, the prediction is
//!
//! `δx_{i+1} = (I + dt·Aᵢ) δxᵢ + dt·Bᵢ δuᵢ + dᵢ`,
//! `dᵢ = x_ref,i + dt·f(x_ref,i, u_ref,i) - x_ref,i+1`,
//!
//! and the cost is `Σ_{i=1..k} δxᵢᵀ Q δxᵢ + Σ_{i=0..k-1} δuᵢᵀ R δuᵢ`.
//! The first control is clamped to the input box.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrixkit::{DenseMatrix, Lu, MatrixError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpcError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid MPC configuration: {0}")]
    InvalidConfig(String),
    #[error("QP Hessian is singular")]
    SingularHessian,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

impl From<MatrixError> for MpcError {
    fn from(e: MatrixError) -> Self {
        match e {
            MatrixError::Singular => Self::SingularHessian,
            MatrixError::NonFinite => Self::NonFinite("QP data"),
            other => Self::DimensionMismatch(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, MpcError>;

/// Continuous-time dynamics the controller predicts with.
pub trait NominalModel {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn f(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
}

impl<T: NominalModel + ?Sized> NominalModel for &T {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn control_dim(&self) -> usize {
        (**self).control_dim()
    }
    fn f(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (**self).f(x, u)
    }
}

/// `ẋ = A x + B u` (useful for tests and linear plants).
#[derive(Debug, Clone)]
pub struct LinearNominal {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
}

impl NominalModel for LinearNominal {
    fn state_dim(&self) -> usize {
        self.a.rows()
    }
    fn control_dim(&self) -> usize {
        self.b.cols()
    }
    fn f(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let ax = self.a.mul_vec(x);
        let bu = self.b.mul_vec(u);
        ax.iter().zip(&bu).map(|(a, b)| a + b).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    /// Diagonal of `Q_MPC`.
    pub q: Vec<f64>,
    /// Diagonal of `R_MPC`.
    pub r: Vec<f64>,
    pub dt: f64,
    pub horizon: usize,
    #[serde(default)]
    pub u_min: Option<Vec<f64>>,
    #[serde(default)]
    pub u_max: Option<Vec<f64>>,
    #[serde(default)]
    pub x_min: Option<Vec<f64>>,
    #[serde(default)]
    pub x_max: Option<Vec<f64>>,
    /// Keep the Euler defect `dᵢ` of the reference in the prediction. Turn
    /// off when the reference is an exact trajectory of the model, so that
    /// discretization error is not mistaken for tracking error.
    #[serde(default = "default_true")]
    pub reference_defect: bool,
}

fn default_true() -> bool {
    true
}

impl MpcConfig {
    pub fn new(q: Vec<f64>, r: Vec<f64>, dt: f64, horizon: usize) -> Self {
        Self {
            q,
            r,
            dt,
            horizon,
            u_min: None,
            u_max: None,
            x_min: None,
            x_max: None,
            reference_defect: true,
        }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        if self.q.len() != n || self.r.len() != m {
            return Err(MpcError::DimensionMismatch(format!(
                "weights are {}/{} long, model has n = {n}, m = {m}",
                self.q.len(),
                self.r.len()
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(MpcError::InvalidConfig(format!("dt = {}", self.dt)));
        }
        if self.horizon == 0 {
            return Err(MpcError::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.q.iter().chain(&self.r).any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(MpcError::InvalidConfig("weights must be finite and nonnegative".into()));
        }
        for (name, bound, len) in [
            ("u_min", &self.u_min, m),
            ("u_max", &self.u_max, m),
            ("x_min", &self.x_min, n),
            ("x_max", &self.x_max, n),
        ] {
            if let Some(b) = bound {
                if b.len() != len {
                    return Err(MpcError::DimensionMismatch(format!("{name} has {} entries", b.len())));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (&self.u_min, &self.u_max) {
            if lo.iter().zip(hi).any(|(l, h)| l > h) {
                return Err(MpcError::InvalidConfig("empty input box".into()));
            }
        }
        Ok(())
    }
}

/// Reference state and feed-forward input at one prediction node.
#[derive(Debug, Clone, PartialEq)]
pub struct RefPoint {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

/// `J(U) = Uᵀ H U + 2 gᵀ U + c` over the stacked input deviations.
#[derive(Debug, Clone)]
pub struct CondensedQp {
    pub h: DenseMatrix,
    pub g: Vec<f64>,
    pub c: f64,
    /// Prediction maps `δxᵢ = Sᵢ U + sᵢ`, `i = 0..=k`.
    pub s_mats: Vec<DenseMatrix>,
    pub s_offsets: Vec<Vec<f64>>,
    pub regularization: f64,
}

impl CondensedQp {
    pub fn cost(&self, u: &[f64]) -> f64 {
        let hu = self.h.mul_vec(u);
        dot(u, &hu) + 2.0 * dot(&self.g, u) + self.c
    }

    /// `H U + g`, half the cost gradient.
    pub fn stationarity(&self, u: &[f64]) -> Vec<f64> {
        let hu = self.h.mul_vec(u);
        hu.iter().zip(&self.g).map(|(a, b)| a + b).collect()
    }

    pub fn minimize(&self) -> Result<Vec<f64>> {
        let lu = Lu::new(&self.h)?;
        let rhs: Vec<f64> = self.g.iter().map(|v| -v).collect();
        let u = lu.solve_vec(&rhs);
        if u.iter().any(|v| !v.is_finite()) {
            return Err(MpcError::NonFinite("QP solution"));
        }
        Ok(u)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central-difference Jacobians `(∂f/∂x, ∂f/∂u)`.
pub fn jacobians<M: NominalModel + ?Sized>(model: &M, x: &[f64], u: &[f64]) -> (DenseMatrix, DenseMatrix) {
    let n = model.state_dim();
    let m = model.control_dim();
    let mut a = DenseMatrix::zeros(n, n);
    let mut b = DenseMatrix::zeros(n, m);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-6 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let fp = model.f(&xp, u);
        xp[j] = x[j] - h;
        let fm = model.f(&xp, u);
        xp[j] = x[j];
        for i in 0..n {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let mut up = u.to_vec();
    for j in 0..m {
        let h = 1e-6 * (1.0 + u[j].abs());
        up[j] = u[j] + h;
        let fp = model.f(x, &up);
        up[j] = u[j] - h;
        let fm = model.f(x, &up);
        up[j] = u[j];
        for i in 0..n {
            b[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    (a, b)
}

/// Builds the condensed QP for the given reference window.
pub fn condense<M: NominalModel + ?Sized>(
    model: &M,
    x_now: &[f64],
    reference: &[RefPoint],
    cfg: &MpcConfig,
) -> Result<CondensedQp> {
    let n = model.state_dim();
    let m = model.control_dim();
    cfg.validate(n, m)?;
    let k = cfg.horizon;
    if x_now.len() != n {
        return Err(MpcError::DimensionMismatch(format!(
            "x_now has {} entries",
            x_now.len()
        )));
    }
    if x_now.iter().any(|v| !v.is_finite()) {
        return Err(MpcError::NonFinite("x_now"));
    }
    if reference.len() < k + 1 {
        return Err(MpcError::DimensionMismatch(format!(
            "need {} reference points, got {}",
            k + 1,
            reference.len()
        )));
    }
    if reference.iter().any(|r| r.x.len() != n || r.u.len() != m) {
        return Err(MpcError::DimensionMismatch("reference point size".into()));
    }

    let nu = k * m;
    let dt = cfg.dt;
    let mut s = DenseMatrix::zeros(n, nu);
    let mut off: Vec<f64> = x_now.iter().zip(&reference[0].x).map(|(a, b)| a - b).collect();
    let mut s_mats = vec![s.clone()];
    let mut s_offsets = vec![off.clone()];
    for i in 0..k {
        let (xr, ur) = (&reference[i].x, &reference[i].u);
        let (a, b) = jacobians(model, xr, ur);
        let mut phi = a.scale(dt);
        for d in 0..n {
            phi[(d, d)] += 1.0;
        }
        let fr = model.f(xr, ur);
        let drift: Vec<f64> = if cfg.reference_defect {
            (0..n).map(|d| xr[d] + dt * fr[d] - reference[i + 1].x[d]).collect()
        } else {
            vec![0.0; n]
        };
        let mut s_next = phi.matmul(&s);
        s_next.set_block(0, i * m, &b.scale(dt));
        let mut off_next = phi.mul_vec(&off);
        for d in 0..n {
            off_next[d] += drift[d];
        }
        s = s_next;
        off = off_next;
        s_mats.push(s.clone());
        s_offsets.push(off.clone());
    }

    let mut h = DenseMatrix::zeros(nu, nu);
    let mut g = vec![0.0; nu];
    let mut c = 0.0;
    for (si, oi) in s_mats.iter().zip(&s_offsets).skip(1) {
        let mut qs = si.clone();
        for r in 0..n {
            for col in 0..nu {
                qs[(r, col)] *= cfg.q[r];
            }
        }
        h = h.add(&si.transpose().matmul(&qs));
        let qo: Vec<f64> = oi.iter().zip(&cfg.q).map(|(o, q)| o * q).collect();
        let sg = si.transpose().mul_vec(&qo);
        for (gv, v) in g.iter_mut().zip(&sg) {
            *gv += v;
        }
        c += dot(oi, &qo);
    }
    for i in 0..k {
        for j in 0..m {
            h[(i * m + j, i * m + j)] += cfg.r[j];
        }
    }
    let h = h.symmetrize();
    let scale = h.diag().into_iter().fold(1.0f64, f64::max);
    let regularization = 1e-9 * scale;
    let mut h_reg = h;
    for d in 0..nu {
        h_reg[(d, d)] += regularization;
    }
    if !h_reg.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(MpcError::NonFinite("QP data"));
    }
    Ok(CondensedQp {
        h: h_reg,
        g,
        c,
        s_mats,
        s_offsets,
        regularization,
    })
}

#[derive(Debug, Clone)]
pub struct MpcSolution {
    /// First control, absolute and clamped to the input box.
    pub u0: Vec<f64>,
    /// Unclamped optimal input deviations, stacked.
    pub du: Vec<f64>,
    /// Predicted absolute states `x₀..x_k` under the unclamped optimum.
    pub predicted: Vec<Vec<f64>>,
    pub cost: f64,
    pub clamped: bool,
    /// A predicted state leaves the optional state box (soft constraint).
    pub state_violation: bool,
    /// Diagonal shift added to the Hessian.
    pub regularization: f64,
}

/// Solves one receding-horizon step.
pub fn mpc_step<M: NominalModel + ?Sized>(
    model: &M,
    x_now: &[f64],
    reference: &[RefPoint],
    cfg: &MpcConfig,
) -> Result<MpcSolution> {
    let qp = condense(model, x_now, reference, cfg)?;
    let du = qp.minimize()?;
    let m = model.control_dim();
    let mut u0: Vec<f64> = (0..m).map(|j| reference[0].u[j] + du[j]).collect();
    let mut clamped = false;
    for j in 0..m {
        let lo = cfg.u_min.as_ref().map_or(f64::NEG_INFINITY, |b| b[j]);
        let hi = cfg.u_max.as_ref().map_or(f64::INFINITY, |b| b[j]);
        let v = u0[j].clamp(lo, hi);
        clamped |= v != u0[j];
        u0[j] = v;
    }
    let predicted: Vec<Vec<f64>> = qp
        .s_mats
        .iter()
        .zip(&qp.s_offsets)
        .zip(reference)
        .map(|((si, oi), r)| {
            let d = si.mul_vec(&du);
            (0..r.x.len()).map(|i| r.x[i] + d[i] + oi[i]).collect()
        })
        .collect();
    let state_violation = predicted.iter().any(|x| {
        x.iter().enumerate().any(|(i, v)| {
            cfg.x_min.as_ref().is_some_and(|b| *v < b[i]) || cfg.x_max.as_ref().is_some_and(|b| *v > b[i])
        })
    });
    let cost = qp.cost(&du) - qp.regularization * dot(&du, &du);
    Ok(MpcSolution {
        u0,
        du,
        predicted,
        cost,
        clamped,
        state_violation,
        regularization: qp.regularization,
    })
}
