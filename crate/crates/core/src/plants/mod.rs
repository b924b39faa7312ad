//! Nonlinear plant models, references and the closed-loop simulator.

pub mod quadcopter;
pub mod quadruped;
pub mod reference;
pub mod sim;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite state or derivative")]
    NonFinite,
    #[error("contact violation on {leg} leg: {detail}")]
    ContactViolation { leg: &'static str, detail: String },
    #[error("time {t} outside the reference interval [0, {t_end}]")]
    OutOfRange { t: f64, t_end: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, PlantError>;

/// A simulated system `ẋ = f(x, u, w)`.
pub trait Plant {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn disturbance_dim(&self) -> usize;
    fn dynamics(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>>;

    /// Hook run before every integration step (gait scheduling and such).
    fn advance(&mut self, _t: f64, _x: &[f64]) {}

    /// Maps a commanded input to one the plant accepts.
    fn admissible(&self, _x: &[f64], u: Vec<f64>) -> Vec<f64> {
        u
    }
}

/// Classical fourth-order Runge-Kutta step with `u` and `w` held constant.
pub fn rk4_step<F>(f: F, x: &[f64], u: &[f64], w: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64], &[f64]) -> Result<Vec<f64>>,
{
    if !(dt > 0.0) {
        return Err(PlantError::InvalidParams(format!("dt = {dt}")));
    }
    let n = x.len();
    let shifted = |k: &[f64], s: f64| -> Vec<f64> { (0..n).map(|i| x[i] + s * k[i]).collect() };
    let k1 = f(x, u, w)?;
    if k1.len() != n {
        return Err(PlantError::DimensionMismatch(format!(
            "derivative has {} entries, state {}",
            k1.len(),
            n
        )));
    }
    let k2 = f(&shifted(&k1, 0.5 * dt), u, w)?;
    let k3 = f(&shifted(&k2, 0.5 * dt), u, w)?;
    let k4 = f(&shifted(&k3, dt), u, w)?;
    let next: Vec<f64> = (0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(PlantError::NonFinite);
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(x: &[f64], _: &[f64], _: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![-x[0]])
    }

    #[test]
    fn zero_field_keeps_state() {
        let x = rk4_step(|x, _, _| Ok(vec![0.0; x.len()]), &[1.0, -2.0], &[], &[], 0.1).unwrap();
        assert_eq!(x, vec![1.0, -2.0]);
    }

    #[test]
    fn exponential_single_step() {
        let x = rk4_step(decay, &[1.0], &[], &[], 0.1).unwrap();
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7);
        assert!((x[0] - 0.9048375).abs() < 1e-7);
    }

    fn global_error(dt: f64) -> f64 {
        let steps = (1.0 / dt).round() as usize;
        let mut x = vec![1.0];
        for _ in 0..steps {
            x = rk4_step(decay, &x, &[], &[], dt).unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn fourth_order_convergence() {
        let ratio = global_error(0.1) / global_error(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn non_finite_rejected() {
        let blow = |_: &[f64], _: &[f64], _: &[f64]| Ok(vec![f64::INFINITY]);
        assert_eq!(rk4_step(blow, &[0.0], &[], &[], 0.1), Err(PlantError::NonFinite));
        assert!(rk4_step(decay, &[1.0], &[], &[], 0.0).is_err());
    }
}
