//! Benchmark fixtures shared by the criterion targets.

use robustroa::clf::ClfParams;
use robustroa::hj::{signed_target, AffineDynamics2, Grid2, TargetSet, ValueGrid};
use robustroa::matrixkit::SymMatrix;

/// Deterministic well-conditioned symmetric matrix of size `n`.
pub fn test_matrix(n: usize) -> SymMatrix {
    let mut m = SymMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = 1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { n as f64 } else { 0.0 };
        }
    }
    m
}

pub fn quadcopter_clf() -> ClfParams {
    ClfParams {
        q: vec![1e-1, 1.0, 1.0, 1.0, 1.0, 1e-2],
        r: vec![1e-2, 1e-4],
        lambda: 0.5,
        mu: 0.1,
    }
}

/// Double-integrator value grid on an `n × n` grid.
pub fn hj_fixture(n: usize) -> (ValueGrid, AffineDynamics2) {
    let grid = Grid2::new([-2.0, -2.0], [2.0, 2.0], [n, n]).expect("valid grid");
    let v = signed_target(&grid, &TargetSet::boxed([0.0, 0.0], [0.5, 0.5])).expect("target on grid");
    (v, AffineDynamics2::double_integrator(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_valid() {
        assert!(test_matrix(5).is_symmetric(0.0));
        assert!(quadcopter_clf().validate().is_ok());
        assert_eq!(hj_fixture(11).0.v.len(), 121);
    }
}
