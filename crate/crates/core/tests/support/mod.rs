//! Closed-form oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use robustroa::hj::{AffineDynamics2, Grid2, Horizon, QuantifierOrder, TargetSet, ValueGrid};
use robustroa::roa::SafeRegion;

/// Double integrator `ẋ₁ = x₂, ẋ₂ = u, |u| ≤ 1` with a box target
/// `|x₁| ≤ a, |x₂| ≤ b` and horizon `t_max`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleIntegratorCase {
    pub a: f64,
    pub b: f64,
    pub t_max: f64,
    pub extent: f64,
}

impl Default for DoubleIntegratorCase {
    fn default() -> Self {
        Self {
            a: 0.5,
            b: 0.5,
            t_max: 0.5,
            extent: 2.0,
        }
    }
}

fn interval_sqrt(disc: f64, center: f64) -> Option<(f64, f64)> {
    (disc >= 0.0).then(|| (center - disc.sqrt(), center + disc.sqrt()))
}

impl DoubleIntegratorCase {
    pub fn dynamics(&self) -> AffineDynamics2 {
        AffineDynamics2::double_integrator(1.0)
    }

    pub fn target(&self) -> TargetSet {
        TargetSet::boxed([0.0, 0.0], [self.a, self.b])
    }

    pub fn grid(&self, n: usize) -> Grid2 {
        Grid2::new([-self.extent; 2], [self.extent; 2], [n, n]).unwrap()
    }

    pub fn solve(&self, n: usize) -> ValueGrid {
        robustroa::hj::solve_brs(
            &self.grid(n),
            &self.target(),
            &self.dynamics(),
            Horizon::Fixed(-self.t_max),
            QuantifierOrder::ControlMinimizes,
        )
        .unwrap()
        .value
    }

    /// True when some admissible control reaches the target within
    /// `t_max`. At elapsed time `s`, with velocity change `d = v_f - v₀`,
    /// the reachable displacement spans `s·v₀ + s·d/2 ± (s² - d²)/4`.
    pub fn in_brs(&self, x: [f64; 2]) -> bool {
        let (x1, v0) = (x[0], x[1]);
        let samples = 4000;
        (0..=samples).any(|k| {
            let s = self.t_max * k as f64 / samples as f64;
            let mut lo = (-s).max(-self.b - v0);
            let mut hi = s.min(self.b - v0);
            let reach_far = interval_sqrt(2.0 * s * s + 4.0 * s * v0 + 4.0 * (x1 + self.a), s);
            let reach_near = interval_sqrt(2.0 * s * s - 4.0 * s * v0 - 4.0 * (x1 - self.a), -s);
            match (reach_far, reach_near) {
                (Some(f), Some(n)) => {
                    lo = lo.max(f.0).max(n.0);
                    hi = hi.min(f.1).min(n.1);
                    lo <= hi
                }
                _ => false,
            }
        })
    }

    /// Boundary points along rays from the origin, by bisection.
    pub fn analytic_boundary(&self, rays: usize) -> Vec<[f64; 2]> {
        (0..rays)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / rays as f64;
                let dir = [th.cos(), th.sin()];
                let (mut lo, mut hi) = (0.0, self.extent);
                assert!(self.in_brs([0.0, 0.0]));
                assert!(!self.in_brs([hi * dir[0], hi * dir[1]]));
                for _ in 0..50 {
                    let mid = 0.5 * (lo + hi);
                    if self.in_brs([mid * dir[0], mid * dir[1]]) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                [lo * dir[0], lo * dir[1]]
            })
            .collect()
    }
}

fn nearest(p: [f64; 2], set: &[[f64; 2]]) -> f64 {
    set.iter()
        .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric Hausdorff distance between two point clouds.
pub fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let ab = a.iter().map(|p| nearest(*p, b)).fold(0.0, f64::max);
    let ba = b.iter().map(|p| nearest(*p, a)).fold(0.0, f64::max);
    ab.max(ba)
}

/// Quadratic bowl with random Gaussian bumps; sublevel set is irregular
/// but contains the origin most of the time.
pub fn random_safe_set(rng: &mut ChaCha8Rng) -> SafeRegion {
    let grid = Grid2::new([-2.0, -2.0], [2.0, 2.0], [81, 81]).unwrap();
    let bumps: Vec<([f64; 2], f64, f64)> = (0..6)
        .map(|_| {
            (
                [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                rng.gen_range(0.1..0.6),
                rng.gen_range(0.5..2.0),
            )
        })
        .collect();
    let scale = [rng.gen_range(0.3..2.0), rng.gen_range(0.3..2.0)];
    let v = ValueGrid::from_fn(grid, |x| {
        let mut f = scale[0] * x[0] * x[0] + scale[1] * x[1] * x[1] - 1.0;
        for (c, w, a) in &bumps {
            let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
            f += a * (-d2 / (w * w)).exp();
        }
        f
    });
    let target = TargetSet::boxed([0.0, 0.0], [1.8, 1.8]);
    SafeRegion::new(v, &target).unwrap()
}
