//! Grid-based Hamilton-Jacobi reachability for two-state systems.
//!
//! The value function lives on a uniform node grid. Time runs backward from
//! `0` to a horizon `t₀ < 0`; each step applies a Lax-Friedrichs numerical
//! Hamiltonian with central gradients and local dissipation, integrated with
//! TVD-RK2. After every step the value is frozen against the previous one:
//!
//! * reach (`min`): `{V ≤ 0}` only grows, giving the states that can be driven
//!   into the target at some time in `[t₀, 0]`;
//! * invariance (`max`): `{V ≤ 0}` only shrinks, giving the states that can be
//!   kept inside the target over the whole horizon.

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HjError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("target set does not intersect the grid")]
    TargetOutsideGrid,
    #[error("CFL violated: dt = {dt:.3e} exceeds {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("value grids are defined on different grids")]
    GridMismatch,
    #[error("non-finite value produced at node {0}")]
    NonFinite(usize),
    #[error("invalid horizon {0}")]
    InvalidHorizon(f64),
}

pub type Result<T> = std::result::Result<T, HjError>;

/// Courant number used when a step size is derived automatically.
pub const CFL_LIMIT: f64 = 0.9;

/// Uniform node grid over `[mins, maxs]` with `n` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid2 {
    pub mins: [f64; 2],
    pub maxs: [f64; 2],
    pub n: [usize; 2],
}

impl Grid2 {
    pub fn new(mins: [f64; 2], maxs: [f64; 2], n: [usize; 2]) -> Result<Self> {
        let g = Self { mins, maxs, n };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for d in 0..2 {
            if !(self.maxs[d] > self.mins[d]) || !self.mins[d].is_finite() || !self.maxs[d].is_finite() {
                return Err(HjError::InvalidGrid(format!("axis {d}: max must exceed min")));
            }
            if self.n[d] < 3 {
                return Err(HjError::InvalidGrid(format!("axis {d}: need at least 3 nodes")));
            }
        }
        Ok(())
    }

    pub fn spacing(&self) -> [f64; 2] {
        [
            (self.maxs[0] - self.mins[0]) / (self.n[0] - 1) as f64,
            (self.maxs[1] - self.mins[1]) / (self.n[1] - 1) as f64,
        ]
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of node `(i, j)`; axis 0 varies fastest.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n[0] + i
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.spacing();
        [self.mins[0] + i as f64 * h[0], self.mins[1] + j as f64 * h[1]]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, [f64; 2])> + '_ {
        (0..self.n[1]).flat_map(move |j| (0..self.n[0]).map(move |i| (i, j, self.node(i, j))))
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        (0..2).all(|d| x[d] >= self.mins[d] && x[d] <= self.maxs[d])
    }

    pub fn cell_diagonal(&self) -> f64 {
        let h = self.spacing();
        h[0].hypot(h[1])
    }
}

/// Target set `T = {x : l(x) ≤ 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSet {
    /// Axis-aligned box; `l` is the exact signed distance.
    Box { center: [f64; 2], half_widths: [f64; 2] },
    /// `l(x) = (x - c)ᵀ P (x - c) - level`.
    Ellipse {
        center: [f64; 2],
        shape: [[f64; 2]; 2],
        level: f64,
    },
}

impl TargetSet {
    pub fn boxed(center: [f64; 2], half_widths: [f64; 2]) -> Self {
        Self::Box { center, half_widths }
    }

    pub fn circle(center: [f64; 2], radius: f64) -> Self {
        Self::Ellipse {
            center,
            shape: [[1.0, 0.0], [0.0, 1.0]],
            level: radius * radius,
        }
    }

    pub fn l(&self, x: [f64; 2]) -> f64 {
        match self {
            Self::Box { center, half_widths } => {
                let d = [
                    (x[0] - center[0]).abs() - half_widths[0],
                    (x[1] - center[1]).abs() - half_widths[1],
                ];
                let outside = d[0].max(0.0).hypot(d[1].max(0.0));
                let inside = d[0].max(d[1]).min(0.0);
                outside + inside
            }
            Self::Ellipse { center, shape, level } => {
                let e = [x[0] - center[0], x[1] - center[1]];
                e[0] * (shape[0][0] * e[0] + shape[0][1] * e[1]) + e[1] * (shape[1][0] * e[0] + shape[1][1] * e[1])
                    - level
            }
        }
    }

    pub fn center(&self) -> [f64; 2] {
        match self {
            Self::Box { center, .. } | Self::Ellipse { center, .. } => *center,
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`, or `None` when the set is empty.
    pub fn bounds(&self) -> Option<([f64; 2], [f64; 2])> {
        match self {
            Self::Box { center, half_widths } => {
                if half_widths[0] < 0.0 || half_widths[1] < 0.0 {
                    return None;
                }
                Some((
                    [center[0] - half_widths[0], center[1] - half_widths[1]],
                    [center[0] + half_widths[0], center[1] + half_widths[1]],
                ))
            }
            Self::Ellipse { center, shape, level } => {
                let det = shape[0][0] * shape[1][1] - shape[0][1] * shape[1][0];
                if *level < 0.0 || det <= 0.0 || shape[0][0] <= 0.0 {
                    return None;
                }
                // extent along axis i is sqrt(level * (P⁻¹)_ii)
                let r0 = (level * shape[1][1] / det).sqrt();
                let r1 = (level * shape[0][0] / det).sqrt();
                Some(([center[0] - r0, center[1] - r1], [center[0] + r0, center[1] + r1]))
            }
        }
    }
}

/// Value function samples `V(x, time)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub grid: Grid2,
    pub v: Vec<f64>,
    pub time: f64,
}

impl ValueGrid {
    pub fn from_fn(grid: Grid2, f: impl Fn([f64; 2]) -> f64) -> Self {
        let v = grid.nodes().map(|(_, _, x)| f(x)).collect();
        Self { grid, v, time: 0.0 }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.v[self.grid.index(i, j)]
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn interpolate(&self, x: [f64; 2]) -> Option<f64> {
        let (i, j, s, t) = self.locate(x)?;
        let v00 = self.at(i, j);
        let v10 = self.at(i + 1, j);
        let v01 = self.at(i, j + 1);
        let v11 = self.at(i + 1, j + 1);
        Some((1.0 - s) * (1.0 - t) * v00 + s * (1.0 - t) * v10 + (1.0 - s) * t * v01 + s * t * v11)
    }

    /// Largest central-difference gradient norm over the four corners of
    /// the cell containing `x`.
    pub fn local_slope(&self, x: [f64; 2]) -> Option<f64> {
        let (i, j, _, _) = self.locate(x)?;
        let mut slope: f64 = 0.0;
        for (ci, cj) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
            let g = self.node_gradient(ci, cj);
            slope = slope.max(g[0].hypot(g[1]));
        }
        Some(slope)
    }

    fn node_gradient(&self, i: usize, j: usize) -> [f64; 2] {
        let h = self.grid.spacing();
        let n = self.grid.n;
        let gi = if i == 0 {
            (self.at(1, j) - self.at(0, j)) / h[0]
        } else if i == n[0] - 1 {
            (self.at(i, j) - self.at(i - 1, j)) / h[0]
        } else {
            (self.at(i + 1, j) - self.at(i - 1, j)) / (2.0 * h[0])
        };
        let gj = if j == 0 {
            (self.at(i, 1) - self.at(i, 0)) / h[1]
        } else if j == n[1] - 1 {
            (self.at(i, j) - self.at(i, j - 1)) / h[1]
        } else {
            (self.at(i, j + 1) - self.at(i, j - 1)) / (2.0 * h[1])
        };
        [gi, gj]
    }

    fn locate(&self, x: [f64; 2]) -> Option<(usize, usize, f64, f64)> {
        if !self.grid.contains(x) {
            return None;
        }
        let h = self.grid.spacing();
        let n = self.grid.n;
        let fi = ((x[0] - self.grid.mins[0]) / h[0]).min((n[0] - 1) as f64);
        let fj = ((x[1] - self.grid.mins[1]) / h[1]).min((n[1] - 1) as f64);
        let i = (fi.floor() as usize).min(n[0] - 2);
        let j = (fj.floor() as usize).min(n[1] - 2);
        Some((i, j, fi - i as f64, fj - j as f64))
    }

    pub fn sublevel_mask(&self) -> Vec<bool> {
        self.v.iter().map(|v| *v <= 0.0).collect()
    }

    pub fn sup_diff(&self, other: &Self) -> f64 {
        self.v.iter().zip(&other.v).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `x1,x2,V` rows with a header line.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "x1,x2,V")?;
        for (i, j, x) in self.grid.nodes() {
            writeln!(out, "{},{},{}", x[0], x[1], self.at(i, j))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("x1,x2,V\n");
        for (i, j, x) in self.grid.nodes() {
            let _ = writeln!(s, "{},{},{}", x[0], x[1], self.at(i, j));
        }
        s
    }

    /// Zero-level crossings along grid edges, by linear interpolation.
    pub fn zero_crossings(&self) -> Vec<[f64; 2]> {
        let mut pts = Vec::new();
        let n = self.grid.n;
        for j in 0..n[1] {
            for i in 0..n[0] {
                let a = self.at(i, j);
                let xa = self.grid.node(i, j);
                let mut push = |b: f64, xb: [f64; 2]| {
                    if (a <= 0.0) != (b <= 0.0) {
                        let s = a / (a - b);
                        pts.push([xa[0] + s * (xb[0] - xa[0]), xa[1] + s * (xb[1] - xa[1])]);
                    }
                };
                if i + 1 < n[0] {
                    push(self.at(i + 1, j), self.grid.node(i + 1, j));
                }
                if j + 1 < n[1] {
                    push(self.at(i, j + 1), self.grid.node(i, j + 1));
                }
            }
        }
        pts
    }
}

/// Samples `l` at the grid nodes.
pub fn signed_target(grid: &Grid2, target: &TargetSet) -> Result<ValueGrid> {
    grid.validate()?;
    let (lo, hi) = target.bounds().ok_or(HjError::TargetOutsideGrid)?;
    let overlaps = (0..2).all(|d| hi[d] >= grid.mins[d] && lo[d] <= grid.maxs[d]);
    if !overlaps {
        return Err(HjError::TargetOutsideGrid);
    }
    Ok(ValueGrid::from_fn(*grid, |x| target.l(x)))
}

/// Which player optimizes in which direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantifierOrder {
    /// `H = min_u max_w ∇Vᵀf`: control drives toward the target while the
    /// disturbance resists.
    #[default]
    ControlMinimizes,
    /// `H = min_w max_u ∇Vᵀf`, the literal ordering with roles swapped.
    DisturbanceMinimizes,
}

/// Dynamics usable by the level-set solver.
pub trait HjDynamics {
    /// Optimized Hamiltonian `H(x, p)` for the given player ordering.
    fn hamiltonian(&self, x: [f64; 2], p: [f64; 2], mode: QuantifierOrder) -> f64;

    /// Upper bounds on `|∂H/∂pᵢ|` at `x`, i.e. `maxᵤ,w |fᵢ(x, u, w)|`.
    fn speed_bounds(&self, x: [f64; 2]) -> [f64; 2];
}

/// Evaluates the optimized Hamiltonian.
pub fn hamiltonian<D: HjDynamics + ?Sized>(v_grad: [f64; 2], x: [f64; 2], dyn_: &D, mode: QuantifierOrder) -> f64 {
    dyn_.hamiltonian(x, v_grad, mode)
}

type VecField = Box<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// `ẋ = f₀(x) + Σⱼ f_u,j(x) uⱼ + Σₖ f_w,k(x) wₖ` with box-bounded inputs.
pub struct AffineDynamics2 {
    drift: VecField,
    control_cols: Vec<(VecField, [f64; 2])>,
    disturbance_cols: Vec<(VecField, [f64; 2])>,
}

impl std::fmt::Debug for AffineDynamics2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AffineDynamics2")
            .field("controls", &self.control_cols.len())
            .field("disturbances", &self.disturbance_cols.len())
            .finish()
    }
}

impl AffineDynamics2 {
    pub fn new(drift: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static) -> Self {
        Self {
            drift: Box::new(drift),
            control_cols: Vec::new(),
            disturbance_cols: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        Self::new(|_| [0.0, 0.0])
    }

    /// Adds a control column with bounds `[lo, hi]`.
    pub fn with_control(
        mut self,
        col: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
        bounds: [f64; 2],
    ) -> Self {
        assert!(bounds[0] <= bounds[1], "empty control bounds");
        self.control_cols.push((Box::new(col), bounds));
        self
    }

    /// Adds a disturbance column with bounds `[lo, hi]`.
    pub fn with_disturbance(
        mut self,
        col: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
        bounds: [f64; 2],
    ) -> Self {
        assert!(bounds[0] <= bounds[1], "empty disturbance bounds");
        self.disturbance_cols.push((Box::new(col), bounds));
        self
    }

    /// `ẋ₁ = x₂, ẋ₂ = u`, `u ∈ [-u_max, u_max]`.
    pub fn double_integrator(u_max: f64) -> Self {
        Self::new(|x| [x[1], 0.0]).with_control(|_| [0.0, 1.0], [-u_max, u_max])
    }

    pub fn eval(&self, x: [f64; 2], u: &[f64], w: &[f64]) -> [f64; 2] {
        let mut f = (self.drift)(x);
        for ((col, _), ui) in self.control_cols.iter().zip(u) {
            let c = col(x);
            f[0] += c[0] * ui;
            f[1] += c[1] * ui;
        }
        for ((col, _), wi) in self.disturbance_cols.iter().zip(w) {
            let c = col(x);
            f[0] += c[0] * wi;
            f[1] += c[1] * wi;
        }
        f
    }

    pub fn control_bounds(&self) -> Vec<[f64; 2]> {
        self.control_cols.iter().map(|(_, b)| *b).collect()
    }

    pub fn disturbance_bounds(&self) -> Vec<[f64; 2]> {
        self.disturbance_cols.iter().map(|(_, b)| *b).collect()
    }
}

fn extremal(coeff: f64, bounds: [f64; 2], minimize: bool) -> f64 {
    let lo = coeff * bounds[0];
    let hi = coeff * bounds[1];
    if minimize {
        lo.min(hi)
    } else {
        lo.max(hi)
    }
}

impl HjDynamics for AffineDynamics2 {
    fn hamiltonian(&self, x: [f64; 2], p: [f64; 2], mode: QuantifierOrder) -> f64 {
        let f0 = (self.drift)(x);
        let mut h = p[0] * f0[0] + p[1] * f0[1];
        let control_min = mode == QuantifierOrder::ControlMinimizes;
        for (col, bounds) in &self.control_cols {
            let c = col(x);
            h += extremal(p[0] * c[0] + p[1] * c[1], *bounds, control_min);
        }
        for (col, bounds) in &self.disturbance_cols {
            let c = col(x);
            h += extremal(p[0] * c[0] + p[1] * c[1], *bounds, !control_min);
        }
        h
    }

    fn speed_bounds(&self, x: [f64; 2]) -> [f64; 2] {
        let f0 = (self.drift)(x);
        let mut lo = f0;
        let mut hi = f0;
        for (col, bounds) in self.control_cols.iter().chain(&self.disturbance_cols) {
            let c = col(x);
            for d in 0..2 {
                lo[d] += (c[d] * bounds[0]).min(c[d] * bounds[1]);
                hi[d] += (c[d] * bounds[0]).max(c[d] * bounds[1]);
            }
        }
        [lo[0].abs().max(hi[0].abs()), lo[1].abs().max(hi[1].abs())]
    }
}

/// Global dissipation bounds over all nodes.
pub fn max_speeds<D: HjDynamics + ?Sized>(grid: &Grid2, dyn_: &D) -> [f64; 2] {
    grid.nodes().fold([0.0, 0.0], |m, (_, _, x)| {
        let a = dyn_.speed_bounds(x);
        [m[0].max(a[0]), m[1].max(a[1])]
    })
}

/// Largest stable step `CFL_LIMIT / Σ αᵢ/Δxᵢ`, or `None` for zero dynamics.
pub fn cfl_dt<D: HjDynamics + ?Sized>(grid: &Grid2, dyn_: &D) -> Option<f64> {
    let a = max_speeds(grid, dyn_);
    let h = grid.spacing();
    let rate = a[0] / h[0] + a[1] / h[1];
    (rate > 0.0).then(|| CFL_LIMIT / rate)
}

/// Accuracy of the one-sided differences fed to the numerical Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// Plain first-order differences.
    First,
    /// Second-order ENO: first differences corrected by the smaller of the
    /// two adjacent second differences.
    Eno2,
    /// Fifth-order weighted ENO.
    #[default]
    Weno5,
}

fn weno5(v: [f64; 5]) -> f64 {
    let [v1, v2, v3, v4, v5] = v;
    let p1 = v1 / 3.0 - 7.0 * v2 / 6.0 + 11.0 * v3 / 6.0;
    let p2 = -v2 / 6.0 + 5.0 * v3 / 6.0 + v4 / 3.0;
    let p3 = v3 / 3.0 + 5.0 * v4 / 6.0 - v5 / 6.0;
    let s1 = 13.0 / 12.0 * (v1 - 2.0 * v2 + v3).powi(2) + 0.25 * (v1 - 4.0 * v2 + 3.0 * v3).powi(2);
    let s2 = 13.0 / 12.0 * (v2 - 2.0 * v3 + v4).powi(2) + 0.25 * (v2 - v4).powi(2);
    let s3 = 13.0 / 12.0 * (v3 - 2.0 * v4 + v5).powi(2) + 0.25 * (3.0 * v3 - 4.0 * v4 + v5).powi(2);
    let eps = 1e-6 * v.iter().fold(0.0f64, |m, x| m.max(x * x)) + 1e-99;
    let a1 = 0.1 / (s1 + eps).powi(2);
    let a2 = 0.6 / (s2 + eps).powi(2);
    let a3 = 0.3 / (s3 + eps).powi(2);
    (a1 * p1 + a2 * p2 + a3 * p3) / (a1 + a2 + a3)
}

/// One-sided derivatives `(D⁻, D⁺)` along a line of nodes. Ghost nodes
/// come from linear extrapolation.
fn one_sided(line: &[f64], h: f64, stencil: Stencil) -> (Vec<f64>, Vec<f64>) {
    const G: usize = 3;
    let n = line.len();
    let mut pad = Vec::with_capacity(n + 2 * G);
    let (a0, a1) = (line[0], line[1]);
    let (b0, b1) = (line[n - 1], line[n - 2]);
    for k in (1..=G).rev() {
        pad.push(a0 + k as f64 * (a0 - a1));
    }
    pad.extend_from_slice(line);
    for k in 1..=G {
        pad.push(b0 + k as f64 * (b0 - b1));
    }
    // first difference between padded nodes k-1 and k
    let d = |k: usize| (pad[k] - pad[k - 1]) / h;
    let pick = |a: f64, b: f64| if a.abs() <= b.abs() { a } else { b };
    let mut dm = vec![0.0; n];
    let mut dp = vec![0.0; n];
    for i in 0..n {
        let k = i + G;
        let (back, fwd) = (d(k), d(k + 1));
        (dm[i], dp[i]) = match stencil {
            Stencil::First => (back, fwd),
            Stencil::Eno2 => {
                let c = fwd - back;
                (
                    back + 0.5 * pick(back - d(k - 1), c),
                    fwd - 0.5 * pick(c, d(k + 2) - fwd),
                )
            }
            Stencil::Weno5 => (
                weno5([d(k - 2), d(k - 1), d(k), d(k + 1), d(k + 2)]),
                weno5([d(k + 3), d(k + 2), d(k + 1), d(k), d(k - 1)]),
            ),
        };
    }
    (dm, dp)
}

/// Time derivative of `V` in backward time: `H(x, p̄) + Σ αᵢ (D⁺ᵢ - D⁻ᵢ)/2`
/// with `p̄` the mean of the one-sided derivatives and `αᵢ` local bounds.
fn backward_rate<D: HjDynamics + ?Sized>(
    grid: &Grid2,
    v: &[f64],
    dyn_: &D,
    mode: QuantifierOrder,
    stencil: Stencil,
) -> Vec<f64> {
    let h = grid.spacing();
    let n = grid.n;
    let mut dm = [vec![0.0; v.len()], vec![0.0; v.len()]];
    let mut dp = [vec![0.0; v.len()], vec![0.0; v.len()]];
    for j in 0..n[1] {
        let row: Vec<f64> = (0..n[0]).map(|i| v[grid.index(i, j)]).collect();
        let (m, p) = one_sided(&row, h[0], stencil);
        for i in 0..n[0] {
            dm[0][grid.index(i, j)] = m[i];
            dp[0][grid.index(i, j)] = p[i];
        }
    }
    for i in 0..n[0] {
        let col: Vec<f64> = (0..n[1]).map(|j| v[grid.index(i, j)]).collect();
        let (m, p) = one_sided(&col, h[1], stencil);
        for j in 0..n[1] {
            dm[1][grid.index(i, j)] = m[j];
            dp[1][grid.index(i, j)] = p[j];
        }
    }
    grid.nodes()
        .map(|(i, j, x)| {
            let k = grid.index(i, j);
            let p = [0.5 * (dm[0][k] + dp[0][k]), 0.5 * (dm[1][k] + dp[1][k])];
            let alpha = dyn_.speed_bounds(x);
            dyn_.hamiltonian(x, p, mode)
                + 0.5 * alpha[0] * (dp[0][k] - dm[0][k])
                + 0.5 * alpha[1] * (dp[1][k] - dm[1][k])
        })
        .collect()
}

fn check_cfl<D: HjDynamics + ?Sized>(grid: &Grid2, dyn_: &D, dt: f64) -> Result<()> {
    let a = max_speeds(grid, dyn_);
    let h = grid.spacing();
    let rate = a[0] / h[0] + a[1] / h[1];
    if !(dt > 0.0) || dt * rate > CFL_LIMIT * (1.0 + 1e-12) {
        let limit = if rate > 0.0 { CFL_LIMIT / rate } else { f64::INFINITY };
        return Err(HjError::CflViolation { dt, limit });
    }
    Ok(())
}

/// One forward-Euler Lax-Friedrichs step from `v.time` to `v.time - dt`
/// with first-order differences.
pub fn lf_step<D: HjDynamics + ?Sized>(v: &ValueGrid, dyn_: &D, dt: f64, mode: QuantifierOrder) -> Result<ValueGrid> {
    lf_step_with(v, dyn_, dt, mode, Stencil::First)
}

pub fn lf_step_with<D: HjDynamics + ?Sized>(
    v: &ValueGrid,
    dyn_: &D,
    dt: f64,
    mode: QuantifierOrder,
    stencil: Stencil,
) -> Result<ValueGrid> {
    check_cfl(&v.grid, dyn_, dt)?;
    let rate = backward_rate(&v.grid, &v.v, dyn_, mode, stencil);
    let next: Vec<f64> = v.v.iter().zip(&rate).map(|(a, r)| a + dt * r).collect();
    if let Some(k) = next.iter().position(|x| !x.is_finite()) {
        return Err(HjError::NonFinite(k));
    }
    Ok(ValueGrid {
        grid: v.grid,
        v: next,
        time: v.time - dt,
    })
}

/// One TVD-RK2 (Heun) step built from two Lax-Friedrichs stages.
pub fn rk2_step<D: HjDynamics + ?Sized>(
    v: &ValueGrid,
    dyn_: &D,
    dt: f64,
    mode: QuantifierOrder,
    stencil: Stencil,
) -> Result<ValueGrid> {
    let stage1 = lf_step_with(v, dyn_, dt, mode, stencil)?;
    let stage2 = lf_step_with(&stage1, dyn_, dt, mode, stencil)?;
    let v_new = v.v.iter().zip(&stage2.v).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(ValueGrid {
        grid: v.grid,
        v: v_new,
        time: v.time - dt,
    })
}

/// How far back to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Integrate to `t₀ < 0`.
    Fixed(f64),
    /// Integrate until the sup-norm change per unit time falls below
    /// `CONVERGE_RATE_TOL` or `t` reaches `CONVERGE_MAX_TIME`.
    Converge,
}

pub const CONVERGE_RATE_TOL: f64 = 1e-4;
pub const CONVERGE_MAX_TIME: f64 = -10.0;

/// Set-growth rule applied after each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freeze {
    /// `min(V_new, V_old)`: reach within the horizon.
    Reach,
    /// `max(V_new, V_old)`: remain inside for the whole horizon.
    Invariance,
}

#[derive(Debug, Clone)]
pub struct BrsSolution {
    pub value: ValueGrid,
    pub steps: usize,
    pub dt: f64,
    /// Only meaningful with [`Horizon::Converge`]; `true` for fixed horizons.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct BrsOptions {
    pub mode: QuantifierOrder,
    pub freeze: Freeze,
    pub stencil: Stencil,
    /// Fixed step; derived from the CFL condition when `None`.
    pub dt: Option<f64>,
}

impl Default for BrsOptions {
    fn default() -> Self {
        Self {
            mode: QuantifierOrder::ControlMinimizes,
            freeze: Freeze::Reach,
            stencil: Stencil::default(),
            dt: None,
        }
    }
}

/// Backward reachable set of `target`: integrates from `0` to the horizon
/// with TVD-RK2 and min-freezing. `R = {x : V ≤ 0}`.
pub fn solve_brs<D: HjDynamics + ?Sized>(
    grid: &Grid2,
    target: &TargetSet,
    dyn_: &D,
    horizon: Horizon,
    mode: QuantifierOrder,
) -> Result<BrsSolution> {
    solve_with(
        grid,
        target,
        dyn_,
        horizon,
        BrsOptions {
            mode,
            ..BrsOptions::default()
        },
        |_| {},
    )
}

/// States that can be kept inside `target` over the horizon despite the
/// disturbance (max-freezing, control minimizes).
pub fn solve_invariant<D: HjDynamics + ?Sized>(
    grid: &Grid2,
    target: &TargetSet,
    dyn_: &D,
    horizon: Horizon,
) -> Result<BrsSolution> {
    solve_with(
        grid,
        target,
        dyn_,
        horizon,
        BrsOptions {
            mode: QuantifierOrder::ControlMinimizes,
            freeze: Freeze::Invariance,
            ..BrsOptions::default()
        },
        |_| {},
    )
}

/// General driver; `observe` sees the value after every step.
pub fn solve_with<D: HjDynamics + ?Sized>(
    grid: &Grid2,
    target: &TargetSet,
    dyn_: &D,
    horizon: Horizon,
    opts: BrsOptions,
    mut observe: impl FnMut(&ValueGrid),
) -> Result<BrsSolution> {
    let mut v = signed_target(grid, target)?;
    let t_end = match horizon {
        Horizon::Fixed(t0) if t0 < 0.0 && t0.is_finite() => t0,
        Horizon::Fixed(t0) => return Err(HjError::InvalidHorizon(t0)),
        Horizon::Converge => CONVERGE_MAX_TIME,
    };
    let dt_max = match (opts.dt, cfl_dt(grid, dyn_)) {
        (Some(dt), _) => {
            check_cfl(grid, dyn_, dt)?;
            dt
        }
        (None, Some(dt)) => dt,
        // zero dynamics: nothing moves
        (None, None) => {
            v.time = t_end;
            return Ok(BrsSolution {
                value: v,
                steps: 0,
                dt: 0.0,
                converged: true,
            });
        }
    };
    let mut steps = 0;
    let mut converged = matches!(horizon, Horizon::Fixed(_));
    while v.time > t_end + 1e-12 {
        let dt = dt_max.min(v.time - t_end);
        let mut next = rk2_step(&v, dyn_, dt, opts.mode, opts.stencil)?;
        for (new, old) in next.v.iter_mut().zip(&v.v) {
            *new = match opts.freeze {
                Freeze::Reach => new.min(*old),
                Freeze::Invariance => new.max(*old),
            };
        }
        let change = next.sup_diff(&v) / dt;
        v = next;
        steps += 1;
        observe(&v);
        if matches!(horizon, Horizon::Converge) && change < CONVERGE_RATE_TOL {
            converged = true;
            break;
        }
    }
    Ok(BrsSolution {
        value: v,
        steps,
        dt: dt_max,
        converged,
    })
}

/// `S = R ∩ T` as a node mask.
pub fn safe_set(brs: &ValueGrid, target: &ValueGrid) -> Result<Vec<bool>> {
    if brs.grid != target.grid {
        return Err(HjError::GridMismatch);
    }
    Ok(brs
        .v
        .iter()
        .zip(&target.v)
        .map(|(v, l)| *v <= 0.0 && *l <= 0.0)
        .collect())
}

/// Error dynamics of one translational axis of a legged robot whose true
/// mass `m + Δm` is unknown with `Δm ∈ [0, Δm_max]`:
///
/// `ė₁ = e₂`, `ė₂ = (m·b + δF - ρ·Δm·g) / (m + κ·Δm) - b`
///
/// where `b` is the constant bias the nominal feed-forward cancels, `δF` the
/// bounded corrective force, `ρ` the resistive coefficient of a pushed
/// load and `κ` is 1 when the load rides on the robot, 0 when it is only
/// pushed. The expression is monotone in `Δm` for fixed `δF`, so only the
/// interval endpoints matter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassUncertainAxis {
    pub mass: f64,
    pub bias: f64,
    pub gravity: f64,
    pub delta_m_max: f64,
    pub resist_coeff: f64,
    /// The extra mass moves with the robot along this axis.
    #[serde(default = "default_carried")]
    pub carried: bool,
    /// Bound on the total corrective force `|δF|`.
    pub force_max: f64,
}

fn default_carried() -> bool {
    true
}

impl MassUncertainAxis {
    fn accel(&self, force: f64, delta_m: f64) -> f64 {
        (self.mass * self.bias + force - self.resist_coeff * delta_m * self.gravity)
            / (self.mass + if self.carried { delta_m } else { 0.0 })
            - self.bias
    }

    fn thetas(&self) -> [f64; 2] {
        [0.0, self.delta_m_max]
    }

    /// `max_θ p₂·a(F, θ)` is convex piecewise-linear in `F`; its minimum
    /// over the force interval is at an endpoint or at a crossing.
    fn min_max(&self, p2: f64, minimize_force: bool) -> f64 {
        let th = self.thetas();
        let line = |k: usize, f: f64| p2 * self.accel(f, th[k]);
        let mut candidates = vec![-self.force_max, self.force_max];
        // lines are affine in F: a_k + b_k F
        let a: Vec<f64> = (0..2).map(|k| line(k, 0.0)).collect();
        let b: Vec<f64> = (0..2).map(|k| line(k, 1.0) - a[k]).collect();
        if (b[0] - b[1]).abs() > 1e-15 {
            let f = (a[1] - a[0]) / (b[0] - b[1]);
            if f.abs() <= self.force_max {
                candidates.push(f);
            }
        }
        if minimize_force {
            // control minimizes, parameter maximizes
            candidates
                .iter()
                .map(|&f| line(0, f).max(line(1, f)))
                .fold(f64::INFINITY, f64::min)
        } else {
            // parameter minimizes, control maximizes
            candidates
                .iter()
                .map(|&f| line(0, f).min(line(1, f)))
                .fold(f64::NEG_INFINITY, f64::max)
        }
    }
}

impl HjDynamics for MassUncertainAxis {
    fn hamiltonian(&self, x: [f64; 2], p: [f64; 2], mode: QuantifierOrder) -> f64 {
        let drift = p[0] * x[1];
        drift + self.min_max(p[1], mode == QuantifierOrder::ControlMinimizes)
    }

    fn speed_bounds(&self, x: [f64; 2]) -> [f64; 2] {
        let th = self.thetas();
        let mut a2: f64 = 0.0;
        for t in th {
            for f in [-self.force_max, self.force_max] {
                a2 = a2.max(self.accel(f, t).abs());
            }
        }
        [x[1].abs(), a2]
    }
}
