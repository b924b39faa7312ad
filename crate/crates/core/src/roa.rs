//! Containment of CLF ellipsoids in an HJ safe set and the line search for
//! the largest certified disturbance bound.
//!
//! Containment is checked on samples: the center, points along rays at a
//! quarter-cell spacing, and the boundary itself. A sample passes when the
//! bilinear interpolant of both `V` and `l` is below `-δ`, where `δ` is half
//! a cell diagonal times the local slope of the field. The guard absorbs
//! interpolation error, so a "contained" verdict is conservative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clf::{roa_level, ClfCertificate, ClfParams};
use crate::hj::{signed_target, HjError, TargetSet, ValueGrid};
use crate::matrixkit::{cholesky, sym_eig, MatrixError, SymMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoaError {
    #[error("ellipsoid sample {0:?} lies outside the grid")]
    OutOfGrid([f64; 2]),
    #[error("no ellipsoid fits in the safe set, not even its center")]
    NoSafeRoa,
    #[error("containment still holds at the bracket end w = {w_hi}")]
    BracketTooSmall { w_hi: f64 },
    #[error("invalid ellipsoid: {0}")]
    InvalidEllipsoid(String),
    #[error("invalid line-search options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Hj(#[from] HjError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

pub type Result<T> = std::result::Result<T, RoaError>;

/// `{x : (x - center)ᵀ P (x - center) ≤ level}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid2 {
    pub p: [[f64; 2]; 2],
    pub center: [f64; 2],
    pub level: f64,
}

impl Ellipsoid2 {
    pub fn new(p: [[f64; 2]; 2], center: [f64; 2], level: f64) -> Result<Self> {
        let e = Self { p, center, level };
        e.validate()?;
        Ok(e)
    }

    pub fn from_matrix(p: &SymMatrix, center: [f64; 2], level: f64) -> Result<Self> {
        if p.shape() != (2, 2) {
            return Err(RoaError::InvalidEllipsoid(format!(
                "expected a 2×2 shape matrix, got {:?}",
                p.shape()
            )));
        }
        Self::new([[p[(0, 0)], p[(0, 1)]], [p[(1, 0)], p[(1, 1)]]], center, level)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.p;
        if (p[0][1] - p[1][0]).abs() > 1e-9 * (p[0][0].abs() + p[1][1].abs()) {
            return Err(RoaError::InvalidEllipsoid("shape matrix not symmetric".into()));
        }
        let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        if !(p[0][0] > 0.0 && det > 0.0) {
            return Err(RoaError::InvalidEllipsoid("shape matrix not positive definite".into()));
        }
        if !(self.level >= 0.0) || !self.level.is_finite() {
            return Err(RoaError::InvalidEllipsoid(format!("level {}", self.level)));
        }
        Ok(())
    }

    fn matrix(&self) -> SymMatrix {
        SymMatrix::from_rows(&[&self.p[0], &self.p[1]])
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        let e = [x[0] - self.center[0], x[1] - self.center[1]];
        e[0] * (self.p[0][0] * e[0] + self.p[0][1] * e[1]) + e[1] * (self.p[1][0] * e[0] + self.p[1][1] * e[1])
    }

    /// Maps a unit-circle point scaled by `r` onto `{xᵀPx = r²}`.
    fn boundary_map(&self) -> Result<impl Fn(f64, f64) -> [f64; 2]> {
        // P = L Lᵀ  ⇒  x = L⁻ᵀ u satisfies xᵀPx = uᵀu
        let l = cholesky(&self.matrix())?;
        let (l00, l10, l11) = (l[(0, 0)], l[(1, 0)], l[(1, 1)]);
        let c = self.center;
        Ok(move |r: f64, th: f64| {
            let u = [r * th.cos(), r * th.sin()];
            let x1 = u[1] / l11;
            let x0 = (u[0] - l10 * x1) / l00;
            [c[0] + x0, c[1] + x1]
        })
    }
}

/// The field pair a safe set is read from: `S = {V ≤ 0} ∩ {l ≤ 0}`.
#[derive(Debug, Clone)]
pub struct SafeRegion {
    pub value: ValueGrid,
    pub target: ValueGrid,
}

impl SafeRegion {
    pub fn new(value: ValueGrid, target: &TargetSet) -> Result<Self> {
        let target = signed_target(&value.grid, target)?;
        Ok(Self { value, target })
    }

    pub fn from_grids(value: ValueGrid, target: ValueGrid) -> Result<Self> {
        if value.grid != target.grid {
            return Err(HjError::GridMismatch.into());
        }
        Ok(Self { value, target })
    }

    fn guard(&self, field: &ValueGrid, x: [f64; 2]) -> Option<f64> {
        let half_diag = 0.5 * field.grid.cell_diagonal();
        Some(half_diag * field.local_slope(x)?)
    }

    /// Smallest `-(f + δ)` over the two fields; positive means inside
    /// with room to spare.
    pub fn margin(&self, x: [f64; 2]) -> Option<f64> {
        let mut m = f64::INFINITY;
        for f in [&self.value, &self.target] {
            let v = f.interpolate(x)?;
            m = m.min(-(v + self.guard(f, x)?));
        }
        Some(m)
    }

    pub fn is_safe(&self, x: [f64; 2]) -> Option<bool> {
        self.margin(x).map(|m| m >= 0.0)
    }
}

/// Number of boundary samples per containment check.
pub const BOUNDARY_SAMPLES: usize = 720;

/// Smallest sample margin over the ellipsoid; `≥ 0` means contained.
pub fn containment_margin(e: &Ellipsoid2, safe: &SafeRegion) -> Result<f64> {
    e.validate()?;
    let grid = &safe.value.grid;
    let map = e.boundary_map()?;
    let check = |x: [f64; 2]| safe.margin(x).ok_or(RoaError::OutOfGrid(x));

    let mut margin = check(e.center)?;
    let radius = e.level.sqrt();
    if radius == 0.0 {
        return Ok(margin);
    }
    // radial step so consecutive samples are at most a quarter cell apart
    let eig = sym_eig(&e.matrix())?;
    let h = grid.spacing();
    let step = 0.25 * h[0].min(h[1]) * eig.min().sqrt();
    let interior = (radius / step).floor() as usize;
    for k in 0..BOUNDARY_SAMPLES {
        let th = 2.0 * std::f64::consts::PI * k as f64 / BOUNDARY_SAMPLES as f64;
        for s in 1..=interior {
            margin = margin.min(check(map(s as f64 * step, th))?);
        }
        margin = margin.min(check(map(radius, th))?);
    }
    Ok(margin)
}

pub fn ellipsoid_contained(e: &Ellipsoid2, safe: &SafeRegion) -> Result<bool> {
    Ok(containment_margin(e, safe)? >= 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WmaxOptions {
    pub w_hi: f64,
    pub tol: f64,
}

impl Default for WmaxOptions {
    fn default() -> Self {
        Self { w_hi: 20.0, tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmaxReport {
    pub w_max: f64,
    pub level: f64,
    /// Containment margin of the final ellipsoid.
    pub margin: f64,
    pub iterations: usize,
}

impl std::fmt::Display for WmaxReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "w_max = {:.6}", self.w_max)?;
        writeln!(f, "roa_level = {:.6}", self.level)?;
        writeln!(f, "containment_margin = {:.6e}", self.margin)?;
        write!(f, "bisection_iterations = {}", self.iterations)
    }
}

/// Bisection steps needed to shrink `[0, w_hi]` below `tol`.
pub fn bisection_steps(w_hi: f64, tol: f64) -> usize {
    (w_hi / tol).log2().ceil().max(0.0) as usize
}

/// Largest `w` whose level set `{eᵀPe ≤ μw²/λ}` around `center` fits in
/// the safe set, found by bisection on `[0, w_hi]`.
pub fn find_wmax_ellipse(
    p: &SymMatrix,
    center: [f64; 2],
    params: &ClfParams,
    safe: &SafeRegion,
    opts: WmaxOptions,
) -> Result<WmaxReport> {
    if !(opts.w_hi > 0.0 && opts.tol > 0.0 && opts.tol < opts.w_hi) {
        return Err(RoaError::InvalidOptions(format!(
            "need 0 < tol < w_hi, got tol = {}, w_hi = {}",
            opts.tol, opts.w_hi
        )));
    }
    let margin_at = |w: f64| -> Result<f64> {
        let e = Ellipsoid2::from_matrix(p, center, roa_level(params, w))?;
        match containment_margin(&e, safe) {
            Ok(m) => Ok(m),
            Err(RoaError::OutOfGrid(_)) => Ok(f64::NEG_INFINITY),
            Err(other) => Err(other),
        }
    };
    let base = margin_at(0.0)?;
    if base < 0.0 {
        return Err(RoaError::NoSafeRoa);
    }
    if margin_at(opts.w_hi)? >= 0.0 {
        return Err(RoaError::BracketTooSmall { w_hi: opts.w_hi });
    }
    let (mut lo, mut hi) = (0.0, opts.w_hi);
    let mut lo_margin = base;
    let iterations = bisection_steps(opts.w_hi, opts.tol);
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        let m = margin_at(mid)?;
        if m >= 0.0 {
            lo = mid;
            lo_margin = m;
        } else {
            hi = mid;
        }
    }
    Ok(WmaxReport {
        w_max: lo,
        level: roa_level(params, lo),
        margin: lo_margin,
        iterations,
    })
}

/// [`find_wmax_ellipse`] for a two-state certificate centered at the
/// origin of error coordinates; records the result in `cert`.
pub fn find_wmax(cert: &mut ClfCertificate, safe: &SafeRegion, opts: WmaxOptions) -> Result<WmaxReport> {
    let report = find_wmax_ellipse(&cert.p, [0.0, 0.0], &cert.params, safe, opts)?;
    cert.set_w_max(report.w_max);
    Ok(report)
}
