//! Affine semidefinite programs `max cᵀx  s.t.  F(x) = F₀ + Σ xᵢFᵢ ≺ 0`.
//!
//! Strict feasibility is enforced as `F(x) ⪯ -εI`. The solver is a plain
//! log-det barrier path-following method: for increasing `t` it minimizes
//! `-t·cᵀx - log det(-(F(x) + εI))` with damped Newton steps, stopping when
//! the duality-gap proxy `dim / t` drops below `gap_tol`. A phase-1 problem
//! on an auxiliary slack finds the starting point.

use thiserror::Error;

use crate::matrixkit::{self, cholesky, max_eigenvalue, DenseMatrix, MatrixError, SymMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdpError {
    #[error("malformed SDP: {0}")]
    Malformed(String),
    #[error("LMI is infeasible (minimized slack {slack:.3e} is not below -{margin:.3e})")]
    Infeasible { slack: f64, margin: f64 },
    #[error("no strictly feasible starting point")]
    NotStrictlyFeasible,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// `F(x) = f0 + Σ x_i fi[i] ≺ 0`, objective `max cᵀx`.
#[derive(Debug, Clone)]
pub struct AffineSdp {
    pub objective: Vec<f64>,
    pub f0: SymMatrix,
    pub fi: Vec<SymMatrix>,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: Vec<f64>,
    pub objective_value: f64,
    /// `λ_max(F(x))` at the returned point.
    pub max_block_eig: f64,
    /// Total Newton iterations across phases.
    pub iterations: usize,
    pub status: SdpStatus,
    /// Barrier objective `cᵀx + log det(-F_ε(x)) / t` at the end of each
    /// outer iteration.
    pub barrier_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SdpOptions {
    pub t0: f64,
    pub growth: f64,
    pub gap_tol: f64,
    pub newton_tol: f64,
    pub max_newton_per_center: usize,
    pub max_outer: usize,
    pub armijo_slope: f64,
    pub armijo_ratio: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            t0: 1.0,
            growth: 10.0,
            gap_tol: 1e-6,
            newton_tol: 1e-10,
            max_newton_per_center: 200,
            max_outer: 60,
            armijo_slope: 0.01,
            armijo_ratio: 0.5,
        }
    }
}

/// Default strictness margin `1e-7 (1 + ‖F₀‖_∞)`.
pub fn default_margin(f0: &SymMatrix) -> f64 {
    1e-7 * (1.0 + f0.norm_inf())
}

impl AffineSdp {
    pub fn new(objective: Vec<f64>, f0: SymMatrix, fi: Vec<SymMatrix>) -> Result<Self, SdpError> {
        let margin = default_margin(&f0);
        let sdp = Self {
            objective,
            f0,
            fi,
            margin,
        };
        sdp.validate()?;
        Ok(sdp)
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.fi.len()
    }

    pub fn dim(&self) -> usize {
        self.f0.rows()
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        let n = self.f0.rows();
        if !self.f0.is_symmetric(1e-12) {
            return Err(SdpError::Malformed("F0 is not symmetric".into()));
        }
        if self.objective.len() != self.fi.len() {
            return Err(SdpError::Malformed(format!(
                "objective has {} entries for {} variables",
                self.objective.len(),
                self.fi.len()
            )));
        }
        for (i, f) in self.fi.iter().enumerate() {
            if f.shape() != (n, n) || !f.is_symmetric(1e-12) {
                return Err(SdpError::Malformed(format!("F{} is not a symmetric {n}x{n}", i + 1)));
            }
        }
        if !(self.margin > 0.0) {
            return Err(SdpError::Malformed("strictness margin must be positive".into()));
        }
        Ok(())
    }

    /// `F(x)`.
    pub fn eval(&self, x: &[f64]) -> SymMatrix {
        let mut f = self.f0.clone();
        for (xi, fi) in x.iter().zip(&self.fi) {
            if *xi != 0.0 {
                f.axpy(*xi, fi);
            }
        }
        f
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One affine block `G₀ + Σ xᵢGᵢ ≺ 0` of the internal barrier problem.
struct Block {
    g0: DenseMatrix,
    gi: Vec<DenseMatrix>,
}

impl Block {
    fn eval(&self, x: &[f64]) -> DenseMatrix {
        let mut g = self.g0.clone();
        for (xi, gi) in x.iter().zip(&self.gi) {
            if *xi != 0.0 {
                g.axpy(*xi, gi);
            }
        }
        g
    }
}

/// Barrier problem over a block-diagonal constraint. Phase 1 adds scalar
/// bound blocks; the public problem has exactly one block.
struct BarrierProblem {
    objective: Vec<f64>,
    blocks: Vec<Block>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Centering {
    Converged,
    /// Line search could not make progress; treated as centered.
    Stalled,
    /// The caller's stop predicate fired.
    Stopped,
    Exhausted,
}

impl BarrierProblem {
    fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.g0.rows()).sum()
    }

    /// `-log det(-G(x))` summed over blocks; `None` outside the cone.
    fn log_barrier(&self, x: &[f64]) -> Option<f64> {
        let mut total = 0.0;
        for b in &self.blocks {
            let s = b.eval(x).scale(-1.0).symmetrize();
            let l = cholesky(&s).ok()?;
            total -= 2.0 * l.diag().iter().map(|d| d.ln()).sum::<f64>();
        }
        Some(total)
    }

    fn phi(&self, t: f64, x: &[f64]) -> Option<f64> {
        self.log_barrier(x).map(|b| -t * dot(&self.objective, x) + b)
    }

    /// Gradient and Hessian of `phi` at an interior `x`.
    fn derivatives(&self, t: f64, x: &[f64]) -> Result<(Vec<f64>, DenseMatrix), MatrixError> {
        let nv = self.objective.len();
        let mut grad: Vec<f64> = self.objective.iter().map(|c| -t * c).collect();
        let mut hess = DenseMatrix::zeros(nv, nv);
        for b in &self.blocks {
            let s = b.eval(x).scale(-1.0).symmetrize();
            let s_inv = matrixkit::spd_inverse(&s)?;
            // W_i = S⁻¹ G_i; ∂(-log det S)/∂x_i = tr(S⁻¹ G_i) since S = -G.
            let w: Vec<Option<DenseMatrix>> =
                b.gi.iter()
                    .map(|gi| (gi.max_abs() > 0.0).then(|| s_inv.matmul(gi)))
                    .collect();
            for i in 0..nv {
                let Some(wi) = &w[i] else { continue };
                grad[i] += wi.trace();
                for j in 0..=i {
                    let Some(wj) = &w[j] else { continue };
                    let n = wi.rows();
                    let mut tr = 0.0;
                    for r in 0..n {
                        for c in 0..n {
                            tr += wi[(r, c)] * wj[(c, r)];
                        }
                    }
                    hess[(i, j)] += tr;
                    if i != j {
                        hess[(j, i)] += tr;
                    }
                }
            }
        }
        Ok((grad, hess))
    }

    /// Damped Newton centering at fixed `t`. `stop` is checked after every
    /// accepted step and ends centering early when it returns true.
    fn center(
        &self,
        t: f64,
        x: &mut Vec<f64>,
        opts: &SdpOptions,
        mut stop: impl FnMut(&[f64]) -> bool,
    ) -> Result<(usize, Centering), MatrixError> {
        let mut iterations = 0;
        for _ in 0..opts.max_newton_per_center {
            let (grad, hess) = self.derivatives(t, x)?;
            let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
            let step = newton_direction(&hess, &neg_grad);
            let decrement = -dot(&grad, &step);
            iterations += 1;
            if decrement / 2.0 <= opts.newton_tol {
                return Ok((iterations, Centering::Converged));
            }
            let phi0 = self.phi(t, x).expect("iterate left the cone");
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-20 {
                let cand: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + alpha * d).collect();
                if let Some(phi) = self.phi(t, &cand) {
                    if phi <= phi0 - opts.armijo_slope * alpha * decrement {
                        *x = cand;
                        accepted = true;
                        break;
                    }
                }
                alpha *= opts.armijo_ratio;
            }
            if !accepted {
                return Ok((iterations, Centering::Stalled));
            }
            if stop(x) {
                return Ok((iterations, Centering::Stopped));
            }
        }
        Ok((iterations, Centering::Exhausted))
    }
}

/// Solves `H d = r` after symmetric diagonal scaling, with two rounds of
/// iterative refinement. Barrier Hessians mix entries of very different
/// magnitude, and a plain solve loses enough accuracy to stall Newton.
fn newton_direction(hess: &DenseMatrix, rhs: &[f64]) -> Vec<f64> {
    let nv = rhs.len();
    let d: Vec<f64> = hess
        .diag()
        .iter()
        .map(|h| if *h > 0.0 { 1.0 / h.sqrt() } else { 1.0 })
        .collect();
    let mut h = DenseMatrix::zeros(nv, nv);
    for i in 0..nv {
        for j in 0..nv {
            h[(i, j)] = d[i] * hess[(i, j)] * d[j];
        }
        h[(i, i)] += 1e-14;
    }
    let Ok(lu) = matrixkit::Lu::new(&h) else {
        return rhs.iter().zip(&d).map(|(r, di)| r * di * di).collect();
    };
    let solve = |r: &[f64]| -> Vec<f64> {
        let scaled: Vec<f64> = r.iter().zip(&d).map(|(r, di)| r * di).collect();
        lu.solve_vec(&scaled).iter().zip(&d).map(|(z, di)| z * di).collect()
    };
    let mut x = solve(rhs);
    for _ in 0..2 {
        let hx = hess.mul_vec(&x);
        let resid: Vec<f64> = rhs.iter().zip(&hx).map(|(r, h)| r - h).collect();
        let dx = solve(&resid);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
    }
    x
}

fn shifted_block(p: &AffineSdp) -> Block {
    let n = p.dim();
    Block {
        g0: p.f0.add(&DenseMatrix::identity(n).scale(p.margin)),
        gi: p.fi.clone(),
    }
}

/// Finds `x` with `λ_max(F(x)) < -ε` by minimizing a slack `s` subject to
/// `F(x) + εI ⪯ sI`. Variables are confined to a large box so the auxiliary
/// problem stays bounded.
pub fn find_strictly_feasible(p: &AffineSdp) -> Result<Vec<f64>, SdpError> {
    find_strictly_feasible_with(p, &SdpOptions::default()).map(|(x, _)| x)
}

fn find_strictly_feasible_with(p: &AffineSdp, opts: &SdpOptions) -> Result<(Vec<f64>, usize), SdpError> {
    p.validate()?;
    let nv = p.num_vars();
    let n = p.dim();
    let x0 = vec![0.0; nv];
    if max_eigenvalue(&p.eval(&x0))? < -p.margin * 2.0 {
        return Ok((x0, 0));
    }

    let scale = p.fi.iter().map(|f| f.max_abs()).fold(p.f0.max_abs(), f64::max).max(1.0);
    let bound = 1e6 * scale;
    // variables: x (nv entries) then s
    let shifted = shifted_block(p);
    let mut gi = shifted.gi.clone();
    gi.push(DenseMatrix::identity(n).scale(-1.0));
    let mut blocks = vec![Block { g0: shifted.g0, gi }];
    for i in 0..=nv {
        for sign in [1.0, -1.0] {
            if i == nv && sign < 0.0 {
                // s ≥ -1 - ε: bounds the slack from below only.
                let mut g = vec![DenseMatrix::zeros(1, 1); nv + 1];
                g[nv] = DenseMatrix::from_diag(&[-1.0]);
                blocks.push(Block {
                    g0: DenseMatrix::from_diag(&[-1.0]),
                    gi: g,
                });
                continue;
            }
            if i == nv {
                continue;
            }
            let mut g = vec![DenseMatrix::zeros(1, 1); nv + 1];
            g[i] = DenseMatrix::from_diag(&[sign]);
            blocks.push(Block {
                g0: DenseMatrix::from_diag(&[-bound]),
                gi: g,
            });
        }
    }
    let mut objective = vec![0.0; nv + 1];
    objective[nv] = -1.0;
    let prob = BarrierProblem { objective, blocks };

    let s0 = max_eigenvalue(&p.eval(&x0).symmetrize())? + p.margin;
    let mut z = x0;
    z.push(s0.max(0.0) + 1.0);

    let mut t = opts.t0;
    let mut iterations = 0;
    let feasible = |z: &[f64]| z[nv] < 0.0;
    for _ in 0..opts.max_outer {
        let (its, _) = prob.center(t, &mut z, opts, |z| feasible(z))?;
        iterations += its;
        if feasible(&z) {
            let x = z[..nv].to_vec();
            let lmax = max_eigenvalue(&p.eval(&x))?;
            if lmax < -p.margin {
                return Ok((x, iterations));
            }
        }
        if prob.dim() as f64 / t < opts.gap_tol {
            break;
        }
        t *= opts.growth;
    }
    let slack = z[nv] - p.margin;
    Err(SdpError::Infeasible {
        slack,
        margin: p.margin,
    })
}

/// Maximizes `cᵀx` over `F(x) ⪯ -εI` by barrier path following, starting
/// from a phase-1 point.
pub fn maximize(p: &AffineSdp) -> Result<SdpSolution, SdpError> {
    maximize_with(p, &SdpOptions::default())
}

pub fn maximize_with(p: &AffineSdp, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
    let (x0, phase1_iters) = find_strictly_feasible_with(p, opts)?;
    maximize_from(p, x0, opts).map(|mut s| {
        s.iterations += phase1_iters;
        s
    })
}

/// Barrier path following from a given strictly feasible point.
pub fn maximize_from(p: &AffineSdp, x0: Vec<f64>, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
    p.validate()?;
    let prob = BarrierProblem {
        objective: p.objective.clone(),
        blocks: vec![shifted_block(p)],
    };
    if prob.log_barrier(&x0).is_none() {
        return Err(SdpError::NotStrictlyFeasible);
    }
    let mut x = x0;
    let mut t = opts.t0;
    let mut iterations = 0;
    let mut barrier_trace = Vec::new();
    let mut status = SdpStatus::IterationLimit;
    let dim = prob.dim() as f64;
    for _ in 0..opts.max_outer {
        let (its, outcome) = prob.center(t, &mut x, opts, |_| false)?;
        iterations += its;
        if outcome == Centering::Exhausted {
            break;
        }
        let barrier = prob.log_barrier(&x).expect("iterate left the cone");
        barrier_trace.push(p.objective_at(&x) - barrier / t);
        if dim / t < opts.gap_tol {
            status = SdpStatus::Optimal;
            break;
        }
        t *= opts.growth;
    }
    let max_block_eig = max_eigenvalue(&p.eval(&x).symmetrize())?;
    if status == SdpStatus::Optimal && max_block_eig >= -p.margin {
        // Rounding pushed the iterate onto the shifted boundary.
        status = SdpStatus::IterationLimit;
    }
    Ok(SdpSolution {
        objective_value: p.objective_at(&x),
        x,
        max_block_eig,
        iterations,
        status,
        barrier_trace,
    })
}
