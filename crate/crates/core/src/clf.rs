//! Ancillary feedback synthesis through a quadratic control Lyapunov
//! function.
//!
//! For `ẋ = Ax + Bu + B_w w` the program
//!
//! ```text
//! max tr(Y)  s.t.  [ R11  Y     Lᵀ    B_w  ]
//!                  [ Y    -Q⁻¹  0     0    ]  ≺ 0,   R11 = (AY + BL)ᵀ + (AY + BL) + λY
//!                  [ L    0     -R⁻¹  0    ]
//!                  [ B_wᵀ 0     0     -μI  ]
//! ```
//!
//! yields `P = Y⁻¹`, `K = L Y⁻¹`, and `E(x) = xᵀPx` satisfies
//! `Ė + λE - μ wᵀw < 0` along the closed loop. Trajectories then stay in
//! `{E < μ w_max² / λ}` whenever `‖w‖_∞ ≤ w_max`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lmi::{self, AffineSdp, SdpError, SdpOptions, SdpSolution, SdpStatus};
use crate::matrixkit::{self, cholesky, max_eigenvalue, DenseMatrix, MatrixError, SymMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClfError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("Y is singular or not positive definite")]
    Singular,
    #[error("synthesis did not reach an optimal point (status {0:?})")]
    NotOptimal(SdpStatus),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// `ẋ = A x + B u + B_w w + G`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub b_w: DenseMatrix,
    pub g: DenseMatrix,
}

impl LinearModel {
    pub fn new(a: DenseMatrix, b: DenseMatrix, b_w: DenseMatrix, g: DenseMatrix) -> Result<Self, ClfError> {
        let model = Self { a, b, b_w, g };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ClfError> {
        let n = self.a.rows();
        let bad = |what: &str, shape: (usize, usize)| {
            ClfError::DimensionMismatch(format!("{what} is {}x{} for n = {n}", shape.0, shape.1))
        };
        if !self.a.is_square() {
            return Err(bad("A", self.a.shape()));
        }
        if self.b.rows() != n {
            return Err(bad("B", self.b.shape()));
        }
        if self.b_w.rows() != n {
            return Err(bad("B_w", self.b_w.shape()));
        }
        if self.g.shape() != (n, 1) {
            return Err(bad("G", self.g.shape()));
        }
        for m in [&self.a, &self.b, &self.b_w, &self.g] {
            if !m.is_finite() {
                return Err(ClfError::InvalidParams("non-finite model entry".into()));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    pub fn p(&self) -> usize {
        self.b_w.cols()
    }

    /// `A + B K`
    pub fn closed_loop(&self, k: &DenseMatrix) -> DenseMatrix {
        self.a.add(&self.b.matmul(k))
    }
}

/// Weights and decay parameters of the synthesis program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClfParams {
    /// Diagonal of Q.
    pub q: Vec<f64>,
    /// Diagonal of R.
    pub r: Vec<f64>,
    pub lambda: f64,
    pub mu: f64,
}

impl ClfParams {
    pub fn validate(&self) -> Result<(), ClfError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(ClfError::InvalidParams(format!("lambda = {} must be > 0", self.lambda)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(ClfError::InvalidParams(format!("mu = {} must be > 0", self.mu)));
        }
        if self.q.iter().chain(&self.r).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(ClfError::InvalidParams("Q and R diagonals must be positive".into()));
        }
        Ok(())
    }

    pub fn q_matrix(&self) -> SymMatrix {
        DenseMatrix::from_diag(&self.q)
    }

    pub fn r_matrix(&self) -> SymMatrix {
        DenseMatrix::from_diag(&self.r)
    }

    /// Accepts a full matrix only if it is diagonal with positive entries.
    pub fn diagonal_of(m: &SymMatrix) -> Result<Vec<f64>, ClfError> {
        if !m.is_square() {
            return Err(ClfError::InvalidParams("weight matrix must be square".into()));
        }
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if i != j && m[(i, j)] != 0.0 {
                    return Err(ClfError::InvalidParams("weight matrices must be diagonal".into()));
                }
            }
        }
        Ok(m.diag())
    }
}

/// Ancillary gain, Lyapunov matrix and invariant-set level.
#[derive(Debug, Clone)]
pub struct ClfCertificate {
    pub k: DenseMatrix,
    pub p: SymMatrix,
    pub params: ClfParams,
    pub w_max: Option<f64>,
    pub roa_level: f64,
}

impl ClfCertificate {
    /// `E(e) = eᵀPe`
    pub fn lyapunov(&self, e: &[f64]) -> f64 {
        self.p.quad_form(e)
    }

    /// Records a disturbance bound and the matching level `μ w² / λ`.
    pub fn set_w_max(&mut self, w_max: f64) {
        self.w_max = Some(w_max);
        self.roa_level = roa_level(&self.params, w_max);
    }
}

/// Column layout of the decision vector: upper-triangular entries of Y
/// (row by row), then L row-major.
#[derive(Debug, Clone, Copy)]
pub struct ClfLmiLayout {
    pub n: usize,
    pub m: usize,
    pub p: usize,
}

impl ClfLmiLayout {
    pub fn num_y(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn num_vars(&self) -> usize {
        self.num_y() + self.m * self.n
    }

    pub fn block_dim(&self) -> usize {
        2 * self.n + self.m + self.p
    }

    /// Index of `Y[i][j]` (either order).
    pub fn y_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        // row r of the packed upper triangle starts at r*n - r(r-1)/2
        i * self.n - i * i.saturating_sub(1) / 2 + (j - i)
    }

    pub fn l_index(&self, i: usize, j: usize) -> usize {
        self.num_y() + i * self.n + j
    }

    pub fn unpack(&self, x: &[f64]) -> (SymMatrix, DenseMatrix) {
        let mut y = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in i..self.n {
                let v = x[self.y_index(i, j)];
                y[(i, j)] = v;
                y[(j, i)] = v;
            }
        }
        let mut l = DenseMatrix::zeros(self.m, self.n);
        for i in 0..self.m {
            for j in 0..self.n {
                l[(i, j)] = x[self.l_index(i, j)];
            }
        }
        (y, l)
    }
}

/// The synthesis program together with its variable layout.
#[derive(Debug, Clone)]
pub struct ClfLmiProgram {
    pub sdp: AffineSdp,
    pub layout: ClfLmiLayout,
}

impl ClfLmiProgram {
    pub fn unpack(&self, x: &[f64]) -> (SymMatrix, DenseMatrix) {
        self.layout.unpack(x)
    }
}

/// Assembles the block LMI in the decision variables `(Y, L)`.
pub fn build_lemma2_lmi(model: &LinearModel, params: &ClfParams) -> Result<ClfLmiProgram, ClfError> {
    model.validate()?;
    params.validate()?;
    let (n, m, p) = (model.n(), model.m(), model.p());
    if params.q.len() != n {
        return Err(ClfError::DimensionMismatch(format!(
            "Q has {} entries, n = {n}",
            params.q.len()
        )));
    }
    if params.r.len() != m {
        return Err(ClfError::DimensionMismatch(format!(
            "R has {} entries, m = {m}",
            params.r.len()
        )));
    }
    let layout = ClfLmiLayout { n, m, p };
    let dim = layout.block_dim();
    let (ry, rl, rw) = (n, 2 * n, 2 * n + m);

    // Constant part: -Q⁻¹, -R⁻¹, -μI and the B_w coupling.
    let mut f0 = DenseMatrix::zeros(dim, dim);
    for i in 0..n {
        f0[(ry + i, ry + i)] = -1.0 / params.q[i];
    }
    for i in 0..m {
        f0[(rl + i, rl + i)] = -1.0 / params.r[i];
    }
    for i in 0..p {
        f0[(rw + i, rw + i)] = -params.mu;
    }
    for i in 0..n {
        for j in 0..p {
            f0[(i, rw + j)] = model.b_w[(i, j)];
            f0[(rw + j, i)] = model.b_w[(i, j)];
        }
    }

    let mut fi = vec![DenseMatrix::zeros(dim, dim); layout.num_vars()];
    let a = &model.a;
    let b = &model.b;
    // Y[k][l] (and Y[l][k]) as a unit symmetric perturbation E.
    for k in 0..n {
        for l in k..n {
            let f = &mut fi[layout.y_index(k, l)];
            let mut e = DenseMatrix::zeros(n, n);
            e[(k, l)] = 1.0;
            e[(l, k)] = 1.0;
            // R11 contribution: (A E)ᵀ + A E + λ E
            let ae = a.matmul(&e);
            let r11 = ae.add(&ae.transpose()).add(&e.scale(params.lambda));
            f.set_block(0, 0, &r11);
            f.set_block(0, ry, &e);
            f.set_block(ry, 0, &e);
        }
    }
    for i in 0..m {
        for j in 0..n {
            let f = &mut fi[layout.l_index(i, j)];
            // L = unit at (i, j): B L has column j equal to B[:, i].
            let mut bl = DenseMatrix::zeros(n, n);
            for r in 0..n {
                bl[(r, j)] = b[(r, i)];
            }
            f.set_block(0, 0, &bl.add(&bl.transpose()));
            f[(rl + i, j)] = 1.0;
            f[(j, rl + i)] = 1.0;
        }
    }

    let mut objective = vec![0.0; layout.num_vars()];
    for i in 0..n {
        objective[layout.y_index(i, i)] = 1.0;
    }
    let sdp = AffineSdp::new(objective, f0, fi)?;
    Ok(ClfLmiProgram { sdp, layout })
}

/// `P = sym(Y⁻¹)`, `K = L Y⁻¹`.
pub fn recover_gains(y: &SymMatrix, l: &DenseMatrix) -> Result<(DenseMatrix, SymMatrix), ClfError> {
    if !y.is_square() || l.cols() != y.rows() {
        return Err(ClfError::DimensionMismatch(format!(
            "Y is {:?}, L is {:?}",
            y.shape(),
            l.shape()
        )));
    }
    cholesky(&y.symmetrize()).map_err(|_| ClfError::Singular)?;
    let y_inv = matrixkit::inverse(y).map_err(|_| ClfError::Singular)?;
    let p = y_inv.symmetrize();
    let k = l.matmul(&y_inv);
    cholesky(&p).map_err(|_| ClfError::Singular)?;
    Ok((k, p))
}

/// Largest eigenvalue of
/// `(A+BK)ᵀP + P(A+BK) + λP + Q + KᵀRK + μ⁻¹ P B_w B_wᵀ P`.
///
/// A negative value certifies `Ė + λE - μ wᵀw < 0` for the linear model.
pub fn verify_closed_loop(model: &LinearModel, cert: &ClfCertificate) -> Result<f64, ClfError> {
    let m = closed_loop_certificate_matrix(model, cert)?;
    Ok(max_eigenvalue(&m)?)
}

pub fn closed_loop_certificate_matrix(model: &LinearModel, cert: &ClfCertificate) -> Result<SymMatrix, ClfError> {
    let n = model.n();
    if cert.p.shape() != (n, n) || cert.k.shape() != (model.m(), n) {
        return Err(ClfError::DimensionMismatch("certificate does not match model".into()));
    }
    let acl = model.closed_loop(&cert.k);
    let p = &cert.p;
    let pa = p.matmul(&acl);
    let q = cert.params.q_matrix();
    let r = cert.params.r_matrix();
    let pbw = p.matmul(&model.b_w);
    let mut m = pa
        .transpose()
        .add(&pa)
        .add(&p.scale(cert.params.lambda))
        .add(&q)
        .add(&cert.k.transpose().matmul(&r).matmul(&cert.k));
    m.axpy(1.0 / cert.params.mu, &pbw.matmul(&pbw.transpose()));
    Ok(m.symmetrize())
}

/// Invariant-set level `c = μ w_max² / λ`.
pub fn roa_level(params: &ClfParams, w_max: f64) -> f64 {
    params.mu * w_max * w_max / params.lambda
}

/// Full synthesis: build, solve, recover, certify.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub certificate: ClfCertificate,
    pub y: SymMatrix,
    pub l: DenseMatrix,
    pub solution: SdpSolution,
    /// `λ_max` of the block LMI at the solution.
    pub block_max_eig: f64,
    /// `λ_max` of the expanded closed-loop certificate matrix.
    pub certificate_max_eig: f64,
}

pub fn synthesize(model: &LinearModel, params: &ClfParams) -> Result<Synthesis, ClfError> {
    synthesize_with(model, params, &SdpOptions::default())
}

pub fn synthesize_with(model: &LinearModel, params: &ClfParams, opts: &SdpOptions) -> Result<Synthesis, ClfError> {
    let program = build_lemma2_lmi(model, params)?;
    let solution = lmi::maximize_with(&program.sdp, opts)?;
    if solution.status != SdpStatus::Optimal {
        return Err(ClfError::NotOptimal(solution.status));
    }
    let (y, l) = program.unpack(&solution.x);
    let (k, p) = recover_gains(&y, &l)?;
    let certificate = ClfCertificate {
        k,
        p,
        params: params.clone(),
        w_max: None,
        roa_level: 0.0,
    };
    let certificate_max_eig = verify_closed_loop(model, &certificate)?;
    Ok(Synthesis {
        block_max_eig: solution.max_block_eig,
        certificate,
        y,
        l,
        solution,
        certificate_max_eig,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model() -> LinearModel {
        let one = DenseMatrix::from_diag(&[1.0]);
        LinearModel::new(one.clone(), one.clone(), one, DenseMatrix::zeros(1, 1)).unwrap()
    }

    fn unit_params() -> ClfParams {
        ClfParams {
            q: vec![1.0],
            r: vec![1.0],
            lambda: 1.0,
            mu: 1.0,
        }
    }

    #[test]
    fn layout_indices_are_a_bijection() {
        for n in 1..6 {
            let layout = ClfLmiLayout { n, m: 2, p: 1 };
            let mut seen = vec![false; layout.num_vars()];
            for i in 0..n {
                for j in i..n {
                    let k = layout.y_index(i, j);
                    assert_eq!(k, layout.y_index(j, i));
                    assert!(!seen[k]);
                    seen[k] = true;
                }
            }
            for i in 0..2 {
                for j in 0..n {
                    let k = layout.l_index(i, j);
                    assert!(!seen[k]);
                    seen[k] = true;
                }
            }
            assert!(seen.iter().all(|s| *s));
        }
    }

    #[test]
    fn scalar_block_expands_by_hand() {
        let prog = build_lemma2_lmi(&scalar_model(), &unit_params()).unwrap();
        assert_eq!(prog.sdp.dim(), 4);
        // Y = 2, L = -3: R11 = 2(Y + L) + Y = 2(-1) + 2 = 0
        let (yv, lv) = (2.0, -3.0);
        let f = prog.sdp.eval(&[yv, lv]);
        let expected = DenseMatrix::from_rows(&[
            &[2.0 * (yv + lv) + yv, yv, lv, 1.0],
            &[yv, -1.0, 0.0, 0.0],
            &[lv, 0.0, -1.0, 0.0],
            &[1.0, 0.0, 0.0, -1.0],
        ]);
        assert_eq!(f, expected);
        assert_eq!(prog.sdp.objective, vec![1.0, 0.0]);
    }

    #[test]
    fn recover_gains_examples() {
        let k0 = DenseMatrix::from_rows(&[&[1.5, -2.0]]);
        let (k, p) = recover_gains(&DenseMatrix::identity(2), &k0).unwrap();
        assert_eq!(k, k0);
        assert_eq!(p, DenseMatrix::identity(2));

        let (k, p) = recover_gains(
            &DenseMatrix::from_diag(&[2.0, 4.0]),
            &DenseMatrix::from_rows(&[&[2.0, 4.0]]),
        )
        .unwrap();
        assert_eq!(k.data(), &[1.0, 1.0]);
        assert_eq!(p, DenseMatrix::from_diag(&[0.5, 0.25]));
    }

    #[test]
    fn recover_gains_rejects_indefinite_y() {
        let y = DenseMatrix::from_diag(&[1.0, -1.0]);
        let l = DenseMatrix::zeros(1, 2);
        assert_eq!(recover_gains(&y, &l).unwrap_err(), ClfError::Singular);
    }

    fn cert_for(a_diag: f64) -> (LinearModel, ClfCertificate) {
        let n = 2;
        let model = LinearModel::new(
            DenseMatrix::identity(n).scale(a_diag),
            DenseMatrix::zeros(n, 1),
            DenseMatrix::zeros(n, 1),
            DenseMatrix::zeros(n, 1),
        )
        .unwrap();
        let cert = ClfCertificate {
            k: DenseMatrix::zeros(1, n),
            p: DenseMatrix::identity(n),
            params: ClfParams {
                q: vec![0.1, 0.1],
                r: vec![1.0],
                lambda: 0.5,
                mu: 1.0,
            },
            w_max: None,
            roa_level: 0.0,
        };
        (model, cert)
    }

    #[test]
    fn certificate_of_stable_open_loop() {
        let (model, cert) = cert_for(-1.0);
        // -2I + 0.5I + 0.1I
        let lmax = verify_closed_loop(&model, &cert).unwrap();
        assert!((lmax - (-1.4)).abs() < 1e-12);
    }

    #[test]
    fn certificate_of_unstable_open_loop_fails() {
        let (model, cert) = cert_for(1.0);
        assert!(verify_closed_loop(&model, &cert).unwrap() > 0.0);
    }

    #[test]
    fn roa_level_examples() {
        let p = |mu, lambda| ClfParams {
            q: vec![1.0],
            r: vec![1.0],
            lambda,
            mu,
        };
        assert!((roa_level(&p(0.1, 0.5), 3.5) - 2.45).abs() < 1e-12);
        assert_eq!(roa_level(&p(0.1, 0.5), 0.0), 0.0);
        assert!((roa_level(&p(200.0, 0.3), 1.0) - 666.67).abs() < 1e-2);
    }

    #[test]
    fn params_validation() {
        let mut p = unit_params();
        p.lambda = 0.0;
        assert!(p.validate().is_err());
        let mut p = unit_params();
        p.r = vec![-1.0];
        assert!(p.validate().is_err());
        assert!(ClfParams::diagonal_of(&DenseMatrix::from_rows(&[&[1.0, 0.1], &[0.1, 1.0]])).is_err());
        assert_eq!(
            ClfParams::diagonal_of(&DenseMatrix::from_diag(&[2.0, 3.0])).unwrap(),
            vec![2.0, 3.0]
        );
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mut params = unit_params();
        params.q = vec![1.0, 1.0];
        assert!(matches!(
            build_lemma2_lmi(&scalar_model(), &params),
            Err(ClfError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn scalar_synthesis_certifies() {
        // Eliminating L (optimum L = -1) leaves Y² + 3Y - 3/4 < 0, so the
        // largest Y is (√12 - 3)/2. With μ = 1 the same reduction forces Y < 0.
        let params = ClfParams {
            mu: 4.0,
            ..unit_params()
        };
        let s = synthesize(&scalar_model(), &params).unwrap();
        let y_star = (12f64.sqrt() - 3.0) / 2.0;
        assert!((s.y[(0, 0)] - y_star).abs() < 1e-4, "Y = {}", s.y[(0, 0)]);
        assert!(s.block_max_eig < 0.0);
        assert!(s.certificate_max_eig < 0.0);
        let acl = 1.0 + s.certificate.k[(0, 0)];
        assert!(acl < 0.0);
    }

    #[test]
    fn scalar_synthesis_with_weak_mu_has_no_positive_y() {
        assert_eq!(
            synthesize(&scalar_model(), &unit_params()).unwrap_err(),
            ClfError::Singular
        );
    }
}
