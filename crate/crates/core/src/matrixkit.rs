//! Dense real linear algebra.
//!
//! Every matrix in this crate is small (at most a few dozen rows), so all
//! storage is dense and row-major: `data[i * cols + j]` holds entry `(i, j)`.
//! Tolerances are relative to the infinity norm of the input with an
//! absolute floor of [`ABS_FLOOR`].

use std::fmt;
use std::ops::{Index, IndexMut};

use thiserror::Error;

/// Absolute floor applied to every relative tolerance.
pub const ABS_FLOOR: f64 = 1e-14;

const SYMMETRY_RTOL: f64 = 1e-12;
const SINGULAR_RTOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix is singular")]
    Singular,
    #[error("non-finite entry in matrix data")]
    NonFinite,
    #[error("jacobi eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),
}

pub type Result<T> = std::result::Result<T, MatrixError>;

/// Row-major dense real matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Symmetric matrices share the dense representation; operations that need
/// symmetry check it on entry.
pub type SymMatrix = DenseMatrix;

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(MatrixError::DimensionMismatch {
                expected: (rows, cols),
                got: (data.len(), 1),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    ///
    /// Panics if the rows are ragged.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn column_vector(v: &[f64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// Matrix product. Panics on inner-dimension mismatch.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "add: shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self { data, ..*self }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "sub: shape mismatch");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { data, ..*self }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            data: self.data.iter().map(|a| a * s).collect(),
            ..*self
        }
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "axpy: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn is_symmetric(&self, rtol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let tol = rtol * self.norm_inf().max(ABS_FLOOR) + ABS_FLOOR;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self[(i, j)] - self[(j, i)]).abs() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// `(M + Mᵀ) / 2`
    pub fn symmetrize(&self) -> Self {
        assert!(self.is_square(), "symmetrize: not square");
        let mut s = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// Copies `block` into `self` with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Self) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols);
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r0 + i, c0 + j)] = block[(i, j)];
            }
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        let mut b = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                b[(i, j)] = self[(r0 + i, c0 + j)];
            }
        }
        b
    }

    /// `vᵀ M v`
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mv = self.mul_vec(v);
        mv.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn require_square(&self) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(MatrixError::NotSquare(self.rows, self.cols))
        }
    }

    fn require_symmetric(&self) -> Result<()> {
        self.require_square()?;
        if self.is_symmetric(SYMMETRY_RTOL) {
            Ok(())
        } else {
            Err(MatrixError::NotSymmetric)
        }
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for v in self.row(i) {
                write!(f, "{v:>13.6e} ")?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Cholesky factor `L` with `L Lᵀ = m`.
pub fn cholesky(m: &SymMatrix) -> Result<DenseMatrix> {
    m.require_symmetric()?;
    let n = m.rows();
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(MatrixError::NotPositiveDefinite { row: j, pivot: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive definite matrix through its Cholesky
/// factor. Unlike [`inverse`], it has no pivot threshold, so it stays usable
/// for very ill-conditioned but definite inputs.
pub fn spd_inverse(m: &SymMatrix) -> Result<DenseMatrix> {
    let l = cholesky(m)?;
    let n = l.rows();
    // columns of L⁻¹ by forward substitution
    let mut linv = DenseMatrix::zeros(n, n);
    for c in 0..n {
        for i in c..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in c..i {
                s -= l[(i, k)] * linv[(k, c)];
            }
            linv[(i, c)] = s / l[(i, i)];
        }
    }
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v: f64 = (i..n).map(|k| linv[(k, i)] * linv[(k, j)]).sum();
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the unit eigenvector for `eigenvalues[i]`.
    pub eigenvectors: DenseMatrix,
}

impl SymEigResult {
    pub fn max(&self) -> f64 {
        *self.eigenvalues.last().expect("empty spectrum")
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
///
/// Sweeps over all off-diagonal pairs until the off-diagonal Frobenius mass
/// falls below `eps * ‖m‖_F`. Quadratic convergence makes 5-10 sweeps typical
/// for the sizes used here.
pub fn sym_eig(m: &SymMatrix) -> Result<SymEigResult> {
    m.require_symmetric()?;
    let n = m.rows();
    let mut a = m.symmetrize();
    let mut v = DenseMatrix::identity(n);
    let total: f64 = a.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = f64::EPSILON * total.max(ABS_FLOOR);

    let off = |a: &DenseMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * a[(i, j)] * a[(i, j)];
            }
        }
        s.sqrt()
    };

    let mut converged = n < 2 || off(&a) <= target;
    let mut sweep = 0;
    while !converged {
        if sweep == JACOBI_MAX_SWEEPS {
            return Err(MatrixError::NoConvergence(JACOBI_MAX_SWEEPS));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        sweep += 1;
        converged = off(&a) <= target;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            eigenvectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEigResult {
        eigenvalues,
        eigenvectors,
    })
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &SymMatrix) -> Result<f64> {
    sym_eig(m).map(|e| e.max())
}

/// True iff `λ_max(m) < -margin`. Non-symmetric or unsolvable input is
/// reported as not negative definite.
pub fn is_neg_def(m: &SymMatrix, margin: f64) -> bool {
    match max_eigenvalue(m) {
        Ok(lmax) => lmax < -margin,
        Err(_) => false,
    }
}

/// LU factorization with partial pivoting, `P A = L U` packed in one matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: DenseMatrix,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        a.require_square()?;
        let n = a.rows();
        let tol = SINGULAR_RTOL * a.norm_inf().max(ABS_FLOOR);
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let (p, pmax) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].abs()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmax < tol {
                return Err(MatrixError::Singular);
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        lu[(i, j)] -= f * lu[(k, j)];
                    }
                }
            }
        }
        Ok(Self { lu, perm, sign })
    }

    pub fn det(&self) -> f64 {
        self.sign * self.lu.diag().iter().product::<f64>()
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let n = self.lu.rows();
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                x[i] -= self.lu[(i, j)] * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                x[i] -= self.lu[(i, j)] * x[j];
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.lu.rows();
        if b.rows() != n {
            return Err(MatrixError::DimensionMismatch {
                expected: (n, b.cols()),
                got: b.shape(),
            });
        }
        let mut x = DenseMatrix::zeros(n, b.cols());
        for j in 0..b.cols() {
            let col = self.solve_vec(&b.column(j));
            for i in 0..n {
                x[(i, j)] = col[i];
            }
        }
        Ok(x)
    }
}

/// Solves `a x = b` for square nonsingular `a`.
pub fn solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    Lu::new(a)?.solve(b)
}

pub fn inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    solve(a, &DenseMatrix::identity(a.rows()))
}

pub fn det(a: &DenseMatrix) -> Result<f64> {
    match Lu::new(a) {
        Ok(lu) => Ok(lu.det()),
        Err(MatrixError::Singular) => Ok(0.0),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DenseMatrix {
        let data = (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DenseMatrix::new(r, c, data).unwrap()
    }

    fn random_sym(rng: &mut impl Rng, n: usize) -> DenseMatrix {
        random_matrix(rng, n, n).symmetrize()
    }

    #[test]
    fn spd_inverse_matches_lu_and_handles_wide_spread() {
        let m = DenseMatrix::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        let a = spd_inverse(&m).unwrap();
        let b = inverse(&m).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-14);
        let wide = DenseMatrix::from_diag(&[1e8, 1e-8]);
        let w = spd_inverse(&wide).unwrap();
        assert!((w[(1, 1)] - 1e8).abs() < 1e-6);
        assert!(spd_inverse(&DenseMatrix::from_diag(&[1.0, -1.0])).is_err());
    }

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(l, DenseMatrix::identity(3));
    }

    #[test]
    fn cholesky_rejects_negative_pivot() {
        let m = DenseMatrix::from_rows(&[&[0.0, 0.0], &[0.0, -1.0]]);
        assert!(matches!(cholesky(&m), Err(MatrixError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        let m = DenseMatrix::from_rows(&[&[2.0, 1.0], &[0.0, 2.0]]);
        assert_eq!(cholesky(&m), Err(MatrixError::NotSymmetric));
    }

    #[test]
    fn cholesky_reconstructs_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=8 {
            let m = random_matrix(&mut rng, n, n);
            let a = m.transpose().matmul(&m).add(&DenseMatrix::identity(n));
            let l = cholesky(&a).unwrap();
            let back = l.matmul(&l.transpose());
            for i in 0..n {
                for j in 0..n {
                    assert!(j <= i || l[(i, j)] == 0.0);
                    assert!((back[(i, j)] - a[(i, j)]).abs() < 1e-10 * a.norm_inf());
                }
            }
        }
    }

    #[test]
    fn eig_of_diagonal_is_sorted_diagonal() {
        let e = sym_eig(&DenseMatrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 2.0, 3.0]);
        let e = sym_eig(&DenseMatrix::identity(4)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0; 4]);
    }

    #[test]
    fn eig_2x2_matches_quadratic_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let (a, b, c): (f64, f64, f64) = (
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            );
            // [[a, b], [b, c]]: (a+c)/2 ± sqrt(((a-c)/2)^2 + b^2)
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            let e = sym_eig(&DenseMatrix::from_rows(&[&[a, b], &[b, c]])).unwrap();
            assert!((e.eigenvalues[0] - (mid - rad)).abs() < 1e-12 * (1.0 + rad));
            assert!((e.eigenvalues[1] - (mid + rad)).abs() < 1e-12 * (1.0 + rad));
        }
    }

    #[test]
    fn eig_reconstructs_and_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 9, 16] {
            let m = random_sym(&mut rng, n).scale(10.0);
            let e = sym_eig(&m).unwrap();
            let v = &e.eigenvectors;
            let vtv = v.transpose().matmul(v);
            let lam = DenseMatrix::from_diag(&e.eigenvalues);
            let back = v.matmul(&lam).matmul(&v.transpose());
            for i in 0..n {
                for j in 0..n {
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((vtv[(i, j)] - id).abs() < 1e-10);
                    assert!((back[(i, j)] - m[(i, j)]).abs() < 1e-9 * m.norm_inf());
                }
            }
            for (i, lam) in e.eigenvalues.iter().enumerate() {
                let vi = v.column(i);
                let av = m.mul_vec(&vi);
                for k in 0..n {
                    assert!((av[k] - lam * vi[k]).abs() < 1e-8 * m.norm_inf());
                }
            }
            assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn neg_def_examples() {
        assert!(is_neg_def(&DenseMatrix::identity(2).scale(-1.0), 0.5));
        assert!(!is_neg_def(&DenseMatrix::zeros(2, 2), 1e-9));
        assert!(!is_neg_def(&DenseMatrix::identity(2).scale(-1.0), 1.0));
    }

    #[test]
    fn solve_examples() {
        let b = DenseMatrix::column_vector(&[1.0, -2.0, 3.0]);
        assert_eq!(solve(&DenseMatrix::identity(3), &b).unwrap(), b);
        let x = solve(
            &DenseMatrix::from_diag(&[2.0, 4.0]),
            &DenseMatrix::column_vector(&[2.0, 4.0]),
        )
        .unwrap();
        assert_eq!(x.data(), &[1.0, 1.0]);
    }

    #[test]
    fn solve_random_6x6_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_matrix(&mut rng, 6, 6).add(&DenseMatrix::identity(6).scale(4.0));
            let b = random_matrix(&mut rng, 6, 2);
            let x = solve(&a, &b).unwrap();
            let r = a.matmul(&x).sub(&b);
            assert!(r.max_abs() < 1e-9 * b.norm_inf().max(1.0));
        }
    }

    #[test]
    fn solve_detects_singular() {
        let a = DenseMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(solve(&a, &DenseMatrix::identity(2)), Err(MatrixError::Singular));
    }

    #[test]
    fn new_rejects_nan_and_bad_length() {
        assert_eq!(DenseMatrix::new(1, 1, vec![f64::NAN]), Err(MatrixError::NonFinite));
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn eig_sum_is_trace_and_product_is_det(seed in any::<u64>(), n in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_sym(&mut rng, n).scale(3.0);
            let e = sym_eig(&m).unwrap();
            let sum: f64 = e.eigenvalues.iter().sum();
            let tr = m.trace();
            prop_assert!((sum - tr).abs() <= 1e-9 * tr.abs().max(1.0));
            let prod: f64 = e.eigenvalues.iter().product();
            let d = det(&m).unwrap();
            prop_assert!((prod - d).abs() <= 1e-7 * d.abs().max(1e-12));
        }

        #[test]
        fn neg_def_implies_negative_quadratic_forms(seed in any::<u64>(), n in 1usize..=6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_sym(&mut rng, n);
            let shifted = m.sub(&DenseMatrix::identity(n).scale(m.norm_inf() * 0.9));
            if is_neg_def(&shifted, 1e-9) {
                for _ in 0..100 {
                    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    let u: Vec<f64> = v.iter().map(|x| x / norm).collect();
                    prop_assert!(shifted.quad_form(&u) < 0.0);
                }
            }
        }

        #[test]
        fn cholesky_roundtrip(seed in any::<u64>(), n in 1usize..=10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_matrix(&mut rng, n, n);
            let a = g.matmul(&g.transpose()).add(&DenseMatrix::identity(n).scale(0.1));
            let l = cholesky(&a).unwrap();
            let err = l.matmul(&l.transpose()).sub(&a).norm_inf();
            prop_assert!(err < 1e-10 * a.norm_inf());
        }
    }
}
