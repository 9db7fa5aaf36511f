//! Dense complex matrices and a cyclic Jacobi eigensolver for Hermitian input.
//!
//! Each rotation first removes the phase of the pivot `a_pq` with a diagonal
//! unitary and then applies a real plane rotation, so the Hermitian structure
//! is preserved exactly at every step. Sweeps stop once every off-diagonal
//! magnitude is below `1e-12 * ||A||_F`.

use num_complex::Complex64;

use crate::error::{Error, Result};

const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] += a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(Error::Dimension(format!(
                "cannot add {}x{} and {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        Ok(CMatrix { rows: self.rows, cols: self.cols, data })
    }

    pub fn scale(&self, s: f64) -> CMatrix {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius norm of `self - self^*`.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Scales row `i` by `d[i]` on the left and column `j` by `conj(d[j])` on the right,
    /// i.e. computes `D A D^*` for `D = diag(d)`.
    pub fn congruence_diag(&self, d: &[Complex64]) -> Result<CMatrix> {
        if !self.is_square() || d.len() != self.rows {
            return Err(Error::Dimension(format!(
                "diagonal congruence needs {} entries, got {}",
                self.rows,
                d.len()
            )));
        }
        Ok(CMatrix::from_fn(self.rows, self.cols, |i, j| d[i] * self[(i, j)] * d[j].conj()))
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigenvalues (ascending) and the matching unit eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

/// Returns the eigenvalues of a Hermitian matrix in nondecreasing order.
pub fn hermitian_eigenvalues(q: &CMatrix) -> Result<Vec<f64>> {
    hermitian_eigen(q).map(|e| e.values)
}

/// Full eigendecomposition `Q = V diag(values) V^*` by cyclic complex Jacobi rotations.
pub fn hermitian_eigen(q: &CMatrix) -> Result<HermitianEigen> {
    if !q.is_square() {
        return Err(Error::Dimension(format!("eigensolver needs a square matrix, got {}x{}", q.rows, q.cols)));
    }
    let norm = q.frobenius_norm();
    let asymmetry = q.hermitian_defect();
    if asymmetry > 1e-10 * norm {
        return Err(Error::NotHermitian { asymmetry, norm });
    }

    let n = q.rows;
    // symmetrize so the rotations act on an exactly Hermitian matrix
    let mut a = CMatrix::from_fn(n, n, |i, j| (q[(i, j)] + q[(j, i)].conj()) * 0.5);
    let mut v = CMatrix::identity(n);
    let threshold = OFF_DIAGONAL_TOL * norm;

    for _ in 0..MAX_SWEEPS {
        let mut max_off = 0.0f64;
        for p in 0..n {
            for r in (p + 1)..n {
                max_off = max_off.max(a[(p, r)].norm());
            }
        }
        if max_off <= threshold {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                rotate(&mut a, &mut v, p, r);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, c| v[(i, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let phase = apq / r; // e^{i phi}
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;

    let zeta = (aqq - app) / (2.0 * r);
    let t = if zeta.is_infinite() {
        0.0
    } else {
        let sign = if zeta >= 0.0 { 1.0 } else { -1.0 };
        sign / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;

    // U = [[c, s], [-s e^{-i phi}, c e^{-i phi}]] on the (p, q) plane; A <- U^* A U
    let g_qp = -phase.conj() * s;
    let g_qq = phase.conj() * c;
    let n = a.rows;
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c + akq * g_qp;
        a[(k, q)] = akp * s + akq * g_qq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c + aqk * g_qp.conj();
        a[(q, k)] = apk * s + aqk * g_qq.conj();
    }
    a[(p, q)] = Complex64::new(0.0, 0.0);
    a[(q, p)] = Complex64::new(0.0, 0.0);
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c + vkq * g_qp;
        v[(k, q)] = vkp * s + vkq * g_qq;
    }
}
