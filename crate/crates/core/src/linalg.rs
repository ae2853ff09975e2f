//! Dense least-squares kernel: column-major matrices and Householder QR.
//!
//! Every least-squares problem in the crate (harmonic amplitude fits and the
//! cancellation projection) goes through [`Qr`]; normal equations are never
//! formed explicitly.

use crate::error::{Error, Result};

/// Dense column-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from whole columns. All columns must share a length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Self {
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * columns.len());
        for c in columns {
            assert_eq!(c.len(), rows, "ragged columns");
            data.extend_from_slice(c);
        }
        Self {
            rows,
            cols: columns.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[col * self.rows + row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[col * self.rows + row] = value;
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    pub fn column_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.data[col * self.rows..(col + 1) * self.rows]
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for (c, &xc) in x.iter().enumerate() {
            if xc == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.column(c)) {
                *o += a * xc;
            }
        }
        out
    }

    /// `Aᵀ y`.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        (0..self.cols).map(|c| dot(self.column(c), y)).collect()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// Stacks `sqrt(ridge) * I` under the matrix, turning a ridge-regularized
    /// problem into an ordinary least-squares one.
    pub fn with_ridge_rows(&self, ridge: f64) -> Self {
        let s = ridge.sqrt();
        let rows = self.rows + self.cols;
        let mut out = Self::zeros(rows, self.cols);
        for c in 0..self.cols {
            out.column_mut(c)[..self.rows].copy_from_slice(self.column(c));
            out.set(self.rows + c, c, s);
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Householder QR factorization of a tall matrix (`rows >= cols`).
///
/// The reflectors are kept in the lower trapezoid of the working matrix; the
/// strict upper triangle holds `R` and its diagonal is stored separately.
#[derive(Debug, Clone)]
pub struct Qr {
    qr: Matrix,
    tau: Vec<f64>,
    r_diag: Vec<f64>,
}

impl Qr {
    pub fn new(a: &Matrix) -> Result<Self> {
        let (m, n) = (a.rows, a.cols);
        if m < n {
            return Err(crate::error::invalid(
                "matrix",
                format!("QR needs rows >= cols, got {m}x{n}"),
            ));
        }
        let mut qr = a.clone();
        let mut tau = vec![0.0; n];
        let mut r_diag = vec![0.0; n];

        for k in 0..n {
            let col = &qr.column(k)[k..];
            let nrm = norm(col);
            if nrm == 0.0 {
                continue;
            }
            let alpha = col[0];
            let rd = if alpha > 0.0 { -nrm } else { nrm };
            // v = x - rd e1, vᵀv = 2 nrm (nrm + |alpha|)
            qr.data[k * m + k] -= rd;
            let vtv = 2.0 * nrm * (nrm + alpha.abs());
            tau[k] = 2.0 / vtv;
            r_diag[k] = rd;

            for j in (k + 1)..n {
                let (left, right) = qr.data.split_at_mut(j * m);
                let v = &left[k * m + k..k * m + m];
                let aj = &mut right[k..m];
                let s = tau[k] * dot(v, aj);
                for (a, vi) in aj.iter_mut().zip(v) {
                    *a -= s * vi;
                }
            }
        }
        Ok(Self { qr, tau, r_diag })
    }

    pub fn rows(&self) -> usize {
        self.qr.rows
    }

    pub fn cols(&self) -> usize {
        self.qr.cols
    }

    pub fn r_diag(&self) -> &[f64] {
        &self.r_diag
    }

    fn reflector(&self, k: usize) -> &[f64] {
        let m = self.qr.rows;
        &self.qr.data[k * m + k..k * m + m]
    }

    /// Overwrites `y` with `Qᵀ y`.
    pub fn apply_qt(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.qr.rows);
        for k in 0..self.cols() {
            if self.tau[k] == 0.0 {
                continue;
            }
            let v = self.reflector(k);
            let tail = &mut y[k..];
            let s = self.tau[k] * dot(v, tail);
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= s * vi;
            }
        }
    }

    /// The upper-triangular factor as an `n x n` matrix.
    pub fn r(&self) -> Matrix {
        let n = self.cols();
        let mut r = Matrix::zeros(n, n);
        for j in 0..n {
            r.set(j, j, self.r_diag[j]);
            for i in 0..j {
                r.set(i, j, self.qr.get(i, j));
            }
        }
        r
    }

    /// Thin orthonormal factor (`rows x cols`).
    pub fn thin_q(&self) -> Matrix {
        let (m, n) = (self.rows(), self.cols());
        let mut q = Matrix::zeros(m, n);
        for j in 0..n {
            q.set(j, j, 1.0);
        }
        for k in (0..n).rev() {
            if self.tau[k] == 0.0 {
                continue;
            }
            let v = self.reflector(k).to_vec();
            for j in 0..n {
                let tail = &mut q.column_mut(j)[k..];
                let s = self.tau[k] * dot(&v, tail);
                for (t, vi) in tail.iter_mut().zip(&v) {
                    *t -= s * vi;
                }
            }
        }
        q
    }

    /// 2-norm condition number of the factored matrix, from the singular
    /// values of `R`. Infinite when a column is exactly dependent.
    pub fn condition(&self) -> f64 {
        if self.r_diag.contains(&0.0) {
            return f64::INFINITY;
        }
        let sv = singular_values(&self.r());
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    /// Least-squares solution of `A x ≈ y`. Also returns the squared
    /// residual norm `‖y - A x‖²`.
    pub fn solve(&self, y: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = self.cols();
        if self.r_diag.contains(&0.0) {
            return Err(Error::RankDeficient {
                condition: f64::INFINITY,
            });
        }
        let mut z = y.to_vec();
        self.apply_qt(&mut z);
        let residual = z[n..].iter().map(|v| v * v).sum();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = z[i];
            for (j, xj) in x.iter().enumerate().skip(i + 1) {
                s -= self.qr.get(i, j) * xj;
            }
            x[i] = s / self.r_diag[i];
        }
        Ok((x, residual))
    }
}

/// Singular values of a small matrix by one-sided Jacobi rotations.
pub fn singular_values(a: &Matrix) -> Vec<f64> {
    let mut u = a.clone();
    let n = u.cols;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(u.column(p), u.column(p));
                let beta = dot(u.column(q), u.column(q));
                let gamma = dot(u.column(p), u.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..u.rows {
                    let up = u.get(i, p);
                    let uq = u.get(i, q);
                    u.set(i, p, c * up - s * uq);
                    u.set(i, q, s * up + c * uq);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    (0..n).map(|c| norm(u.column(c))).collect()
}
