//! Small dense kernels for the reduced (K+1)-dimensional problem:
//! symmetric eigendecomposition, Cholesky, and the triangular solve that
//! rotates the Krylov basis. Dimensions here are tens, so everything is
//! plain O(d³) in f64.

use crate::error::{KsdError, Result};

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `max_ij |self − other|`
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Symmetric matrix. Construction takes the lower triangle as authoritative
/// and mirrors it, so `get(i, j) == get(j, i)` always holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        SymMatrix(Matrix::zeros(dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(Matrix::identity(dim))
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Matrix::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        SymMatrix(m)
    }

    /// Builds from full rows, reading only `rows[i][j]` with `j <= i`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(KsdError::InvalidInput("empty matrix".into()));
        }
        let mut m = Matrix::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(KsdError::InvalidInput(format!(
                    "row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
            for j in 0..=i {
                m.set(i, j, row[j]);
                m.set(j, i, row[j]);
            }
        }
        Ok(SymMatrix(m))
    }

    /// Builds from an arbitrary square matrix by mirroring its lower triangle.
    pub fn from_lower(m: &Matrix) -> Self {
        let n = m.dim();
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                out.set(i, j, m.get(i, j));
                out.set(j, i, m.get(i, j));
            }
        }
        SymMatrix(out)
    }

    /// Sets entry `(i, j)` and its mirror.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0.set(i, j, v);
        self.0.set(j, i, v);
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.0.data.iter().all(|x| x.is_finite())
    }

    /// Restriction to the leading `dim × dim` block.
    pub fn leading(&self, dim: usize) -> SymMatrix {
        let mut out = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                out.set(i, j, self.get(i, j));
            }
        }
        out
    }

    /// `Q diag(λ) Qᵀ`
    pub fn from_eigen(values: &[f64], vectors: &Matrix) -> SymMatrix {
        let n = values.len();
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..n).map(|k| vectors.get(i, k) * values[k] * vectors.get(j, k)).sum();
                out.set(i, j, s);
            }
        }
        SymMatrix::from_lower(&out)
    }
}

/// Lower-triangular factor; entries above the diagonal are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular(Matrix);

impl LowerTriangular {
    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    /// Wraps `m`, checking that nothing sits above the diagonal.
    pub fn from_matrix(m: Matrix) -> Result<Self> {
        for i in 0..m.dim() {
            for j in i + 1..m.dim() {
                if m.get(i, j) != 0.0 {
                    return Err(KsdError::InvalidInput(format!("nonzero entry above diagonal at ({i},{j})")));
                }
            }
        }
        Ok(LowerTriangular(m))
    }

    /// `C Cᵀ`
    pub fn gram(&self) -> Matrix {
        self.0.matmul(&self.0.transpose())
    }
}

/// Eigenvalues in ascending order with the matching orthonormal eigenvectors
/// as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

const MAX_SWEEPS: usize = 100;

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(m: &SymMatrix) -> Result<SymEigen> {
    if !m.is_finite() {
        return Err(KsdError::InvalidInput("matrix has non-finite entries".into()));
    }
    let n = m.dim();
    let mut a = m.as_matrix().clone();
    let mut q = Matrix::identity(n);

    for sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| a.get(i, j).powi(2))
            .sum();
        if off == 0.0 {
            break;
        }
        for p in 0..n {
            for r in p + 1..n {
                let apq = a.get(p, r);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(r, r);
                // Once the off-diagonal entry no longer changes either
                // diagonal entry in floating point, drop it.
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a.set(p, r, 0.0);
                    a.set(r, p, 0.0);
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, r);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, r, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(r, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(r, k, s * apk + c * aqk);
                }
                a.set(p, r, 0.0);
                a.set(r, p, 0.0);
                for k in 0..n {
                    let qkp = q.get(k, p);
                    let qkq = q.get(k, r);
                    q.set(k, p, c * qkp - s * qkq);
                    q.set(k, r, s * qkp + c * qkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, dst, q.get(k, src));
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Cholesky factor `C` with `C Cᵀ = m`.
pub fn cholesky(m: &SymMatrix) -> Result<LowerTriangular> {
    if !m.is_finite() {
        return Err(KsdError::InvalidInput("matrix has non-finite entries".into()));
    }
    let n = m.dim();
    let mut c = Matrix::zeros(n);
    for j in 0..n {
        let mut d = m.get(j, j);
        for k in 0..j {
            d -= c.get(j, k).powi(2);
        }
        if !(d > 0.0) {
            return Err(KsdError::NotPositiveDefinite { pivot: j, value: d });
        }
        let cjj = d.sqrt();
        c.set(j, j, cjj);
        for i in j + 1..n {
            let mut s = m.get(i, j);
            for k in 0..j {
                s -= c.get(i, k) * c.get(j, k);
            }
            c.set(i, j, s / cjj);
        }
    }
    Ok(LowerTriangular(c))
}

/// Computes `V C⁻ᵀ` for `V` given as a list of `d` columns, without forming
/// the inverse: column `j` of the result is
/// `(V_j − Σ_{k<j} C_jk · R_k) / C_jj`.
pub fn right_solve_transposed(columns: &[Vec<f64>], c: &LowerTriangular) -> Result<Vec<Vec<f64>>> {
    let d = c.dim();
    if columns.len() != d {
        return Err(KsdError::InvalidInput(format!(
            "{} columns but factor is {d}x{d}",
            columns.len()
        )));
    }
    let n = columns.first().map_or(0, Vec::len);
    if columns.iter().any(|col| col.len() != n) {
        return Err(KsdError::InvalidInput("columns differ in length".into()));
    }
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut col = columns[j].clone();
        for (k, prev) in out.iter().enumerate() {
            let cjk = c.get(j, k);
            if cjk != 0.0 {
                crate::vecops::axpy(-cjk, prev, &mut col);
            }
        }
        crate::vecops::scale(1.0 / c.get(j, j), &mut col);
        out.push(col);
    }
    Ok(out)
}
