//! Orthonormal basis for the preconditioned Krylov subspace
//! `{(D⁻¹B)^k D⁻¹g : 0 ≤ k < K}` augmented with the previous step, together
//! with the reduced curvature matrix `H̄ = VᵀBV`; then eigenvalue flooring and
//! the Cholesky rotation `V̄ = V C⁻ᵀ` that whitens the reduced curvature.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curvature::CurvatureKind;
use crate::error::{KsdError, Result};
use crate::linalg::{cholesky, right_solve_transposed, sym_eig, LowerTriangular, SymMatrix};
use crate::objective::Objective;
use crate::vecops::{all_finite, axpy, dot, norm, scale};

/// Relative norm below which an orthogonalized candidate counts as degenerate.
const DEGENERATE_TOL: f64 = 1e-12;

/// Diagonal preconditioner `D`, floored to `ε · max(D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    diag: Vec<f64>,
}

impl Preconditioner {
    pub fn identity(dim: usize) -> Self {
        Preconditioner { diag: vec![1.0; dim] }
    }

    /// Floors every entry to `floor · max_i d_i`. Fails when nothing is
    /// positive, which happens only when every per-sample gradient vanishes.
    pub fn floored(diag: &[f64], floor: f64) -> Result<Self> {
        if !all_finite(diag) {
            return Err(KsdError::NumericalOverflow("non-finite preconditioner".into()));
        }
        let max = diag.iter().cloned().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(KsdError::ZeroGradient);
        }
        let min = floor * max;
        Ok(Preconditioner { diag: diag.iter().map(|&d| d.max(min)).collect() })
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.diag).map(|(x, d)| x / d).collect()
    }
}

/// Orthonormal columns `V` and the reduced curvature `H̄ = VᵀBV`.
#[derive(Debug, Clone)]
pub struct KrylovBasis {
    pub columns: Vec<Vec<f64>>,
    pub reduced: SymMatrix,
    /// Columns that collapsed during orthogonalization and were replaced by
    /// pseudo-random directions.
    pub replaced_columns: Vec<usize>,
    /// Curvature products spent (equals the number of columns).
    pub products: usize,
}

impl KrylovBasis {
    pub fn dim(&self) -> usize {
        self.columns.len()
    }
}

/// Whitened basis `V̄ = V C⁻ᵀ` with `Ĥ = C Cᵀ`.
#[derive(Debug, Clone)]
pub struct RotatedBasis {
    pub factor: LowerTriangular,
    pub columns: Vec<Vec<f64>>,
}

/// Orthogonalizes `u` against `basis` (modified Gram-Schmidt, two passes) and
/// normalizes it. `None` if the remainder is negligible.
fn orthonormalize(mut u: Vec<f64>, basis: &[Vec<f64>]) -> Result<Option<Vec<f64>>> {
    if !all_finite(&u) {
        return Err(KsdError::NumericalOverflow("non-finite Krylov vector".into()));
    }
    let before = norm(&u);
    if before == 0.0 {
        return Ok(None);
    }
    for _ in 0..2 {
        for v in basis {
            let c = dot(&u, v);
            axpy(-c, v, &mut u);
        }
    }
    let after = norm(&u);
    if !(after > DEGENERATE_TOL * before) {
        return Ok(None);
    }
    scale(1.0 / after, &mut u);
    Ok(Some(u))
}

fn pseudo_random_direction(dim: usize, column: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4b5344 ^ column as u64);
    (0..dim).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect()
}

/// Builds `K + 1` orthonormal columns: `K` from the preconditioned Krylov
/// sequence started at `D⁻¹g`, and one from `prev_direction`. Each column
/// costs one curvature product on `batch`, whose result also fills that
/// column's row of `H̄`.
///
/// A candidate that vanishes under orthogonalization is replaced by a
/// deterministic pseudo-random direction; if that also vanishes (the whole
/// space is already spanned) the basis stops short.
#[allow(clippy::too_many_arguments)]
pub fn build_basis(
    objective: &dyn Objective,
    theta: &[f64],
    grad: &[f64],
    precond: &Preconditioner,
    batch: &[usize],
    krylov_dim: usize,
    kind: CurvatureKind,
    prev_direction: &[f64],
) -> Result<KrylovBasis> {
    if krylov_dim == 0 {
        return Err(KsdError::InvalidInput("Krylov dimension must be at least 1".into()));
    }
    let n = grad.len();
    if theta.len() != n || prev_direction.len() != n || precond.diag().len() != n {
        return Err(KsdError::InvalidInput("basis inputs have inconsistent dimensions".into()));
    }
    if grad.iter().all(|&g| g == 0.0) {
        return Err(KsdError::ZeroGradient);
    }
    let target = krylov_dim + 1;
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(target);
    let mut replaced = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(target);

    let first = orthonormalize(precond.apply_inverse(grad), &[])?.ok_or(KsdError::ZeroGradient)?;
    columns.push(first);

    loop {
        let k = columns.len() - 1;
        let w = objective.curvature_product(theta, &columns[k], batch, kind)?;
        if !all_finite(&w) {
            return Err(KsdError::NumericalOverflow("non-finite curvature product".into()));
        }
        rows.push(columns.iter().map(|v| dot(&w, v)).collect());
        if columns.len() == target {
            break;
        }
        let candidate = if k + 1 < krylov_dim { precond.apply_inverse(&w) } else { prev_direction.to_vec() };
        let next = match orthonormalize(candidate, &columns)? {
            Some(v) => Some(v),
            None => {
                let fallback = orthonormalize(pseudo_random_direction(n, k + 1), &columns)?;
                if fallback.is_some() {
                    replaced.push(k + 1);
                }
                fallback
            }
        };
        match next {
            Some(v) => columns.push(v),
            None => break,
        }
    }

    let m = columns.len();
    let mut reduced = SymMatrix::zeros(m);
    for (i, row) in rows.iter().enumerate() {
        for (j, &h) in row.iter().enumerate() {
            reduced.set(i, j, h);
        }
    }
    Ok(KrylovBasis { columns, reduced, replaced_columns: replaced, products: rows.len() })
}

/// Raises every eigenvalue to at least `floor · λ_max`. When no eigenvalue is
/// positive, all become `floor · max|λ|`.
pub fn floor_eigenvalues(h: &SymMatrix, floor: f64) -> Result<SymMatrix> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(KsdError::InvalidInput(format!("flooring constant {floor} not in (0, 1)")));
    }
    if h.max_abs() == 0.0 {
        return Err(KsdError::DegenerateCurvature);
    }
    let eig = sym_eig(h)?;
    let lambda_max = eig.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let floored: Vec<f64> = if lambda_max > 0.0 {
        eig.values.iter().map(|&l| l.max(floor * lambda_max)).collect()
    } else {
        let abs_max = eig.values.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        vec![floor * abs_max; eig.values.len()]
    };
    Ok(SymMatrix::from_eigen(&floored, &eig.vectors))
}

/// `C = chol(Ĥ)`, `V̄ = V C⁻ᵀ`.
pub fn rotate_basis(columns: &[Vec<f64>], floored: &SymMatrix) -> Result<RotatedBasis> {
    let factor = cholesky(floored)?;
    let rotated = right_solve_transposed(columns, &factor)?;
    Ok(RotatedBasis { factor, columns: rotated })
}
