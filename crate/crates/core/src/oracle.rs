//! Reference computations used to check the fast paths: central finite
//! differences, explicitly assembled Jacobians and curvature matrices, and a
//! textbook preconditioned CG. None of these share code with the products
//! they check beyond the plain forward pass and gradient being differentiated.

use crate::error::Result;
use crate::network::{forward, LossKind, NetworkSpec, Sample};

pub type DenseMatrix = Vec<Vec<f64>>;

/// Central differences `(f(x + h e_j) − f(x − h e_j)) / 2h`.
pub fn finite_difference_gradient(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut xp = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        xp[j] = x[j] + h;
        let fp = f(&xp)?;
        xp[j] = x[j] - h;
        let fm = f(&xp)?;
        xp[j] = x[j];
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

/// `(∇f(x + εv) − ∇f(x − εv)) / 2ε`
pub fn finite_difference_hvp(
    grad: impl Fn(&[f64]) -> Result<Vec<f64>>,
    x: &[f64],
    v: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    let xp: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + eps * b).collect();
    let xm: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - eps * b).collect();
    let gp = grad(&xp)?;
    let gm = grad(&xm)?;
    Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect())
}

/// Hessian assembled column by column from gradient differences, then
/// symmetrized.
pub fn finite_difference_hessian(grad: impl Fn(&[f64]) -> Result<Vec<f64>>, x: &[f64], eps: f64) -> Result<DenseMatrix> {
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(finite_difference_hvp(&grad, x, &e, eps)?);
    }
    Ok((0..n).map(|i| (0..n).map(|j| 0.5 * (cols[j][i] + cols[i][j])).collect()).collect())
}

/// Jacobian of the network output w.r.t. the parameters (`outputs × params`)
/// by central differences of the forward pass.
pub fn finite_difference_jacobian(spec: &NetworkSpec, params: &[f64], input: &[f64], h: f64) -> Result<DenseMatrix> {
    let od = spec.output_dim();
    let mut jac = vec![vec![0.0; params.len()]; od];
    let mut p = params.to_vec();
    for j in 0..params.len() {
        p[j] = params[j] + h;
        let plus = forward(spec, &p, input)?.output().to_vec();
        p[j] = params[j] - h;
        let minus = forward(spec, &p, input)?.output().to_vec();
        p[j] = params[j];
        for k in 0..od {
            jac[k][j] = (plus[k] - minus[k]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Second derivative of the loss w.r.t. the output, as an explicit matrix.
pub fn explicit_loss_hessian(kind: LossKind, output: &[f64]) -> DenseMatrix {
    let n = output.len();
    match kind {
        LossKind::SquaredError => (0..n).map(|i| (0..n).map(|j| if i == j { 2.0 } else { 0.0 }).collect()).collect(),
        LossKind::SoftmaxCrossEntropy => {
            let m = output.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = output.iter().map(|v| (v - m).exp()).sum();
            let p: Vec<f64> = output.iter().map(|v| (v - m).exp() / z).collect();
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { p[i] - p[i] * p[j] } else { -p[i] * p[j] }).collect())
                .collect()
        }
    }
}

/// `Jᵀ H_E J` for one sample with `J` from finite differences.
pub fn explicit_gauss_newton(spec: &NetworkSpec, params: &[f64], sample: &Sample<'_>, h: f64) -> Result<DenseMatrix> {
    let jac = finite_difference_jacobian(spec, params, sample.input, h)?;
    let out = forward(spec, params, sample.input)?;
    let he = explicit_loss_hessian(spec.loss(), out.output());
    let od = jac.len();
    let p = params.len();
    // H_E J
    let hj: DenseMatrix = (0..od).map(|a| (0..p).map(|j| (0..od).map(|b| he[a][b] * jac[b][j]).sum()).collect()).collect();
    Ok((0..p).map(|i| (0..p).map(|j| (0..od).map(|a| jac[a][i] * hj[a][j]).sum()).collect()).collect())
}

/// Matrix whose column `j` is `apply(e_j)`.
pub fn assemble(apply: impl Fn(&[f64]) -> Result<Vec<f64>>, n: usize) -> Result<DenseMatrix> {
    let mut m = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = apply(&e)?;
        for i in 0..n {
            m[i][j] = col[i];
        }
    }
    Ok(m)
}

pub fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// `‖a − b‖∞ / ‖b‖∞` (absolute when `b` is zero).
pub fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// `iters` steps of preconditioned CG on `A x = b` from `x = 0`, with the
/// diagonal preconditioner `M = diag(m)`.
pub fn reference_pcg(a: &[Vec<f64>], m: &[f64], b: &[f64], iters: usize) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(m).map(|(ri, mi)| ri / mi).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for _ in 0..iters {
        let ap = mat_vec(a, &p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 || rz == 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = r.iter().zip(m).map(|(ri, mi)| ri / mi).collect();
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_gradient_of_quadratic() {
        let g = finite_difference_gradient(|x| Ok(x[0] * x[0] + 3.0 * x[1]), &[2.0, 1.0], 1e-5).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-9 && (g[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn pcg_solves_small_system_exactly() {
        let a = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let x = reference_pcg(&a, &[1.0, 1.0], &[1.0, 2.0], 2);
        let r = mat_vec(&a, &x);
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
    }
}
