//! Dense BFGS for the low-dimensional subspace problem.

use crate::error::{KsdError, Result};
use crate::objective::Objective;
use crate::vecops::{add, all_finite, combine, dot, norm};

use super::line_search::{strong_wolfe, WolfeParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iters: usize,
    pub wolfe: WolfeParams,
    /// Stop once `‖∇f‖ < grad_tol · (1 + |f|)`.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iters: 30, wolfe: WolfeParams::default(), grad_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub point: Vec<f64>,
    pub value: f64,
    /// Accepted steps.
    pub iterations: usize,
    /// Objective at the start and after every accepted step.
    pub values: Vec<f64>,
}

/// Minimizes `f` from `a0`. Non-finite values and numerical errors during the
/// line search count as `+∞`; other errors propagate. A failed line search
/// ends the run with the best point so far.
pub fn bfgs_minimize(
    mut f: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    a0: &[f64],
    options: &BfgsOptions,
) -> Result<BfgsResult> {
    let n = a0.len();
    let (mut value, mut grad) = match f(a0) {
        Ok((v, g)) if v.is_finite() && all_finite(&g) && g.len() == n => (v, g),
        Ok(_) => return Err(KsdError::InvalidStart),
        Err(e) if e.is_numerical() => return Err(KsdError::InvalidStart),
        Err(e) => return Err(e),
    };
    let mut point = a0.to_vec();
    let mut values = vec![value];
    let mut inv = identity(n);
    let mut fresh = true;
    let mut iterations = 0;

    while iterations < options.max_iters {
        if norm(&grad) < options.grad_tol * (1.0 + value.abs()) {
            break;
        }
        let mut dir: Vec<f64> = mat_vec(&inv, &grad).iter().map(|x| -x).collect();
        let mut slope = dot(&dir, &grad);
        if !(slope < 0.0) {
            inv = identity(n);
            fresh = true;
            dir = grad.iter().map(|x| -x).collect();
            slope = -dot(&grad, &grad);
        }
        let outcome = strong_wolfe(
            |alpha| {
                let trial: Vec<f64> = point.iter().zip(&dir).map(|(p, d)| p + alpha * d).collect();
                match f(&trial) {
                    Ok((v, g)) if v.is_finite() && all_finite(&g) => {
                        let s = dot(&g, &dir);
                        Ok(Some((v, s, (trial, g))))
                    }
                    Ok(_) => Ok(None),
                    Err(e) if e.is_numerical() => Ok(None),
                    Err(e) => Err(e),
                }
            },
            value,
            slope,
            1.0,
            &options.wolfe,
        )?;
        let Some(trial) = outcome.accepted() else {
            if fresh {
                break;
            }
            inv = identity(n);
            fresh = true;
            continue;
        };
        let (next, next_grad) = trial.payload;
        let s: Vec<f64> = next.iter().zip(&point).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        point = next;
        grad = next_grad;
        value = trial.value;
        values.push(value);
        iterations += 1;
        let sy = dot(&s, &y);
        if sy > 0.0 {
            update_inverse(&mut inv, &s, &y, sy);
            fresh = false;
        }
    }
    Ok(BfgsResult { point, value, iterations, values })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`, expanded as
/// `H − ρ(s·hyᵀ + hy·sᵀ) + (ρ²·yᵀHy + ρ) ssᵀ` with `hy = Hy`.
fn update_inverse(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    let coeff = rho * rho * yhy + rho;
    for (i, row) in h.iter_mut().enumerate() {
        for (j, entry) in row.iter_mut().enumerate() {
            *entry += -rho * (s[i] * hy[j] + hy[i] * s[j]) + coeff * s[i] * s[j];
        }
    }
}

/// Objective at `θ + V̄a` on `batch`, with gradient `V̄ᵀ∇f`.
pub fn subspace_objective(
    objective: &dyn Objective,
    theta: &[f64],
    columns: &[Vec<f64>],
    a: &[f64],
    batch: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if a.len() != columns.len() {
        return Err(KsdError::InvalidInput("subspace coordinates do not match the basis".into()));
    }
    let point = subspace_point(theta, columns, a);
    let (value, grad) = objective.value_and_gradient(&point, batch)?;
    Ok((value, columns.iter().map(|v| dot(v, &grad)).collect()))
}

/// `θ + V̄a`, evaluated exactly as the optimizer applies its step.
pub fn subspace_point(theta: &[f64], columns: &[Vec<f64>], a: &[f64]) -> Vec<f64> {
    add(theta, &combine(columns, a, theta.len()))
}
