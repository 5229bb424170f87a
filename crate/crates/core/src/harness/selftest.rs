//! Oracle checks: each fast path against an independent reference on small
//! random problems. Used by the `selftest` command and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curvature::{batch_curvature_product, multiply_g, multiply_h, CurvatureKind};
use crate::data::{Dataset, Targets};
use crate::error::Result;
use crate::linalg::{cholesky, SymMatrix};
use crate::network::{gradient, objective_value, Activation, LossKind, NetworkSpec, Sample, Target};
use crate::objective::{NetworkObjective, QuadraticObjective};
use crate::oracle::{assemble, explicit_gauss_newton, finite_difference_gradient, finite_difference_hvp, mat_vec, max_rel_error, reference_pcg};
use crate::subspace::{build_basis, floor_eigenvalues, Preconditioner};
use crate::vecops::{axpy, dot, norm};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub threshold: f64,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {}: worst {:.3e} (threshold {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.threshold
        )
    }
}

fn check_le(name: &'static str, worst: f64, threshold: f64) -> Check {
    Check { name, passed: worst <= threshold, worst, threshold }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * (2.0 * rng.gen::<f64>() - 1.0)).collect()
}

/// A small random problem: network, parameters, inputs and targets.
struct Problem {
    spec: NetworkSpec,
    params: Vec<f64>,
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl Problem {
    fn random(rng: &mut ChaCha8Rng, dims: Vec<usize>, loss: LossKind, samples: usize) -> Problem {
        let layers = dims.len() - 1;
        let mut acts: Vec<Activation> =
            (0..layers).map(|_| if rng.gen::<f64>() < 0.75 { Activation::Logistic } else { Activation::Linear }).collect();
        acts[layers - 1] = match loss {
            LossKind::SoftmaxCrossEntropy => Activation::Linear,
            LossKind::SquaredError => Activation::Logistic,
        };
        let spec = NetworkSpec::new(dims.clone(), acts, loss).expect("valid random spec");
        let params = uniform(rng, spec.num_params(), 1.0);
        let inputs = (0..samples).map(|_| (0..dims[0]).map(|_| rng.gen::<f64>()).collect()).collect();
        let od = spec.output_dim();
        let targets = (0..samples).map(|_| (0..od).map(|_| rng.gen::<f64>()).collect()).collect();
        let labels = (0..samples).map(|_| rng.gen_range(0..od)).collect();
        Problem { spec, params, inputs, targets, labels }
    }

    fn samples(&self) -> Vec<Sample<'_>> {
        (0..self.inputs.len())
            .map(|i| Sample {
                input: &self.inputs[i],
                target: match self.spec.loss() {
                    LossKind::SoftmaxCrossEntropy => Target::Class(self.labels[i]),
                    LossKind::SquaredError => Target::Values(&self.targets[i]),
                },
            })
            .collect()
    }

    fn dataset(&self) -> Dataset {
        let inputs = self.inputs.concat();
        let targets = match self.spec.loss() {
            LossKind::SoftmaxCrossEntropy => {
                Targets::Classes { labels: self.labels.clone(), num_classes: self.spec.output_dim() }
            }
            LossKind::SquaredError => Targets::Reconstruction,
        };
        Dataset::new(inputs, self.spec.input_dim(), targets).expect("consistent shapes")
    }
}

fn small_dims(rng: &mut ChaCha8Rng) -> Vec<usize> {
    const SHAPES: &[&[usize]] = &[&[4, 3, 2], &[3, 4, 3, 2], &[5, 4, 3], &[2, 3, 3, 3], &[6, 4, 2]];
    SHAPES[rng.gen_range(0..SHAPES.len())].to_vec()
}

fn either_loss(i: usize) -> LossKind {
    if i % 2 == 0 {
        LossKind::SoftmaxCrossEntropy
    } else {
        LossKind::SquaredError
    }
}

/// Backprop gradient against central differences on random 4-3-2 nets.
pub fn gradient_check(trials: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let p = Problem::random(&mut rng, vec![4, 3, 2], either_loss(t), 5);
        let samples = p.samples();
        let l2 = if t % 3 == 0 { 0.01 } else { 0.0 };
        let g = gradient(&p.spec, &p.params, &samples, l2)?;
        let fd = finite_difference_gradient(|x| objective_value(&p.spec, x, &samples, l2), &p.params, 1e-5)?;
        worst = worst.max(max_rel_error(&g, &fd));
    }
    Ok(check_le("gradient vs finite differences", worst, 1e-6))
}

/// Gauss-Newton products against explicit `Jᵀ H_E J`.
pub fn gauss_newton_check(trials: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let dims = small_dims(&mut rng);
        let p = Problem::random(&mut rng, dims, either_loss(t), 1);
        let sample = p.samples()[0];
        let v = uniform(&mut rng, p.params.len(), 1.0);
        let explicit = explicit_gauss_newton(&p.spec, &p.params, &sample, 1e-5)?;
        let fast = multiply_g(&p.spec, &p.params, &v, &sample)?;
        worst = worst.max(max_rel_error(&fast, &mat_vec(&explicit, &v)));
    }
    Ok(check_le("Gauss-Newton product vs explicit J'HJ", worst, 1e-5))
}

/// Hessian products against gradient differences.
pub fn hessian_check(trials: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let dims = small_dims(&mut rng);
        let p = Problem::random(&mut rng, dims, either_loss(t), 1);
        let samples = p.samples();
        let v = uniform(&mut rng, p.params.len(), 1.0);
        let fast = multiply_h(&p.spec, &p.params, &v, &samples[0])?;
        let fd = finite_difference_hvp(|x| gradient(&p.spec, x, &samples, 0.0), &p.params, &v, 1e-5)?;
        worst = worst.max(max_rel_error(&fast, &fd));
    }
    Ok(check_le("Hessian product vs finite differences", worst, 1e-4))
}

/// `uᵀHv == vᵀHu`, relative to `max(1, |uᵀHv|)`.
pub fn hessian_symmetry_check(trials: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let dims = small_dims(&mut rng);
        let p = Problem::random(&mut rng, dims, either_loss(t), 4);
        let samples = p.samples();
        let u = uniform(&mut rng, p.params.len(), 1.0);
        let v = uniform(&mut rng, p.params.len(), 1.0);
        let hv = batch_curvature_product(&p.spec, &p.params, &v, &samples, CurvatureKind::Hessian, 0.0)?;
        let hu = batch_curvature_product(&p.spec, &p.params, &u, &samples, CurvatureKind::Hessian, 0.0)?;
        let (a, b) = (dot(&u, &hv), dot(&v, &hu));
        worst = worst.max((a - b).abs() / a.abs().max(1.0));
    }
    Ok(check_le("Hessian symmetry u'Hv vs v'Hu", worst, 1e-10))
}

/// `vᵀGv ≥ −1e-12 ‖v‖²`; reports the worst `−vᵀGv / ‖v‖²`.
pub fn gauss_newton_psd_check(vectors: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let problems: Vec<Problem> =
        (0..2).map(|i| Problem::random(&mut rng, vec![6, 5, 4], either_loss(i), 8)).collect();
    for t in 0..vectors {
        let p = &problems[t % 2];
        let v = uniform(&mut rng, p.params.len(), 1.0);
        let gv = batch_curvature_product(&p.spec, &p.params, &v, &p.samples(), CurvatureKind::GaussNewton, 0.0)?;
        worst = worst.max(-dot(&v, &gv) / dot(&v, &v));
    }
    Ok(check_le("Gauss-Newton positive semidefinite, max -v'Gv/v'v", worst, 1e-12))
}

/// Reduced curvature against explicit `VᵀBV`, plus orthonormality of `V`.
/// Returns `(fidelity, orthonormality)`.
pub fn reduced_curvature_check(seed: u64) -> Result<(Check, Check)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_fid = 0.0f64;
    let mut worst_orth = 0.0f64;
    for (i, kind) in [CurvatureKind::GaussNewton, CurvatureKind::Hessian].into_iter().enumerate() {
        for loss in [LossKind::SoftmaxCrossEntropy, LossKind::SquaredError] {
            let dims = if loss == LossKind::SquaredError { vec![4, 3, 4] } else { vec![5, 4, 3] };
            let p = Problem::random(&mut rng, dims, loss, 12);
            let data = p.dataset();
            let obj = NetworkObjective::new(p.spec.clone(), &data, 1e-3)?;
            let all: Vec<usize> = (0..data.len()).collect();
            let samples = data.all_samples();
            let (_, g, fisher) = crate::objective::Objective::value_gradient_fisher(&obj, &p.params, &all)?;
            let precond = Preconditioner::floored(&fisher, 1e-4)?;
            let prev = uniform(&mut rng, p.params.len(), 1.0);
            let basis = build_basis(&obj, &p.params, &g, &precond, &all, 5 + i, kind, &prev)?;
            let b = assemble(|v| batch_curvature_product(&p.spec, &p.params, v, &samples, kind, 1e-3), p.params.len())?;
            let m = basis.dim();
            let scale = basis.reduced.max_abs();
            for a in 0..m {
                let bv = mat_vec(&b, &basis.columns[a]);
                for c in 0..m {
                    worst_fid = worst_fid.max((basis.reduced.get(a, c) - dot(&basis.columns[c], &bv)).abs() / scale);
                    let id = if a == c { 1.0 } else { 0.0 };
                    worst_orth = worst_orth.max((dot(&basis.columns[a], &basis.columns[c]) - id).abs());
                }
            }
        }
    }
    Ok((check_le("reduced curvature vs explicit V'BV", worst_fid, 1e-8), check_le("basis orthonormality", worst_orth, 1e-8)))
}

/// The K-step preconditioned CG solution of `(B + λD) x = −g` lies in the span
/// of the first `K` basis columns, on a 30-parameter PSD quadratic.
pub fn cg_containment_check(seed: u64) -> Result<Check> {
    let n = 30;
    let k = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // B = Q diag(λ) Qᵀ with a random orthogonal Q and spectrum in [0.1, 10].
    let raw: Vec<Vec<f64>> = (0..n).map(|_| uniform(&mut rng, n, 1.0)).collect();
    let sym = SymMatrix::from_rows(&raw)?;
    let q = crate::linalg::sym_eig(&sym)?.vectors;
    let spectrum: Vec<f64> = (0..n).map(|i| 0.1 + 9.9 * i as f64 / (n - 1) as f64).collect();
    let bm = SymMatrix::from_eigen(&spectrum, &q);
    let a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| bm.get(i, j)).collect()).collect();
    let d: Vec<f64> = (0..n).map(|_| 0.5 + rng.gen::<f64>()).collect();
    let g = uniform(&mut rng, n, 0.5);
    let quad = QuadraticObjective::new(a.clone(), vec![0.0; n])?;
    let precond = Preconditioner::floored(&d, 1e-4)?;
    let basis = build_basis(&quad, &vec![0.0; n], &g, &precond, &[0], k, CurvatureKind::GaussNewton, &uniform(&mut rng, n, 1.0))?;
    let krylov = &basis.columns[..k.min(basis.dim())];
    let mut worst = 0.0f64;
    for lambda in [0.0, 0.01, 0.1, 1.0, 10.0] {
        let damped: Vec<Vec<f64>> =
            (0..n).map(|i| (0..n).map(|j| a[i][j] + if i == j { lambda * d[i] } else { 0.0 }).collect()).collect();
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let x = reference_pcg(&damped, &d, &rhs, k);
        let mut resid = x.clone();
        for v in krylov {
            let c = dot(&x, v);
            axpy(-c, v, &mut resid);
        }
        worst = worst.max(norm(&resid) / norm(&x));
    }
    Ok(check_le("damped CG solutions inside the Krylov span", worst, 1e-8))
}

/// Flooring yields a matrix Cholesky accepts, for random symmetric inputs
/// (many indefinite). Reports the number of failures.
pub fn flooring_check(matrices: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0usize;
    for t in 0..matrices {
        let n = rng.gen_range(1..=21);
        let scale = 10f64.powi(rng.gen_range(-6..=6));
        let mut rows: Vec<Vec<f64>> = (0..n).map(|_| uniform(&mut rng, n, scale)).collect();
        match t % 4 {
            // Negative definite.
            1 => {
                let pd: Vec<Vec<f64>> =
                    (0..n).map(|i| (0..n).map(|j| -(0..n).map(|k| rows[i][k] * rows[j][k]).sum::<f64>()).collect()).collect();
                rows = pd;
            }
            // Rank one, either sign.
            2 => {
                let u = uniform(&mut rng, n, scale);
                let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                rows = (0..n).map(|i| (0..n).map(|j| s * u[i] * u[j]).collect()).collect();
            }
            _ => {}
        }
        let sym = SymMatrix::from_rows(&rows)?;
        let ok = match floor_eigenvalues(&sym, 1e-4) {
            Ok(f) => cholesky(&f).is_ok(),
            Err(_) => false,
        };
        if !ok {
            failures += 1;
        }
    }
    Ok(check_le("floored matrices are positive definite (failures)", failures as f64, 0.0))
}

/// Every check at the sizes the acceptance suite uses.
pub fn run_all(seed: u64) -> Result<Vec<Check>> {
    let (fid, orth) = reduced_curvature_check(seed + 5)?;
    Ok(vec![
        gradient_check(20, seed)?,
        gauss_newton_check(20, seed + 1)?,
        hessian_check(20, seed + 2)?,
        hessian_symmetry_check(20, seed + 3)?,
        gauss_newton_psd_check(100, seed + 4)?,
        fid,
        orth,
        cg_containment_check(seed + 6)?,
        flooring_check(100, seed + 7)?,
    ])
}
