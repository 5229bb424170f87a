//! Hessian-free baseline: damped truncated-Newton steps from preconditioned
//! CG, a backtracking line search, and Levenberg-Marquardt damping updates.

use crate::curvature::CurvatureKind;
use crate::data::{draw_subsets, SubsetPlan};
use crate::error::{KsdError, Result};
use crate::objective::Objective;
use crate::subspace::Preconditioner;
use crate::vecops::{all_finite, axpy, dot, norm};

use super::{is_zero, run_steps, Optimizer, StepReport};

#[derive(Debug, Clone, PartialEq)]
pub struct HfConfig {
    pub initial_lambda: f64,
    pub lambda_increase: f64,
    pub lambda_decrease: f64,
    pub max_cg_iters: usize,
    /// CG stops once `‖r‖ ≤ cg_tol · ‖g‖`.
    pub cg_tol: f64,
    pub max_backtracks: usize,
    pub floor_eps: f64,
    pub curvature: CurvatureKind,
    pub subsets: SubsetPlan,
}

impl Default for HfConfig {
    fn default() -> Self {
        HfConfig {
            initial_lambda: 0.01,
            lambda_increase: 1.5,
            lambda_decrease: 1.5,
            max_cg_iters: 250,
            cg_tol: 1e-4,
            max_backtracks: 30,
            floor_eps: 1e-4,
            curvature: CurvatureKind::GaussNewton,
            subsets: SubsetPlan::for_krylov_dim(20, 0),
        }
    }
}

impl HfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lambda > 0.0) {
            return Err(KsdError::InvalidInput("initial damping must be positive".into()));
        }
        if !(self.lambda_increase > 1.0 && self.lambda_decrease > 1.0) {
            return Err(KsdError::InvalidInput("damping factors must exceed 1".into()));
        }
        if self.max_cg_iters == 0 || !(self.cg_tol > 0.0) {
            return Err(KsdError::InvalidInput("CG needs a positive iteration cap and tolerance".into()));
        }
        if !(self.floor_eps > 0.0 && self.floor_eps < 1.0) {
            return Err(KsdError::InvalidInput(format!("flooring constant {} not in (0, 1)", self.floor_eps)));
        }
        self.subsets.validate()
    }
}

#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    /// `b − A x` for the returned `x`.
    pub residual: Vec<f64>,
    pub iterations: usize,
    /// Stopped on a direction with `pᵀAp ≤ 0`.
    pub truncated: bool,
}

/// Preconditioned CG for `A x = b` from `x0`, with preconditioner `M = diag(m)`.
/// On non-positive curvature the previous iterate is returned.
pub fn preconditioned_cg(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    precond: &Preconditioner,
    x0: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<CgResult> {
    let mut x = x0.to_vec();
    let mut r = b.to_vec();
    if !is_zero(&x) {
        let ax = apply(&x)?;
        axpy(-1.0, &ax, &mut r);
    }
    let stop = tol * norm(b);
    let mut z = precond.apply_inverse(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    let mut truncated = false;
    while iterations < max_iters && norm(&r) > stop {
        let q = apply(&p)?;
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            truncated = true;
            break;
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        z = precond.apply_inverse(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        iterations += 1;
    }
    if !all_finite(&x) {
        return Err(KsdError::NumericalOverflow("CG produced a non-finite solution".into()));
    }
    Ok(CgResult { x, residual: r, iterations, truncated })
}

/// Ratio of the actual change to the change the quadratic model predicted.
/// Zero when the model predicts no decrease.
pub fn reduction_ratio(actual: f64, predicted: f64) -> f64 {
    if !(predicted < 0.0) {
        return 0.0;
    }
    if actual.is_nan() {
        return f64::NEG_INFINITY;
    }
    actual / predicted
}

/// Levenberg-Marquardt damping update.
pub fn lm_update(lambda: f64, rho: f64, config: &HfConfig) -> f64 {
    if rho > 0.75 {
        lambda / config.lambda_decrease
    } else if rho < 0.25 {
        lambda * config.lambda_increase
    } else {
        lambda
    }
}

#[derive(Debug, Clone)]
pub struct Hf {
    config: HfConfig,
    theta: Vec<f64>,
    lambda: f64,
    direction: Vec<f64>,
    iteration: usize,
    truncations: usize,
    last_cg_iters: usize,
}

impl Hf {
    pub fn new(config: HfConfig, theta: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let n = theta.len();
        Ok(Hf {
            lambda: config.initial_lambda,
            config,
            theta,
            direction: vec![0.0; n],
            iteration: 0,
            truncations: 0,
            last_cg_iters: 0,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// The last CG solution (the next warm start).
    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    /// How many CG runs stopped on non-positive curvature.
    pub fn negative_curvature_truncations(&self) -> usize {
        self.truncations
    }

    pub fn last_cg_iterations(&self) -> usize {
        self.last_cg_iters
    }
}

impl Optimizer for Hf {
    fn step(&mut self, objective: &dyn Objective) -> Result<StepReport> {
        let cfg = &self.config;
        let sets = draw_subsets(objective.num_samples(), &cfg.subsets, self.iteration as u64)?;
        let (value_a, grad, fisher) = objective.value_gradient_fisher(&self.theta, &sets.a)?;
        if is_zero(&grad) {
            return Ok(StepReport { iteration: self.iteration, objective: value_a, converged: true });
        }
        let precond = match Preconditioner::floored(&fisher, cfg.floor_eps) {
            Err(KsdError::ZeroGradient) => {
                return Ok(StepReport { iteration: self.iteration, objective: value_a, converged: true })
            }
            other => other?,
        };
        let lambda = self.lambda;
        let theta = &self.theta;
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let cg = preconditioned_cg(
            |v| {
                let mut out = objective.curvature_product(theta, v, &sets.b, cfg.curvature)?;
                axpy(lambda, v, &mut out);
                Ok(out)
            },
            &rhs,
            &precond,
            &self.direction,
            cfg.max_cg_iters,
            cfg.cg_tol,
        )?;
        if cg.truncated {
            self.truncations += 1;
        }
        self.last_cg_iters = cg.iterations;
        let d = cg.x;

        // Undamped model change gᵀd + ½dᵀBd, using A d = −g − r.
        let predicted = 0.5 * dot(&grad, &d) - 0.5 * dot(&d, &cg.residual) - 0.5 * lambda * dot(&d, &d);

        let f0 = objective.value(&self.theta, &sets.c)?;
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut full_step_value = f64::NAN;
        for k in 0..cfg.max_backtracks {
            let mut trial = self.theta.clone();
            axpy(alpha, &d, &mut trial);
            let value = match objective.value(&trial, &sets.c) {
                Ok(v) => v,
                Err(e) if e.is_numerical() => f64::NAN,
                Err(e) => return Err(e),
            };
            if k == 0 {
                full_step_value = value;
            }
            if value < f0 {
                accepted = Some((trial, value));
                break;
            }
            alpha *= 0.5;
        }
        let rho = if is_zero(&d) { 0.0 } else { reduction_ratio(full_step_value - f0, predicted) };
        self.lambda = lm_update(lambda, rho, cfg);
        let objective_after = match accepted {
            Some((trial, value)) => {
                self.theta = trial;
                value
            }
            None => f0,
        };
        self.direction = d;
        self.iteration += 1;
        Ok(StepReport { iteration: self.iteration, objective: objective_after, converged: false })
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }
}

pub fn hf_run(
    objective: &dyn Objective,
    theta: Vec<f64>,
    config: HfConfig,
    max_iters: usize,
) -> Result<(Vec<f64>, Vec<StepReport>)> {
    let mut hf = Hf::new(config, theta)?;
    let history = run_steps(&mut hf, objective, max_iters)?;
    Ok((hf.theta, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::QuadraticObjective;
    use crate::oracle;

    fn quad() -> QuadraticObjective {
        QuadraticObjective::new(
            vec![vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 0.5], vec![0.0, 0.5, 2.0]],
            vec![1.0, -2.0, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn newton_step_exact_on_quadratic() {
        let q = quad();
        let config = HfConfig {
            initial_lambda: 1e-12,
            cg_tol: 1e-14,
            subsets: SubsetPlan::full_batch(),
            ..HfConfig::default()
        };
        let (theta, _) = hf_run(&q, vec![0.5, 0.5, 0.5], config, 1).unwrap();
        assert!(oracle::max_rel_error(&theta, &q.minimizer().unwrap()) < 1e-8);
    }

    #[test]
    fn perfect_model_gives_unit_ratio_and_lower_damping() {
        let q = quad();
        let config = HfConfig { initial_lambda: 1e-12, cg_tol: 1e-14, subsets: SubsetPlan::full_batch(), ..HfConfig::default() };
        let theta = vec![0.5, 0.5, 0.5];
        let (f0, g) = q.value_and_gradient(&theta, &[0]).unwrap();
        let d: Vec<f64> = q.minimizer().unwrap().iter().zip(&theta).map(|(a, b)| a - b).collect();
        let bd = oracle::mat_vec(q.matrix(), &d);
        let predicted = dot(&g, &d) + 0.5 * dot(&d, &bd);
        let mut moved = theta.clone();
        axpy(1.0, &d, &mut moved);
        let rho = reduction_ratio(q.value(&moved, &[0]).unwrap() - f0, predicted);
        assert!((rho - 1.0).abs() < 1e-10);
        assert_eq!(lm_update(3.0, rho, &config), 2.0);
        assert_eq!(lm_update(2.0, 0.1, &config), 3.0);
        assert_eq!(lm_update(2.0, 0.5, &config), 2.0);
        assert_eq!(reduction_ratio(-1.0, 0.0), 0.0);

        let mut hf = Hf::new(HfConfig { initial_lambda: 1e-9, ..config }, theta).unwrap();
        hf.step(&q).unwrap();
        assert!(hf.lambda() < 1e-9);
    }

    #[test]
    fn warm_start_accumulates() {
        let q = QuadraticObjective::new(vec![vec![1.0, 0.0], vec![0.0, 100.0]], vec![-1.0, -1.0]).unwrap();
        let config = HfConfig { max_cg_iters: 1, subsets: SubsetPlan::full_batch(), ..HfConfig::default() };
        let mut hf = Hf::new(config, vec![0.0, 0.0]).unwrap();
        // Undo the move so the gradient stays the same between steps.
        hf.step(&q).unwrap();
        let d1 = hf.direction().to_vec();
        hf.theta = vec![0.0, 0.0];
        hf.step(&q).unwrap();
        assert_ne!(hf.direction(), &d1[..]);
    }

    #[test]
    fn indefinite_curvature_truncates() {
        let q = QuadraticObjective::new(vec![vec![1.0, 0.0], vec![0.0, -5.0]], vec![1.0, 1.0]).unwrap();
        let config = HfConfig { initial_lambda: 0.1, subsets: SubsetPlan::full_batch(), ..HfConfig::default() };
        let mut hf = Hf::new(config, vec![0.0, 0.0]).unwrap();
        hf.step(&q).unwrap();
        assert_eq!(hf.negative_curvature_truncations(), 1);
    }

    #[test]
    fn cg_matches_reference() {
        let a = vec![vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 0.5], vec![0.0, 0.5, 2.0]];
        let m = [2.0, 1.0, 0.5];
        let b = [1.0, 2.0, 3.0];
        let r = preconditioned_cg(
            |v| Ok(oracle::mat_vec(&a, v)),
            &b,
            &Preconditioner::floored(&m, 1e-4).unwrap(),
            &[0.0; 3],
            2,
            1e-30,
        )
        .unwrap();
        let reference = oracle::reference_pcg(&a, &m, &b, 2);
        assert!(oracle::max_rel_error(&r.x, &reference) < 1e-12);
    }
}
