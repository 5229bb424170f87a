use crate::curvature::CurvatureKind;
use crate::data::{draw_subsets, SubsetPlan};
use crate::error::{KsdError, Result};
use crate::linalg::SymMatrix;
use crate::objective::Objective;
use crate::subspace::{build_basis, floor_eigenvalues, rotate_basis, Preconditioner};
use crate::vecops::{add, combine};

use super::bfgs::{bfgs_minimize, subspace_objective, BfgsOptions};
use super::line_search::WolfeParams;
use super::{is_zero, run_steps, Optimizer, StepReport};

#[derive(Debug, Clone, PartialEq)]
pub struct KsdConfig {
    pub krylov_dim: usize,
    pub bfgs_iters: usize,
    /// Flooring constant for both the preconditioner and the reduced
    /// curvature spectrum.
    pub floor_eps: f64,
    pub curvature: CurvatureKind,
    pub subsets: SubsetPlan,
}

impl Default for KsdConfig {
    fn default() -> Self {
        KsdConfig {
            krylov_dim: 20,
            bfgs_iters: 30,
            floor_eps: 1e-4,
            curvature: CurvatureKind::GaussNewton,
            subsets: SubsetPlan::for_krylov_dim(20, 0),
        }
    }
}

impl KsdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.krylov_dim == 0 || self.bfgs_iters == 0 {
            return Err(KsdError::InvalidInput("Krylov dimension and BFGS iterations must be positive".into()));
        }
        if !(self.floor_eps > 0.0 && self.floor_eps < 1.0) {
            return Err(KsdError::InvalidInput(format!("flooring constant {} not in (0, 1)", self.floor_eps)));
        }
        self.subsets.validate()
    }
}

/// What the last outer iteration built, kept for inspection.
#[derive(Debug, Clone)]
pub struct KsdIteration {
    pub basis: Vec<Vec<f64>>,
    pub reduced: SymMatrix,
    pub rotated: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub replaced_columns: Vec<usize>,
    pub bfgs_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct Ksd {
    config: KsdConfig,
    theta: Vec<f64>,
    prev_direction: Vec<f64>,
    iteration: usize,
    last: Option<KsdIteration>,
}

impl Ksd {
    pub fn new(config: KsdConfig, theta: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if theta.is_empty() {
            return Err(KsdError::InvalidInput("empty parameter vector".into()));
        }
        let mut prev_direction = vec![0.0; theta.len()];
        prev_direction[0] = 1.0;
        Ok(Ksd { config, theta, prev_direction, iteration: 0, last: None })
    }

    pub fn config(&self) -> &KsdConfig {
        &self.config
    }

    pub fn prev_direction(&self) -> &[f64] {
        &self.prev_direction
    }

    pub fn last_iteration(&self) -> Option<&KsdIteration> {
        self.last.as_ref()
    }

    fn converged(&self, objective: f64) -> StepReport {
        StepReport { iteration: self.iteration, objective, converged: true }
    }
}

impl Optimizer for Ksd {
    fn step(&mut self, objective: &dyn Objective) -> Result<StepReport> {
        let cfg = &self.config;
        let sets = draw_subsets(objective.num_samples(), &cfg.subsets, self.iteration as u64)?;
        let (value_a, grad, fisher) = objective.value_gradient_fisher(&self.theta, &sets.a)?;
        if is_zero(&grad) {
            return Ok(self.converged(value_a));
        }
        let precond = match Preconditioner::floored(&fisher, cfg.floor_eps) {
            Err(KsdError::ZeroGradient) => return Ok(self.converged(value_a)),
            other => other?,
        };
        let basis = build_basis(
            objective,
            &self.theta,
            &grad,
            &precond,
            &sets.b,
            cfg.krylov_dim,
            cfg.curvature,
            &self.prev_direction,
        )?;
        let floored = floor_eigenvalues(&basis.reduced, cfg.floor_eps)?;
        let rotated = rotate_basis(&basis.columns, &floored)?;

        let options = BfgsOptions { max_iters: cfg.bfgs_iters, wolfe: WolfeParams::default(), ..BfgsOptions::default() };
        let theta = &self.theta;
        let result = bfgs_minimize(
            |a| subspace_objective(objective, theta, &rotated.columns, a, &sets.c),
            &vec![0.0; rotated.columns.len()],
            &options,
        )?;

        let step = combine(&rotated.columns, &result.point, self.theta.len());
        self.theta = add(&self.theta, &step);
        self.prev_direction = step;
        self.iteration += 1;
        self.last = Some(KsdIteration {
            basis: basis.columns,
            reduced: basis.reduced,
            rotated: rotated.columns,
            coefficients: result.point,
            replaced_columns: basis.replaced_columns,
            bfgs_iterations: result.iterations,
        });
        Ok(StepReport { iteration: self.iteration, objective: result.value, converged: false })
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }
}

/// Runs up to `max_iters` outer iterations from `theta`.
pub fn ksd_run(
    objective: &dyn Objective,
    theta: Vec<f64>,
    config: KsdConfig,
    max_iters: usize,
) -> Result<(Vec<f64>, Vec<StepReport>)> {
    let mut ksd = Ksd::new(config, theta)?;
    let history = run_steps(&mut ksd, objective, max_iters)?;
    Ok((ksd.theta, history))
}
