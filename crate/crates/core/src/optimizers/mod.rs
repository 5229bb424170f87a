//! KSD and the baselines it is compared against. Every optimizer advances
//! one outer iteration (one epoch for SGD) per [`Optimizer::step`].

mod bfgs;
mod hf;
mod ksd;
mod lbfgs;
pub mod line_search;
mod sgd;

pub use bfgs::{bfgs_minimize, subspace_objective, subspace_point, BfgsOptions, BfgsResult};
pub use hf::{hf_run, lm_update, preconditioned_cg, reduction_ratio, CgResult, Hf, HfConfig};
pub use ksd::{ksd_run, Ksd, KsdConfig, KsdIteration};
pub use lbfgs::{lbfgs_run, Lbfgs, LbfgsConfig};
pub use sgd::{sgd_run, Sgd, SgdConfig};

use crate::error::Result;
use crate::objective::Objective;

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// 1-based count of completed steps.
    pub iteration: usize,
    /// Objective on the samples this step optimized, after the step. For SGD
    /// it is the mean minibatch objective over the epoch.
    pub objective: f64,
    /// The gradient vanished; further steps will not move.
    pub converged: bool,
}

pub trait Optimizer {
    fn step(&mut self, objective: &dyn Objective) -> Result<StepReport>;

    fn params(&self) -> &[f64];
}

/// Runs up to `max_steps` steps, stopping early on convergence.
pub(crate) fn run_steps(
    optimizer: &mut dyn Optimizer,
    objective: &dyn Objective,
    max_steps: usize,
) -> Result<Vec<StepReport>> {
    let mut history = Vec::new();
    for _ in 0..max_steps {
        let report = optimizer.step(objective)?;
        let done = report.converged;
        history.push(report);
        if done {
            break;
        }
    }
    Ok(history)
}

fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0)
}
