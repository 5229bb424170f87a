//! Minibatch SGD with a `lr / (1 + decay·t)` schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KsdError, Result};
use crate::objective::Objective;
use crate::vecops::axpy;

use super::{run_steps, Optimizer, StepReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { learning_rate: 0.1, decay: 0.0, batch_size: 100, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Sgd {
    config: SgdConfig,
    theta: Vec<f64>,
    epoch: usize,
    updates: u64,
}

impl Sgd {
    pub fn new(config: SgdConfig, theta: Vec<f64>) -> Result<Self> {
        if config.batch_size == 0 || !(config.learning_rate >= 0.0) || !(config.decay >= 0.0) {
            return Err(KsdError::InvalidInput("SGD needs batch size > 0 and non-negative rates".into()));
        }
        Ok(Sgd { config, theta, epoch: 0, updates: 0 })
    }

    pub fn learning_rate_at(&self, update: u64) -> f64 {
        self.config.learning_rate / (1.0 + self.config.decay * update as f64)
    }
}

impl Optimizer for Sgd {
    /// One pass over a fresh permutation of the data.
    fn step(&mut self, objective: &dyn Objective) -> Result<StepReport> {
        let n = objective.num_samples();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.config.batch_size) {
            let mut batch = chunk.to_vec();
            batch.sort_unstable();
            let (value, grad) = objective.value_and_gradient(&self.theta, &batch)?;
            let eta = self.learning_rate_at(self.updates);
            axpy(-eta, &grad, &mut self.theta);
            total += value;
            batches += 1;
            self.updates += 1;
        }
        if !self.theta.iter().all(|x| x.is_finite()) {
            return Err(KsdError::NumericalOverflow("SGD diverged".into()));
        }
        self.epoch += 1;
        Ok(StepReport { iteration: self.epoch, objective: total / batches.max(1) as f64, converged: false })
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }
}

pub fn sgd_run(
    objective: &dyn Objective,
    theta: Vec<f64>,
    config: SgdConfig,
    epochs: usize,
) -> Result<(Vec<f64>, Vec<StepReport>)> {
    let mut sgd = Sgd::new(config, theta)?;
    let history = run_steps(&mut sgd, objective, epochs)?;
    Ok((sgd.theta, history))
}
