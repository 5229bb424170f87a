//! Full-batch limited-memory BFGS (two-loop recursion).

use std::collections::VecDeque;

use crate::error::{KsdError, Result};
use crate::objective::Objective;
use crate::vecops::{all_finite, axpy, dot, norm, scale};

use super::line_search::{strong_wolfe, WolfeParams};
use super::{is_zero, run_steps, Optimizer, StepReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub window: usize,
    pub wolfe: WolfeParams,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig { window: 10, wolfe: WolfeParams::default() }
    }
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

pub struct Lbfgs {
    config: LbfgsConfig,
    theta: Vec<f64>,
    memory: VecDeque<Pair>,
    current: Option<(f64, Vec<f64>)>,
    iteration: usize,
}

impl Lbfgs {
    pub fn new(config: LbfgsConfig, theta: Vec<f64>) -> Result<Self> {
        if config.window == 0 {
            return Err(KsdError::InvalidInput("L-BFGS window must be positive".into()));
        }
        Ok(Lbfgs { config, theta, memory: VecDeque::new(), current: None, iteration: 0 })
    }

    pub fn memory_len(&self) -> usize {
        self.memory.len()
    }

    /// `−H g` from the stored pairs, with `H₀ = (sᵀy / yᵀy) I`.
    fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.memory.len());
        for pair in self.memory.iter().rev() {
            let a = pair.rho * dot(&pair.s, &q);
            axpy(-a, &pair.y, &mut q);
            alphas.push(a);
        }
        if let Some(last) = self.memory.back() {
            scale(dot(&last.s, &last.y) / dot(&last.y, &last.y), &mut q);
        }
        for (pair, a) in self.memory.iter().zip(alphas.iter().rev()) {
            let b = pair.rho * dot(&pair.y, &q);
            axpy(a - b, &pair.s, &mut q);
        }
        scale(-1.0, &mut q);
        q
    }
}

impl Optimizer for Lbfgs {
    fn step(&mut self, objective: &dyn Objective) -> Result<StepReport> {
        let batch: Vec<usize> = (0..objective.num_samples()).collect();
        let (value, grad) = match self.current.take() {
            Some(c) => c,
            None => objective.value_and_gradient(&self.theta, &batch)?,
        };
        if !value.is_finite() || !all_finite(&grad) {
            return Err(KsdError::NumericalOverflow("non-finite objective in L-BFGS".into()));
        }
        if is_zero(&grad) {
            self.current = Some((value, grad));
            return Ok(StepReport { iteration: self.iteration, objective: value, converged: true });
        }

        let mut restarted = false;
        let trial = loop {
            let (dir, alpha0) = if self.memory.is_empty() {
                (grad.iter().map(|g| -g).collect::<Vec<_>>(), (1.0 / norm(&grad)).min(1.0))
            } else {
                (self.direction(&grad), 1.0)
            };
            let mut slope = dot(&dir, &grad);
            let mut dir = dir;
            let mut alpha0 = alpha0;
            if !(slope < 0.0) {
                self.memory.clear();
                dir = grad.iter().map(|g| -g).collect();
                slope = -dot(&grad, &grad);
                alpha0 = (1.0 / norm(&grad)).min(1.0);
            }
            let theta = &self.theta;
            let outcome = strong_wolfe(
                |alpha| {
                    let mut x = theta.clone();
                    axpy(alpha, &dir, &mut x);
                    match objective.value_and_gradient(&x, &batch) {
                        Ok((v, g)) if v.is_finite() && all_finite(&g) => {
                            let s = dot(&g, &dir);
                            Ok(Some((v, s, (x, g))))
                        }
                        Ok(_) => Ok(None),
                        Err(e) if e.is_numerical() => Ok(None),
                        Err(e) => Err(e),
                    }
                },
                value,
                slope,
                alpha0,
                &self.config.wolfe,
            )?;
            match outcome.accepted() {
                Some(t) => break Some(t),
                None if !self.memory.is_empty() && !restarted => {
                    self.memory.clear();
                    restarted = true;
                }
                None => break None,
            }
        };
        let Some(trial) = trial else {
            self.current = Some((value, grad));
            return Ok(StepReport { iteration: self.iteration, objective: value, converged: true });
        };
        let (x, g_new) = trial.payload;
        let s: Vec<f64> = x.iter().zip(&self.theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 0.0 {
            if self.memory.len() == self.config.window {
                self.memory.pop_front();
            }
            self.memory.push_back(Pair { s, y, rho: 1.0 / sy });
        }
        self.theta = x;
        self.current = Some((trial.value, g_new));
        self.iteration += 1;
        Ok(StepReport { iteration: self.iteration, objective: trial.value, converged: false })
    }

    fn params(&self) -> &[f64] {
        &self.theta
    }
}

pub fn lbfgs_run(
    objective: &dyn Objective,
    theta: Vec<f64>,
    config: LbfgsConfig,
    max_iters: usize,
) -> Result<(Vec<f64>, Vec<StepReport>)> {
    let mut opt = Lbfgs::new(config, theta)?;
    let history = run_steps(&mut opt, objective, max_iters)?;
    Ok((opt.theta, history))
}
