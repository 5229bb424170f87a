use std::time::Instant;

use crate::data::{binarize, generate_curves, load_idx, AMode, Dataset, SubsetPlan};
use crate::error::{KsdError, Result};
use crate::network::init_params;
use crate::objective::{NetworkObjective, Objective};
use crate::optimizers::{Hf, HfConfig, Ksd, KsdConfig, Lbfgs, LbfgsConfig, Optimizer, Sgd, SgdConfig};

use super::config::{DatasetSource, ExperimentConfig, OptimizerKind, Task};
use super::csv::{write_csv, ConvergenceRecord};

/// Stops after `patience` consecutive observations without a strict
/// improvement over the best value so far.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, stale: 0 }
    }

    /// Records a validation value; true when training should stop.
    pub fn observe(&mut self, value: f64) -> bool {
        if value < self.best {
            self.best = value;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    EarlyStopping,
    WorkBudget,
    Converged,
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Record whose parameters were kept.
    pub best_iter: usize,
    pub best_valid_obj: f64,
    /// Minimum of the validation error column (classification only).
    pub best_valid_err_pct: Option<f64>,
    pub final_train_obj: f64,
    pub final_train_err_pct: Option<f64>,
    pub seconds: f64,
    pub work: u64,
    /// HF only: CG runs cut short by non-positive curvature.
    pub negative_curvature_truncations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: Summary,
    pub records: Vec<ConvergenceRecord>,
    pub best_params: Vec<f64>,
    pub final_params: Vec<f64>,
}

/// Loads the configured data and splits off the validation tail.
pub fn load_data(config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let mut data = match &config.dataset {
        DatasetSource::Mnist { images, labels } => load_idx(images, labels)?,
        DatasetSource::Curves { samples, seed } => generate_curves(*samples, 28, *seed),
    };
    if let Some(n) = config.train_samples {
        data = data.head(n);
    }
    if config.binarize {
        data = binarize(&data, 0.5);
    }
    if config.task == Task::Autoencode {
        data = data.into_autoencoder();
    }
    let (train, valid) = data.split_tail(config.valid_fraction)?;
    if train.is_empty() {
        return Err(KsdError::InvalidInput("no training samples left after the validation split".into()));
    }
    Ok((train, valid))
}

fn subset_plan(config: &ExperimentConfig) -> SubsetPlan {
    SubsetPlan {
        a_mode: config.a_fraction.map_or(AMode::Full, AMode::Fraction),
        b_fraction: config.b_fraction,
        c_fraction: config.c_fraction,
        disjoint_bc: config.disjoint_bc,
        seed: config.seed,
    }
}

enum Runner {
    Ksd(Ksd),
    Hf(Hf),
    Sgd(Sgd),
    Lbfgs(Lbfgs),
}

impl Runner {
    fn optimizer(&mut self) -> &mut dyn Optimizer {
        match self {
            Runner::Ksd(o) => o,
            Runner::Hf(o) => o,
            Runner::Sgd(o) => o,
            Runner::Lbfgs(o) => o,
        }
    }
}

fn build_runner(config: &ExperimentConfig, theta: Vec<f64>) -> Result<Runner> {
    Ok(match config.optimizer {
        OptimizerKind::Ksd => Runner::Ksd(Ksd::new(
            KsdConfig {
                krylov_dim: config.ksd_k,
                bfgs_iters: config.bfgs_iters,
                floor_eps: config.floor_eps,
                curvature: config.curvature,
                subsets: subset_plan(config),
            },
            theta,
        )?),
        OptimizerKind::Hf => Runner::Hf(Hf::new(
            HfConfig {
                initial_lambda: config.hf_lambda,
                max_cg_iters: config.hf_max_cg,
                cg_tol: config.hf_cg_tol,
                floor_eps: config.floor_eps,
                curvature: config.curvature,
                subsets: subset_plan(config),
                ..HfConfig::default()
            },
            theta,
        )?),
        OptimizerKind::Sgd => Runner::Sgd(Sgd::new(
            SgdConfig {
                learning_rate: config.sgd_lr,
                decay: config.sgd_decay,
                batch_size: config.sgd_batch,
                seed: config.seed,
            },
            theta,
        )?),
        OptimizerKind::Lbfgs => {
            Runner::Lbfgs(Lbfgs::new(LbfgsConfig { window: config.lbfgs_window, ..LbfgsConfig::default() }, theta)?)
        }
    })
}

/// Loads data and runs the configured experiment, writing the CSV when
/// `csv_out` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let (train, valid) = load_data(config)?;
    let outcome = run_on_data(config, &train, &valid)?;
    if let Some(path) = &config.csv_out {
        write_csv(&outcome.records, path)?;
    }
    Ok(outcome)
}

/// Runs the configured optimizer on already loaded data.
///
/// After each step the training and validation objectives are measured on
/// separate, unmetered objective instances; their cost is excluded from both
/// `seconds` and `work`.
pub fn run_on_data(config: &ExperimentConfig, train: &Dataset, valid: &Dataset) -> Result<ExperimentOutcome> {
    let spec = config.model.clone();
    let objective = NetworkObjective::new(spec.clone(), train, config.l2)?;
    let train_eval = NetworkObjective::new(spec.clone(), train, config.l2)?;
    let valid_eval = if valid.is_empty() { None } else { Some(NetworkObjective::new(spec.clone(), valid, config.l2)?) };
    let train_all: Vec<usize> = (0..train.len()).collect();
    let valid_all: Vec<usize> = (0..valid.len()).collect();

    let theta = init_params(&spec, config.seed, config.init_scale);
    let mut runner = build_runner(config, theta.clone())?;
    let mut stopping = EarlyStopping::new(config.patience);

    let mut records = Vec::new();
    let mut best_params = theta;
    let mut best_key = (f64::INFINITY, f64::INFINITY);
    let mut best_iter = 0;
    let mut best_valid_obj = f64::INFINITY;
    let mut seconds = 0.0;
    let mut stop_reason = StopReason::MaxIters;

    for iter in 1..=config.max_iters {
        let start = Instant::now();
        let report = runner.optimizer().step(&objective)?;
        seconds += start.elapsed().as_secs_f64();
        if report.converged && !records.is_empty() {
            stop_reason = StopReason::Converged;
            break;
        }

        let params = runner.optimizer().params().to_vec();
        let train_obj = train_eval.value(&params, &train_all)?;
        let (valid_obj, valid_err_pct) = match &valid_eval {
            Some(v) => (v.value(&params, &valid_all)?, v.error_rate_pct(&params, &valid_all)?),
            None => (train_obj, None),
        };
        records.push(ConvergenceRecord { iter, seconds, train_obj, valid_obj, valid_err_pct });

        // Best parameters by validation error where there is one, otherwise
        // by validation objective; ties go to the lower objective.
        let key = (valid_err_pct.unwrap_or(valid_obj), valid_obj);
        let key_ok = key.0.is_finite() && key.1.is_finite();
        if key_ok && (key.0 < best_key.0 || (key.0 == best_key.0 && key.1 < best_key.1)) {
            best_key = key;
            best_iter = iter;
            best_valid_obj = valid_obj;
            best_params = params;
        }

        if report.converged {
            stop_reason = StopReason::Converged;
            break;
        }
        let nan_safe = if valid_obj.is_nan() { f64::INFINITY } else { valid_obj };
        if stopping.observe(nan_safe) {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
        if config.work_budget.is_some_and(|b| objective.work() >= b) {
            stop_reason = StopReason::WorkBudget;
            break;
        }
    }

    let final_params = runner.optimizer().params().to_vec();
    let final_train_obj = train_eval.value(&final_params, &train_all)?;
    let final_train_err_pct = train_eval.error_rate_pct(&final_params, &train_all)?;
    let best_valid_err_pct =
        records.iter().filter_map(|r| r.valid_err_pct).fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.min(e))));
    let negative_curvature_truncations = match &runner {
        Runner::Hf(hf) => Some(hf.negative_curvature_truncations()),
        _ => None,
    };
    let summary = Summary {
        iterations: records.len(),
        stop_reason,
        best_iter,
        best_valid_obj,
        best_valid_err_pct,
        final_train_obj,
        final_train_err_pct,
        seconds,
        work: objective.work(),
        negative_curvature_truncations,
    };
    Ok(ExperimentOutcome { summary, records, best_params, final_params })
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |e| format!("{e:.2}%"));
        writeln!(f, "iterations:           {} ({:?})", self.iterations, self.stop_reason)?;
        writeln!(f, "best iteration:       {}", self.best_iter)?;
        writeln!(f, "best valid objective: {:.6}", self.best_valid_obj)?;
        writeln!(f, "best valid error:     {}", pct(self.best_valid_err_pct))?;
        writeln!(f, "final train objective:{:.6}", self.final_train_obj)?;
        writeln!(f, "final train error:    {}", pct(self.final_train_err_pct))?;
        writeln!(f, "optimizer seconds:    {:.3}", self.seconds)?;
        write!(f, "work units:           {}", self.work)?;
        if let Some(n) = self.negative_curvature_truncations {
            write!(f, "\nnegative-curvature CG truncations: {n}")?;
        }
        Ok(())
    }
}
