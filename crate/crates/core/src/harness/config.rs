//! Experiment configuration: line-oriented `key = value` text, `#` comments.
//!
//! Required keys: `dataset`, `model`, `optimizer`, `max_iters`, plus
//! `mnist_images` and `mnist_labels` when `dataset = mnist`. Relative paths
//! are resolved against the directory holding the config file.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::curvature::CurvatureKind;
use crate::error::{ConfigError, Result};
use crate::network::NetworkSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Ksd,
    Hf,
    Sgd,
    Lbfgs,
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ksd" => Ok(OptimizerKind::Ksd),
            "hf" => Ok(OptimizerKind::Hf),
            "sgd" => Ok(OptimizerKind::Sgd),
            "lbfgs" => Ok(OptimizerKind::Lbfgs),
            other => Err(format!("unknown optimizer '{other}' (expected ksd, hf, sgd or lbfgs)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classify,
    Autoencode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Mnist { images: PathBuf, labels: PathBuf },
    Curves { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Keep only the first `n` samples before splitting.
    pub train_samples: Option<usize>,
    /// Fraction carved from the end of the training data for validation.
    pub valid_fraction: f64,
    pub binarize: bool,
    pub task: Task,
    pub model: NetworkSpec,
    pub optimizer: OptimizerKind,
    pub curvature: CurvatureKind,
    pub seed: u64,
    pub max_iters: usize,
    pub patience: usize,
    pub l2: f64,
    pub init_scale: f64,
    /// Stop once the optimizer has spent this much compute (see
    /// [`crate::Objective::work`]).
    pub work_budget: Option<u64>,
    pub ksd_k: usize,
    pub bfgs_iters: usize,
    pub floor_eps: f64,
    /// `None`: `A` is all of the training data.
    pub a_fraction: Option<f64>,
    pub b_fraction: f64,
    pub c_fraction: f64,
    pub disjoint_bc: bool,
    pub hf_lambda: f64,
    pub hf_max_cg: usize,
    pub hf_cg_tol: f64,
    pub sgd_lr: f64,
    pub sgd_decay: f64,
    pub sgd_batch: usize,
    pub lbfgs_window: usize,
    pub csv_out: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "dataset",
    "mnist_images",
    "mnist_labels",
    "curves_samples",
    "data_seed",
    "train_samples",
    "valid_fraction",
    "binarize",
    "task",
    "model",
    "optimizer",
    "curvature",
    "seed",
    "max_iters",
    "patience",
    "l2",
    "init_scale",
    "work_budget",
    "ksd_k",
    "bfgs_iters",
    "floor_eps",
    "a_fraction",
    "b_fraction",
    "c_fraction",
    "disjoint_bc",
    "hf_lambda",
    "hf_max_cg",
    "hf_cg_tol",
    "sgd_lr",
    "sgd_decay",
    "sgd_batch",
    "lbfgs_window",
    "csv_out",
];

const REQUIRED: &[&str] = &["dataset", "model", "optimizer", "max_iters"];

pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}

struct Entries {
    values: HashMap<&'static str, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.values.get(key)
    }

    fn get<T: FromStr>(&self, key: &str) -> std::result::Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => {
                v.parse::<T>().map(Some).map_err(|e| ConfigError::at(*line, format!("bad value for {key}: {e}")))
            }
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> std::result::Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.values.get(key).map(|(l, _)| *l)
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        match self.line(key) {
            Some(l) => ConfigError::at(l, message),
            None => ConfigError::general(message),
        }
    }

    fn check(&self, key: &str, ok: bool, message: &str) -> std::result::Result<(), ConfigError> {
        if ok {
            Ok(())
        } else {
            Err(self.err(key, format!("{key}: {message}")))
        }
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(format!("'{other}' is not a boolean")),
    }
}

/// Parses config text; `base` anchors relative paths.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig> {
    Ok(parse_inner(text, base)?)
}

fn parse_inner(text: &str, base: &Path) -> std::result::Result<ExperimentConfig, ConfigError> {
    let mut values: HashMap<&'static str, (usize, String)> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| ConfigError::at(line_no, format!("expected 'key = value', got '{line}'")))?;
        let key = key.trim();
        let value = value.trim();
        let known = KEYS.iter().find(|k| **k == key).ok_or_else(|| ConfigError::at(line_no, format!("unknown key '{key}'")))?;
        if let Some((first, _)) = values.get(known) {
            return Err(ConfigError::at(line_no, format!("duplicate key '{key}' (first set on line {first})")));
        }
        if value.is_empty() {
            return Err(ConfigError::at(line_no, format!("empty value for '{key}'")));
        }
        values.insert(known, (line_no, value.to_string()));
    }
    let e = Entries { values };

    let mut missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| e.raw(k).is_none()).collect();
    if e.raw("dataset").is_some_and(|(_, v)| v == "mnist") {
        missing.extend(["mnist_images", "mnist_labels"].iter().filter(|k| e.raw(k).is_none()));
    }
    if !missing.is_empty() {
        return Err(ConfigError::general(format!("missing required keys: {}", missing.join(", "))));
    }

    let resolve = |p: &str| {
        let p = PathBuf::from(p);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };

    let (dataset, default_task) = match e.raw("dataset").map(|(_, v)| v.as_str()) {
        Some("mnist") => (
            DatasetSource::Mnist {
                images: resolve(&e.raw("mnist_images").expect("checked").1),
                labels: resolve(&e.raw("mnist_labels").expect("checked").1),
            },
            Task::Classify,
        ),
        Some("curves") => (
            DatasetSource::Curves { samples: e.or("curves_samples", 10_000usize)?, seed: e.or("data_seed", 0u64)? },
            Task::Autoencode,
        ),
        Some(other) => return Err(e.err("dataset", format!("unknown dataset '{other}' (expected mnist or curves)"))),
        None => unreachable!("required key"),
    };
    if matches!(dataset, DatasetSource::Mnist { .. }) {
        for k in ["curves_samples", "data_seed"] {
            if e.raw(k).is_some() {
                return Err(e.err(k, format!("{k} only applies to dataset = curves")));
            }
        }
    }

    let task = match e.raw("task").map(|(_, v)| v.as_str()) {
        None => default_task,
        Some("classify") => Task::Classify,
        Some("autoencode") => Task::Autoencode,
        Some(other) => return Err(e.err("task", format!("unknown task '{other}' (expected classify or autoencode)"))),
    };
    if task == Task::Classify && matches!(dataset, DatasetSource::Curves { .. }) {
        return Err(e.err("task", "the curves dataset has no labels to classify"));
    }

    let model_str = &e.raw("model").expect("required").1;
    let dims = NetworkSpec::parse_dims(model_str).map_err(|err| e.err("model", format!("bad model '{model_str}': {err}")))?;
    let model = match task {
        Task::Classify => NetworkSpec::classifier(dims),
        Task::Autoencode => NetworkSpec::autoencoder(dims),
    }
    .map_err(|err| e.err("model", format!("bad model '{model_str}': {err}")))?;

    let optimizer: OptimizerKind = e.get("optimizer")?.expect("required");
    let ksd_k: usize = e.or("ksd_k", 20)?;
    e.check("ksd_k", ksd_k >= 1, "must be at least 1")?;
    let default_fraction = 1.0 / ksd_k as f64;

    let config = ExperimentConfig {
        dataset,
        train_samples: e.get("train_samples")?,
        valid_fraction: e.or("valid_fraction", 0.1)?,
        binarize: match e.raw("binarize") {
            None => false,
            Some((line, v)) => parse_bool(v).map_err(|m| ConfigError::at(*line, m))?,
        },
        task,
        model,
        optimizer,
        curvature: e.or("curvature", CurvatureKind::GaussNewton)?,
        seed: e.or("seed", 0)?,
        max_iters: e.get("max_iters")?.expect("required"),
        patience: e.or("patience", 10)?,
        l2: e.or("l2", 0.0)?,
        init_scale: e.or("init_scale", 1.0)?,
        work_budget: e.get("work_budget")?,
        ksd_k,
        bfgs_iters: e.or("bfgs_iters", 30)?,
        floor_eps: e.or("floor_eps", 1e-4)?,
        a_fraction: e.get("a_fraction")?,
        b_fraction: e.or("b_fraction", default_fraction)?,
        c_fraction: e.or("c_fraction", default_fraction)?,
        disjoint_bc: match e.raw("disjoint_bc") {
            None => true,
            Some((line, v)) => parse_bool(v).map_err(|m| ConfigError::at(*line, m))?,
        },
        hf_lambda: e.or("hf_lambda", 0.01)?,
        hf_max_cg: e.or("hf_max_cg", 250)?,
        hf_cg_tol: e.or("hf_cg_tol", 1e-4)?,
        sgd_lr: e.or("sgd_lr", 0.1)?,
        sgd_decay: e.or("sgd_decay", 0.0)?,
        sgd_batch: e.or("sgd_batch", 100)?,
        lbfgs_window: e.or("lbfgs_window", 10)?,
        csv_out: e.raw("csv_out").map(|(_, v)| resolve(v)),
    };

    let unit = |f: f64| f > 0.0 && f <= 1.0;
    e.check("train_samples", config.train_samples != Some(0), "must be positive")?;
    e.check("valid_fraction", (0.0..1.0).contains(&config.valid_fraction), "must lie in [0, 1)")?;
    e.check("max_iters", config.max_iters >= 1, "must be at least 1")?;
    e.check("patience", config.patience >= 1, "must be at least 1")?;
    e.check("l2", config.l2 >= 0.0, "must be non-negative")?;
    e.check("init_scale", config.init_scale > 0.0, "must be positive")?;
    e.check("bfgs_iters", config.bfgs_iters >= 1, "must be at least 1")?;
    e.check("floor_eps", config.floor_eps > 0.0 && config.floor_eps < 1.0, "must lie in (0, 1)")?;
    e.check("a_fraction", config.a_fraction.map_or(true, unit), "must lie in (0, 1]")?;
    e.check("b_fraction", unit(config.b_fraction), "must lie in (0, 1]")?;
    e.check("c_fraction", unit(config.c_fraction), "must lie in (0, 1]")?;
    e.check(
        "c_fraction",
        !config.disjoint_bc || config.b_fraction + config.c_fraction <= 1.0,
        "b_fraction + c_fraction must not exceed 1 when B and C are disjoint",
    )?;
    e.check("hf_lambda", config.hf_lambda > 0.0, "must be positive")?;
    e.check("hf_max_cg", config.hf_max_cg >= 1, "must be at least 1")?;
    e.check("hf_cg_tol", config.hf_cg_tol > 0.0, "must be positive")?;
    e.check("sgd_lr", config.sgd_lr >= 0.0, "must be non-negative")?;
    e.check("sgd_decay", config.sgd_decay >= 0.0, "must be non-negative")?;
    e.check("sgd_batch", config.sgd_batch >= 1, "must be at least 1")?;
    e.check("lbfgs_window", config.lbfgs_window >= 1, "must be at least 1")?;
    e.check("curves_samples", !matches!(config.dataset, DatasetSource::Curves { samples: 0, .. }), "must be positive")?;
    Ok(config)
}
