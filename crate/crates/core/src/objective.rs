//! The interface the optimizers see: batch objective values, gradients, the
//! Fisher diagonal and curvature products, all addressed by sample indices.
//!
//! [`NetworkObjective`] binds a network to a dataset. [`QuadraticObjective`]
//! is an explicit quadratic used to check optimizer behaviour where the exact
//! answer is known.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::curvature::{batch_curvature_product, CurvatureKind};
use crate::data::{Dataset, Targets};
use crate::error::{KsdError, Result};
use crate::linalg::{cholesky, SymMatrix};
use crate::network::{self, LossKind, NetworkSpec};

pub trait Objective {
    /// Parameter dimension.
    fn dim(&self) -> usize;

    /// Number of training samples the batch indices refer to.
    fn num_samples(&self) -> usize;

    fn value(&self, theta: &[f64], batch: &[usize]) -> Result<f64>;

    fn value_and_gradient(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)>;

    /// Value, gradient and the Fisher diagonal (mean of squared per-sample
    /// loss gradients).
    fn value_gradient_fisher(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>, Vec<f64>)>;

    /// Batch-averaged curvature times `direction`, including regularization.
    fn curvature_product(&self, theta: &[f64], direction: &[f64], batch: &[usize], kind: CurvatureKind)
        -> Result<Vec<f64>>;

    /// Cumulative compute spent, in per-sample dense-pass units.
    fn work(&self) -> u64 {
        0
    }
}

/// Mean loss of a network over a dataset plus `(l2/2)‖θ_weights‖²`.
#[derive(Debug)]
pub struct NetworkObjective<'a> {
    spec: NetworkSpec,
    data: &'a Dataset,
    l2: f64,
    work: AtomicU64,
}

// Approximate dense passes per sample for each kind of evaluation.
const WORK_VALUE: u64 = 1;
const WORK_GRADIENT: u64 = 3;
const WORK_FISHER: u64 = 4;
const WORK_GAUSS_NEWTON: u64 = 5;
const WORK_HESSIAN: u64 = 9;

impl<'a> NetworkObjective<'a> {
    pub fn new(spec: NetworkSpec, data: &'a Dataset, l2: f64) -> Result<Self> {
        if data.input_dim() != spec.input_dim() {
            return Err(KsdError::InvalidInput(format!(
                "dataset inputs have dimension {}, network expects {}",
                data.input_dim(),
                spec.input_dim()
            )));
        }
        if data.target_dim() != spec.output_dim() {
            return Err(KsdError::InvalidInput(format!(
                "targets need {} outputs, network has {}",
                data.target_dim(),
                spec.output_dim()
            )));
        }
        let compatible = matches!(
            (data.targets(), spec.loss()),
            (Targets::Classes { .. }, LossKind::SoftmaxCrossEntropy) | (Targets::Reconstruction, LossKind::SquaredError)
        );
        if !compatible {
            return Err(KsdError::InvalidInput("loss kind does not match the dataset's targets".into()));
        }
        if !(l2 >= 0.0) {
            return Err(KsdError::InvalidInput("l2 coefficient must be non-negative".into()));
        }
        Ok(NetworkObjective { spec, data, l2, work: AtomicU64::new(0) })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    fn charge(&self, per_sample: u64, batch: &[usize]) {
        self.work.fetch_add(per_sample * batch.len() as u64, Ordering::Relaxed);
    }

    fn check_indices(&self, batch: &[usize]) -> Result<()> {
        match batch.iter().find(|&&i| i >= self.data.len()) {
            Some(i) => Err(KsdError::InvalidInput(format!("sample index {i} out of range"))),
            None => Ok(()),
        }
    }

    /// Classification error in percent (classification data only).
    pub fn error_rate_pct(&self, theta: &[f64], batch: &[usize]) -> Result<Option<f64>> {
        let Some(labels) = self.data.labels() else {
            return Ok(None);
        };
        self.check_indices(batch)?;
        let samples = self.data.samples(batch);
        let out = network::outputs(&self.spec, theta, &samples)?;
        let od = self.spec.output_dim();
        let wrong = out
            .chunks(od)
            .zip(batch)
            .filter(|(row, &i)| network::predicted_class(row) != labels[i])
            .count();
        Ok(Some(100.0 * wrong as f64 / batch.len() as f64))
    }
}

impl Objective for NetworkObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.num_params()
    }

    fn num_samples(&self) -> usize {
        self.data.len()
    }

    fn value(&self, theta: &[f64], batch: &[usize]) -> Result<f64> {
        self.check_indices(batch)?;
        self.charge(WORK_VALUE, batch);
        network::objective_value(&self.spec, theta, &self.data.samples(batch), self.l2)
    }

    fn value_and_gradient(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.check_indices(batch)?;
        self.charge(WORK_GRADIENT, batch);
        network::value_and_gradient(&self.spec, theta, &self.data.samples(batch), self.l2)
    }

    fn value_gradient_fisher(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        self.check_indices(batch)?;
        self.charge(WORK_FISHER, batch);
        network::value_gradient_fisher(&self.spec, theta, &self.data.samples(batch), self.l2)
    }

    fn curvature_product(
        &self,
        theta: &[f64],
        direction: &[f64],
        batch: &[usize],
        kind: CurvatureKind,
    ) -> Result<Vec<f64>> {
        self.check_indices(batch)?;
        self.charge(
            match kind {
                CurvatureKind::GaussNewton => WORK_GAUSS_NEWTON,
                CurvatureKind::Hessian => WORK_HESSIAN,
            },
            batch,
        );
        batch_curvature_product(&self.spec, theta, direction, &self.data.samples(batch), kind, self.l2)
    }

    fn work(&self) -> u64 {
        self.work.load(Ordering::Relaxed)
    }
}

/// `f(θ) = ½ θᵀAθ + bᵀθ` with a dense symmetric `A`. Batches are ignored and
/// both curvature kinds return `A v`.
#[derive(Debug)]
pub struct QuadraticObjective {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    fisher: Vec<f64>,
    num_samples: usize,
    work: AtomicU64,
}

impl QuadraticObjective {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let n = b.len();
        if a.len() != n || a.iter().any(|r| r.len() != n) {
            return Err(KsdError::InvalidInput("A must be square and match b".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if a[i][j] != a[j][i] {
                    return Err(KsdError::InvalidInput("A must be symmetric".into()));
                }
            }
        }
        Ok(QuadraticObjective { a, b, fisher: vec![1.0; n], num_samples: 1, work: AtomicU64::new(0) })
    }

    /// Diagonal reported as the Fisher diagonal (the preconditioner source).
    pub fn with_fisher(mut self, fisher: Vec<f64>) -> Self {
        assert_eq!(fisher.len(), self.b.len());
        self.fisher = fisher;
        self
    }

    /// Pretend the objective averages over this many samples.
    pub fn with_num_samples(mut self, n: usize) -> Self {
        self.num_samples = n.max(1);
        self
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn linear_term(&self) -> &[f64] {
        &self.b
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    }

    /// `−A⁻¹ b` via Cholesky (A must be positive definite).
    pub fn minimizer(&self) -> Result<Vec<f64>> {
        let c = cholesky(&SymMatrix::from_rows(&self.a)?)?;
        let n = self.b.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| c.get(i, k) * y[k]).sum();
            y[i] = (-self.b[i] - s) / c.get(i, i);
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| c.get(k, i) * x[k]).sum();
            x[i] = (y[i] - s) / c.get(i, i);
        }
        Ok(x)
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.b.len() {
            return Err(KsdError::InvalidInput("dimension mismatch".into()));
        }
        Ok(())
    }

    fn tick(&self) {
        self.work.fetch_add(1, Ordering::Relaxed);
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn num_samples(&self) -> usize {
        self.num_samples
    }

    fn value(&self, theta: &[f64], _batch: &[usize]) -> Result<f64> {
        self.check(theta)?;
        self.tick();
        let at = self.apply(theta);
        Ok(theta.iter().zip(&at).map(|(x, y)| 0.5 * x * y).sum::<f64>() + theta.iter().zip(&self.b).map(|(x, y)| x * y).sum::<f64>())
    }

    fn value_and_gradient(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let v = self.value(theta, batch)?;
        let g = self.apply(theta).iter().zip(&self.b).map(|(x, y)| x + y).collect();
        Ok((v, g))
    }

    fn value_gradient_fisher(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (v, g) = self.value_and_gradient(theta, batch)?;
        Ok((v, g, self.fisher.clone()))
    }

    fn curvature_product(&self, theta: &[f64], direction: &[f64], _batch: &[usize], _kind: CurvatureKind)
        -> Result<Vec<f64>> {
        self.check(theta)?;
        self.check(direction)?;
        self.tick();
        Ok(self.apply(direction))
    }

    fn work(&self) -> u64 {
        self.work.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimizer() {
        let q = QuadraticObjective::new(vec![vec![2.0, 0.0], vec![0.0, 4.0]], vec![-2.0, 4.0]).unwrap();
        let x = q.minimizer().unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] + 1.0).abs() < 1e-15);
        let (_, g) = q.value_and_gradient(&x, &[0]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn quadratic_rejects_asymmetric() {
        assert!(QuadraticObjective::new(vec![vec![1.0, 2.0], vec![0.0, 1.0]], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn network_objective_checks_compatibility() {
        let data = Dataset::new(vec![0.0; 8], 4, Targets::Classes { labels: vec![0, 1], num_classes: 2 }).unwrap();
        let cl = NetworkSpec::classifier(vec![4, 3, 2]).unwrap();
        assert!(NetworkObjective::new(cl.clone(), &data, 0.0).is_ok());
        assert!(NetworkObjective::new(NetworkSpec::classifier(vec![5, 2]).unwrap(), &data, 0.0).is_err());
        assert!(NetworkObjective::new(NetworkSpec::autoencoder(vec![4, 2, 2]).unwrap(), &data, 0.0).is_err());
        assert!(NetworkObjective::new(cl, &data, -1.0).is_err());
    }

    #[test]
    fn network_objective_meters_work_and_checks_indices() {
        let data = Dataset::new(vec![0.5; 8], 4, Targets::Classes { labels: vec![0, 1], num_classes: 2 }).unwrap();
        let spec = NetworkSpec::classifier(vec![4, 3, 2]).unwrap();
        let obj = NetworkObjective::new(spec.clone(), &data, 0.0).unwrap();
        let theta = network::init_params(&spec, 0, 1.0);
        obj.value(&theta, &[0, 1]).unwrap();
        obj.value_and_gradient(&theta, &[0]).unwrap();
        assert_eq!(obj.work(), 2 * WORK_VALUE + WORK_GRADIENT);
        assert!(obj.value(&theta, &[2]).is_err());
        assert_eq!(obj.error_rate_pct(&theta, &[0, 1]).unwrap().map(|e| e == 50.0 || e == 0.0 || e == 100.0), Some(true));
    }
}
