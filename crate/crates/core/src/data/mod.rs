//! Datasets: MNIST-style IDX files, a synthetic curves generator, and the
//! per-iteration subset draws used by the optimizers.

mod curves;
mod idx;
mod subsets;

pub use curves::generate_curves;
pub use idx::{load_idx, load_idx_images, load_idx_labels, write_idx_images, write_idx_labels, IdxImages};
pub use subsets::{draw_subsets, AMode, SubsetPlan, Subsets};

use crate::error::{KsdError, Result};
use crate::network::{Sample, Target};

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, num_classes: usize },
    /// Autoencoder: the target of each sample is its own input.
    Reconstruction,
}

/// Row-major inputs with their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    input_dim: usize,
    targets: Targets,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, input_dim: usize, targets: Targets) -> Result<Self> {
        if input_dim == 0 || inputs.len() % input_dim != 0 {
            return Err(KsdError::InvalidInput(format!(
                "{} input values do not divide into rows of {input_dim}",
                inputs.len()
            )));
        }
        let n = inputs.len() / input_dim;
        if let Targets::Classes { labels, num_classes } = &targets {
            if labels.len() != n {
                return Err(KsdError::InvalidInput(format!("{} labels for {n} inputs", labels.len())));
            }
            if let Some(bad) = labels.iter().find(|&&l| l >= *num_classes) {
                return Err(KsdError::InvalidInput(format!("label {bad} out of range for {num_classes} classes")));
            }
        }
        Ok(Dataset { inputs, input_dim, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Reconstruction => None,
        }
    }

    /// Output dimension a network needs to fit these targets.
    pub fn target_dim(&self) -> usize {
        match &self.targets {
            Targets::Classes { num_classes, .. } => *num_classes,
            Targets::Reconstruction => self.input_dim,
        }
    }

    pub fn sample(&self, i: usize) -> Sample<'_> {
        let input = self.input(i);
        let target = match &self.targets {
            Targets::Classes { labels, .. } => Target::Class(labels[i]),
            Targets::Reconstruction => Target::Values(input),
        };
        Sample { input, target }
    }

    pub fn samples(&self, indices: &[usize]) -> Vec<Sample<'_>> {
        indices.iter().map(|&i| self.sample(i)).collect()
    }

    pub fn all_samples(&self) -> Vec<Sample<'_>> {
        (0..self.len()).map(|i| self.sample(i)).collect()
    }

    /// First `n` samples (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        self.select(0..n.min(self.len()))
    }

    fn select(&self, range: std::ops::Range<usize>) -> Dataset {
        let inputs = self.inputs[range.start * self.input_dim..range.end * self.input_dim].to_vec();
        let targets = match &self.targets {
            Targets::Classes { labels, num_classes } => {
                Targets::Classes { labels: labels[range].to_vec(), num_classes: *num_classes }
            }
            Targets::Reconstruction => Targets::Reconstruction,
        };
        Dataset { inputs, input_dim: self.input_dim, targets }
    }

    /// Splits off the last `fraction` of the samples as a held-out set.
    /// Returns `(train, held_out)`.
    pub fn split_tail(&self, fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(KsdError::InvalidInput(format!("held-out fraction {fraction} not in [0, 1)")));
        }
        let held = ((self.len() as f64) * fraction).floor() as usize;
        let cut = self.len() - held;
        Ok((self.select(0..cut), self.select(cut..self.len())))
    }

    /// Same inputs, reconstruction targets.
    pub fn into_autoencoder(self) -> Dataset {
        Dataset { targets: Targets::Reconstruction, ..self }
    }
}

/// Maps every input to `{0, 1}`: values above `threshold` become 1.
pub fn binarize(dataset: &Dataset, threshold: f64) -> Dataset {
    let inputs = dataset.inputs.iter().map(|&x| if x > threshold { 1.0 } else { 0.0 }).collect();
    Dataset { inputs, input_dim: dataset.input_dim, targets: dataset.targets.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            vec![0.0, 0.6, 0.2, 0.5, 1.0, 0.49],
            2,
            Targets::Classes { labels: vec![0, 1, 2], num_classes: 3 },
        )
        .unwrap()
    }

    #[test]
    fn construction_checks() {
        assert!(Dataset::new(vec![0.0; 5], 2, Targets::Reconstruction).is_err());
        assert!(Dataset::new(vec![0.0; 4], 2, Targets::Classes { labels: vec![0], num_classes: 2 }).is_err());
        assert!(Dataset::new(vec![0.0; 4], 2, Targets::Classes { labels: vec![0, 2], num_classes: 2 }).is_err());
    }

    #[test]
    fn binarize_examples() {
        let d = toy();
        let b = binarize(&d, 0.5);
        assert_eq!(b.inputs(), &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(binarize(&b, 0.5), b);
        let zeros = Dataset::new(vec![0.0; 4], 2, Targets::Reconstruction).unwrap();
        assert_eq!(binarize(&zeros, 0.5), zeros);
    }

    #[test]
    fn split_and_head() {
        let d = toy();
        let (train, valid) = d.split_tail(0.34).unwrap();
        assert_eq!((train.len(), valid.len()), (2, 1));
        assert_eq!(valid.labels().unwrap(), &[2]);
        assert_eq!(d.head(2), train);
        assert_eq!(d.head(10).len(), 3);
    }

    #[test]
    fn reconstruction_targets_are_inputs() {
        let d = toy().into_autoencoder();
        let s = d.sample(1);
        assert_eq!(s.target, Target::Values(&[0.2, 0.5]));
        assert_eq!(d.target_dim(), 2);
    }
}
