//! Per-iteration index sets: `A` for the gradient and preconditioner, `B` for
//! curvature products, `C` for the subspace minimization.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KsdError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AMode {
    /// Every training sample, every iteration.
    Full,
    /// A fresh random fraction each iteration.
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetPlan {
    pub a_mode: AMode,
    pub b_fraction: f64,
    pub c_fraction: f64,
    pub disjoint_bc: bool,
    pub seed: u64,
}

impl SubsetPlan {
    /// `B` and `C` each about `1/k` of the data, disjoint; `A` is everything.
    pub fn for_krylov_dim(k: usize, seed: u64) -> Self {
        let f = 1.0 / k.max(1) as f64;
        SubsetPlan { a_mode: AMode::Full, b_fraction: f, c_fraction: f, disjoint_bc: true, seed }
    }

    /// `A = B = C =` all samples.
    pub fn full_batch() -> Self {
        SubsetPlan { a_mode: AMode::Full, b_fraction: 1.0, c_fraction: 1.0, disjoint_bc: false, seed: 0 }
    }

    pub fn is_full_batch(&self) -> bool {
        self.a_mode == AMode::Full && self.b_fraction == 1.0 && self.c_fraction == 1.0
    }

    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| f > 0.0 && f <= 1.0;
        if !frac_ok(self.b_fraction) || !frac_ok(self.c_fraction) {
            return Err(KsdError::InvalidPlan("B and C fractions must lie in (0, 1]".into()));
        }
        if let AMode::Fraction(f) = self.a_mode {
            if !frac_ok(f) {
                return Err(KsdError::InvalidPlan("A fraction must lie in (0, 1]".into()));
            }
        }
        if self.disjoint_bc && self.b_fraction + self.c_fraction > 1.0 {
            return Err(KsdError::InvalidPlan("disjoint B and C need b_fraction + c_fraction <= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subsets {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub c: Vec<usize>,
}

/// `floor(fraction · n)`, at least 1.
fn subset_size(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).floor() as usize).max(1)
}

fn sorted_sample(rng: &mut ChaCha8Rng, n: usize, amount: usize) -> Vec<usize> {
    if amount == n {
        return (0..n).collect();
    }
    let mut v = index::sample(rng, n, amount).into_vec();
    v.sort_unstable();
    v
}

/// Draws the three sets for outer iteration `iteration`. The draw depends
/// only on `(plan.seed, iteration)`.
pub fn draw_subsets(num_samples: usize, plan: &SubsetPlan, iteration: u64) -> Result<Subsets> {
    plan.validate()?;
    if num_samples == 0 {
        return Err(KsdError::InvalidPlan("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(iteration);

    let a = match plan.a_mode {
        AMode::Full => (0..num_samples).collect(),
        AMode::Fraction(f) => sorted_sample(&mut rng, num_samples, subset_size(f, num_samples)),
    };
    let nb = subset_size(plan.b_fraction, num_samples);
    let nc = subset_size(plan.c_fraction, num_samples);
    let (b, c) = if plan.disjoint_bc {
        if nb + nc > num_samples {
            return Err(KsdError::InvalidPlan(format!(
                "cannot draw disjoint sets of {nb} and {nc} from {num_samples} samples"
            )));
        }
        let joint = index::sample(&mut rng, num_samples, nb + nc).into_vec();
        let mut b = joint[..nb].to_vec();
        let mut c = joint[nb..].to_vec();
        b.sort_unstable();
        c.sort_unstable();
        (b, c)
    } else {
        let b = sorted_sample(&mut rng, num_samples, nb);
        let c = sorted_sample(&mut rng, num_samples, nc);
        (b, c)
    };
    Ok(Subsets { a, b, c })
}
